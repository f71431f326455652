#include "kf/specialize.hpp"

#include "kf/error.hpp"
#include "kf/sha256.hpp"
#include "kf/util.hpp"

#include <json.hpp>

namespace kf {

std::vector<uint8_t> mask_text(const KernelImage& image, const IntervalSet& coverage) {
    std::vector<uint8_t> out(image.text_size(), kTrapByte);
    const auto& src = image.text();
    uint64_t base = image.base_vaddr();
    for (const auto& span : coverage.spans()) {
        if (span.start < base || span.end() > image.text_end())
            raise(Errc::RangeOutOfImage, "coverage range " + format_hex(span.start) + "+" +
                                             std::to_string(span.size) + " lies outside the text");
        uint64_t off = span.start - base;
        std::copy(src.begin() + off, src.begin() + off + span.size, out.begin() + off);
    }
    return out;
}

SpecializedKernel specialize(const KernelImage& image, const KernelProfile& profile) {
    profile.check_within(image);
    SpecializedKernel spec;
    spec.app_name = profile.app_name;
    spec.source = &image;
    spec.profile = profile;
    spec.coverage = profile.coverage();
    spec.text = mask_text(image, spec.coverage);
    return spec;
}

ReductionStats reduction_stats(const KernelImage& image, const IntervalSet& coverage) {
    ReductionStats st;
    st.total_bytes = image.text_size();
    uint64_t kept = coverage.bytes_within({image.base_vaddr(), image.text_size()});
    st.masked_bytes = st.total_bytes - kept;
    st.text_reduced_pct = st.total_bytes ? 100.0 * double(st.masked_bytes) / double(st.total_bytes) : 0.0;

    uint64_t fully_removed = 0, touched = 0;
    for (const auto& sym : image.symbols()) {
        uint64_t surviving = coverage.bytes_within(sym.extent());
        if (surviving == 0) fully_removed++;
        if (surviving < sym.size) touched++;
    }
    size_t n = image.symbols().size();
    st.symbols_fully_removed_pct = n ? 100.0 * double(fully_removed) / double(n) : 0.0;
    st.symbols_touched_pct = n ? 100.0 * double(touched) / double(n) : 0.0;
    return st;
}

ReductionStats reduction_stats(const SpecializedKernel& spec) {
    return reduction_stats(*spec.source, spec.coverage);
}

double kernel_sharing(const KernelProfile& a, const KernelProfile& b) {
    if (a.granularity != b.granularity)
        raise(Errc::GranularityMismatch, std::string("cannot compare ") + granularity_name(a.granularity) +
                                             " and " + granularity_name(b.granularity) + " profiles");
    IntervalSet ia = a.coverage();
    IntervalSet ib = b.coverage();
    uint64_t uni = IntervalSet::union_bytes(ia, ib);
    if (uni == 0) return 1.0; // both empty: identical
    return double(IntervalSet::intersection_bytes(ia, ib)) / double(uni);
}

void save_specialized(const SpecializedKernel& spec, const std::filesystem::path& path) {
    write_binary_file(path, spec.text);

    ReductionStats st = reduction_stats(spec);
    nlohmann::json sidecar;
    sidecar["app"] = spec.app_name;
    sidecar["source_hash"] = sha256_hex(std::span<const uint8_t>(spec.source->text()));
    sidecar["stats"] = {{"text_reduced_pct", st.text_reduced_pct},
                        {"symbols_fully_removed_pct", st.symbols_fully_removed_pct},
                        {"symbols_touched_pct", st.symbols_touched_pct},
                        {"masked_bytes", st.masked_bytes},
                        {"total_bytes", st.total_bytes}};
    write_text_file(path.string() + ".json", sidecar.dump(2) + "\n");
}

} // namespace kf
