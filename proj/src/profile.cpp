#include "kf/profile.hpp"

#include "kf/error.hpp"
#include "kf/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace kf {

const char* granularity_name(Granularity g) {
    switch (g) {
    case Granularity::Block: return "block";
    case Granularity::Symbol: return "symbol";
    case Granularity::Syscall: return "syscall";
    case Granularity::Page: return "page";
    }
    return "block";
}

std::optional<Granularity> granularity_from_name(std::string_view name) {
    if (name == "block") return Granularity::Block;
    if (name == "symbol") return Granularity::Symbol;
    if (name == "syscall") return Granularity::Syscall;
    if (name == "page") return Granularity::Page;
    return std::nullopt;
}

size_t TraceRun::exec_count() const {
    return static_cast<size_t>(std::count_if(events.begin(), events.end(), [](const TraceEvent& e) {
        return e.kind == TraceEvent::Kind::Exec;
    }));
}

uint64_t KernelProfile::covered_bytes() const {
    uint64_t total = 0;
    for (const auto& r : ranges) total += r.size;
    return total; // ranges are non-overlapping, plain sum is exact
}

void KernelProfile::check_within(const KernelImage& image) const {
    for (const auto& r : ranges) {
        check_no_overflow(r);
        if (r.start < image.base_vaddr() || r.end() > image.text_end())
            raise(Errc::RangeOutOfImage, "profile range " + format_hex(r.start) + "+" +
                                             std::to_string(r.size) + " lies outside the image text");
    }
}

TraceRun parse_trace(std::istream& in, const std::string& run_id) {
    TraceRun run;
    run.run_id = run_id;
    std::string line;
    uint64_t lineno = 0;
    uint64_t seq = 0;
    while (std::getline(in, line)) {
        lineno++;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_ws(line);
        if (fields.empty()) continue;

        auto bad = [&](const std::string& why) {
            raise(Errc::MalformedTraceLine, run_id + ":" + std::to_string(lineno) + ": " + why);
        };

        TraceEvent ev;
        ev.seq = seq;
        if (fields[0] == "E") {
            if (fields.size() < 2 || fields.size() > 3) bad("expected 'E <hex_pc> [tag]'");
            auto pc = parse_hex(fields[1]);
            if (!pc) bad("bad pc '" + fields[1] + "'");
            ev.kind = TraceEvent::Kind::Exec;
            ev.pc = *pc;
            if (fields.size() == 3) ev.tag = fields[2];
        } else if (fields[0] == "M") {
            if (fields.size() != 2 || (fields[1] != "start" && fields[1] != "end"))
                bad("expected 'M start' or 'M end'");
            ev.kind = TraceEvent::Kind::Marker;
            ev.tag = fields[1];
        } else {
            bad("unknown event kind '" + fields[0] + "'");
        }
        run.events.push_back(std::move(ev));
        seq++;
    }
    return run;
}

TraceRun parse_trace_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) raise(Errc::IoError, "cannot open " + p.string());
    return parse_trace(in, p.filename().string());
}

TraceRun segment(const TraceRun& run) {
    if (run.segmented) return run;

    TraceRun out;
    out.run_id = run.run_id;
    out.segmented = true;

    auto is_marker = [](const TraceEvent& e, const char* which) {
        return e.kind == TraceEvent::Kind::Marker && e.tag && *e.tag == which;
    };

    size_t start = run.events.size();
    for (size_t i = 0; i < run.events.size(); i++)
        if (is_marker(run.events[i], "start")) {
            start = i;
            break;
        }
    size_t end = run.events.size();
    for (size_t i = start + 1; i < run.events.size(); i++)
        if (is_marker(run.events[i], "end")) {
            end = i;
            break;
        }

    if (start == run.events.size() || end == run.events.size()) {
        // Best-effort degradation: keep every Exec event and flag it.
        out.segmentation_degraded = true;
        for (const auto& e : run.events)
            if (e.kind == TraceEvent::Kind::Exec) out.events.push_back(e);
        return out;
    }

    for (size_t i = start + 1; i < end; i++)
        if (run.events[i].kind == TraceEvent::Kind::Exec) out.events.push_back(run.events[i]);
    return out;
}

TraceRun filter_noise(const TraceRun& run, const std::set<std::string>& allow_tags) {
    TraceRun out;
    out.run_id = run.run_id;
    out.segmented = run.segmented;
    out.segmentation_degraded = run.segmentation_degraded;
    bool keep_untagged = allow_tags.count(kUntaggedSentinel) > 0;
    for (const auto& e : run.events) {
        if (e.kind != TraceEvent::Kind::Exec) {
            out.events.push_back(e);
            continue;
        }
        bool keep = e.tag ? allow_tags.count(*e.tag) > 0 : keep_untagged;
        if (keep) out.events.push_back(e);
    }
    return out;
}

AccumulateResult accumulate(const KernelProfile* profile, const TraceRun& run,
                            const KernelImage& image, const std::string& app_name) {
    if (profile && profile->granularity != Granularity::Block)
        raise(Errc::GranularityMismatch, "accumulation requires a block-granularity profile, got " +
                                             std::string(granularity_name(profile->granularity)));

    AccumulateResult res;
    if (profile)
        res.profile = *profile;
    else {
        res.profile.app_name = app_name;
        res.profile.granularity = Granularity::Block;
    }
    if (res.profile.app_name.empty()) res.profile.app_name = app_name;

    for (const auto& e : run.events) {
        if (e.kind != TraceEvent::Kind::Exec) continue;
        if (const BasicBlock* b = image.block_at(e.pc)) {
            res.profile.ranges.insert(b->extent());
            res.resolved_pcs++;
        } else {
            res.unresolved_pcs++;
        }
    }
    res.profile.runs_consumed++;
    return res;
}

bool is_stable(const std::vector<size_t>& history, size_t window) {
    if (window < 1 || history.size() < window + 1) return false;
    size_t n = history.size();
    for (size_t i = n - window; i < n; i++)
        if (history[i] != history[i - 1]) return false;
    return true;
}

KernelProfile coarsen(const KernelProfile& profile, Granularity target, const KernelImage& image) {
    if (profile.granularity != Granularity::Block)
        raise(Errc::GranularityMismatch, "coarsen requires a block-granularity profile, got " +
                                             std::string(granularity_name(profile.granularity)));
    if (target != Granularity::Symbol && target != Granularity::Page)
        raise(Errc::GranularityMismatch, "coarsen target must be symbol or page");

    KernelProfile out;
    out.app_name = profile.app_name;
    out.granularity = target;
    out.runs_consumed = profile.runs_consumed;
    out.stable = profile.stable;

    for (const auto& r : profile.ranges) {
        if (target == Granularity::Symbol) {
            // Blocks live fully inside one symbol, the extent's start decides.
            const Symbol* s = image.symbol_at(r.start);
            if (!s)
                raise(Errc::RangeOutOfImage,
                      "profiled range at " + format_hex(r.start) + " belongs to no symbol");
            out.ranges.insert(s->extent());
        } else {
            uint64_t first = image.page_index(r.start);
            uint64_t last = image.page_index(r.end() - 1);
            for (uint64_t p = first; p <= last; p++) out.ranges.insert(image.page_extent(p));
        }
    }
    return out;
}

std::string profile_to_json(const KernelProfile& profile) {
    nlohmann::json doc;
    doc["app"] = profile.app_name;
    doc["granularity"] = granularity_name(profile.granularity);
    doc["ranges"] = nlohmann::json::array();
    for (const auto& r : profile.ranges)
        doc["ranges"].push_back({{"start", format_hex(r.start)}, {"size", r.size}});
    doc["runs"] = profile.runs_consumed;
    doc["stable"] = profile.stable;
    return doc.dump(2) + "\n";
}

KernelProfile profile_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        raise(Errc::InvalidProfile, std::string("bad profile JSON: ") + e.what());
    }
    KernelProfile p;
    try {
        p.app_name = doc.at("app").get<std::string>();
        auto g = granularity_from_name(doc.at("granularity").get<std::string>());
        if (!g) raise(Errc::InvalidProfile, "unknown granularity in profile");
        p.granularity = *g;
        for (const auto& r : doc.at("ranges")) {
            auto start = parse_hex(r.at("start").get<std::string>());
            if (!start) raise(Errc::InvalidProfile, "bad range start in profile");
            ByteRange br{*start, r.at("size").get<uint64_t>()};
            check_no_overflow(br);
            if (br.size == 0) raise(Errc::InvalidProfile, "profile range with size 0");
            p.ranges.insert(br);
        }
        p.runs_consumed = doc.value("runs", 0ull);
        p.stable = doc.value("stable", false);
    } catch (const nlohmann::json::exception& e) {
        raise(Errc::InvalidProfile, std::string("bad profile JSON: ") + e.what());
    }
    if (extents_overlap(p.ranges)) raise(Errc::InvalidProfile, "profile ranges overlap");
    return p;
}

KernelProfile load_profile(const std::filesystem::path& p) {
    return profile_from_json(read_text_file(p));
}

void save_profile(const KernelProfile& profile, const std::filesystem::path& p) {
    write_text_file(p, profile_to_json(profile));
}

} // namespace kf
