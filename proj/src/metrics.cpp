#include "kf/metrics.hpp"

#include "kf/error.hpp"
#include "kf/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <unordered_set>

namespace kf {

const char* cve_effect_name(CveEffect e) {
    switch (e) {
    case CveEffect::DoS: return "DoS";
    case CveEffect::Leak: return "Leak";
    case CveEffect::Priv: return "Priv";
    }
    return "DoS";
}

const char* cve_category_name(CveCategory c) {
    switch (c) {
    case CveCategory::V: return "V";
    case CveCategory::P: return "P";
    case CveCategory::E: return "E";
    }
    return "E";
}

RemovalStatus removal_status(const KernelImage& image, std::span<const uint8_t> spec_text,
                             const Symbol& sym) {
    if (spec_text.size() != image.text_size())
        raise(Errc::LengthMismatch, "specialized text length " + std::to_string(spec_text.size()) +
                                        " != image text length " + std::to_string(image.text_size()));
    uint64_t off = sym.start - image.base_vaddr();
    uint64_t masked = 0;
    for (uint64_t i = 0; i < sym.size; i++)
        if (spec_text[off + i] == kTrapByte) masked++;
    if (masked == sym.size) return RemovalStatus::Full;
    if (masked > 0) return RemovalStatus::Partial;
    return RemovalStatus::None;
}

ReductionStats stats_from_bytes(const KernelImage& image, std::span<const uint8_t> spec_text) {
    if (spec_text.size() != image.text_size())
        raise(Errc::LengthMismatch, "specialized text length " + std::to_string(spec_text.size()) +
                                        " != image text length " + std::to_string(image.text_size()));
    ReductionStats st;
    st.total_bytes = spec_text.size();
    for (uint8_t b : spec_text)
        if (b == kTrapByte) st.masked_bytes++;
    st.text_reduced_pct = st.total_bytes ? 100.0 * double(st.masked_bytes) / double(st.total_bytes) : 0.0;

    uint64_t fully_removed = 0, touched = 0;
    for (const auto& sym : image.symbols()) {
        uint64_t off = sym.start - image.base_vaddr();
        uint64_t masked = 0;
        for (uint64_t i = 0; i < sym.size; i++)
            if (spec_text[off + i] == kTrapByte) masked++;
        if (masked == sym.size) fully_removed++;
        if (masked > 0) touched++;
    }
    size_t n = image.symbols().size();
    st.symbols_fully_removed_pct = n ? 100.0 * double(fully_removed) / double(n) : 0.0;
    st.symbols_touched_pct = n ? 100.0 * double(touched) / double(n) : 0.0;
    return st;
}

CveVerdict classify_cve(const CveRecord& record, const KernelImage& image,
                        std::span<const uint8_t> spec_text) {
    if (record.functions.empty())
        raise(Errc::InvariantViolation, record.cve_id + ": CVE record has no functions");

    bool any_full = false, any_partial = false;
    for (const auto& fn : record.functions) {
        const Symbol* sym = image.find_symbol(fn);
        if (!sym)
            raise(Errc::UnknownFunction, record.cve_id + ": function '" + fn + "' is not a symbol");
        switch (removal_status(image, spec_text, *sym)) {
        case RemovalStatus::Full: any_full = true; break;
        case RemovalStatus::Partial: any_partial = true; break;
        case RemovalStatus::None: break;
        }
    }
    CveCategory cat = any_full ? CveCategory::V : any_partial ? CveCategory::P : CveCategory::E;
    return {record.cve_id, cat};
}

CveVerdict classify_cve(const CveRecord& record, const SpecializedKernel& spec) {
    return classify_cve(record, *spec.source, spec.text);
}

CveReport cve_report(const std::vector<CveRecord>& records, const KernelImage& image,
                     std::span<const uint8_t> spec_text) {
    CveReport rep;
    for (const auto& rec : records) {
        CveVerdict v = classify_cve(rec, image, spec_text);
        switch (v.category) {
        case CveCategory::V: rep.v_count++; break;
        case CveCategory::P: rep.p_count++; break;
        case CveCategory::E: rep.e_count++; break;
        }
        rep.verdicts.push_back(std::move(v));
    }
    rep.mitigated_count = rep.v_count + rep.p_count;
    return rep;
}

CveReport cve_report(const std::vector<CveRecord>& records, const SpecializedKernel& spec) {
    return cve_report(records, *spec.source, spec.text);
}

std::vector<CveRecord> load_cve_db(const std::filesystem::path& p) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_text_file(p));
    } catch (const nlohmann::json::parse_error& e) {
        raise(Errc::MalformedBundle, p.string() + ": " + e.what());
    }
    if (!doc.is_array()) raise(Errc::MalformedBundle, p.string() + ": CVE database must be an array");

    std::vector<CveRecord> records;
    for (const auto& item : doc) {
        CveRecord rec;
        try {
            rec.cve_id = item.at("id").get<std::string>();
            rec.description = item.value("description", std::string());
            std::string effect = item.at("effect").get<std::string>();
            if (effect == "DoS")
                rec.effect = CveEffect::DoS;
            else if (effect == "Leak")
                rec.effect = CveEffect::Leak;
            else if (effect == "Priv")
                rec.effect = CveEffect::Priv;
            else
                raise(Errc::MalformedBundle, rec.cve_id + ": unknown effect '" + effect + "'");
            for (const auto& fn : item.at("functions")) rec.functions.insert(fn.get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            raise(Errc::MalformedBundle, p.string() + ": " + e.what());
        }
        if (rec.functions.empty())
            raise(Errc::MalformedBundle, rec.cve_id + ": functions must be non-empty");
        records.push_back(std::move(rec));
    }
    return records;
}

uint64_t count_rop_gadgets(std::span<const uint8_t> text, size_t max_len) {
    if (max_len < 1) raise(Errc::OutOfRange, "gadget max_len must be >= 1");
    std::unordered_set<std::string> unique;
    for (size_t i = 0; i < text.size(); i++) {
        if (text[i] != 0xC3) continue;
        size_t longest = std::min<size_t>(max_len, i + 1);
        for (size_t len = 1; len <= longest; len++) {
            // Window grows backwards one byte at a time; the first trap byte
            // poisons every longer candidate ending here.
            uint8_t new_byte = text[i - len + 1];
            if (new_byte == kTrapByte) break;
            unique.emplace(reinterpret_cast<const char*>(text.data() + i - len + 1), len);
        }
    }
    return unique.size();
}

double gadget_reduction(std::span<const uint8_t> vanilla_text, std::span<const uint8_t> spec_text,
                        size_t max_len) {
    if (vanilla_text.size() != spec_text.size())
        raise(Errc::LengthMismatch, "texts differ in length: " + std::to_string(vanilla_text.size()) +
                                        " vs " + std::to_string(spec_text.size()));
    uint64_t vanilla = count_rop_gadgets(vanilla_text, max_len);
    if (vanilla == 0) return 0.0;
    uint64_t spec = count_rop_gadgets(spec_text, max_len);
    return (1.0 - double(spec) / double(vanilla)) * 100.0;
}

std::optional<ReportFormat> report_format_from_name(std::string_view name) {
    if (name == "json") return ReportFormat::Json;
    if (name == "csv") return ReportFormat::Csv;
    if (name == "text") return ReportFormat::Text;
    return std::nullopt;
}

namespace {

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

nlohmann::json entry_to_json(const SpecEntry& e) {
    nlohmann::json j;
    j["app"] = e.app;
    j["stats"] = {{"text_reduced_pct", e.stats.text_reduced_pct},
                  {"symbols_fully_removed_pct", e.stats.symbols_fully_removed_pct},
                  {"symbols_touched_pct", e.stats.symbols_touched_pct},
                  {"masked_bytes", e.stats.masked_bytes},
                  {"total_bytes", e.stats.total_bytes}};
    if (e.cve) {
        nlohmann::json verdicts = nlohmann::json::array();
        for (size_t i = 0; i < e.cve->verdicts.size(); i++) {
            const auto& v = e.cve->verdicts[i];
            nlohmann::json row = {{"id", v.cve_id}, {"category", cve_category_name(v.category)}};
            if (i < e.cve_records.size()) row["effect"] = cve_effect_name(e.cve_records[i].effect);
            verdicts.push_back(std::move(row));
        }
        j["cve"] = {{"verdicts", std::move(verdicts)},
                    {"total", e.cve->verdicts.size()},
                    {"v", e.cve->v_count},
                    {"p", e.cve->p_count},
                    {"e", e.cve->e_count},
                    {"mitigated", e.cve->mitigated_count}};
    }
    j["gadgets"] = {{"vanilla", e.gadgets.vanilla},
                    {"specialized", e.gadgets.specialized},
                    {"reduction_pct", e.gadgets.reduction_pct}};
    return j;
}

} // namespace

std::string emit_report(const std::vector<SpecEntry>& entries, ReportFormat format) {
    switch (format) {
    case ReportFormat::Json: {
        nlohmann::json doc;
        doc["reports"] = nlohmann::json::array();
        for (const auto& e : entries) doc["reports"].push_back(entry_to_json(e));
        return doc.dump(2) + "\n";
    }
    case ReportFormat::Csv: {
        std::ostringstream out;
        out << "app,text_reduced_pct,symbols_fully_removed_pct,symbols_touched_pct,"
               "cve_total,cve_v,cve_p,cve_e,cve_mitigated,"
               "gadgets_vanilla,gadgets_specialized,gadget_reduction_pct\n";
        for (const auto& e : entries) {
            out << e.app << ',' << fixed(e.stats.text_reduced_pct) << ','
                << fixed(e.stats.symbols_fully_removed_pct) << ','
                << fixed(e.stats.symbols_touched_pct) << ',';
            if (e.cve)
                out << e.cve->verdicts.size() << ',' << e.cve->v_count << ',' << e.cve->p_count
                    << ',' << e.cve->e_count << ',' << e.cve->mitigated_count << ',';
            else
                out << ",,,,,";
            out << e.gadgets.vanilla << ',' << e.gadgets.specialized << ','
                << fixed(e.gadgets.reduction_pct) << '\n';
        }
        return out.str();
    }
    case ReportFormat::Text: {
        std::ostringstream out;
        for (const auto& e : entries) {
            out << "== " << e.app << " ==\n";
            out << "text reduced:          " << fixed(e.stats.text_reduced_pct, 2) << "% ("
                << e.stats.masked_bytes << " of " << e.stats.total_bytes << " bytes)\n";
            out << "symbols fully removed: " << fixed(e.stats.symbols_fully_removed_pct, 2) << "%\n";
            out << "symbols touched:       " << fixed(e.stats.symbols_touched_pct, 2) << "%\n";
            if (e.cve) {
                out << "cve: " << e.cve->v_count << " V, " << e.cve->p_count << " P, "
                    << e.cve->e_count << " E of " << e.cve->verdicts.size() << " ("
                    << e.cve->mitigated_count << " mitigated)\n";
                for (const auto& v : e.cve->verdicts)
                    out << "  " << cve_category_name(v.category) << "  " << v.cve_id << "\n";
            }
            out << "rop gadgets: " << e.gadgets.specialized << " of " << e.gadgets.vanilla
                << " survive (" << fixed(e.gadgets.reduction_pct, 2) << "% removed)\n\n";
        }
        return out.str();
    }
    }
    raise(Errc::UnsupportedFormat, "unknown report format");
}

} // namespace kf
