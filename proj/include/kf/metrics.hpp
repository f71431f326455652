#pragma once

#include "kf/image.hpp"
#include "kf/specialize.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace kf {

enum class CveEffect { DoS, Leak, Priv };

const char* cve_effect_name(CveEffect e);

/// A known vulnerability and the kernel functions forming its exploit chain.
struct CveRecord {
    std::string cve_id;
    std::string description;
    CveEffect effect = CveEffect::DoS;
    std::set<std::string> functions; // non-empty
};

/// V: at least one chain function is fully masked (the chain cannot form).
/// P: no function fully masked, but at least one partially masked.
/// E: every chain function fully present.
/// V and P both count as mitigated.
enum class CveCategory { V, P, E };

const char* cve_category_name(CveCategory c);

struct CveVerdict {
    std::string cve_id;
    CveCategory category = CveCategory::E;
};

struct CveReport {
    std::vector<CveVerdict> verdicts; // input order
    size_t mitigated_count = 0;       // V + P
    size_t v_count = 0, p_count = 0, e_count = 0;
};

/// Per-function masking status inside a specialized text. A byte is masked
/// iff it equals the trap byte; callers feed source images whose text does
/// not naturally contain it.
enum class RemovalStatus { Full, Partial, None };

RemovalStatus removal_status(const KernelImage& image, std::span<const uint8_t> spec_text,
                             const Symbol& sym);

/// Reduction stats recovered from a specialized text alone (a byte is masked
/// iff it equals the trap byte). Agrees with specialize::reduction_stats
/// whenever the source text is trap-free.
ReductionStats stats_from_bytes(const KernelImage& image, std::span<const uint8_t> spec_text);

CveVerdict classify_cve(const CveRecord& record, const KernelImage& image,
                        std::span<const uint8_t> spec_text);
CveVerdict classify_cve(const CveRecord& record, const SpecializedKernel& spec);

CveReport cve_report(const std::vector<CveRecord>& records, const KernelImage& image,
                     std::span<const uint8_t> spec_text);
CveReport cve_report(const std::vector<CveRecord>& records, const SpecializedKernel& spec);

/// JSON array of {"id", "effect", "functions", "description"}.
std::vector<CveRecord> load_cve_db(const std::filesystem::path& p);

// ---- ROP gadget scanning ----------------------------------------------------
//
// Deliberately simplified, deterministic definition: a gadget is any distinct
// byte string of length 1..max_len ending in a ret opcode (0xC3); candidates
// containing the trap byte are dead. No disassembly happens, so absolute
// counts are NOT comparable with disassembling gadget finders; only the
// relative reduction is meaningful.

uint64_t count_rop_gadgets(std::span<const uint8_t> text, size_t max_len = 20);

/// (1 - count(spec)/count(vanilla)) * 100; 0 when the vanilla count is 0.
/// Throws LengthMismatch when the two texts differ in length.
double gadget_reduction(std::span<const uint8_t> vanilla_text, std::span<const uint8_t> spec_text,
                        size_t max_len = 20);

// ---- Report emission ---------------------------------------------------------

enum class ReportFormat { Json, Csv, Text };

std::optional<ReportFormat> report_format_from_name(std::string_view name);

struct GadgetStats {
    uint64_t vanilla = 0;
    uint64_t specialized = 0;
    double reduction_pct = 0;
};

struct SpecEntry {
    std::string app;
    ReductionStats stats;
    std::optional<CveReport> cve;
    std::vector<CveRecord> cve_records; // parallels cve->verdicts when present
    GadgetStats gadgets;
};

/// Stable field ordering for every format; CSV columns are documented in the
/// README. Throws UnsupportedFormat on anything but json/csv/text.
std::string emit_report(const std::vector<SpecEntry>& entries, ReportFormat format);

} // namespace kf
