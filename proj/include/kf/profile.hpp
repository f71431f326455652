#pragma once

#include "kf/image.hpp"
#include "kf/ranges.hpp"

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace kf {

/// Unit of inclusion for a kernel profile. Syscall is never produced by the
/// trace profiler directly; it is Symbol granularity expanded with the
/// call-graph closure (see syscall_analysis.hpp).
enum class Granularity { Block, Symbol, Syscall, Page };

const char* granularity_name(Granularity g);
std::optional<Granularity> granularity_from_name(std::string_view name);

struct TraceEvent {
    enum class Kind { Exec, Marker };

    uint64_t pc = 0; // meaningful for Exec only
    Kind kind = Kind::Exec;
    std::optional<std::string> tag; // process label for Exec, "start"/"end" for Marker
    uint64_t seq = 0;               // strictly increasing within one run
};

struct TraceRun {
    std::string run_id;
    std::vector<TraceEvent> events;
    bool segmented = false;           // segment() already applied
    bool segmentation_degraded = false; // a start/end marker was missing

    size_t exec_count() const;
};

/// The set of kernel text byte-ranges an application needs, at a declared
/// granularity. Ranges are exact unit extents (never coalesced across units)
/// and pairwise non-overlapping.
struct KernelProfile {
    std::string app_name;
    Granularity granularity = Granularity::Block;
    ExtentSet ranges;
    uint64_t runs_consumed = 0;
    bool stable = false;

    uint64_t covered_bytes() const;
    IntervalSet coverage() const { return IntervalSet::from_extents(ranges); }

    /// Every range must lie inside the image text; throws RangeOutOfImage.
    void check_within(const KernelImage& image) const;
};

// ---- Trace ingestion -------------------------------------------------------

/// Parses the line-oriented trace format:
///   "E <hex_pc> [tag]"   executed basic-block entry pc
///   "M start" / "M end"  segmentation markers
///   "#..." comments and blank lines are skipped
/// Throws MalformedTraceLine with the 1-based line number.
TraceRun parse_trace(std::istream& in, const std::string& run_id);
TraceRun parse_trace_file(const std::filesystem::path& p);

/// Keeps only Exec events strictly between the first "start" marker and the
/// first subsequent "end" marker. If either marker is missing, returns all
/// Exec events with segmentation_degraded set. Idempotent: a run that was
/// already segmented is returned unchanged.
TraceRun segment(const TraceRun& run);

/// Keeps Exec events whose tag is in allow_tags; untagged events survive iff
/// allow_tags contains "*untagged*". Markers pass through untouched.
TraceRun filter_noise(const TraceRun& run, const std::set<std::string>& allow_tags);

inline constexpr const char* kUntaggedSentinel = "*untagged*";

// ---- Accumulation ----------------------------------------------------------

struct AccumulateResult {
    KernelProfile profile;
    uint64_t resolved_pcs = 0;
    uint64_t unresolved_pcs = 0; // Exec pcs matching no block; reported, never dropped silently
};

/// Unions the extents of every block hit by the run into the profile
/// (block granularity). Pass nullptr for the first run. Throws
/// GranularityMismatch if an existing profile is not block-granular.
AccumulateResult accumulate(const KernelProfile* profile, const TraceRun& run,
                            const KernelImage& image, const std::string& app_name);

/// True iff the last `window` accumulations added zero new ranges.
/// history holds the range-set size after each accumulation.
bool is_stable(const std::vector<size_t>& history, size_t window);

/// Widens a block profile to whole-symbol or whole-page extents. The result
/// covers a superset of the input bytes. Throws GranularityMismatch unless
/// the input is block-granular.
KernelProfile coarsen(const KernelProfile& profile, Granularity target, const KernelImage& image);

// ---- Profile file format ---------------------------------------------------

std::string profile_to_json(const KernelProfile& profile);
KernelProfile profile_from_json(const std::string& text);
KernelProfile load_profile(const std::filesystem::path& p);
void save_profile(const KernelProfile& profile, const std::filesystem::path& p);

} // namespace kf
