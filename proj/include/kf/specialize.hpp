#pragma once

#include "kf/image.hpp"
#include "kf/profile.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace kf {

/// int3. One byte, so a misaligned read cannot turn it into something else.
/// Deliberately not configurable.
inline constexpr uint8_t kTrapByte = 0xCC;

/// A layout-preserving clone of the image text with every byte outside the
/// kept coverage overwritten by the trap byte. Same length, same base
/// address, metadata tables untouched.
struct SpecializedKernel {
    std::string app_name;
    const KernelImage* source = nullptr; // not owned
    std::vector<uint8_t> text;
    KernelProfile profile;  // the profile that was requested
    IntervalSet coverage;   // the bytes actually kept (== profile bytes here;
                            // the simulator also unions in the irq whitelist)

    uint8_t trap_byte() const { return kTrapByte; }
};

struct ReductionStats {
    double text_reduced_pct = 0;          // masked bytes / total bytes * 100
    double symbols_fully_removed_pct = 0; // symbols with zero surviving bytes
    double symbols_touched_pct = 0;       // symbols with >= 1 masked byte
    uint64_t masked_bytes = 0;
    uint64_t total_bytes = 0;
};

/// Clone-and-mask. Deterministic; throws RangeOutOfImage if the profile
/// reaches outside the text.
SpecializedKernel specialize(const KernelImage& image, const KernelProfile& profile);

/// Core masking step over an arbitrary coverage set (the simulator feeds the
/// profile unioned with the top-half whitelist through this).
std::vector<uint8_t> mask_text(const KernelImage& image, const IntervalSet& coverage);

ReductionStats reduction_stats(const SpecializedKernel& spec);
ReductionStats reduction_stats(const KernelImage& image, const IntervalSet& coverage);

/// Jaccard similarity of two profiles' byte coverage. Both-empty pairs are
/// defined as 1.0 (equal). Throws GranularityMismatch on mixed granularity.
double kernel_sharing(const KernelProfile& a, const KernelProfile& b);

/// Writes text bytes plus the {app, source_hash, stats} JSON sidecar at
/// `<path>.json`. source_hash is the SHA-256 of the source image text.
void save_specialized(const SpecializedKernel& spec, const std::filesystem::path& path);

} // namespace kf
