#pragma once

#include <compare>
#include <cstdint>
#include <set>
#include <vector>

namespace kf {

/// Half-open byte range [start, start+size) over the 64-bit address space.
struct ByteRange {
    uint64_t start = 0;
    uint64_t size = 0;

    uint64_t end() const { return start + size; }
    bool contains(uint64_t addr) const { return addr >= start && addr < end(); }

    auto operator<=>(const ByteRange&) const = default;
};

// Throws OutOfRange if start+size would wrap; wraparound is never silent.
void check_no_overflow(const ByteRange& r);

/// Ordered set of exact extents (blocks, symbols, pages). Extents are kept
/// verbatim: adjacent members are NOT merged, so each element still equals
/// the unit it was taken from. Members must be pairwise non-overlapping.
using ExtentSet = std::set<ByteRange>;

bool extents_overlap(const ExtentSet& extents); // true if any two members overlap

/// Coalesced interval set for byte-level arithmetic (coverage queries,
/// intersection/union cardinality). Built from extents, loses their identity.
class IntervalSet {
public:
    IntervalSet() = default;

    static IntervalSet from_extents(const ExtentSet& extents);

    void insert(ByteRange r);
    bool contains(uint64_t addr) const;
    bool covers_all(ByteRange r) const;
    bool overlaps(ByteRange r) const;

    uint64_t total_bytes() const;
    // Bytes of *this lying inside r.
    uint64_t bytes_within(ByteRange r) const;

    static uint64_t intersection_bytes(const IntervalSet& a, const IntervalSet& b);
    static uint64_t union_bytes(const IntervalSet& a, const IntervalSet& b);

    const std::vector<ByteRange>& spans() const { return spans_; }
    bool empty() const { return spans_.empty(); }

private:
    std::vector<ByteRange> spans_; // sorted, coalesced, non-empty members
};

} // namespace kf
