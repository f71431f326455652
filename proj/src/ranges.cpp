#include "kf/ranges.hpp"

#include "kf/error.hpp"
#include "kf/util.hpp"

#include <algorithm>

namespace kf {

void check_no_overflow(const ByteRange& r) {
    if (r.size > UINT64_MAX - r.start)
        raise(Errc::OutOfRange, "range " + format_hex(r.start) + "+" + std::to_string(r.size) +
                                    " overflows the address space");
}

bool extents_overlap(const ExtentSet& extents) {
    uint64_t prev_end = 0;
    bool first = true;
    for (const auto& r : extents) {
        if (!first && r.start < prev_end) return true;
        prev_end = r.end();
        first = false;
    }
    return false;
}

IntervalSet IntervalSet::from_extents(const ExtentSet& extents) {
    IntervalSet out;
    for (const auto& r : extents) out.insert(r);
    return out;
}

void IntervalSet::insert(ByteRange r) {
    if (r.size == 0) return;
    check_no_overflow(r);
    // Find all spans touching or overlapping [r.start, r.end()] and fuse them.
    auto lo = std::lower_bound(spans_.begin(), spans_.end(), r.start,
                               [](const ByteRange& s, uint64_t v) { return s.end() < v; });
    uint64_t new_start = r.start;
    uint64_t new_end = r.end();
    auto hi = lo;
    while (hi != spans_.end() && hi->start <= new_end) {
        new_start = std::min(new_start, hi->start);
        new_end = std::max(new_end, hi->end());
        ++hi;
    }
    lo = spans_.erase(lo, hi);
    spans_.insert(lo, ByteRange{new_start, new_end - new_start});
}

bool IntervalSet::contains(uint64_t addr) const {
    auto it = std::upper_bound(spans_.begin(), spans_.end(), addr,
                               [](uint64_t v, const ByteRange& s) { return v < s.start; });
    if (it == spans_.begin()) return false;
    --it;
    return it->contains(addr);
}

bool IntervalSet::covers_all(ByteRange r) const {
    if (r.size == 0) return true;
    auto it = std::upper_bound(spans_.begin(), spans_.end(), r.start,
                               [](uint64_t v, const ByteRange& s) { return v < s.start; });
    if (it == spans_.begin()) return false;
    --it;
    return it->start <= r.start && it->end() >= r.end();
}

bool IntervalSet::overlaps(ByteRange r) const {
    if (r.size == 0) return false;
    auto it = std::lower_bound(spans_.begin(), spans_.end(), r.start,
                               [](const ByteRange& s, uint64_t v) { return s.end() <= v; });
    return it != spans_.end() && it->start < r.end();
}

uint64_t IntervalSet::total_bytes() const {
    uint64_t total = 0;
    for (const auto& s : spans_) total += s.size;
    return total;
}

uint64_t IntervalSet::bytes_within(ByteRange r) const {
    if (r.size == 0) return 0;
    uint64_t total = 0;
    for (const auto& s : spans_) {
        uint64_t lo = std::max(s.start, r.start);
        uint64_t hi = std::min(s.end(), r.end());
        if (lo < hi) total += hi - lo;
    }
    return total;
}

uint64_t IntervalSet::intersection_bytes(const IntervalSet& a, const IntervalSet& b) {
    uint64_t total = 0;
    size_t i = 0, j = 0;
    while (i < a.spans_.size() && j < b.spans_.size()) {
        const auto& x = a.spans_[i];
        const auto& y = b.spans_[j];
        uint64_t lo = std::max(x.start, y.start);
        uint64_t hi = std::min(x.end(), y.end());
        if (lo < hi) total += hi - lo;
        if (x.end() < y.end())
            i++;
        else
            j++;
    }
    return total;
}

uint64_t IntervalSet::union_bytes(const IntervalSet& a, const IntervalSet& b) {
    // |A| + |B| - |A∩B|; all three are exact on coalesced sets.
    return a.total_bytes() + b.total_bytes() - intersection_bytes(a, b);
}

} // namespace kf
