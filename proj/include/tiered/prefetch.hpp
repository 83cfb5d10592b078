#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "tiered/tier1_cache.hpp"

namespace tiered {

/// Stride detector over the most recent demand-miss pages of one file.
class StreamIdentifier {
public:
    explicit StreamIdentifier(std::size_t history = 4);

    void observe_miss(const PageId& page);

    std::optional<std::int64_t> detected_stride() const noexcept { return stride_; }
    const std::deque<PageId>& history() const noexcept { return history_; }
    std::size_t history_length() const noexcept { return capacity_; }

private:
    std::size_t capacity_;
    std::deque<PageId> history_;
    std::optional<std::int64_t> stride_;
};

/// Bounded holding area for prefetched pages. Entries leave only by promotion;
/// a full buffer blocks new prefetches.
class PrefetchBuffer {
public:
    explicit PrefetchBuffer(std::size_t width);

    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool contains(const PageId& page) const;

    /// Adds a landed prefetch. Returns false when the buffer is full or the
    /// page is already held.
    bool insert(const PageId& page);

    /// Removes the page for promotion into the cache. Returns false if absent.
    bool take(const PageId& page);

    const std::vector<PageId>& entries() const noexcept { return entries_; }

    std::uint64_t hits = 0;
    std::uint64_t issued = 0;

private:
    std::size_t width_;
    std::vector<PageId> entries_;  // insertion order
};

/// Next pages along the detected stride, skipping pages resident in the cache,
/// held in the buffer, or listed in `in_flight`. At most
/// width - size - in_flight.size() pages are proposed.
std::vector<PageId> propose_prefetches(const StreamIdentifier& sid, const PrefetchBuffer& buffer,
                                       const Tier1Cache& cache,
                                       const std::vector<PageId>& in_flight = {});

}  // namespace tiered
