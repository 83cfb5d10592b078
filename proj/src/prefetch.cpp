#include "tiered/prefetch.hpp"

#include <algorithm>

#include "tiered/errors.hpp"

namespace tiered {

StreamIdentifier::StreamIdentifier(std::size_t history) : capacity_(history) {
    if (history < 3) throw ConfigError("prefetch.history", "must be at least 3");
}

void StreamIdentifier::observe_miss(const PageId& page) {
    // A change of file starts a new stream.
    if (!history_.empty() && history_.back().file != page.file) history_.clear();
    history_.push_back(page);
    if (history_.size() > capacity_) history_.pop_front();
    stride_.reset();
    if (history_.size() < 3) return;
    const auto n = history_.size();
    const auto a = static_cast<std::int64_t>(history_[n - 3].page);
    const auto b = static_cast<std::int64_t>(history_[n - 2].page);
    const auto c = static_cast<std::int64_t>(history_[n - 1].page);
    if (b - a == c - b && c - b != 0) stride_ = c - b;
}

PrefetchBuffer::PrefetchBuffer(std::size_t width) : width_(width) {}

bool PrefetchBuffer::contains(const PageId& page) const {
    return std::find(entries_.begin(), entries_.end(), page) != entries_.end();
}

bool PrefetchBuffer::insert(const PageId& page) {
    if (entries_.size() >= width_ || contains(page)) return false;
    entries_.push_back(page);
    return true;
}

bool PrefetchBuffer::take(const PageId& page) {
    const auto it = std::find(entries_.begin(), entries_.end(), page);
    if (it == entries_.end()) return false;
    entries_.erase(it);
    return true;
}

std::vector<PageId> propose_prefetches(const StreamIdentifier& sid, const PrefetchBuffer& buffer,
                                       const Tier1Cache& cache,
                                       const std::vector<PageId>& in_flight) {
    std::vector<PageId> out;
    const auto stride = sid.detected_stride();
    if (!stride || sid.history().empty()) return out;
    const std::size_t occupied = buffer.size() + in_flight.size();
    if (occupied >= buffer.width()) return out;
    const std::size_t budget = buffer.width() - occupied;

    const PageId last = sid.history().back();
    auto page = static_cast<std::int64_t>(last.page);
    // Only `budget` steps are examined, so excluded pages shrink the proposal.
    for (std::size_t step = 0; step < budget; ++step) {
        page += *stride;
        if (page < 0) break;
        const PageId candidate{last.file, static_cast<std::uint64_t>(page)};
        if (cache.contains(candidate) || buffer.contains(candidate)) continue;
        if (std::find(in_flight.begin(), in_flight.end(), candidate) != in_flight.end()) continue;
        out.push_back(candidate);
    }
    return out;
}

}  // namespace tiered
