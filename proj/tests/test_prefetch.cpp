#include "doctest.h"

#include "tiered/prefetch.hpp"

using namespace tiered;

namespace {

PageId pg(std::uint64_t p) { return PageId{0, p}; }

StreamIdentifier observed(std::initializer_list<std::uint64_t> pages) {
    StreamIdentifier sid;
    for (auto p : pages) sid.observe_miss(pg(p));
    return sid;
}

std::vector<std::uint64_t> numbers(const std::vector<PageId>& ps) {
    std::vector<std::uint64_t> out;
    for (const auto& p : ps) out.push_back(p.page);
    return out;
}

auto first_line = [](const Tier1Cache& c) { return c.lines().front().tag; };

}  // namespace

TEST_CASE("stride detection over the last three misses") {
    CHECK(observed({10, 12, 14}).detected_stride() == 2);
    CHECK_FALSE(observed({10, 12, 15}).detected_stride().has_value());
    CHECK_FALSE(observed({5, 5, 5}).detected_stride().has_value());
    CHECK(observed({20, 17, 14}).detected_stride() == -3);
    CHECK(observed({1, 9, 10, 11}).detected_stride() == 1);
    CHECK_FALSE(observed({10, 12}).detected_stride().has_value());
}

TEST_CASE("history is bounded and must hold at least three entries") {
    auto sid = observed({1, 2, 3, 4, 5, 6});
    CHECK(sid.history().size() == 4);
    CHECK(sid.history().front() == pg(3));
    CHECK_THROWS(StreamIdentifier(2));
}

TEST_CASE("a miss on another file restarts detection") {
    StreamIdentifier sid;
    sid.observe_miss(pg(10));
    sid.observe_miss(pg(12));
    sid.observe_miss(PageId{1, 14});
    CHECK_FALSE(sid.detected_stride().has_value());
}

TEST_CASE("proposals follow the arithmetic sequence") {
    const auto sid = observed({10, 12, 14});
    PrefetchBuffer buf(4);
    Tier1Cache cache(8);
    const auto got = numbers(propose_prefetches(sid, buf, cache));
    std::vector<std::uint64_t> expected;
    for (std::uint64_t k = 1; k <= 4; ++k) expected.push_back(14 + 2 * k);
    CHECK(got == expected);
    CHECK(got == std::vector<std::uint64_t>{16, 18, 20, 22});
}

TEST_CASE("a full buffer blocks prefetching") {
    const auto sid = observed({10, 12, 14});
    PrefetchBuffer buf(2);
    CHECK(buf.insert(pg(100)));
    CHECK(buf.insert(pg(101)));
    CHECK_FALSE(buf.insert(pg(102)));
    Tier1Cache cache(8);
    CHECK(propose_prefetches(sid, buf, cache).empty());
}

TEST_CASE("resident candidates are skipped") {
    const auto sid = observed({10, 12, 14});
    PrefetchBuffer buf(2);
    Tier1Cache cache(8);
    cache.fill(pg(16), 1, first_line);
    cache.fill(pg(18), 2, first_line);
    CHECK(propose_prefetches(sid, buf, cache).empty());

    PrefetchBuffer wide(3);
    CHECK(wide.insert(pg(20)));
    CHECK(numbers(propose_prefetches(sid, wide, cache)).empty());

    PrefetchBuffer wider(4);
    CHECK(numbers(propose_prefetches(sid, wider, cache)) == std::vector<std::uint64_t>{20, 22});
    // An in-flight prefetch takes a slot and is itself skipped.
    const std::vector<PageId> in_flight{pg(22)};
    CHECK(numbers(propose_prefetches(sid, wider, cache, in_flight)) == std::vector<std::uint64_t>{20});
}

TEST_CASE("no stride, no proposals; negative pages are never proposed") {
    PrefetchBuffer buf(4);
    Tier1Cache cache(4);
    CHECK(propose_prefetches(observed({3, 9, 4}), buf, cache).empty());
    CHECK(numbers(propose_prefetches(observed({6, 4, 2}), buf, cache)) == std::vector<std::uint64_t>{0});
}

TEST_CASE("buffer entries leave only by promotion") {
    PrefetchBuffer buf(2);
    CHECK(buf.insert(pg(1)));
    CHECK_FALSE(buf.insert(pg(1)));
    CHECK(buf.contains(pg(1)));
    CHECK(buf.take(pg(1)));
    CHECK_FALSE(buf.take(pg(1)));
    CHECK(buf.size() == 0);
}
