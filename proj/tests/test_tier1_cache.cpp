#include "doctest.h"

#include <algorithm>
#include <list>

#include "tiered/errors.hpp"
#include "tiered/rng.hpp"
#include "tiered/tier1_cache.hpp"

using namespace tiered;

namespace {

PageId pg(std::uint64_t p) { return PageId{0, p}; }

// Least-recently-used slot by scanning last_access.
PageId oldest(const Tier1Cache& c) {
    const CacheLine* best = nullptr;
    for (const auto& l : c.lines())
        if (l.valid && (!best || l.last_access < best->last_access)) best = &l;
    return best->tag;
}

CacheConfig procs(std::size_t p, Mapping m) {
    CacheConfig c;
    c.n_processes = p;
    c.mapping = m;
    return c;
}

}  // namespace

TEST_CASE("page_of is floor division") {
    CHECK(page_of(0, 524288) == 0);
    CHECK(page_of(524288, 524288) == 1);
    CHECK(page_of(1048575, 524288) == 1048575 / 524288);
    CHECK(page_of(1048575, 524288) == 1);
}

TEST_CASE("mapping policies") {
    CHECK(map_page(7, procs(4, Mapping::RoundRobin)) == 3);
    auto bc = procs(2, Mapping::BlockCyclic);
    bc.block_size = 2;
    CHECK(map_page(5, bc) == (5 / 2) % 2);
    CHECK(map_page(5, bc) == 0);
    for (auto m : {Mapping::RoundRobin, Mapping::Random, Mapping::BlockCyclic})
        for (std::uint64_t p : {0ULL, 1ULL, 99ULL, 123456789ULL}) CHECK(map_page(p, procs(1, m)) == 0);

    auto rnd = procs(5, Mapping::Random);
    for (std::uint64_t p = 0; p < 100; ++p) {
        CHECK(map_page(p, rnd) == mix64(p) % 5);
        CHECK(map_page(p, rnd) == map_page(p, rnd));
    }

    auto block = procs(3, Mapping::Block);
    block.total_pages = 10;  // ceil(10/3) = 4 pages per process
    CHECK(map_page(0, block) == 0);
    CHECK(map_page(3, block) == 0);
    CHECK(map_page(4, block) == 1);
    CHECK(map_page(9, block) == 2);
    block.total_pages = 0;
    CHECK_THROWS_AS(map_page(1, block), ConfigError);
    CHECK_THROWS_AS(validate(block), ConfigError);
}

TEST_CASE("config validation") {
    CacheConfig c;
    validate(c);
    c.line_size = 1000;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c.line_size = 256;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = CacheConfig{};
    c.n_lines = 0;
    CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("access and fill state machine") {
    Tier1Cache c(2);
    std::uint64_t now = 0;
    CHECK(c.access(pg(1), RequestKind::Read, ++now) == AccessOutcome::Miss);
    CHECK_FALSE(c.fill(pg(1), now, oldest).has_value());
    const auto* line = c.find(pg(1));
    REQUIRE(line != nullptr);
    CHECK(line->freq == 1);
    CHECK_FALSE(line->dirty);

    CHECK(c.access(pg(1), RequestKind::Read, ++now) == AccessOutcome::Hit);
    CHECK(c.find(pg(1))->freq == 2);
    CHECK(c.find(pg(1))->last_access == now);
    const auto before = c.find(pg(1))->last_access;
    c.access(pg(1), RequestKind::Read, ++now);
    CHECK(c.find(pg(1))->last_access > before);

    SUBCASE("write hit marks the line dirty and its eviction writes back") {
        CHECK(c.access(pg(1), RequestKind::Write, ++now) == AccessOutcome::Hit);
        CHECK(c.find(pg(1))->dirty);
        c.fill(pg(2), ++now, oldest);
        const auto ev = c.fill(pg(3), ++now, oldest);
        REQUIRE(ev.has_value());
        CHECK(ev->page == pg(1));
        CHECK(ev->dirty);
    }
    SUBCASE("clean eviction needs no write-back") {
        c.fill(pg(2), ++now, oldest);
        const auto ev = c.fill(pg(3), ++now, oldest);
        REQUIRE(ev.has_value());
        CHECK_FALSE(ev->dirty);
    }
}

TEST_CASE("fill into a full one-line cache evicts that line") {
    Tier1Cache c(1);
    c.fill(pg(4), 1, oldest);
    const auto ev = c.fill(pg(5), 2, oldest);
    REQUIRE(ev.has_value());
    CHECK(ev->page == pg(4));
    CHECK(c.contains(pg(5)));
    CHECK_FALSE(c.contains(pg(4)));
    CHECK(c.find(pg(5))->freq == 1);
}

TEST_CASE("fill preconditions") {
    Tier1Cache c(1);
    c.fill(pg(4), 1, oldest);
    CHECK_THROWS_AS(c.fill(pg(4), 2, oldest), InvariantError);
    CHECK_THROWS_AS(c.fill(pg(6), 2, [](const Tier1Cache&) { return pg(99); }), InvariantError);
    CHECK(c.contains(pg(4)));
    CHECK_THROWS_AS(c.mark_dirty(pg(7)), InvariantError);
}

TEST_CASE("valid lines never exceed capacity and LRU misses shrink with size") {
    Rng rng(8);
    std::vector<std::uint64_t> trace;
    for (int i = 0; i < 5000; ++i) trace.push_back(rng.below(80));

    auto misses_at = [&](std::size_t n) {
        Tier1Cache c(n);
        std::uint64_t misses = 0, now = 0;
        for (auto p : trace) {
            ++now;
            if (c.access(pg(p), RequestKind::Read, now) == AccessOutcome::Miss) {
                ++misses;
                c.fill(pg(p), now, oldest);
            }
            REQUIRE(c.size() <= c.capacity());
        }
        return misses;
    };
    // Independent LRU oracle: a recency list.
    auto oracle = [&](std::size_t n) {
        std::list<std::uint64_t> order;
        std::uint64_t misses = 0;
        for (auto p : trace) {
            auto it = std::find(order.begin(), order.end(), p);
            if (it != order.end()) {
                order.erase(it);
            } else {
                ++misses;
                if (order.size() == n) order.pop_back();
            }
            order.push_front(p);
        }
        return misses;
    };
    std::uint64_t prev = ~0ULL;
    for (std::size_t n : {1, 2, 4, 8, 16, 32, 64, 80, 128}) {
        const auto m = misses_at(n);
        CHECK(m == oracle(n));
        CHECK(m <= prev);
        prev = m;
    }
    CHECK(misses_at(80) == 80);
}
