#include "doctest.h"

#include <cmath>
#include <numeric>
#include <set>

#include "tiered/errors.hpp"
#include "tiered/eviction.hpp"

using namespace tiered;

namespace {

PageId pg(std::uint64_t p) { return PageId{0, p}; }

// Weight update written out step by step from the algorithm description.
std::vector<double> oracle_update(std::vector<double> w, const std::vector<double>& mispred, double misses,
                                  double alpha, double beta, double threshold, bool literal) {
    const std::vector<double> prev = w;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (misses == 0 || mispred[i] < threshold * misses) continue;
        const double d = std::pow(beta, mispred[i]);
        w[i] = literal ? w[i] - w[i] * d : w[i] * d;
    }
    double s = 0;
    for (std::size_t i = 0; i < w.size(); ++i) s += prev[i] - w[i];
    s /= static_cast<double>(w.size());
    for (double& x : w) x += alpha * s;
    return w;
}

std::vector<double> normalized(std::vector<double> w) {
    const double t = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) x /= t;
    return w;
}

// Two lines where LRU and LFU disagree: page 1 is old but hot, page 3 is new.
Tier1Cache split_cache() {
    Tier1Cache c(4);
    std::uint64_t t = 0;
    auto any = [](const Tier1Cache& cc) { return cc.lines().front().tag; };
    c.fill(pg(1), ++t, any);
    c.fill(pg(2), ++t, any);
    c.fill(pg(4), ++t, any);
    for (auto p : {1, 2, 4})
        for (int i = 0; i < 3; ++i) c.access(pg(p), RequestKind::Read, ++t);
    c.fill(pg(3), ++t, any);
    return c;
}

void check_distribution(const ExpertEnsemble& e) {
    double sum = 0;
    for (double p : e.probs()) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        sum += p;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    for (double w : e.weights()) CHECK(w >= 0.0);
}

}  // namespace

TEST_CASE("single experts") {
    Rng rng(1);
    Tier1Cache c(2);
    auto any = [](const Tier1Cache& cc) { return cc.lines().front().tag; };
    c.fill(pg(7), 2, any);
    c.fill(pg(3), 5, any);
    CHECK(expert_victim(Expert::Lru, c, rng) == pg(7));

    Tier1Cache f(2);
    f.fill(pg(7), 1, any);
    f.fill(pg(3), 2, any);
    for (int i = 0; i < 3; ++i) {
        f.access(pg(7), RequestKind::Read, 3 + i);
        f.access(pg(3), RequestKind::Read, 10 + i);
    }
    REQUIRE(f.find(pg(3))->freq == 4);
    REQUIRE(f.find(pg(7))->freq == 4);
    CHECK(expert_victim(Expert::Lfu, f, rng) == pg(3));

    Tier1Cache one(4);
    one.fill(pg(9), 1, any);
    for (auto e : {Expert::Lru, Expert::Lfu, Expert::Random}) CHECK(expert_victim(e, one, rng) == pg(9));

    Tier1Cache empty(2);
    CHECK_THROWS_AS(expert_victim(Expert::Lru, empty, rng), std::invalid_argument);
}

TEST_CASE("random expert covers every valid line") {
    Rng rng(5);
    Tier1Cache c = split_cache();
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 200; ++i) seen.insert(expert_victim(Expert::Random, c, rng).page);
    CHECK(seen == std::set<std::uint64_t>{1, 2, 3, 4});
}

TEST_CASE("highest probability expert decides") {
    const Tier1Cache c = split_cache();
    ExpertEnsemble e(EnsembleParams{}, 3);

    e.set_weights(std::vector<double>{0.2, 0.5, 0.3});
    auto d = e.get_victim(c);
    CHECK(d.chosen_expert == 1);
    CHECK(d.per_expert_choices.size() == 3);
    CHECK(d.per_expert_choices[0] == pg(1));
    CHECK(d.per_expert_choices[1] == pg(3));
    CHECK(d.victim == d.per_expert_choices[d.chosen_expert]);
    CHECK(d.victim == pg(3));

    e.set_weights(std::vector<double>{0.4, 0.4, 0.2});
    d = e.get_victim(c);
    CHECK(d.chosen_expert == 0);
    CHECK(d.victim == pg(1));

    for (std::size_t i = 0; i < 3; ++i) CHECK(e.predictions(i).contains(d.per_expert_choices[i]));

    Tier1Cache one(3);
    one.fill(pg(8), 1, [](const Tier1Cache& cc) { return cc.lines().front().tag; });
    e.set_weights(std::vector<double>{0.1, 0.1, 0.8});
    CHECK(e.get_victim(one).victim == pg(8));
}

TEST_CASE("an epoch without misses changes nothing") {
    for (auto mode : {PenaltyMode::Corrected, PenaltyMode::Literal}) {
        EnsembleParams p;
        p.mode = mode;
        ExpertEnsemble e(p, 1);
        e.set_weights(std::vector<double>{0.5, 0.3, 0.2});
        e.get_victim(split_cache());
        const std::vector<double> w(e.weights().begin(), e.weights().end());
        const std::vector<double> pr(e.probs().begin(), e.probs().end());
        for (int i = 0; i < 4; ++i) e.record_misses_and_adjust({});
        CHECK(e.adjustments() == 1);
        CHECK(std::vector<double>(e.weights().begin(), e.weights().end()) == w);
        CHECK(std::vector<double>(e.probs().begin(), e.probs().end()) == pr);
        for (std::size_t i = 0; i < 3; ++i) CHECK(e.predictions(i).empty());
    }
}

TEST_CASE("hand-executed adjustment: only the first expert is penalized") {
    // Two evictions by the LRU leader put pages 1 and 2 in its log. A seed whose
    // random expert proposed neither keeps the mispredictions at (2, 0, 0).
    for (auto mode : {PenaltyMode::Corrected, PenaltyMode::Literal}) {
        bool exercised = false;
        for (std::uint64_t seed = 1; seed < 64 && !exercised; ++seed) {
            EnsembleParams p;
            p.mode = mode;
            ExpertEnsemble e(p, seed);
            Tier1Cache c = split_cache();
            std::uint64_t t = 100;
            auto select = [&](const Tier1Cache& cc) { return e.get_victim(cc).victim; };
            CHECK(c.fill(pg(5), ++t, select)->page == pg(1));
            CHECK(c.fill(pg(6), ++t, select)->page == pg(2));
            if (e.predictions(2).contains(pg(1)) || e.predictions(2).contains(pg(2))) continue;
            exercised = true;

            const std::vector<PageId> misses{pg(1), pg(2)};
            e.record_misses_and_adjust(misses);
            CHECK(e.mispredictions()[0] == 2);
            CHECK(e.mispredictions()[1] == 0);
            CHECK(e.mispredictions()[2] == 0);
            CHECK(e.epoch_misses() == 2);
            for (int i = 0; i < 3; ++i) e.record_misses_and_adjust({});
            REQUIRE(e.adjustments() == 1);

            const bool literal = mode == PenaltyMode::Literal;
            const auto w = oracle_update({1.0 / 3, 1.0 / 3, 1.0 / 3}, {2, 0, 0}, 2, 0.5, 0.5, 0.25, literal);
            const auto expected = normalized(w);
            for (int i = 0; i < 3; ++i) CHECK(e.probs()[i] == doctest::Approx(expected[i]).epsilon(1e-12));
            if (!literal) {
                // w0 = 1/12 + 1/24, w1 = w2 = 1/3 + 1/24 -> probs (1/7, 3/7, 3/7)
                CHECK(e.probs()[0] == doctest::Approx(1.0 / 7).epsilon(1e-12));
                CHECK(e.probs()[1] == doctest::Approx(3.0 / 7).epsilon(1e-12));
                CHECK(e.weights()[0] < 1.0 / 3);
                CHECK(e.weights()[1] > 1.0 / 3);
                CHECK(e.weights()[2] > 1.0 / 3);
            }
            check_distribution(e);
            for (std::size_t i = 0; i < 3; ++i) CHECK(e.predictions(i).empty());
            CHECK(e.epoch_misses() == 0);
        }
        CHECK(exercised);
    }
}

TEST_CASE("two epochs where LRU always mispredicts and LFU never does") {
    EnsembleParams p;
    p.experts = {Expert::Lru, Expert::Lfu};
    ExpertEnsemble e(p, 1);
    std::vector<double> w{0.5, 0.5};
    for (int epoch = 0; epoch < 2; ++epoch) {
        Tier1Cache c = split_cache();
        const auto d = e.get_victim(c);
        REQUIRE(d.per_expert_choices[0] == pg(1));
        REQUIRE(d.per_expert_choices[1] == pg(3));
        const std::vector<PageId> misses{pg(1)};
        e.record_misses_and_adjust(misses);
        for (int i = 0; i < 3; ++i) e.record_misses_and_adjust({});
        w = oracle_update(w, {1, 0}, 1, 0.5, 0.5, 0.25, false);
        const auto expected = normalized(w);
        CHECK(e.probs()[0] == doctest::Approx(expected[0]).epsilon(1e-12));
        CHECK(e.probs()[1] > e.probs()[0]);
    }
    CHECK(e.leader() == 1);
    CHECK(e.adjustments() == 2);
}

TEST_CASE("more mispredictions never earn more weight") {
    EnsembleParams p;
    p.experts = {Expert::Lru, Expert::Lfu};
    ExpertEnsemble e(p, 1);
    Tier1Cache c = split_cache();
    std::uint64_t t = 100;
    auto select = [&](const Tier1Cache& cc) { return e.get_victim(cc).victim; };
    c.fill(pg(5), ++t, select);
    c.fill(pg(6), ++t, select);
    REQUIRE(e.predictions(0).size() == 2);
    REQUIRE(e.predictions(1).size() == 1);
    const std::vector<PageId> misses{pg(1), pg(2), pg(3)};
    e.record_misses_and_adjust(misses);
    CHECK(e.mispredictions()[0] == 2);
    CHECK(e.mispredictions()[1] == 1);
    for (int i = 0; i < 3; ++i) e.record_misses_and_adjust({});
    CHECK(e.weights()[0] <= e.weights()[1]);
    const auto expected = normalized(oracle_update({0.5, 0.5}, {2, 1}, 3, 0.5, 0.5, 0.25, false));
    CHECK(e.probs()[0] == doctest::Approx(expected[0]).epsilon(1e-12));
    check_distribution(e);
}

TEST_CASE("long runs keep a valid distribution") {
    for (auto mode : {PenaltyMode::Corrected, PenaltyMode::Literal}) {
        EnsembleParams p;
        p.mode = mode;
        Evictor ev(EvictionPolicy::WeightSharing, p, 6);
        Tier1Cache c(16);
        Rng rng(12);
        std::uint64_t t = 0;
        std::vector<PageId> misses;
        for (int i = 0; i < 20000; ++i) {
            const auto page = pg(rng.below(64));
            if (c.access(page, RequestKind::Read, ++t) == AccessOutcome::Miss) {
                misses.push_back(page);
                c.fill(page, t, [&](const Tier1Cache& cc) { return ev.select(cc); });
            }
            if (i % 8 == 7) {
                ev.end_iteration(misses);
                misses.clear();
                check_distribution(*ev.ensemble());
            }
        }
        CHECK(ev.ensemble()->adjustments() > 100);
    }
}

TEST_CASE("identical seeds give identical victim sequences") {
    auto victims = [](std::uint64_t seed) {
        Evictor ev(EvictionPolicy::WeightSharing, EnsembleParams{}, seed);
        Tier1Cache c(8);
        std::vector<PageId> out;
        Rng rng(99);
        std::uint64_t t = 0;
        for (int i = 0; i < 2000; ++i) {
            const auto p = pg(rng.below(40));
            ++t;
            if (c.access(p, RequestKind::Read, t) == AccessOutcome::Miss) {
                const auto e = c.fill(p, t, [&](const Tier1Cache& cc) { return ev.select(cc); });
                if (e) out.push_back(e->page);
                const std::vector<PageId> m{p};
                ev.end_iteration(m);
            }
        }
        return out;
    };
    CHECK(victims(4) == victims(4));
}

TEST_CASE("ensemble parameters are validated") {
    EnsembleParams p;
    p.beta = 1.0;
    CHECK_THROWS_AS(validate(p), ConfigError);
    p = EnsembleParams{};
    p.alpha = -0.1;
    CHECK_THROWS_AS(validate(p), ConfigError);
    p = EnsembleParams{};
    p.epoch_width = 0;
    CHECK_THROWS_AS(validate(p), ConfigError);
    p = EnsembleParams{};
    p.experts.clear();
    CHECK_THROWS_AS(ExpertEnsemble(p, 1), ConfigError);
    CHECK(expert_from_string("lfu") == Expert::Lfu);
    CHECK(eviction_policy_from_string("ws") == EvictionPolicy::WeightSharing);
    CHECK(penalty_mode_from_string("literal") == PenaltyMode::Literal);
    CHECK_THROWS_AS(eviction_policy_from_string("arc"), ConfigError);
}
