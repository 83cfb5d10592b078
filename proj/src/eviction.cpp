#include "tiered/eviction.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "tiered/errors.hpp"

namespace tiered {

std::string_view to_string(Expert expert) {
    switch (expert) {
        case Expert::Lru: return "lru";
        case Expert::Lfu: return "lfu";
        case Expert::Random: return "random";
    }
    return "?";
}

std::string_view to_string(PenaltyMode mode) {
    return mode == PenaltyMode::Corrected ? "corrected" : "literal";
}

Expert expert_from_string(std::string_view name) {
    if (name == "lru") return Expert::Lru;
    if (name == "lfu") return Expert::Lfu;
    if (name == "random") return Expert::Random;
    throw ConfigError("eviction.experts", "unknown expert '" + std::string(name) + "'");
}

PenaltyMode penalty_mode_from_string(std::string_view name) {
    if (name == "corrected") return PenaltyMode::Corrected;
    if (name == "literal") return PenaltyMode::Literal;
    throw ConfigError("eviction.mode", "unknown penalty mode '" + std::string(name) + "'");
}

std::string_view to_string(EvictionPolicy policy) {
    switch (policy) {
        case EvictionPolicy::Lru: return "lru";
        case EvictionPolicy::Lfu: return "lfu";
        case EvictionPolicy::Random: return "random";
        case EvictionPolicy::WeightSharing: return "ws";
    }
    return "?";
}

EvictionPolicy eviction_policy_from_string(std::string_view name) {
    if (name == "lru") return EvictionPolicy::Lru;
    if (name == "lfu") return EvictionPolicy::Lfu;
    if (name == "random") return EvictionPolicy::Random;
    if (name == "ws") return EvictionPolicy::WeightSharing;
    throw ConfigError("eviction.policy", "unknown policy '" + std::string(name) + "'");
}

PageId expert_victim(Expert expert, const Tier1Cache& cache, Rng& rng) {
    if (cache.size() == 0) throw std::invalid_argument("expert_victim: cache holds no valid line");
    const auto lines = cache.lines();
    if (expert == Expert::Random) {
        std::uint64_t k = rng.below(cache.size());
        for (const CacheLine& line : lines) {
            if (line.valid && k-- == 0) return line.tag;
        }
        throw InvariantError("expert_victim: valid-line count out of sync");
    }
    const CacheLine* best = nullptr;
    for (const CacheLine& line : lines) {
        if (!line.valid) continue;
        if (best == nullptr) {
            best = &line;
            continue;
        }
        const std::uint64_t key = expert == Expert::Lru ? line.last_access : line.freq;
        const std::uint64_t best_key = expert == Expert::Lru ? best->last_access : best->freq;
        if (key < best_key || (key == best_key && line.tag < best->tag)) best = &line;
    }
    return best->tag;
}

void validate(const EnsembleParams& params) {
    if (params.experts.empty()) throw ConfigError("eviction.experts", "need at least one expert");
    if (!(params.alpha >= 0.0 && params.alpha <= 1.0))
        throw ConfigError("eviction.alpha", "must lie in [0, 1]");
    if (!(params.beta > 0.0 && params.beta < 1.0))
        throw ConfigError("eviction.beta", "must lie in (0, 1)");
    if (params.epoch_width == 0) throw ConfigError("eviction.epoch_width", "must be at least 1");
    if (!(params.threshold >= 0.0 && params.threshold <= 1.0))
        throw ConfigError("eviction.threshold", "must lie in [0, 1]");
}

ExpertEnsemble::ExpertEnsemble(EnsembleParams params, std::uint64_t seed)
    : params_(std::move(params)), rng_(seed) {
    validate(params_);
    const std::size_t n = params_.experts.size();
    weights_.assign(n, 1.0 / static_cast<double>(n));
    probs_ = weights_;
    mispred_.assign(n, 0);
    predictions_.resize(n);
}

std::size_t ExpertEnsemble::leader() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs_.size(); ++i) {
        if (probs_[i] > probs_[best]) best = i;
    }
    return best;
}

EvictionDecision ExpertEnsemble::get_victim(const Tier1Cache& cache) {
    EvictionDecision decision;
    decision.chosen_expert = leader();
    decision.per_expert_choices.reserve(n_experts());
    for (std::size_t i = 0; i < n_experts(); ++i) {
        const PageId choice = expert_victim(params_.experts[i], cache, rng_);
        decision.per_expert_choices.push_back(choice);
        predictions_[i].insert(choice);
    }
    decision.victim = decision.per_expert_choices[decision.chosen_expert];
    return decision;
}

void ExpertEnsemble::record_misses_and_adjust(std::span<const PageId> misses) {
    std::vector<PageId> distinct(misses.begin(), misses.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (const PageId& page : distinct) {
        for (std::size_t i = 0; i < n_experts(); ++i) {
            if (predictions_[i].contains(page)) ++mispred_[i];
        }
    }
    epoch_misses_ += misses.size();
    ++iter_;
    if (iter_ == 0 || iter_ % params_.epoch_width != 0) return;
    adjust();
}

void ExpertEnsemble::adjust() {
    const std::size_t n = n_experts();
    const std::vector<double> previous = weights_;
    const double exempt_below = params_.threshold * static_cast<double>(epoch_misses_);
    for (std::size_t i = 0; i < n && epoch_misses_ > 0; ++i) {
        if (static_cast<double>(mispred_[i]) < exempt_below) continue;
        const double d = std::pow(params_.beta, static_cast<double>(mispred_[i]));
        if (params_.mode == PenaltyMode::Corrected) {
            weights_[i] *= d;
        } else {
            weights_[i] -= weights_[i] * d;
        }
    }
    double shared = 0.0;
    for (std::size_t i = 0; i < n; ++i) shared += previous[i] - weights_[i];
    shared /= static_cast<double>(n);
    for (double& w : weights_) w += params_.alpha * shared;
    normalize();

    for (auto& log : predictions_) log.clear();
    std::fill(mispred_.begin(), mispred_.end(), 0);
    epoch_misses_ = 0;
    ++adjustments_;
}

void ExpertEnsemble::normalize() {
    double total = 0.0;
    for (double& w : weights_) {
        w = std::max(w, 0.0);
        total += w;
    }
    if (!(total > 0.0) || !std::isfinite(total)) {
        std::fill(weights_.begin(), weights_.end(), 1.0 / static_cast<double>(n_experts()));
        total = 1.0;
    } else if (total < 1e-200) {
        // The update is homogeneous in the weights, so rescaling them leaves
        // every later probability unchanged.
        for (double& w : weights_) w /= total;
        total = 1.0;
    }
    for (std::size_t i = 0; i < n_experts(); ++i) probs_[i] = weights_[i] / total;
}

void ExpertEnsemble::set_weights(std::span<const double> weights) {
    if (weights.size() != n_experts()) throw std::invalid_argument("set_weights: size mismatch");
    weights_.assign(weights.begin(), weights.end());
    normalize();
}

Evictor::Evictor(EvictionPolicy policy, const EnsembleParams& params, std::uint64_t seed)
    : policy_(policy), rng_(seed) {
    if (policy == EvictionPolicy::WeightSharing) ensemble_.emplace(params, seed);
}

PageId Evictor::select(const Tier1Cache& cache) {
    switch (policy_) {
        case EvictionPolicy::Lru: return expert_victim(Expert::Lru, cache, rng_);
        case EvictionPolicy::Lfu: return expert_victim(Expert::Lfu, cache, rng_);
        case EvictionPolicy::Random: return expert_victim(Expert::Random, cache, rng_);
        case EvictionPolicy::WeightSharing: return ensemble_->get_victim(cache).victim;
    }
    throw InvariantError("Evictor: unhandled policy");
}

void Evictor::end_iteration(std::span<const PageId> misses) {
    if (ensemble_) ensemble_->record_misses_and_adjust(misses);
}

}  // namespace tiered
