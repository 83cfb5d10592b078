#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "tiered/rng.hpp"
#include "tiered/tier1_cache.hpp"

namespace tiered {

enum class Expert : std::uint8_t { Lru, Lfu, Random };

std::string_view to_string(Expert expert);
Expert expert_from_string(std::string_view name);

/// Victim proposed by a single expert. Ties go to the lowest page.
/// Throws std::invalid_argument on an empty cache.
PageId expert_victim(Expert expert, const Tier1Cache& cache, Rng& rng);

/// How penalized experts lose weight at an epoch boundary.
///   Corrected: w <- w * beta^mispred
///   Literal:   w <- w - w * beta^mispred, the update exactly as the original
///              pseudocode prints it (fewer mispredictions, larger loss).
/// In both modes an expert whose mispredictions fall below
/// threshold * epoch_misses is left untouched.
enum class PenaltyMode : std::uint8_t { Corrected, Literal };

std::string_view to_string(PenaltyMode mode);
PenaltyMode penalty_mode_from_string(std::string_view name);

struct EnsembleParams {
    std::vector<Expert> experts{Expert::Lru, Expert::Lfu, Expert::Random};
    double alpha = 0.5;             // share rate
    double beta = 0.5;              // penalty base
    std::uint64_t epoch_width = 4;  // polling iterations per epoch
    double threshold = 0.25;
    PenaltyMode mode = PenaltyMode::Corrected;
};

void validate(const EnsembleParams& params);

struct EvictionDecision {
    PageId victim;
    std::size_t chosen_expert = 0;
    std::vector<PageId> per_expert_choices;
};

/// Weight-sharing learner over local eviction experts.
///
/// Every eviction asks all experts for a victim and logs each proposal. The
/// expert with the highest probability decides. Once per polling iteration the
/// caller reports that iteration's misses; a miss on a page an expert proposed
/// earlier in the epoch counts as one of its mispredictions. At each epoch
/// boundary weights are penalized, the mean loss is shared back at rate alpha,
/// probabilities are renormalized and the logs are cleared.
class ExpertEnsemble {
public:
    ExpertEnsemble(EnsembleParams params, std::uint64_t seed);

    EvictionDecision get_victim(const Tier1Cache& cache);

    void record_misses_and_adjust(std::span<const PageId> misses);

    std::size_t n_experts() const noexcept { return params_.experts.size(); }
    const EnsembleParams& params() const noexcept { return params_; }
    std::span<const double> weights() const noexcept { return weights_; }
    std::span<const double> probs() const noexcept { return probs_; }
    std::span<const std::uint64_t> mispredictions() const noexcept { return mispred_; }
    const std::unordered_set<PageId, PageIdHash>& predictions(std::size_t expert) const {
        return predictions_.at(expert);
    }
    std::uint64_t iteration() const noexcept { return iter_; }
    std::uint64_t epoch_misses() const noexcept { return epoch_misses_; }
    std::uint64_t adjustments() const noexcept { return adjustments_; }

    /// Index of the expert with maximal probability, lowest index on ties.
    std::size_t leader() const;

    /// Overrides the weights (probabilities follow). For tests and warm starts.
    void set_weights(std::span<const double> weights);

private:
    void adjust();
    void normalize();

    EnsembleParams params_;
    Rng rng_;
    std::vector<double> weights_;
    std::vector<double> probs_;
    std::vector<std::uint64_t> mispred_;
    std::vector<std::unordered_set<PageId, PageIdHash>> predictions_;
    std::uint64_t iter_ = 0;
    std::uint64_t epoch_misses_ = 0;
    std::uint64_t adjustments_ = 0;
};

enum class EvictionPolicy : std::uint8_t { Lru, Lfu, Random, WeightSharing };

std::string_view to_string(EvictionPolicy policy);
EvictionPolicy eviction_policy_from_string(std::string_view name);

/// Victim selection for one process: a single expert, or the ensemble.
class Evictor {
public:
    Evictor(EvictionPolicy policy, const EnsembleParams& params, std::uint64_t seed);

    PageId select(const Tier1Cache& cache);

    /// End of one polling iteration; feeds the ensemble when present.
    void end_iteration(std::span<const PageId> misses);

    EvictionPolicy policy() const noexcept { return policy_; }
    const ExpertEnsemble* ensemble() const noexcept {
        return ensemble_ ? &*ensemble_ : nullptr;
    }

private:
    EvictionPolicy policy_;
    Rng rng_;
    std::optional<ExpertEnsemble> ensemble_;
};

}  // namespace tiered
