#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "optspa/model.hpp"
#include "optspa/prune.hpp"
#include "optspa/quant.hpp"
#include "optspa/rng.hpp"

namespace optspa {

struct Dimension {
    std::string name;
    std::vector<double> choices;  // ordered, nonempty
    double weight = 1.0;          // element count, used by the sparsity budget
};

enum class SpaceKind { sparsity, bandwidth, unconstrained };

struct SearchSpace {
    SpaceKind kind = SpaceKind::unconstrained;
    double overall = 0.0;  // sparsity budget, only for SpaceKind::sparsity
    std::vector<Dimension> dims;

    void validate() const;
};

// One choice index per dimension.
using Assignment = std::vector<std::size_t>;

// Choice offsets around the overall ratio: -0.05 .. +0.05 in 0.025 steps.
inline constexpr int kGridHalfSteps = 2;
inline constexpr double kGridStep = 0.025;

// One dim per layer ("L{l}"), or one per prunable matrix ("L{l}.Wq", ...) when
// per_matrix is set. Choices outside [0, 1] are dropped.
SearchSpace make_sparsity_space(const ModelConfig& config, double overall, bool per_matrix = false);
SearchSpace make_bandwidth_space(std::size_t n_layers);

std::vector<double> assignment_values(const SearchSpace& space, const Assignment& a);

// Sparsity: weighted mean >= overall (1e-9 slack). Bandwidth: only 6 and 8,
// count(8) == count(6), or count(6) == count(8) + 1 for an odd layer count.
bool check_feasible(const SearchSpace& space, const Assignment& a);

SparsityProfile to_sparsity_profile(const SearchSpace& space, const Assignment& a, std::size_t n_layers);
BandwidthProfile to_bandwidth_profile(const SearchSpace& space, const Assignment& a);

// Swaps 6 and 8 per layer.
BandwidthProfile opposite_profile(const BandwidthProfile& p);

struct TrialRecord {
    std::size_t trial = 0;
    Assignment assignment;
    bool feasible = false;
    std::optional<double> objective;
    double seconds = 0.0;
};

struct TpeState {
    std::vector<TrialRecord> history;
    double gamma = 0.25;
    std::size_t n_startup = 5;
    std::size_t n_candidates = 24;
    double alpha = 1.0;
    Rng rng{0};

    explicit TpeState(std::uint64_t seed = 0) : rng(seed) {}
};

std::size_t tpe_good_count(std::size_t n_history, double gamma);

// Appends an evaluated trial. Throws invalid_input_error if it has no objective.
void tpe_observe(TpeState& state, const TrialRecord& trial);

// Smoothed categorical densities of one dim over the good and bad trials.
struct TpeDensities {
    std::vector<double> good;
    std::vector<double> bad;
};
std::vector<TpeDensities> tpe_densities(const TpeState& state, const SearchSpace& space);

// Uniform draws during startup, otherwise the best of n_candidates draws from
// the good densities under sum_d log l_d - log g_d.
Assignment tpe_suggest(TpeState& state, const SearchSpace& space);

using Objective = std::function<double(const Assignment&)>;

struct SearchOptions {
    std::size_t trials = 50;
    std::uint64_t seed = 0;
    std::size_t max_redraws = 100;
    bool record_time = false;  // wall time in the ledger breaks bitwise reproducibility
    // Uniform random suggestions only; the baseline TPE is compared against.
    bool random_only = false;
    // TPE constants; defaults match TpeState.
    double gamma = 0.25;
    std::size_t n_startup = 5;
    std::size_t n_candidates = 24;
    double alpha = 1.0;
};

struct SearchResult {
    Assignment best;
    double best_objective = 0.0;
    std::vector<TrialRecord> ledger;
    std::size_t evaluations = 0;  // distinct objective calls
};

// Trial loop: suggest, redraw infeasible suggestions up to max_redraws times
// (a slot with no feasible draw is recorded and skipped), evaluate with
// memoization, observe. Repeats are still observed, so they keep weighting
// the Parzen estimate. Throws search_error if trials == 0 or nothing was
// evaluated.
SearchResult run_search(const SearchSpace& space, const Objective& objective, const SearchOptions& options);

struct SparsityObjectiveConfig {
    MetricKind metric = MetricKind::optspa;
    MaskGrouping grouping = MaskGrouping::matrix;
    std::size_t ctx = 64;
    std::optional<KVCacheConfig> kv;  // all-16 when absent
};

// PPL of the model pruned at the assignment's profile.
Objective sparsity_objective(const Checkpoint& model, std::span<const std::uint8_t> corpus,
                             const CalibrationStats* calib, const SearchSpace& space,
                             const SparsityObjectiveConfig& config);

// PPL of the model with the assignment's KV bit-widths.
Objective bandwidth_objective(const Checkpoint& model, std::span<const std::uint8_t> corpus, const SearchSpace& space,
                              std::size_t ctx);

}  // namespace optspa
