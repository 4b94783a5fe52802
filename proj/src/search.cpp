#include "optspa/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "optspa/errors.hpp"

namespace optspa {

void SearchSpace::validate() const {
    if (dims.empty()) throw invalid_input_error("search space has no dimensions");
    for (const auto& d : dims) {
        if (d.choices.empty()) throw invalid_input_error("dimension '" + d.name + "' has no choices");
    }
}

namespace {

// Nearest double to the decimal grid value.
double snap(double v) { return std::round(v * 1e6) / 1e6; }

std::vector<double> sparsity_choices(double overall) {
    std::vector<double> out;
    for (int k = -kGridHalfSteps; k <= kGridHalfSteps; ++k) {
        const double r = snap(overall + k * kGridStep);
        if (r >= 0.0 && r <= 1.0) out.push_back(r);
    }
    return out;
}

}  // namespace

SearchSpace make_sparsity_space(const ModelConfig& config, double overall, bool per_matrix) {
    if (!(overall >= 0.0 && overall <= 1.0)) throw invalid_input_error("overall sparsity must be in [0, 1]");
    SearchSpace space;
    space.kind = SpaceKind::sparsity;
    space.overall = overall;
    const auto choices = sparsity_choices(overall);
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        if (per_matrix) {
            for (auto k : kMatrixKinds) {
                space.dims.push_back({matrix_name(l, k), choices,
                                      static_cast<double>(matrix_in_dim(config, k) * matrix_out_dim(config, k))});
            }
        } else {
            double n = 0.0;
            for (auto k : kMatrixKinds) n += static_cast<double>(matrix_in_dim(config, k) * matrix_out_dim(config, k));
            space.dims.push_back({"L" + std::to_string(l), choices, n});
        }
    }
    return space;
}

SearchSpace make_bandwidth_space(std::size_t n_layers) {
    SearchSpace space;
    space.kind = SpaceKind::bandwidth;
    for (std::size_t l = 0; l < n_layers; ++l) space.dims.push_back({"L" + std::to_string(l), {6.0, 8.0}, 1.0});
    return space;
}

std::vector<double> assignment_values(const SearchSpace& space, const Assignment& a) {
    if (a.size() != space.dims.size()) throw invalid_input_error("assignment does not cover every dimension");
    std::vector<double> v(a.size());
    for (std::size_t d = 0; d < a.size(); ++d) {
        if (a[d] >= space.dims[d].choices.size()) throw invalid_input_error("choice index out of range");
        v[d] = space.dims[d].choices[a[d]];
    }
    return v;
}

bool check_feasible(const SearchSpace& space, const Assignment& a) {
    const auto values = assignment_values(space, a);
    switch (space.kind) {
        case SpaceKind::unconstrained: return true;
        case SpaceKind::sparsity: {
            double num = 0.0, den = 0.0;
            for (std::size_t d = 0; d < values.size(); ++d) {
                num += values[d] * space.dims[d].weight;
                den += space.dims[d].weight;
            }
            return num / den >= space.overall - 1e-9;
        }
        case SpaceKind::bandwidth: {
            std::size_t n6 = 0, n8 = 0;
            for (double b : values) {
                if (b == 6.0) ++n6;
                else if (b == 8.0) ++n8;
                else return false;
            }
            return values.size() % 2 == 0 ? n6 == n8 : n6 == n8 + 1;
        }
    }
    return false;
}

SparsityProfile to_sparsity_profile(const SearchSpace& space, const Assignment& a, std::size_t n_layers) {
    const auto values = assignment_values(space, a);
    SparsityProfile p;
    p.overall = space.overall;
    if (values.size() == n_layers) {
        for (std::size_t l = 0; l < n_layers; ++l) {
            LayerSparsity ls;
            ls.index = l;
            ls.ratios.fill(values[l]);
            p.layers.push_back(ls);
        }
    } else if (values.size() == n_layers * kMatrixKinds.size()) {
        for (std::size_t l = 0; l < n_layers; ++l) {
            LayerSparsity ls;
            ls.index = l;
            ls.per_matrix = true;
            for (std::size_t k = 0; k < kMatrixKinds.size(); ++k) ls.ratios[k] = values[l * kMatrixKinds.size() + k];
            p.layers.push_back(ls);
        }
    } else {
        throw invalid_input_error("assignment does not match a per-layer or per-matrix sparsity space");
    }
    return p;
}

BandwidthProfile to_bandwidth_profile(const SearchSpace& space, const Assignment& a) {
    BandwidthProfile p;
    for (double v : assignment_values(space, a)) p.bits.push_back(static_cast<int>(v));
    return p;
}

BandwidthProfile opposite_profile(const BandwidthProfile& p) {
    BandwidthProfile out;
    out.bits.reserve(p.bits.size());
    for (int b : p.bits) {
        if (b == 6) out.bits.push_back(8);
        else if (b == 8) out.bits.push_back(6);
        else throw invalid_input_error("opposite_profile: bit-width " + std::to_string(b) + " is not 6 or 8");
    }
    return out;
}

// ---------------------------------------------------------------------------
// TPE

std::size_t tpe_good_count(std::size_t n_history, double gamma) {
    const auto n = static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(n_history)));
    return std::max<std::size_t>(1, n);
}

void tpe_observe(TpeState& state, const TrialRecord& trial) {
    if (!trial.objective) throw invalid_input_error("tpe_observe: trial has no objective");
    state.history.push_back(trial);
}

std::vector<TpeDensities> tpe_densities(const TpeState& state, const SearchSpace& space) {
    const std::size_t n = state.history.size();
    std::vector<double> objectives(n);
    for (std::size_t i = 0; i < n; ++i) objectives[i] = *state.history[i].objective;
    const auto order = stable_argsort(std::span<const double>(objectives), SortOrder::asc);
    const std::size_t n_good = std::min(n, tpe_good_count(n, state.gamma));

    std::vector<TpeDensities> out(space.dims.size());
    for (std::size_t d = 0; d < space.dims.size(); ++d) {
        const std::size_t nc = space.dims[d].choices.size();
        std::vector<double> good(nc, 0.0), bad(nc, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            const std::size_t c = state.history[order[r]].assignment.at(d);
            (r < n_good ? good : bad).at(c) += 1.0;
        }
        const double n_bad = static_cast<double>(n - n_good);
        const double denom_good = static_cast<double>(n_good) + state.alpha * static_cast<double>(nc);
        const double denom_bad = n_bad + state.alpha * static_cast<double>(nc);
        for (std::size_t c = 0; c < nc; ++c) {
            good[c] = (good[c] + state.alpha) / denom_good;
            bad[c] = (bad[c] + state.alpha) / denom_bad;
        }
        out[d] = {std::move(good), std::move(bad)};
    }
    return out;
}

namespace {

std::size_t draw_categorical(Rng& rng, const std::vector<double>& probs) {
    const double u = rng.uniform01();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.size() - 1;
}

}  // namespace

Assignment tpe_suggest(TpeState& state, const SearchSpace& space) {
    space.validate();
    Assignment a(space.dims.size());
    if (state.history.size() < state.n_startup) {
        for (std::size_t d = 0; d < a.size(); ++d) a[d] = state.rng.index(space.dims[d].choices.size());
        return a;
    }
    const auto dens = tpe_densities(state, space);
    double best_score = -INFINITY;
    Assignment best;
    for (std::size_t c = 0; c < state.n_candidates; ++c) {
        double score = 0.0;
        for (std::size_t d = 0; d < a.size(); ++d) {
            a[d] = draw_categorical(state.rng, dens[d].good);
            score += std::log(dens[d].good[a[d]]) - std::log(dens[d].bad[a[d]]);
        }
        if (score > best_score) {
            best_score = score;
            best = a;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Trial loop

SearchResult run_search(const SearchSpace& space, const Objective& objective, const SearchOptions& options) {
    if (options.trials == 0) throw search_error("trial budget must be at least 1");
    space.validate();

    TpeState state(options.seed);
    state.gamma = options.gamma;
    state.n_startup = options.n_startup;
    state.n_candidates = options.n_candidates;
    state.alpha = options.alpha;
    SearchResult result;
    std::map<Assignment, double> memo;
    bool have_best = false;

    for (std::size_t t = 0; t < options.trials; ++t) {
        const auto start = std::chrono::steady_clock::now();
        auto suggest = [&] {
            if (options.random_only) {
                Assignment a(space.dims.size());
                for (std::size_t d = 0; d < a.size(); ++d) a[d] = state.rng.index(space.dims[d].choices.size());
                return a;
            }
            return tpe_suggest(state, space);
        };
        Assignment a = suggest();
        bool feasible = check_feasible(space, a);
        for (std::size_t r = 0; r < options.max_redraws && !feasible; ++r) {
            a = suggest();
            feasible = check_feasible(space, a);
        }

        TrialRecord rec;
        rec.trial = t;
        rec.assignment = a;
        rec.feasible = feasible;
        if (feasible) {
            auto it = memo.find(a);
            if (it == memo.end()) {
                it = memo.emplace(a, objective(a)).first;
                ++result.evaluations;
            }
            rec.objective = it->second;
            if (!have_best || *rec.objective < result.best_objective) {
                have_best = true;
                result.best = a;
                result.best_objective = *rec.objective;
            }
        }
        if (options.record_time) {
            rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
        if (rec.objective) tpe_observe(state, rec);
        result.ledger.push_back(std::move(rec));
    }
    if (!have_best) throw search_error("no feasible assignment was evaluated in " + std::to_string(options.trials) + " trials");
    return result;
}

Objective sparsity_objective(const Checkpoint& model, std::span<const std::uint8_t> corpus,
                             const CalibrationStats* calib, const SearchSpace& space,
                             const SparsityObjectiveConfig& config) {
    const KVCacheConfig kv = config.kv.value_or(KVCacheConfig::passthrough(model.config.n_layers));
    return [&model, corpus, calib, &space, config, kv](const Assignment& a) {
        const auto profile = to_sparsity_profile(space, a, model.config.n_layers);
        const auto pruned = apply_profile(model, profile, calib, config.metric, config.grouping);
        return perplexity(pruned.model, corpus, kv, config.ctx);
    };
}

Objective bandwidth_objective(const Checkpoint& model, std::span<const std::uint8_t> corpus, const SearchSpace& space,
                              std::size_t ctx) {
    return [&model, corpus, &space, ctx](const Assignment& a) {
        const auto kv = make_kv_config(to_bandwidth_profile(space, a), model.config.n_layers);
        return perplexity(model, corpus, kv, ctx);
    };
}

}  // namespace optspa
