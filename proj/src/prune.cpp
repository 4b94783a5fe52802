#include "optspa/prune.hpp"

#include <algorithm>
#include <cmath>

#include "optspa/errors.hpp"

namespace optspa {

std::string_view metric_name(MetricKind kind) {
    switch (kind) {
        case MetricKind::magnitude: return "magnitude";
        case MetricKind::wanda: return "wanda";
        case MetricKind::optspa: return "optspa";
    }
    return "?";
}

MetricKind parse_metric(std::string_view name) {
    for (auto k : {MetricKind::magnitude, MetricKind::wanda, MetricKind::optspa})
        if (metric_name(k) == name) return k;
    throw invalid_input_error("unknown metric '" + std::string(name) + "'");
}

bool metric_needs_activations(MetricKind kind) { return kind != MetricKind::magnitude; }

Tensor2D metric_magnitude(const Tensor2D& w) {
    Tensor2D s(w.rows(), w.cols());
    for (std::size_t i = 0; i < w.numel(); ++i) s.data()[i] = std::fabs(w.data()[i]);
    return s;
}

namespace {

void check_xnorm(const Tensor2D& w, std::span<const float> xnorm, const char* who) {
    if (xnorm.size() != w.cols()) {
        throw invalid_input_error(std::string(who) + ": xnorm has " + std::to_string(xnorm.size()) +
                                  " entries, weight has " + std::to_string(w.cols()) + " input features");
    }
}

}  // namespace

Tensor2D metric_wanda(const Tensor2D& w, std::span<const float> xnorm) {
    check_xnorm(w, xnorm, "metric_wanda");
    Tensor2D s(w.rows(), w.cols());
    for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) s(i, j) = std::fabs(w(i, j)) * xnorm[j];
    return s;
}

Tensor2D metric_optspa(const Tensor2D& w, std::span<const float> xnorm) {
    check_xnorm(w, xnorm, "metric_optspa");
    Tensor2D s(w.rows(), w.cols());
    if (w.empty()) return s;
    const auto row_norm = axis_l2_norms(w, Axis::row);
    const auto col_norm = axis_l2_norms(w, Axis::col);
    for (std::size_t i = 0; i < w.rows(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) {
            const double a = std::fabs(static_cast<double>(w(i, j)));
            const double by_row = row_norm[i] > 0.0 ? a / row_norm[i] : 0.0;
            const double by_col = col_norm[j] > 0.0 ? a / col_norm[j] : 0.0;
            s(i, j) = static_cast<float>(std::log1p(by_row + by_col) * std::sqrt(static_cast<double>(xnorm[j])));
        }
    }
    return s;
}

Tensor2D score_matrix(MetricKind kind, const Tensor2D& w, std::span<const float> xnorm) {
    switch (kind) {
        case MetricKind::magnitude: return metric_magnitude(w);
        case MetricKind::wanda: return metric_wanda(w, xnorm);
        case MetricKind::optspa: return metric_optspa(w, xnorm);
    }
    throw invalid_input_error("unknown metric");
}

std::size_t pruned_count(double ratio, std::size_t numel) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw invalid_input_error("sparsity ratio must be in [0, 1]");
    const double k = std::floor(ratio * static_cast<double>(numel) + 1e-9);
    return std::min(numel, static_cast<std::size_t>(k));
}

BinaryMask select_mask(const Tensor2D& scores, double ratio, MaskGrouping grouping) {
    BinaryMask mask(scores.rows(), scores.cols(), 1);
    if (grouping == MaskGrouping::matrix) {
        const std::size_t k = pruned_count(ratio, scores.numel());
        const auto order = stable_argsort(scores.data(), SortOrder::asc);
        for (std::size_t i = 0; i < k; ++i) mask.keep[order[i]] = 0;
    } else {
        const std::size_t k = pruned_count(ratio, scores.cols());
        for (std::size_t r = 0; r < scores.rows(); ++r) {
            const auto order = stable_argsort(scores.row(r), SortOrder::asc);
            for (std::size_t i = 0; i < k; ++i) mask.keep[r * scores.cols() + order[i]] = 0;
        }
    }
    return mask;
}

SparsityProfile SparsityProfile::uniform(std::size_t n_layers, double ratio) {
    SparsityProfile p;
    p.overall = ratio;
    for (std::size_t l = 0; l < n_layers; ++l) {
        LayerSparsity ls;
        ls.index = l;
        ls.ratios.fill(ratio);
        p.layers.push_back(ls);
    }
    return p;
}

const LayerSparsity& SparsityProfile::layer(std::size_t index) const {
    for (const auto& l : layers)
        if (l.index == index) return l;
    throw invalid_input_error("sparsity profile has no entry for layer " + std::to_string(index));
}

void SparsityProfile::validate(const ModelConfig& config) const {
    if (!(overall >= 0.0 && overall <= 1.0)) throw invalid_input_error("overall sparsity must be in [0, 1]");
    std::vector<int> seen(config.n_layers, 0);
    for (const auto& l : layers) {
        if (l.index >= config.n_layers) {
            throw invalid_input_error("sparsity profile names layer " + std::to_string(l.index) + ", model has " +
                                      std::to_string(config.n_layers));
        }
        if (seen[l.index]++) throw invalid_input_error("layer " + std::to_string(l.index) + " listed twice");
        for (double r : l.ratios) {
            if (!(r >= 0.0 && r <= 1.0)) throw invalid_input_error("sparsity ratio outside [0, 1]");
        }
    }
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        if (!seen[l]) throw invalid_input_error("sparsity profile has no entry for layer " + std::to_string(l));
    }
}

double SparsityProfile::weighted_mean(const ModelConfig& config) const {
    double zeros = 0.0, total = 0.0;
    for (const auto& l : layers) {
        for (auto k : kMatrixKinds) {
            const double n = static_cast<double>(matrix_in_dim(config, k) * matrix_out_dim(config, k));
            zeros += l.ratio(k) * n;
            total += n;
        }
    }
    return total > 0.0 ? zeros / total : 0.0;
}

bool SparsityProfile::meets_budget(const ModelConfig& config) const {
    return weighted_mean(config) >= overall - 1e-9;
}

PruneResult apply_profile(const Checkpoint& model, const SparsityProfile& profile, const CalibrationStats* calib,
                          MetricKind metric, MaskGrouping grouping) {
    profile.validate(model.config);
    if (metric_needs_activations(metric) && calib == nullptr) {
        throw invalid_input_error(std::string("metric '") + std::string(metric_name(metric)) +
                                  "' needs calibration stats");
    }
    PruneResult out{model, {}};
    for (std::size_t l = 0; l < model.config.n_layers; ++l) {
        const auto& ls = profile.layer(l);
        for (auto k : kMatrixKinds) {
            const std::string name = matrix_name(l, k);
            Tensor2D& w = out.model.tensor(name);
            // Stored input-major; score in out x in so columns are input features.
            const Tensor2D wt = w.transposed();
            std::span<const float> xnorm;
            if (metric_needs_activations(metric)) xnorm = calib->norms(name);
            const BinaryMask mask = select_mask(score_matrix(metric, wt, xnorm), ls.ratio(k), grouping).transposed();
            for (std::size_t i = 0; i < mask.numel(); ++i) {
                if (!mask.keep[i]) w.data()[i] = 0.0f;
            }
            out.masks.emplace(name, mask);
        }
    }
    return out;
}

SparsityReport measure_sparsity(const Checkpoint& model) {
    SparsityReport rep;
    std::size_t zeros = 0, total = 0;
    for (const auto& name : prunable_names(model.config)) {
        const auto& t = model.tensor(name);
        std::size_t z = 0;
        for (float v : t.data()) z += (v == 0.0f);
        rep.per_matrix[name] = t.numel() ? static_cast<double>(z) / static_cast<double>(t.numel()) : 0.0;
        zeros += z;
        total += t.numel();
    }
    rep.overall = total ? static_cast<double>(zeros) / static_cast<double>(total) : 0.0;
    return rep;
}

SparsityReport measure_sparsity(const std::map<std::string, BinaryMask>& masks) {
    SparsityReport rep;
    std::size_t zeros = 0, total = 0;
    for (const auto& [name, m] : masks) {
        const std::size_t z = m.zeros();
        rep.per_matrix[name] = m.numel() ? static_cast<double>(z) / static_cast<double>(m.numel()) : 0.0;
        zeros += z;
        total += m.numel();
    }
    rep.overall = total ? static_cast<double>(zeros) / static_cast<double>(total) : 0.0;
    return rep;
}

}  // namespace optspa
