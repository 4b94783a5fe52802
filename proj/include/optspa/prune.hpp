#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "optspa/mask.hpp"
#include "optspa/model.hpp"
#include "optspa/tensor.hpp"

namespace optspa {

enum class MetricKind { magnitude, wanda, optspa };

std::string_view metric_name(MetricKind kind);
MetricKind parse_metric(std::string_view name);
bool metric_needs_activations(MetricKind kind);

// Scores follow the out x in convention: column j is input feature j and
// xnorm[j] is that feature's activation L2 norm.

// S_ij = |W_ij|
Tensor2D metric_magnitude(const Tensor2D& w);

// S_ij = |W_ij| * xnorm_j
Tensor2D metric_wanda(const Tensor2D& w, std::span<const float> xnorm);

// S_ij = ln(1 + |W_ij| / ||W_i||_2 + |W_ij| / ||W_j||_2) * sqrt(xnorm_j)
//
// ||W_i|| is the norm of row i and ||W_j|| the norm of column j. A ratio whose
// norm is zero is taken as 0; its numerator is necessarily zero as well.
Tensor2D metric_optspa(const Tensor2D& w, std::span<const float> xnorm);

Tensor2D score_matrix(MetricKind kind, const Tensor2D& w, std::span<const float> xnorm);

// Comparison group for mask selection.
enum class MaskGrouping { matrix, row };

// Number of entries zeroed at `ratio`: floor(ratio * numel). A 1e-9 slack
// absorbs binary representation error of decimal grid ratios such as 0.575.
std::size_t pruned_count(double ratio, std::size_t numel);

// Zeroes the floor(ratio * numel) lowest-scored entries; ties go to the lower
// row-major index. With MaskGrouping::row the count is taken per row.
BinaryMask select_mask(const Tensor2D& scores, double ratio, MaskGrouping grouping = MaskGrouping::matrix);

// Ratios for one layer, indexed by MatrixKind.
struct LayerSparsity {
    std::size_t index = 0;
    bool per_matrix = false;
    std::array<double, 6> ratios{};

    double ratio(MatrixKind k) const { return ratios[static_cast<std::size_t>(k)]; }

    friend bool operator==(const LayerSparsity&, const LayerSparsity&) = default;
};

struct SparsityProfile {
    double overall = 0.0;
    std::vector<LayerSparsity> layers;

    static SparsityProfile uniform(std::size_t n_layers, double ratio);

    // Throws invalid_input_error unless every layer of the model is covered
    // exactly once and every ratio lies in [0, 1].
    void validate(const ModelConfig& config) const;
    const LayerSparsity& layer(std::size_t index) const;

    // Element-count-weighted mean ratio over all prunable matrices.
    double weighted_mean(const ModelConfig& config) const;
    bool meets_budget(const ModelConfig& config) const;

    friend bool operator==(const SparsityProfile&, const SparsityProfile&) = default;
};

struct PruneResult {
    Checkpoint model;
    std::map<std::string, BinaryMask> masks;  // stored in the weight's own layout
};

// Scores and masks every prunable matrix at its profile ratio. The input
// checkpoint is left untouched; non-prunable tensors are copied verbatim.
PruneResult apply_profile(const Checkpoint& model, const SparsityProfile& profile, const CalibrationStats* calib,
                          MetricKind metric, MaskGrouping grouping = MaskGrouping::matrix);

struct SparsityReport {
    std::map<std::string, double> per_matrix;
    double overall = 0.0;
};

SparsityReport measure_sparsity(const Checkpoint& model);
SparsityReport measure_sparsity(const std::map<std::string, BinaryMask>& masks);

}  // namespace optspa
