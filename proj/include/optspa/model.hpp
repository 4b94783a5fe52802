#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "optspa/kv_config.hpp"
#include "optspa/mask.hpp"
#include "optspa/quant.hpp"
#include "optspa/tensor.hpp"

namespace optspa {

inline constexpr std::size_t kByteVocab = 256;

struct ModelConfig {
    std::size_t n_layers = 8;
    std::size_t d_model = 32;
    std::size_t n_heads = 4;
    std::size_t d_ff = 128;
    std::size_t vocab = kByteVocab;
    std::size_t max_seq = 64;

    // Throws invalid_input_error unless all counts are >= 1, n_heads divides
    // d_model and vocab is 256.
    void validate() const;

    std::size_t head_dim() const noexcept { return d_model / n_heads; }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// The six prunable matrices of a decoder layer, in canonical order.
enum class MatrixKind : std::uint8_t { Wq = 0, Wk, Wv, Wo, Wup, Wdown };
inline constexpr std::array<MatrixKind, 6> kMatrixKinds = {MatrixKind::Wq, MatrixKind::Wk,  MatrixKind::Wv,
                                                          MatrixKind::Wo, MatrixKind::Wup, MatrixKind::Wdown};

std::string_view matrix_kind_name(MatrixKind kind);
MatrixKind parse_matrix_kind(std::string_view name);

// "L{layer}.{kind}"
std::string matrix_name(std::size_t layer, MatrixKind kind);
std::vector<std::string> prunable_names(const ModelConfig& config);

// Input (rows) and output (cols) dimension of a prunable matrix. Weights are
// stored input-major: a layer computes y = x * W.
std::size_t matrix_in_dim(const ModelConfig& config, MatrixKind kind);
std::size_t matrix_out_dim(const ModelConfig& config, MatrixKind kind);

struct Checkpoint {
    ModelConfig config;
    std::map<std::string, Tensor2D> tensors;

    const Tensor2D& tensor(const std::string& name) const;
    Tensor2D& tensor(const std::string& name);

    // Throws invalid_input_error if any tensor is missing or misshapen.
    void validate() const;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// Expected name -> (rows, cols) for every tensor of a model with this config.
std::map<std::string, std::pair<std::size_t, std::size_t>> expected_shapes(const ModelConfig& config);

// Seeded random weights; layer l's matrices are scaled by 1 + 0.5 sin(pi l / (L-1)).
Checkpoint generate_toy_model(const ModelConfig& config, std::uint64_t seed);
double layer_scale(std::size_t layer, std::size_t n_layers);

// Autoregressive K/V storage. Rows are written through the quantizer at the
// layer's bit-width and dequantized on every read.
class KVCache {
  public:
    KVCache(const ModelConfig& config, KVCacheConfig kv);

    std::size_t length() const noexcept { return length_; }
    const KVCacheConfig& kv_config() const noexcept { return kv_; }
    void clear() noexcept;

    // Stores position `length()` for every layer. Called once per layer per step.
    void append(std::size_t layer, std::span<const float> k, std::span<const float> v);
    void advance() noexcept { ++length_; }

    // Dequantized rows for positions [0, n).
    void read_keys(std::size_t layer, std::size_t n, std::vector<float>& out) const;
    void read_values(std::size_t layer, std::size_t n, std::vector<float>& out) const;

  private:
    struct Row {
        QuantizedBlock quantized;
        std::vector<float> raw;  // used when bits == 16
    };
    void store(std::vector<Row>& rows, std::size_t layer, std::span<const float> x);
    void load(const std::vector<Row>& rows, std::size_t layer, std::size_t n, std::vector<float>& out) const;

    std::size_t d_model_;
    KVCacheConfig kv_;
    std::size_t length_ = 0;
    std::vector<std::vector<Row>> keys_;
    std::vector<std::vector<Row>> values_;
};

// Receives the input row of every prunable matrix during a forward step.
using ActivationObserver = std::function<void(std::size_t layer, MatrixKind kind, std::span<const float> input)>;

// One decoder step for `token` at `position`; returns logits over the vocab.
std::vector<float> forward_step(const Checkpoint& model, KVCache& cache, std::uint8_t token, std::size_t position,
                                const ActivationObserver& observer = {});

std::vector<std::uint8_t> tokenize_bytes(std::string_view text);
std::string detokenize_bytes(std::span<const std::uint8_t> tokens);

// exp(mean next-token NLL) over non-overlapping windows of length ctx.
double perplexity(const Checkpoint& model, std::span<const std::uint8_t> corpus, const KVCacheConfig& kv,
                  std::size_t ctx);

struct CalibrationStats {
    std::map<std::string, std::vector<float>> input_norms;  // per prunable matrix, per input feature
    std::size_t n_tokens = 0;

    const std::vector<float>& norms(const std::string& matrix) const;
    friend bool operator==(const CalibrationStats&, const CalibrationStats&) = default;
};

// Activation norms over the first n_tokens of the corpus, in max_seq windows.
CalibrationStats calibrate(const Checkpoint& model, std::span<const std::uint8_t> corpus, std::size_t n_tokens);

// ||W X - (M . W) X||_F^2 with w[m x k], x[k x n].
double reconstruction_loss(const Tensor2D& w, const Tensor2D& x, const BinaryMask& mask);

// Shared numerics, exposed for tests and oracles.
void rms_norm(std::span<const float> x, std::span<const float> gain, std::span<float> out);
float gelu(float x);

}  // namespace optspa
