#include "optspa/model.hpp"

#include <cmath>
#include <numbers>

#include "optspa/errors.hpp"
#include "optspa/rng.hpp"

namespace optspa {

void ModelConfig::validate() const {
    if (n_layers == 0 || d_model == 0 || n_heads == 0 || d_ff == 0 || max_seq == 0) {
        throw invalid_input_error("model config counts must all be >= 1");
    }
    if (d_model % n_heads != 0) throw invalid_input_error("n_heads must divide d_model");
    if (vocab != kByteVocab) throw invalid_input_error("vocab must be 256 (byte-level)");
}

std::string_view matrix_kind_name(MatrixKind kind) {
    switch (kind) {
        case MatrixKind::Wq: return "Wq";
        case MatrixKind::Wk: return "Wk";
        case MatrixKind::Wv: return "Wv";
        case MatrixKind::Wo: return "Wo";
        case MatrixKind::Wup: return "Wup";
        case MatrixKind::Wdown: return "Wdown";
    }
    return "?";
}

MatrixKind parse_matrix_kind(std::string_view name) {
    for (auto k : kMatrixKinds)
        if (matrix_kind_name(k) == name) return k;
    throw invalid_input_error("unknown matrix kind '" + std::string(name) + "'");
}

std::string matrix_name(std::size_t layer, MatrixKind kind) {
    return "L" + std::to_string(layer) + "." + std::string(matrix_kind_name(kind));
}

std::vector<std::string> prunable_names(const ModelConfig& config) {
    std::vector<std::string> names;
    names.reserve(config.n_layers * kMatrixKinds.size());
    for (std::size_t l = 0; l < config.n_layers; ++l)
        for (auto k : kMatrixKinds) names.push_back(matrix_name(l, k));
    return names;
}

std::size_t matrix_in_dim(const ModelConfig& config, MatrixKind kind) {
    return kind == MatrixKind::Wdown ? config.d_ff : config.d_model;
}

std::size_t matrix_out_dim(const ModelConfig& config, MatrixKind kind) {
    return kind == MatrixKind::Wup ? config.d_ff : config.d_model;
}

namespace {

std::string norm_name(std::size_t layer, std::string_view which) {
    return "L" + std::to_string(layer) + "." + std::string(which);
}

}  // namespace

std::map<std::string, std::pair<std::size_t, std::size_t>> expected_shapes(const ModelConfig& c) {
    std::map<std::string, std::pair<std::size_t, std::size_t>> shapes;
    shapes["embed"] = {c.vocab, c.d_model};
    shapes["pos"] = {c.max_seq, c.d_model};
    shapes["head"] = {c.d_model, c.vocab};
    shapes["final_norm"] = {1, c.d_model};
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        for (auto k : kMatrixKinds) shapes[matrix_name(l, k)] = {matrix_in_dim(c, k), matrix_out_dim(c, k)};
        shapes[norm_name(l, "attn_norm")] = {1, c.d_model};
        shapes[norm_name(l, "mlp_norm")] = {1, c.d_model};
    }
    return shapes;
}

const Tensor2D& Checkpoint::tensor(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw invalid_input_error("checkpoint has no tensor '" + name + "'");
    return it->second;
}

Tensor2D& Checkpoint::tensor(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw invalid_input_error("checkpoint has no tensor '" + name + "'");
    return it->second;
}

void Checkpoint::validate() const {
    config.validate();
    const auto shapes = expected_shapes(config);
    for (const auto& [name, shape] : shapes) {
        const auto& t = tensor(name);
        if (t.rows() != shape.first || t.cols() != shape.second) {
            throw invalid_input_error("tensor '" + name + "' has shape " + std::to_string(t.rows()) + "x" +
                                      std::to_string(t.cols()) + ", expected " + std::to_string(shape.first) +
                                      "x" + std::to_string(shape.second));
        }
    }
    if (tensors.size() != shapes.size()) throw invalid_input_error("checkpoint has unexpected extra tensors");
}

double layer_scale(std::size_t layer, std::size_t n_layers) {
    if (n_layers < 2) return 1.0;
    return 1.0 + 0.5 * std::sin(std::numbers::pi * static_cast<double>(layer) / static_cast<double>(n_layers - 1));
}

Checkpoint generate_toy_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    Checkpoint ckpt;
    ckpt.config = config;

    // Uniform in [-a, a] has standard deviation a / sqrt(3).
    auto fill = [&](std::size_t rows, std::size_t cols, double stddev) {
        Tensor2D t(rows, cols);
        const double a = stddev * std::sqrt(3.0);
        for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-a, a));
        return t;
    };
    auto ones = [](std::size_t n) { return Tensor2D(1, n, 1.0f); };

    // Insertion order fixes the draw order; the map itself is name-sorted.
    ckpt.tensors["embed"] = fill(config.vocab, config.d_model, 1.0);
    ckpt.tensors["pos"] = fill(config.max_seq, config.d_model, 0.1);
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        const double scale = layer_scale(l, config.n_layers);
        for (auto k : kMatrixKinds) {
            const std::size_t in = matrix_in_dim(config, k);
            ckpt.tensors[matrix_name(l, k)] =
                fill(in, matrix_out_dim(config, k), scale / std::sqrt(static_cast<double>(in)));
        }
        ckpt.tensors[norm_name(l, "attn_norm")] = ones(config.d_model);
        ckpt.tensors[norm_name(l, "mlp_norm")] = ones(config.d_model);
    }
    ckpt.tensors["final_norm"] = ones(config.d_model);
    ckpt.tensors["head"] = fill(config.d_model, config.vocab, 1.0 / std::sqrt(static_cast<double>(config.d_model)));
    return ckpt;
}

// ---------------------------------------------------------------------------
// KV cache

KVCache::KVCache(const ModelConfig& config, KVCacheConfig kv)
    : d_model_(config.d_model), kv_(std::move(kv)), keys_(config.n_layers), values_(config.n_layers) {
    if (kv_.bits.size() != config.n_layers) {
        throw invalid_input_error("KV config has " + std::to_string(kv_.bits.size()) + " entries, model has " +
                                  std::to_string(config.n_layers) + " layers");
    }
    for (int b : kv_.bits) {
        if (b < 2 || b > 16) throw invalid_input_error("KV bit-width " + std::to_string(b) + " out of range");
    }
    for (auto& k : keys_) k.reserve(config.max_seq);
    for (auto& v : values_) v.reserve(config.max_seq);
}

void KVCache::clear() noexcept {
    length_ = 0;
    for (auto& k : keys_) k.clear();
    for (auto& v : values_) v.clear();
}

void KVCache::store(std::vector<Row>& rows, std::size_t layer, std::span<const float> x) {
    if (x.size() != d_model_) throw invalid_input_error("KV row has wrong width");
    if (rows.size() != length_) throw invalid_input_error("KV cache append out of order");
    Row row;
    if (kv_.bits[layer] >= 16) {
        row.raw.assign(x.begin(), x.end());
    } else {
        row.quantized = quantize(x, kv_.bits[layer]);
    }
    rows.push_back(std::move(row));
}

void KVCache::load(const std::vector<Row>& rows, std::size_t layer, std::size_t n, std::vector<float>& out) const {
    out.resize(n * d_model_);
    const bool raw = kv_.bits[layer] >= 16;
    for (std::size_t p = 0; p < n; ++p) {
        std::span<float> dst(out.data() + p * d_model_, d_model_);
        if (raw) {
            std::copy(rows[p].raw.begin(), rows[p].raw.end(), dst.begin());
        } else {
            dequantize_into(rows[p].quantized, dst);
        }
    }
}

void KVCache::append(std::size_t layer, std::span<const float> k, std::span<const float> v) {
    store(keys_.at(layer), layer, k);
    store(values_.at(layer), layer, v);
}

void KVCache::read_keys(std::size_t layer, std::size_t n, std::vector<float>& out) const {
    load(keys_.at(layer), layer, n, out);
}

void KVCache::read_values(std::size_t layer, std::size_t n, std::vector<float>& out) const {
    load(values_.at(layer), layer, n, out);
}

// ---------------------------------------------------------------------------
// Forward pass

void rms_norm(std::span<const float> x, std::span<const float> gain, std::span<float> out) {
    double ss = 0.0;
    for (float v : x) ss += static_cast<double>(v) * v;
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + 1e-6);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<float>(x[i] * inv * gain[i]);
}

float gelu(float x) {
    const double xd = x;
    return static_cast<float>(0.5 * xd * (1.0 + std::erf(xd / std::numbers::sqrt2)));
}

std::vector<float> forward_step(const Checkpoint& model, KVCache& cache, std::uint8_t token, std::size_t position,
                                const ActivationObserver& observer) {
    const auto& c = model.config;
    if (position >= c.max_seq) {
        throw invalid_input_error("position " + std::to_string(position) + " exceeds max_seq " +
                                  std::to_string(c.max_seq));
    }
    if (cache.length() != position) throw invalid_input_error("KV cache length does not match position");

    const std::size_t d = c.d_model, hd = c.head_dim(), n_ctx = position + 1;
    std::vector<float> x(d), h(d), q(d), k(d), v(d), att(d), proj(d), up(c.d_ff);
    std::vector<float> keys, values;
    std::vector<double> scores(n_ctx);

    const auto embed = model.tensor("embed").row(token);
    const auto pos = model.tensor("pos").row(position);
    for (std::size_t i = 0; i < d; ++i) x[i] = embed[i] + pos[i];

    auto observe = [&](std::size_t layer, MatrixKind kind, std::span<const float> in) {
        if (observer) observer(layer, kind, in);
    };
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

    for (std::size_t l = 0; l < c.n_layers; ++l) {
        const std::string p = "L" + std::to_string(l) + ".";
        rms_norm(x, model.tensor(p + "attn_norm").row(0), h);
        observe(l, MatrixKind::Wq, h);
        observe(l, MatrixKind::Wk, h);
        observe(l, MatrixKind::Wv, h);
        vec_matmul(h, model.tensor(p + "Wq"), q);
        vec_matmul(h, model.tensor(p + "Wk"), k);
        vec_matmul(h, model.tensor(p + "Wv"), v);
        cache.append(l, k, v);
        cache.read_keys(l, n_ctx, keys);
        cache.read_values(l, n_ctx, values);

        for (std::size_t head = 0; head < c.n_heads; ++head) {
            const std::size_t off = head * hd;
            for (std::size_t t = 0; t < n_ctx; ++t) {
                double dot = 0.0;
                for (std::size_t i = 0; i < hd; ++i) dot += static_cast<double>(q[off + i]) * keys[t * d + off + i];
                scores[t] = dot * inv_sqrt_hd;
            }
            const auto probs = softmax(std::span<const double>(scores));
            for (std::size_t i = 0; i < hd; ++i) {
                double acc = 0.0;
                for (std::size_t t = 0; t < n_ctx; ++t) acc += probs[t] * values[t * d + off + i];
                att[off + i] = static_cast<float>(acc);
            }
        }
        observe(l, MatrixKind::Wo, att);
        vec_matmul(att, model.tensor(p + "Wo"), proj);
        for (std::size_t i = 0; i < d; ++i) x[i] += proj[i];

        rms_norm(x, model.tensor(p + "mlp_norm").row(0), h);
        observe(l, MatrixKind::Wup, h);
        vec_matmul(h, model.tensor(p + "Wup"), up);
        for (auto& u : up) u = gelu(u);
        observe(l, MatrixKind::Wdown, up);
        vec_matmul(up, model.tensor(p + "Wdown"), proj);
        for (std::size_t i = 0; i < d; ++i) x[i] += proj[i];
    }
    cache.advance();

    rms_norm(x, model.tensor("final_norm").row(0), h);
    std::vector<float> logits(c.vocab);
    vec_matmul(h, model.tensor("head"), logits);
    return logits;
}

// ---------------------------------------------------------------------------
// Tokens, perplexity, calibration

std::vector<std::uint8_t> tokenize_bytes(std::string_view text) {
    return {text.begin(), text.end()};
}

std::string detokenize_bytes(std::span<const std::uint8_t> tokens) {
    return {tokens.begin(), tokens.end()};
}

double perplexity(const Checkpoint& model, std::span<const std::uint8_t> corpus, const KVCacheConfig& kv,
                  std::size_t ctx) {
    if (corpus.size() < 2) throw invalid_input_error("perplexity: corpus needs at least 2 tokens");
    if (ctx < 2 || ctx > model.config.max_seq) {
        throw invalid_input_error("perplexity: ctx must be in [2, max_seq]");
    }
    // NLL is accumulated in bits so a uniform distribution scores exactly
    // log2(256) = 8 per position and the result is exactly 256.
    KVCache cache(model.config, kv);
    double nll_bits = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < corpus.size(); start += ctx) {
        const std::size_t len = std::min(ctx, corpus.size() - start);
        if (len < 2) break;
        cache.clear();
        for (std::size_t p = 0; p + 1 < len; ++p) {
            const auto logits = forward_step(model, cache, corpus[start + p], p);
            const double mx = *std::max_element(logits.begin(), logits.end());
            double sum = 0.0;
            for (float z : logits) sum += std::exp(z - mx);
            const double target = logits[corpus[start + p + 1]];
            nll_bits += std::log2(sum) - (target - mx) * std::numbers::log2e;
            ++count;
        }
    }
    return std::exp2(nll_bits / static_cast<double>(count));
}

const std::vector<float>& CalibrationStats::norms(const std::string& matrix) const {
    auto it = input_norms.find(matrix);
    if (it == input_norms.end()) throw invalid_input_error("calibration stats have no entry for '" + matrix + "'");
    return it->second;
}

CalibrationStats calibrate(const Checkpoint& model, std::span<const std::uint8_t> corpus, std::size_t n_tokens) {
    if (n_tokens == 0) throw invalid_input_error("calibrate: n_tokens must be >= 1");
    if (corpus.size() < n_tokens) {
        throw invalid_input_error("calibrate: corpus has " + std::to_string(corpus.size()) + " tokens, need " +
                                  std::to_string(n_tokens));
    }
    const auto& c = model.config;
    std::vector<std::vector<double>> sq(c.n_layers * kMatrixKinds.size());
    for (std::size_t l = 0; l < c.n_layers; ++l)
        for (auto k : kMatrixKinds) sq[l * kMatrixKinds.size() + static_cast<std::size_t>(k)].assign(matrix_in_dim(c, k), 0.0);

    const ActivationObserver observer = [&](std::size_t layer, MatrixKind kind, std::span<const float> in) {
        auto& acc = sq[layer * kMatrixKinds.size() + static_cast<std::size_t>(kind)];
        for (std::size_t j = 0; j < in.size(); ++j) acc[j] += static_cast<double>(in[j]) * in[j];
    };

    KVCache cache(c, KVCacheConfig::passthrough(c.n_layers));
    for (std::size_t t = 0; t < n_tokens; ++t) {
        const std::size_t p = t % c.max_seq;
        if (p == 0) cache.clear();
        forward_step(model, cache, corpus[t], p, observer);
    }

    CalibrationStats stats;
    stats.n_tokens = n_tokens;
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        for (auto k : kMatrixKinds) {
            const auto& acc = sq[l * kMatrixKinds.size() + static_cast<std::size_t>(k)];
            std::vector<float> norms(acc.size());
            for (std::size_t j = 0; j < acc.size(); ++j) norms[j] = static_cast<float>(std::sqrt(acc[j]));
            stats.input_norms[matrix_name(l, k)] = std::move(norms);
        }
    }
    return stats;
}

double reconstruction_loss(const Tensor2D& w, const Tensor2D& x, const BinaryMask& mask) {
    if (w.cols() != x.rows()) throw invalid_input_error("reconstruction_loss: W and X do not conform");
    if (mask.rows != w.rows() || mask.cols != w.cols()) {
        throw invalid_input_error("reconstruction_loss: mask shape differs from W");
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < w.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) {
            double full = 0.0, masked = 0.0;
            for (std::size_t p = 0; p < w.cols(); ++p) {
                const double prod = static_cast<double>(w(i, p)) * x(p, j);
                full += prod;
                if (mask(i, p)) masked += prod;
            }
            const double diff = full - masked;
            loss += diff * diff;
        }
    }
    return loss;
}

}  // namespace optspa
