#include "optspa/quant.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "optspa/errors.hpp"

namespace optspa {

QuantizedBlock quantize(std::span<const float> values, int bits) {
    if (values.empty()) throw invalid_input_error("quantize: empty block");
    if (bits < 2 || bits > 16) throw invalid_input_error("quantize: bit-width must be in [2, 16]");

    for (float v : values) {
        if (!std::isfinite(v)) throw invalid_input_error("quantize: non-finite value");
    }
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    QuantizedBlock q;
    q.bits = bits;
    q.vmin = *lo;
    q.codes.resize(values.size());
    const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
    if (range == 0.0) {
        q.step = 1.0;
        return q;
    }
    const double levels = static_cast<double>(q.max_code());
    q.step = range / levels;
    for (std::size_t i = 0; i < values.size(); ++i) {
        // std::round rounds halfway cases away from zero.
        const double c = std::round((static_cast<double>(values[i]) - q.vmin) / q.step);
        q.codes[i] = static_cast<std::uint16_t>(std::clamp(c, 0.0, levels));
    }
    return q;
}

void dequantize_into(const QuantizedBlock& q, std::span<float> out) {
    if (out.size() != q.codes.size()) throw invalid_input_error("dequantize: output size mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<float>(q.vmin + static_cast<double>(q.codes[i]) * q.step);
    }
}

std::vector<float> dequantize(const QuantizedBlock& q) {
    std::vector<float> out(q.codes.size());
    dequantize_into(q, out);
    return out;
}

KVCacheConfig make_kv_config(const BandwidthProfile& profile, std::size_t n_layers) {
    if (profile.bits.size() != n_layers) {
        throw invalid_input_error("bandwidth profile has " + std::to_string(profile.bits.size()) +
                                  " entries, model has " + std::to_string(n_layers) + " layers");
    }
    for (int b : profile.bits) {
        if (b < 2 || b > 16) throw invalid_input_error("bit-width " + std::to_string(b) + " out of range [2, 16]");
    }
    return KVCacheConfig{profile.bits};
}

}  // namespace optspa
