#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "optspa/kv_config.hpp"

namespace optspa {

// Uniform asymmetric quantization of one block of values:
//   code = round((a - min) / ((max - min) / (2^b - 1)))
// with round half away from zero. A constant block gets step 1 and all-zero codes.
struct QuantizedBlock {
    std::vector<std::uint16_t> codes;
    int bits = 8;
    double vmin = 0.0;
    double step = 1.0;

    std::uint32_t max_code() const noexcept { return (1u << bits) - 1u; }
};

QuantizedBlock quantize(std::span<const float> values, int bits);
std::vector<float> dequantize(const QuantizedBlock& q);
void dequantize_into(const QuantizedBlock& q, std::span<float> out);

struct BandwidthProfile {
    std::vector<int> bits;

    friend bool operator==(const BandwidthProfile&, const BandwidthProfile&) = default;
};

// Per-layer KV config from a bandwidth profile; length must equal n_layers.
KVCacheConfig make_kv_config(const BandwidthProfile& profile, std::size_t n_layers);

}  // namespace optspa
