#pragma once

#include <cstddef>
#include <vector>

namespace optspa {

// Per-layer KV cache bit-widths. 16 stores raw values.
struct KVCacheConfig {
    std::vector<int> bits;

    static KVCacheConfig passthrough(std::size_t n_layers) { return {std::vector<int>(n_layers, 16)}; }
    friend bool operator==(const KVCacheConfig&, const KVCacheConfig&) = default;
};

}  // namespace optspa
