#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace optspa {

// 0/1 keep-mask with the shape of the weight matrix it applies to.
struct BinaryMask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> keep;  // row-major, 1 = keep

    BinaryMask() = default;
    BinaryMask(std::size_t r, std::size_t c, std::uint8_t fill = 1) : rows(r), cols(c), keep(r * c, fill) {}

    std::size_t numel() const noexcept { return keep.size(); }
    std::size_t zeros() const noexcept {
        std::size_t n = 0;
        for (auto k : keep) n += (k == 0);
        return n;
    }
    std::uint8_t operator()(std::size_t r, std::size_t c) const noexcept { return keep[r * cols + c]; }

    BinaryMask transposed() const {
        BinaryMask t(cols, rows);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) t.keep[c * rows + r] = keep[r * cols + c];
        return t;
    }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

}  // namespace optspa
