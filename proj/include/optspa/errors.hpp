#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace optspa {

// Bad arguments to a pure operation (shape mismatch, out-of-range ratio, ...).
class invalid_input_error : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Malformed checkpoint container. Carries the byte offset where parsing stopped.
class format_error : public std::runtime_error {
  public:
    format_error(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

  private:
    std::uint64_t offset_;
};

// The search loop could not produce a result (no budget, nothing feasible).
class search_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace optspa
