#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tokenwarp {

/// Invalid argument: bad range, shape mismatch, wrong resolution.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or truncated tensor container. Carries the byte offset at
/// which decoding stopped.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// A file could not be opened, written or renamed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A collaborator broke its contract, e.g. a denoiser returned a
/// prediction whose shape differs from its input.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace tokenwarp
