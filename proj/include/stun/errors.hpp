#ifndef STUN_ERRORS_HPP_
#define STUN_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace stun {

// Error taxonomy mirrored by the CLI exit codes (see tools/): config 2,
// data 3, divergence 4, checkpoint/config hash mismatch 5.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

struct HashMismatchError : std::runtime_error {
  explicit HashMismatchError(const std::string& msg)
      : std::runtime_error(msg) {}
};

}  // namespace stun

#endif  // STUN_ERRORS_HPP_
