#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace lk {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec8 = Eigen::Matrix<double, 8, 1>;
using Mat8 = Eigen::Matrix<double, 8, 8>;
using RowVec8 = Eigen::Matrix<double, 1, 8>;

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// FNV-1a, used for config hashes embedded in artifact file headers.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s,
                           std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a(s.data(), s.size(), h);
}

// A string literal would otherwise decay into the (data, n) overload with
// the hash seed misread as the length.
std::uint64_t fnv1a(const char* s, std::uint64_t h) = delete;

}  // namespace lk
