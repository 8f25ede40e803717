#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sgdlab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Count of near-zero Hessian eigenvalues differs from the manifold dimension.
class RankMismatch : public Error {
 public:
  RankMismatch(const std::string& what, int expected, int found)
      : Error(what), expected(expected), found(found) {}
  int expected;
  int found;
};

class EnsembleDiverged : public Error {
 public:
  EnsembleDiverged(const std::string& what, std::size_t diverged)
      : Error(what), diverged_count(diverged) {}
  std::size_t diverged_count;
};

}  // namespace sgdlab
