#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

namespace sgdvar {

// Deterministic, replayable random stream keyed by (master_seed, stream_id).
//
// The raw generator is std::mt19937_64, whose output sequence is pinned by the
// C++ standard, seeded with a splitmix64 mix of the two keys. Normal variates
// use the Marsaglia polar transform implemented here, because the std
// distribution adapters are implementation-defined. The only platform
// dependence left is std::log inside the polar transform (last-ulp libm
// differences); on a fixed platform the sequence is bit-exact and the unit
// tests pin golden values so it can never drift silently.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id);

  std::uint64_t master_seed() const { return master_; }
  std::uint64_t stream_id() const { return id_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0,1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via the polar method (second variate of each pair cached).
  double normal();

  // Uniform integer on [0, bound) by rejection; bound must be positive.
  std::uint64_t uniform_below(std::uint64_t bound);

  // Independent child stream; derivation is a fixed splitmix64 mix, so
  // substream(k) of a given stream is itself fully deterministic.
  RngStream substream(std::uint64_t k) const;

 private:
  std::uint64_t master_;
  std::uint64_t id_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// rows x cols matrix of iid standard normals, filled sample-major
// (row by row), so row i is reproducible independent of cols layout.
Eigen::MatrixXd gaussian_matrix(RngStream& stream, int rows, int cols);

// Uniform random size-b subset of {0,...,n-1} via partial Fisher-Yates.
// Returned indices are in draw order, not sorted.
std::vector<int> sample_without_replacement(RngStream& stream, int n, int b);

}  // namespace sgdvar
