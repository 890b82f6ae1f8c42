#include "sgdvar/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace sgdvar {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t stream_id)
    : master_(master_seed),
      id_(stream_id),
      engine_(splitmix64(splitmix64(master_seed) ^
                         (stream_id + 0x9e3779b97f4a7c15ULL))) {}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform01() - 1.0;
    v = 2.0 * uniform01() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

std::uint64_t RngStream::uniform_below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform_below: bound must be positive");
  // Largest multiple of bound representable in 64 bits; rejection above it
  // removes modulo bias.
  const std::uint64_t zone = (UINT64_MAX / bound) * bound;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= zone);
  return x % bound;
}

RngStream RngStream::substream(std::uint64_t k) const {
  return RngStream(master_, splitmix64(id_ + 0x9e3779b97f4a7c15ULL * (k + 1)));
}

Eigen::MatrixXd gaussian_matrix(RngStream& stream, int rows, int cols) {
  if (rows < 0 || cols < 0)
    throw std::invalid_argument("gaussian_matrix: negative dimensions");
  Eigen::MatrixXd out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out(r, c) = stream.normal();
  return out;
}

std::vector<int> sample_without_replacement(RngStream& stream, int n, int b) {
  if (n <= 0 || b <= 0 || b > n)
    throw std::invalid_argument("sample_without_replacement: need 1 <= b <= n");
  std::vector<int> pool(n);
  for (int i = 0; i < n; ++i) pool[i] = i;
  std::vector<int> out(b);
  for (int j = 0; j < b; ++j) {
    const int k = j + static_cast<int>(stream.uniform_below(static_cast<std::uint64_t>(n - j)));
    std::swap(pool[j], pool[k]);
    out[j] = pool[j];
  }
  return out;
}

}  // namespace sgdvar
