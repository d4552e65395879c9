// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "tfsvit/common/rng.hpp"

#include <algorithm>
#include <cmath>

#include "tfsvit/common/error.hpp"

namespace tfs {

std::uint64_t RngStream::mix(std::uint64_t x) {
  // splitmix64 finalizer (Steele, Lea, Flood 2014).
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t RngStream::hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RngStream::RngStream(std::uint64_t seed, std::string_view purpose, std::uint64_t index)
    : state_(mix(mix(seed ^ hash_tag(purpose)) ^ index)) {}

RngStream RngStream::derive(std::string_view purpose, std::uint64_t index) const {
  return RngStream(state_, purpose, index);
}

std::uint64_t RngStream::next_u64() {
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t x = state_;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
  if (n == 0) throw IndexError("uniform_index: n must be >= 1");
  if (n == 1) return 0;
  std::uint64_t mask = ~0ULL;
  std::uint64_t v = n - 1;
  v |= v >> 1;
  v |= v >> 2;
  v |= v >> 4;
  v |= v >> 8;
  v |= v >> 16;
  v |= v >> 32;
  mask = v;
  std::uint64_t r;
  do {
    r = next_u64() & mask;
  } while (r >= n);
  return r;
}

double RngStream::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 6.283185307179586476925286766559 * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

double RngStream::truncated_normal(double trunc) {
  for (;;) {
    double z = normal();
    if (z >= -trunc && z <= trunc) return z;
  }
}

std::vector<std::int64_t> RngStream::permutation(std::int64_t n) {
  std::vector<std::int64_t> p(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  for (std::int64_t i = n - 1; i > 0; --i) {
    std::uint64_t j = uniform_index(static_cast<std::uint64_t>(i) + 1);
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
  }
  return p;
}

std::vector<std::int64_t> RngStream::sample_without_replacement(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) throw IndexError("sample_without_replacement: k out of range");
  // Partial Fisher-Yates over an index array; fine at the sizes used here.
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (std::int64_t i = 0; i < k; ++i) {
    std::uint64_t j = static_cast<std::uint64_t>(i) +
                      uniform_index(static_cast<std::uint64_t>(n - i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace tfs
