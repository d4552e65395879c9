// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tfs {

// Counter-free pseudo-random stream with platform-independent output.
//
// Streams are identified by (seed, purpose, index). Sub-streams are derived
// by hashing the parent seed with a purpose tag and an index through
// splitmix64, so the same triple yields the same sequence everywhere. The
// stdlib engines are avoided on purpose: std::uniform_* distributions are
// implementation-defined and would break cross-platform replay.
class RngStream {
 public:
  RngStream() : state_(0x9e3779b97f4a7c15ULL) {}
  explicit RngStream(std::uint64_t seed) : state_(seed) {}
  RngStream(std::uint64_t seed, std::string_view purpose, std::uint64_t index = 0);

  // Derive an independent child stream. Children with distinct
  // (purpose, index) never share state with the parent or each other.
  RngStream derive(std::string_view purpose, std::uint64_t index = 0) const;

  // Next raw 64-bit word (splitmix64 step).
  std::uint64_t next_u64();

  // Uniform double in [0, 1) with 53 random bits.
  double uniform();

  // Uniform integer in [0, n), bias-free via bitmask rejection. n >= 1.
  std::uint64_t uniform_index(std::uint64_t n);

  // Standard normal via Box-Muller (both values used, carried over).
  double normal();

  // Normal truncated to |z| <= trunc standard deviations, by resampling.
  double truncated_normal(double trunc);

  // Uniform random permutation of {0..n-1} (Fisher-Yates).
  std::vector<std::int64_t> permutation(std::int64_t n);

  // k distinct values from {0..n-1}, returned in ascending order.
  std::vector<std::int64_t> sample_without_replacement(std::int64_t n, std::int64_t k);

  std::uint64_t state() const { return state_; }

  // The 64-bit mixing function used for stream derivation and seeding.
  static std::uint64_t mix(std::uint64_t x);
  // FNV-1a hash of a byte string, used to fold purpose tags into seeds.
  static std::uint64_t hash_tag(std::string_view tag);

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tfs
