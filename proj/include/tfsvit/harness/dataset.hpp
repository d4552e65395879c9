// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tfsvit/common/rng.hpp"
#include "tfsvit/numerics/tensor.hpp"

namespace tfs::data {

using num::Index;
using num::Tensor;

inline constexpr int kImageSize = 32;
inline constexpr int kChannels = 3;
inline constexpr int kNumClasses = 4;  // circle, square, triangle, cross

const char* class_name(int label);

enum class TextureKind { kNone, kStripes, kChecker };
std::string texture_name(TextureKind t);
TextureKind texture_from_name(const std::string& name);

struct Rgb {
  double r = 0.0, g = 0.0, b = 0.0;
};

// Style parameters of one procedural domain. The label-defining shapes are
// shared across domains; everything here is style only.
struct DomainSpec {
  std::string id;
  std::vector<Rgb> background;
  std::vector<Rgb> foreground;
  TextureKind texture = TextureKind::kNone;
  int texture_period = 4;  // band/checker width in pixels
  double noise_sigma = 0.0;
  double contrast = 1.0;

  void validate() const;
};

struct Dataset {
  std::string domain_id;
  Tensor images;            // [N, 3, 32, 32], values in [0, 1]
  std::vector<int> labels;  // exactly N/4 per class
  std::uint64_t seed = 0;
};

// Fully determined by (spec, n, seed); n must be divisible by 4. Per image:
// palette background + optional texture, one centered-jittered foreground
// shape of the label's class, contrast scaling, Gaussian noise, clip to
// [0,1]. Rows 0..3 are never covered by a shape (maximum shape reach is
// y = 4), which gives tests a pure-background window.
Dataset generate_domain(const DomainSpec& spec, Index n, std::uint64_t seed);

// A materialized training/eval split; domain ids kept for integrity checks.
struct Pool {
  Tensor images;  // [N, 3, 32, 32]
  std::vector<int> labels;
  std::vector<std::string> domain_ids;

  Index size() const { return static_cast<Index>(labels.size()); }
};

Pool make_pool(const std::vector<const Dataset*>& parts);

struct LeaveOneOutSplit {
  Pool train;
  Pool val;
  Pool target;
};

// Merges all non-target domains and splits them 80/20 per domain,
// stratified by class, with shuffles drawn from the run seed. The target
// domain is carried over untouched.
LeaveOneOutSplit leave_one_out(const std::vector<Dataset>& domains, const std::string& target_id,
                               std::uint64_t seed);

struct InDomainSplit {
  Pool train;
  Pool val;   // 20% of the train side
  Pool test;  // held-out 20% of the domain
};

// 80/20 train/test split of one domain (stratified), then 20% of the train
// side carved out as validation.
InDomainSplit in_domain_split(const Dataset& domain, std::uint64_t seed);

}  // namespace tfs::data
