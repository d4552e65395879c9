// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "tfsvit/harness/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "tfsvit/common/error.hpp"

namespace tfs::data {

using num::DVec;

const char* class_name(int label) {
  switch (label) {
    case 0: return "circle";
    case 1: return "square";
    case 2: return "triangle";
    case 3: return "cross";
  }
  throw IndexError("class_name: label out of range");
}

std::string texture_name(TextureKind t) {
  switch (t) {
    case TextureKind::kNone: return "none";
    case TextureKind::kStripes: return "stripes";
    case TextureKind::kChecker: return "checker";
  }
  return "?";
}

TextureKind texture_from_name(const std::string& name) {
  if (name == "none") return TextureKind::kNone;
  if (name == "stripes") return TextureKind::kStripes;
  if (name == "checker") return TextureKind::kChecker;
  throw ConfigError("unknown texture kind '" + name + "' (expected none|stripes|checker)");
}

void DomainSpec::validate() const {
  if (id.empty()) throw ConfigError("domain spec: id must be non-empty");
  if (background.empty() || foreground.empty()) {
    throw ConfigError("domain '" + id + "': palettes must be non-empty");
  }
  for (const auto& palette : {background, foreground}) {
    for (const auto& c : palette) {
      for (double v : {c.r, c.g, c.b}) {
        if (v < 0.0 || v > 1.0) throw ConfigError("domain '" + id + "': colors must lie in [0,1]");
      }
    }
  }
  if (noise_sigma < 0.0) throw ConfigError("domain '" + id + "': noise sigma must be >= 0");
  if (texture_period < 1) throw ConfigError("domain '" + id + "': texture period must be >= 1");
  if (contrast <= 0.0) throw ConfigError("domain '" + id + "': contrast must be > 0");
}

namespace {

// Shape geometry: center jitter at most 2 px, radius in [6, 10], so the
// topmost reachable row is 16 - 2 - 10 = 4.
bool inside_shape(int label, int x, int y, int cx, int cy, int r) {
  const int dx = x - cx, dy = y - cy;
  switch (label) {
    case 0:  // circle
      return dx * dx + dy * dy <= r * r;
    case 1: {  // square, area-matched a bit tighter than the circle
      const int h = r - 1;
      return std::abs(dx) <= h && std::abs(dy) <= h;
    }
    case 2: {  // upward triangle: apex (cx, cy-r), base y = cy+r
      if (dy < -r || dy > r) return false;
      const double halfwidth = static_cast<double>(dy + r) / 2.0;
      return std::abs(dx) <= halfwidth;
    }
    case 3: {  // cross / plus sign
      const int w = std::max(1, r / 3);
      return (std::abs(dx) <= w && std::abs(dy) <= r) || (std::abs(dy) <= w && std::abs(dx) <= r);
    }
  }
  throw IndexError("inside_shape: label out of range");
}

}  // namespace

Dataset generate_domain(const DomainSpec& spec, Index n, std::uint64_t seed) {
  spec.validate();
  if (n <= 0 || n % kNumClasses != 0) {
    throw ConfigError("generate_domain: N must be a positive multiple of " +
                      std::to_string(kNumClasses));
  }
  Dataset ds;
  ds.domain_id = spec.id;
  ds.seed = seed;
  ds.labels.resize(static_cast<std::size_t>(n));
  DVec pix(static_cast<std::size_t>(n) * kChannels * kImageSize * kImageSize);

  const Index plane = static_cast<Index>(kImageSize) * kImageSize;
  for (Index i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % kNumClasses);
    ds.labels[static_cast<std::size_t>(i)] = label;
    RngStream rng(seed, spec.id + "/image", static_cast<std::uint64_t>(i));

    const Rgb bg = spec.background[rng.uniform_index(spec.background.size())];
    const Rgb bg2 = spec.background[(spec.background.size() > 1)
                                        ? rng.uniform_index(spec.background.size())
                                        : 0];
    const Rgb fg = spec.foreground[rng.uniform_index(spec.foreground.size())];
    const int cx = kImageSize / 2 - 2 + static_cast<int>(rng.uniform_index(5));
    const int cy = kImageSize / 2 - 2 + static_cast<int>(rng.uniform_index(5));
    const int r = 6 + static_cast<int>(rng.uniform_index(5));

    double* img = pix.data() + i * kChannels * plane;
    for (int y = 0; y < kImageSize; ++y) {
      for (int x = 0; x < kImageSize; ++x) {
        Rgb c = bg;
        if (spec.texture == TextureKind::kStripes) {
          if (((x + y) / spec.texture_period) % 2 == 1) c = bg2;
        } else if (spec.texture == TextureKind::kChecker) {
          if ((x / spec.texture_period + y / spec.texture_period) % 2 == 1) c = bg2;
        }
        if (inside_shape(label, x, y, cx, cy, r)) c = fg;
        const Index off = static_cast<Index>(y) * kImageSize + x;
        img[0 * plane + off] = 0.5 + spec.contrast * (c.r - 0.5);
        img[1 * plane + off] = 0.5 + spec.contrast * (c.g - 0.5);
        img[2 * plane + off] = 0.5 + spec.contrast * (c.b - 0.5);
      }
    }
    if (spec.noise_sigma > 0.0) {
      for (Index j = 0; j < kChannels * plane; ++j) {
        img[j] += spec.noise_sigma * rng.normal();
      }
    }
    for (Index j = 0; j < kChannels * plane; ++j) {
      img[j] = std::clamp(img[j], 0.0, 1.0);
    }
  }
  ds.images = Tensor({n, kChannels, kImageSize, kImageSize}, std::move(pix));
  return ds;
}

namespace {

void append_sample(DVec& pix, std::vector<int>& labels,
                   std::vector<std::string>& ids, const Dataset& src, Index i) {
  const Index plane = static_cast<Index>(kChannels) * kImageSize * kImageSize;
  const double* p = src.images.data() + i * plane;
  pix.insert(pix.end(), p, p + plane);
  labels.push_back(src.labels[static_cast<std::size_t>(i)]);
  ids.push_back(src.domain_id);
}

Pool finish_pool(DVec pix, std::vector<int> labels, std::vector<std::string> ids) {
  Pool pool;
  const Index n = static_cast<Index>(labels.size());
  if (n == 0) throw ConfigError("empty pool");
  pool.images = Tensor({n, kChannels, kImageSize, kImageSize}, std::move(pix));
  pool.labels = std::move(labels);
  pool.domain_ids = std::move(ids);
  return pool;
}

// Stratified 80/20 index split of one dataset, shuffled from `stream`.
void split_indices(const Dataset& ds, RngStream stream, std::vector<Index>* large,
                   std::vector<Index>* small) {
  std::vector<std::vector<Index>> per_class(kNumClasses);
  for (Index i = 0; i < static_cast<Index>(ds.labels.size()); ++i) {
    per_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
  }
  for (auto& members : per_class) {
    const Index m = static_cast<Index>(members.size());
    auto perm = stream.permutation(m);
    const Index n_small = static_cast<Index>(std::llround(0.2 * static_cast<double>(m)));
    for (Index j = 0; j < m; ++j) {
      const Index idx = members[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])];
      if (j < m - n_small) {
        large->push_back(idx);
      } else {
        small->push_back(idx);
      }
    }
  }
  std::sort(large->begin(), large->end());
  std::sort(small->begin(), small->end());
}

}  // namespace

Pool make_pool(const std::vector<const Dataset*>& parts) {
  DVec pix;
  std::vector<int> labels;
  std::vector<std::string> ids;
  for (const Dataset* ds : parts) {
    for (Index i = 0; i < static_cast<Index>(ds->labels.size()); ++i) {
      append_sample(pix, labels, ids, *ds, i);
    }
  }
  return finish_pool(std::move(pix), std::move(labels), std::move(ids));
}

LeaveOneOutSplit leave_one_out(const std::vector<Dataset>& domains, const std::string& target_id,
                               std::uint64_t seed) {
  if (domains.size() < 2) throw ConfigError("leave_one_out: need at least 2 domains");
  const Dataset* target = nullptr;
  for (const auto& d : domains) {
    if (d.domain_id == target_id) target = &d;
  }
  if (!target) throw ConfigError("leave_one_out: unknown target domain '" + target_id + "'");

  DVec train_pix, val_pix;
  std::vector<int> train_labels, val_labels;
  std::vector<std::string> train_ids, val_ids;
  for (const auto& d : domains) {
    if (d.domain_id == target_id) continue;
    std::vector<Index> train_idx, val_idx;
    split_indices(d, RngStream(seed, "split/" + d.domain_id), &train_idx, &val_idx);
    for (Index i : train_idx) append_sample(train_pix, train_labels, train_ids, d, i);
    for (Index i : val_idx) append_sample(val_pix, val_labels, val_ids, d, i);
  }
  LeaveOneOutSplit split;
  split.train = finish_pool(std::move(train_pix), std::move(train_labels), std::move(train_ids));
  split.val = finish_pool(std::move(val_pix), std::move(val_labels), std::move(val_ids));
  split.target = make_pool({target});
  return split;
}

InDomainSplit in_domain_split(const Dataset& domain, std::uint64_t seed) {
  std::vector<Index> train_idx, test_idx;
  split_indices(domain, RngStream(seed, "split/" + domain.domain_id), &train_idx, &test_idx);

  // Carve validation out of the train side with a second stratified split.
  Dataset train_part;
  train_part.domain_id = domain.domain_id;
  train_part.seed = domain.seed;
  {
    DVec pix;
    std::vector<int> labels;
    std::vector<std::string> ids;
    for (Index i : train_idx) append_sample(pix, labels, ids, domain, i);
    train_part.labels = labels;
    train_part.images = Tensor({static_cast<Index>(labels.size()), kChannels, kImageSize, kImageSize},
                               std::move(pix));
  }
  std::vector<Index> inner_train, inner_val;
  split_indices(train_part, RngStream(seed, "split-val/" + domain.domain_id), &inner_train,
                &inner_val);

  DVec tr_pix, va_pix, te_pix;
  std::vector<int> tr_l, va_l, te_l;
  std::vector<std::string> tr_i, va_i, te_i;
  for (Index i : inner_train) append_sample(tr_pix, tr_l, tr_i, train_part, i);
  for (Index i : inner_val) append_sample(va_pix, va_l, va_i, train_part, i);
  for (Index i : test_idx) append_sample(te_pix, te_l, te_i, domain, i);

  InDomainSplit split;
  split.train = finish_pool(std::move(tr_pix), std::move(tr_l), std::move(tr_i));
  split.val = finish_pool(std::move(va_pix), std::move(va_l), std::move(va_i));
  split.test = finish_pool(std::move(te_pix), std::move(te_l), std::move(te_i));
  return split;
}

}  // namespace tfs::data
