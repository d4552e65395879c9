// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "tfsvit/harness/trainer.hpp"

#include <sys/resource.h>

#include <chrono>
#include <cmath>

namespace tfs::harness {

using namespace tfs::num;

std::string method_name(Method m) {
  switch (m) {
    case Method::kErm: return "ERM";
    case Method::kTfs: return "TFS";
    case Method::kAtfs: return "ATFS";
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  if (name == "ERM") return Method::kErm;
  if (name == "TFS") return Method::kTfs;
  if (name == "ATFS") return Method::kAtfs;
  throw ConfigError("unknown method '" + name + "' (expected ERM|TFS|ATFS)");
}

style::Strategy TrainConfig::effective_strategy() const {
  if (method == Method::kAtfs) return style::Strategy::kHighCls;
  return stylization.strategy;
}

void TrainConfig::validate() const {
  model.validate();
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (method != Method::kErm && batch_size < 2) {
    throw ConfigError("train: batch_size must be >= 2 when stylization is active");
  }
  if (steps < 0) throw ConfigError("train: steps must be >= 0");
  if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
  if (lr < 0.0) throw ConfigError("train: lr must be >= 0");
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
  if (method != Method::kErm) {
    style::StylizationConfig effective = stylization;
    effective.strategy = effective_strategy();
    effective.validate(model.depth);
  }
}

long peak_rss_kb() {
  struct rusage usage{};
  if (getrusage(RUSAGE_SELF, &usage) != 0) return 0;
  return static_cast<long>(usage.ru_maxrss);
}

namespace {

Tensor slice_images(const Pool& pool, const std::vector<Index>& idx) {
  return gather_rows(pool.images, idx);
}

std::vector<int> slice_labels(const Pool& pool, const std::vector<Index>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (Index i : idx) out.push_back(pool.labels[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

double evaluate(const vit::ViTModel& model, const Pool& pool) {
  const Index n = pool.size();
  const Index eval_batch = 64;
  Index correct = 0;
  const int k = model.config().num_classes;
  for (Index start = 0; start < n; start += eval_batch) {
    const Index stop = std::min(n, start + eval_batch);
    std::vector<Index> idx;
    idx.reserve(static_cast<std::size_t>(stop - start));
    for (Index i = start; i < stop; ++i) idx.push_back(i);
    Tensor images = slice_images(pool, idx);
    auto out = model.forward(images, nullptr, {});
    const double* logits = out.logits.data();
    for (Index row = 0; row < stop - start; ++row) {
      int best = 0;
      for (int j = 1; j < k; ++j) {
        if (logits[row * k + j] > logits[row * k + best]) best = j;
      }
      if (best == pool.labels[static_cast<std::size_t>(start + row)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

TrainOutcome train(const TrainConfig& cfg, const Pool& train_pool, const Pool& val_pool) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  vit::ViTModel model(cfg.model, RngStream(cfg.seed, "init"));
  std::vector<Tensor> param_values;
  for (auto& p : model.parameters()) param_values.push_back(p.value);
  AdamWState adam = AdamWState::init(param_values);
  AdamWConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  adam_cfg.weight_decay = cfg.weight_decay;

  RngStream shuffle_stream(cfg.seed, "shuffle");
  RngStream style_stream(cfg.seed, "style");

  const bool styled = cfg.method != Method::kErm;
  style::StylizationConfig style_cfg = cfg.stylization;
  style_cfg.strategy = cfg.effective_strategy();
  std::optional<style::Stylizer> stylizer;
  if (styled) {
    stylizer.emplace(style_cfg, cfg.model.depth);
  }

  const Index n_train = train_pool.size();
  const Index batch = std::min<Index>(cfg.batch_size, n_train);
  const Index s_patch = cfg.model.patch_tokens();

  RunRecord record;
  double best_acc = evaluate(model, val_pool);
  long best_step = 0;
  auto best_weights = model.snapshot();
  record.val_curve.push_back({0, best_acc});

  std::vector<Index> order;
  Index cursor = 0;
  auto next_batch = [&]() {
    if (cursor + batch > static_cast<Index>(order.size())) {
      order = shuffle_stream.permutation(n_train);
      cursor = 0;
    }
    std::vector<Index> idx(order.begin() + cursor, order.begin() + cursor + batch);
    cursor += batch;
    return idx;
  };

  for (long step = 1; step <= cfg.steps; ++step) {
    auto idx = next_batch();
    Tensor images = slice_images(train_pool, idx);
    std::vector<int> labels = slice_labels(train_pool, idx);

    if (styled) {
      stylizer->set_plan(style::fresh_plan(style_cfg, cfg.model.depth, batch, s_patch,
                                           cfg.layer_policy, style_stream));
    }

    Tape tape;
    vit::ForwardOptions opts;
    opts.training = true;
    opts.tape = &tape;
    opts.hook = styled ? &*stylizer : nullptr;
    vit::ForwardResult out;
    try {
      out = model.forward(images, &labels, opts);
      if (!std::isfinite(out.loss->item())) {
        throw NumericError("loss is not finite");
      }
      tape.backward(*out.loss);
    } catch (const NumericError& e) {
      throw NumericError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }

    std::vector<const std::vector<double>*> grads;
    grads.reserve(out.param_leaves.size());
    for (const auto& leaf : out.param_leaves) grads.push_back(&tape.grad_of(leaf));
    adamw_step(param_values, grads, adam, adam_cfg);

    if (step % cfg.eval_every == 0) {
      const double acc = evaluate(model, val_pool);
      record.val_curve.push_back({step, acc});
      if (acc > best_acc) {
        best_acc = acc;
        best_step = step;
        best_weights = model.snapshot();
      }
    }
  }

  model.restore(best_weights);
  record.best_val_acc = best_acc;
  record.best_val_step = best_step;
  record.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  record.peak_rss_kb = peak_rss_kb();
  return TrainOutcome{std::move(model), std::move(record)};
}

}  // namespace tfs::harness
