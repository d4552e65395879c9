// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "tfsvit/harness/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <thread>
#include <tuple>

namespace tfs::harness {

using namespace tfs::num;

bool row_less(const ResultRow& a, const ResultRow& b) {
  auto key = [](const ResultRow& r) {
    return std::make_tuple(r.target_domain, r.method, r.d, r.n, r.seed, r.strategy,
                           r.layer_policy, r.dataset);
  };
  return key(a) < key(b);
}

void sort_rows(std::vector<ResultRow>& rows) {
  std::sort(rows.begin(), rows.end(), row_less);
}

void parallel_for(int jobs, Index count, const std::function<void(Index)>& fn) {
  if (jobs < 1) throw ConfigError("parallel_for: jobs must be >= 1");
  if (count <= 0) return;
  if (jobs == 1 || count == 1) {
    for (Index i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const Index i = next.fetch_add(1);
      if (i >= count || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true)) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  const int n_threads = static_cast<int>(std::min<Index>(jobs, count));
  threads.reserve(static_cast<std::size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (failed.load()) std::rethrow_exception(error);
}

ResultRow make_result_row(const RunRequest& req, const RunRecord& record) {
  ResultRow row;
  row.dataset = req.dataset_name;
  row.target_domain = req.target_domain;
  row.method = method_name(req.config.method);
  row.strategy = req.config.method == Method::kErm
                     ? "-"
                     : style::strategy_name(req.config.effective_strategy());
  row.d = req.config.stylization.token_fraction;
  row.n = req.config.stylization.layers_per_step;
  row.layer_policy = style::layer_policy_name(req.config.layer_policy);
  row.seed = req.config.seed;
  row.best_val_acc = record.best_val_acc;
  row.target_acc = record.target_acc;
  row.steps = req.config.steps;
  row.wall_time_s = record.wall_time_s;
  return row;
}

LeaveOneOutRun run_leave_one_out_full(const RunRequest& request,
                                      const std::vector<data::Dataset>& domains) {
  auto split = data::leave_one_out(domains, request.target_domain, request.config.seed);
  auto outcome = train(request.config, split.train, split.val);
  outcome.record.target_acc = evaluate(outcome.model, split.target);
  ResultRow row = make_result_row(request, outcome.record);
  return LeaveOneOutRun{std::move(outcome.model), std::move(outcome.record), std::move(row)};
}

ResultRow run_leave_one_out(const RunRequest& request, const std::vector<data::Dataset>& domains) {
  return run_leave_one_out_full(request, domains).row;
}

GridOutcome grid_search(const RunRequest& base, const std::vector<double>& d_grid,
                        const std::vector<int>& n_grid, const std::vector<std::uint64_t>& seeds,
                        const std::vector<data::Dataset>& domains, int jobs) {
  if (d_grid.empty() || n_grid.empty() || seeds.empty()) {
    throw ConfigError("grid_search: grids and seeds must be non-empty");
  }
  struct Cell {
    double d;
    int n;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (double d : d_grid) {
    for (int n : n_grid) {
      for (std::uint64_t seed : seeds) cells.push_back({d, n, seed});
    }
  }
  GridOutcome out;
  out.rows.resize(cells.size());
  parallel_for(jobs, static_cast<Index>(cells.size()), [&](Index i) {
    const Cell& cell = cells[static_cast<std::size_t>(i)];
    RunRequest req = base;
    req.config.stylization.token_fraction = cell.d;
    req.config.stylization.layers_per_step = cell.n;
    req.config.seed = cell.seed;
    out.rows[static_cast<std::size_t>(i)] = run_leave_one_out(req, domains);
  });

  // Winning cell by mean validation accuracy over seeds.
  out.best_mean_val = -1.0;
  std::size_t idx = 0;
  for (double d : d_grid) {
    for (int n : n_grid) {
      double sum = 0.0;
      for (std::size_t s = 0; s < seeds.size(); ++s) {
        sum += out.rows[idx + s].best_val_acc;
      }
      const double mean = sum / static_cast<double>(seeds.size());
      if (mean > out.best_mean_val) {
        out.best_mean_val = mean;
        out.best_d = d;
        out.best_n = n;
      }
      idx += seeds.size();
    }
  }
  sort_rows(out.rows);
  return out;
}

std::vector<ResultRow> single_source(const RunRequest& base, const std::string& source_id,
                                     const std::vector<data::Dataset>& domains) {
  const data::Dataset* source = nullptr;
  for (const auto& d : domains) {
    if (d.domain_id == source_id) source = &d;
  }
  if (!source) throw ConfigError("single_source: unknown source domain '" + source_id + "'");
  auto split = data::in_domain_split(*source, base.config.seed);
  auto outcome = train(base.config, split.train, split.val);
  std::vector<ResultRow> rows;
  for (const auto& d : domains) {
    if (d.domain_id == source_id) continue;
    RunRequest req = base;
    req.target_domain = d.domain_id;
    RunRecord record = outcome.record;
    record.target_acc = evaluate(outcome.model, data::make_pool({&d}));
    rows.push_back(make_result_row(req, record));
  }
  sort_rows(rows);
  return rows;
}

ResultRow in_domain(const RunRequest& base, const std::string& domain_id,
                    const std::vector<data::Dataset>& domains) {
  const data::Dataset* domain = nullptr;
  for (const auto& d : domains) {
    if (d.domain_id == domain_id) domain = &d;
  }
  if (!domain) throw ConfigError("in_domain: unknown domain '" + domain_id + "'");
  auto split = data::in_domain_split(*domain, base.config.seed);
  auto outcome = train(base.config, split.train, split.val);
  outcome.record.target_acc = evaluate(outcome.model, split.test);
  RunRequest req = base;
  req.target_domain = domain_id;
  return make_result_row(req, outcome.record);
}

std::vector<ResultRow> strategy_ablation(const RunRequest& base,
                                         const std::vector<style::Strategy>& strategies,
                                         const std::vector<std::uint64_t>& seeds,
                                         const std::vector<data::Dataset>& domains, int jobs) {
  std::vector<RunRequest> requests;
  for (style::Strategy strategy : strategies) {
    for (std::uint64_t seed : seeds) {
      RunRequest req = base;
      req.config.method = strategy == style::Strategy::kHighCls ? Method::kAtfs : Method::kTfs;
      req.config.stylization.strategy = strategy;
      req.config.seed = seed;
      requests.push_back(req);
    }
  }
  std::vector<ResultRow> rows(requests.size());
  parallel_for(jobs, static_cast<Index>(requests.size()), [&](Index i) {
    rows[static_cast<std::size_t>(i)] =
        run_leave_one_out(requests[static_cast<std::size_t>(i)], domains);
  });
  sort_rows(rows);
  return rows;
}

std::vector<ResultRow> layer_policy_ablation(const RunRequest& base,
                                             const std::vector<std::uint64_t>& seeds,
                                             const std::vector<data::Dataset>& domains, int jobs) {
  std::vector<RunRequest> requests;
  for (style::LayerPolicy policy : {style::LayerPolicy::kRandom, style::LayerPolicy::kFixedPrefix}) {
    for (std::uint64_t seed : seeds) {
      RunRequest req = base;
      req.config.layer_policy = policy;
      req.config.seed = seed;
      requests.push_back(req);
    }
  }
  std::vector<ResultRow> rows(requests.size());
  parallel_for(jobs, static_cast<Index>(requests.size()), [&](Index i) {
    rows[static_cast<std::size_t>(i)] =
        run_leave_one_out(requests[static_cast<std::size_t>(i)], domains);
  });
  sort_rows(rows);
  return rows;
}

namespace {

// Minimal training loop with a timing window; mirrors train() without
// evaluation so the measurement sees optimizer steps only.
std::pair<double, long> timed_steps_for(const TrainConfig& cfg, const data::Pool& pool,
                                        long warmup, long timed) {
  cfg.validate();
  vit::ViTModel model(cfg.model, RngStream(cfg.seed, "init"));
  std::vector<Tensor> params;
  for (auto& p : model.parameters()) params.push_back(p.value);
  AdamWState adam = AdamWState::init(params);
  AdamWConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  adam_cfg.weight_decay = cfg.weight_decay;
  RngStream shuffle_stream(cfg.seed, "shuffle");
  RngStream style_stream(cfg.seed, "style");
  const bool styled = cfg.method != Method::kErm;
  style::StylizationConfig style_cfg = cfg.stylization;
  style_cfg.strategy = cfg.effective_strategy();
  std::optional<style::Stylizer> stylizer;
  if (styled) stylizer.emplace(style_cfg, cfg.model.depth);

  const Index n = pool.size();
  const Index batch = std::min<Index>(cfg.batch_size, n);
  std::vector<Index> order;
  Index cursor = 0;
  double elapsed = 0.0;
  for (long step = 1; step <= warmup + timed; ++step) {
    if (cursor + batch > static_cast<Index>(order.size())) {
      order = shuffle_stream.permutation(n);
      cursor = 0;
    }
    std::vector<Index> idx(order.begin() + cursor, order.begin() + cursor + batch);
    cursor += batch;
    const auto t0 = std::chrono::steady_clock::now();
    Tensor images = gather_rows(pool.images, idx);
    std::vector<int> labels;
    labels.reserve(idx.size());
    for (Index i : idx) labels.push_back(pool.labels[static_cast<std::size_t>(i)]);
    if (styled) {
      stylizer->set_plan(style::fresh_plan(style_cfg, cfg.model.depth, batch,
                                           cfg.model.patch_tokens(), cfg.layer_policy,
                                           style_stream));
    }
    Tape tape;
    vit::ForwardOptions opts;
    opts.training = true;
    opts.tape = &tape;
    opts.hook = styled ? &*stylizer : nullptr;
    auto out = model.forward(images, &labels, opts);
    tape.backward(*out.loss);
    std::vector<const std::vector<double>*> grads;
    for (const auto& leaf : out.param_leaves) grads.push_back(&tape.grad_of(leaf));
    adamw_step(params, grads, adam, adam_cfg);
    if (step > warmup) {
      elapsed += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  }
  return {elapsed, peak_rss_kb()};
}

}  // namespace

OverheadReport measure_overhead(const TrainConfig& base, const data::Pool& train_pool,
                                long warmup_steps, long timed_steps) {
  OverheadReport report;
  TrainConfig erm = base;
  erm.method = Method::kErm;
  std::tie(report.erm_seconds, report.erm_peak_rss_kb) =
      timed_steps_for(erm, train_pool, warmup_steps, timed_steps);

  TrainConfig tfs = base;
  tfs.method = Method::kTfs;
  tfs.stylization.strategy = style::Strategy::kRandom;
  std::tie(report.tfs_seconds, report.tfs_peak_rss_kb) =
      timed_steps_for(tfs, train_pool, warmup_steps, timed_steps);

  TrainConfig atfs = base;
  atfs.method = Method::kAtfs;
  std::tie(report.atfs_seconds, report.atfs_peak_rss_kb) =
      timed_steps_for(atfs, train_pool, warmup_steps, timed_steps);

  report.tfs_relative = (report.tfs_seconds - report.erm_seconds) / report.erm_seconds;
  report.atfs_relative = (report.atfs_seconds - report.erm_seconds) / report.erm_seconds;
  return report;
}

}  // namespace tfs::harness
