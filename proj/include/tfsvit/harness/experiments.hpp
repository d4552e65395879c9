// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tfsvit/harness/trainer.hpp"

namespace tfs::harness {

// One results-table row; field order mirrors the on-disk table.
struct ResultRow {
  std::string dataset;
  std::string target_domain;
  std::string method;
  std::string strategy;
  double d = 0.0;
  int n = 0;
  std::string layer_policy;
  std::uint64_t seed = 0;
  double best_val_acc = 0.0;
  double target_acc = 0.0;
  long steps = 0;
  double wall_time_s = 0.0;
};

// Stable total order: (target_domain, method, d, n, seed), then the
// remaining columns so ties are impossible for distinct rows.
bool row_less(const ResultRow& a, const ResultRow& b);
void sort_rows(std::vector<ResultRow>& rows);

// Runs fn(0..count-1) across `jobs` threads. Work items must be
// independent; results land in caller-owned slots, so scheduling cannot
// change the outcome.
void parallel_for(int jobs, Index count, const std::function<void(Index)>& fn);

struct RunRequest {
  TrainConfig config;
  std::string dataset_name;
  std::string target_domain;
};

// Table row from a finished run's request + record.
ResultRow make_result_row(const RunRequest& request, const RunRecord& record);

// Leave-one-domain-out run: split, train, evaluate on the target.
ResultRow run_leave_one_out(const RunRequest& request, const std::vector<data::Dataset>& domains);

struct LeaveOneOutRun {
  vit::ViTModel model;  // best-validation weights
  RunRecord record;
  ResultRow row;
};
// Same as run_leave_one_out but keeps the trained model (for checkpoints).
LeaveOneOutRun run_leave_one_out_full(const RunRequest& request,
                                      const std::vector<data::Dataset>& domains);

struct GridOutcome {
  std::vector<ResultRow> rows;
  double best_d = 0.0;
  int best_n = 0;
  double best_mean_val = 0.0;  // mean over seeds of best validation accuracy
};

// One independent run per (d, n, seed) cell; cells are order-independent
// and the winning cell maximizes mean validation accuracy (ties keep the
// earlier (d, n) in grid order).
GridOutcome grid_search(const RunRequest& base, const std::vector<double>& d_grid,
                        const std::vector<int>& n_grid, const std::vector<std::uint64_t>& seeds,
                        const std::vector<data::Dataset>& domains, int jobs);

// Trains on `source_id` alone (with its own validation carve-out) and
// evaluates the selected model on every other domain.
std::vector<ResultRow> single_source(const RunRequest& base, const std::string& source_id,
                                     const std::vector<data::Dataset>& domains);

// Trains and tests inside one domain (80/20 with a validation split).
ResultRow in_domain(const RunRequest& base, const std::string& domain_id,
                    const std::vector<data::Dataset>& domains);

// Token-selection ablation: one leave-one-out run per strategy per seed.
std::vector<ResultRow> strategy_ablation(const RunRequest& base,
                                         const std::vector<style::Strategy>& strategies,
                                         const std::vector<std::uint64_t>& seeds,
                                         const std::vector<data::Dataset>& domains, int jobs);

// Fixed-prefix versus random layer selection, one run per policy per seed.
std::vector<ResultRow> layer_policy_ablation(const RunRequest& base,
                                             const std::vector<std::uint64_t>& seeds,
                                             const std::vector<data::Dataset>& domains, int jobs);

struct OverheadReport {
  double erm_seconds = 0.0;
  double tfs_seconds = 0.0;
  double atfs_seconds = 0.0;
  double tfs_relative = 0.0;   // (tfs - erm) / erm
  double atfs_relative = 0.0;
  long erm_peak_rss_kb = 0;
  long tfs_peak_rss_kb = 0;
  long atfs_peak_rss_kb = 0;
};

// Times `timed_steps` optimizer steps per method on identical data and
// seeds, excluding `warmup_steps` from the measurement.
OverheadReport measure_overhead(const TrainConfig& base, const data::Pool& train_pool,
                                long warmup_steps, long timed_steps);

}  // namespace tfs::harness
