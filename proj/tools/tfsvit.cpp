// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver: dataset generation, training runs, grid search,
// ablations, attention-map export, and report aggregation.
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tfsvit/harness/experiments.hpp"
#include "tfsvit/io/formats.hpp"

namespace fs = std::filesystem;
using namespace tfs;

namespace {

// TFS_SEED wins over --seed wherever a seed can be given.
std::optional<std::uint64_t> env_seed() {
  const char* env = std::getenv("TFS_SEED");
  if (!env || !*env) return std::nullopt;
  try {
    return std::stoull(env);
  } catch (const std::exception&) {
    throw ConfigError(std::string("TFS_SEED is not a valid integer: ") + env);
  }
}

harness::TrainConfig load_config_with_warnings(const fs::path& path) {
  std::vector<std::string> warnings;
  auto cfg = io::load_train_config(path, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  return cfg;
}

io::DatasetBundle load_data(const fs::path& dir) { return io::load_datasets(dir); }

struct GenDataArgs {
  std::string spec_path, out_dir;
  std::uint64_t seed = 0;
};

void cmd_gen_data(const GenDataArgs& args) {
  auto spec = io::load_gen_spec(args.spec_path);
  const std::uint64_t seed = env_seed().value_or(args.seed);
  std::vector<data::Dataset> sets;
  for (const auto& domain : spec.domains) {
    sets.push_back(data::generate_domain(domain, spec.images_per_domain, seed));
  }
  io::save_datasets(spec, sets, seed, args.out_dir);
  std::cout << "wrote " << sets.size() << " domains x " << spec.images_per_domain
            << " images to " << args.out_dir << "\n";
}

struct TrainArgs {
  std::string config_path, data_dir, target, out_dir;
  std::optional<std::uint64_t> seed;
  bool no_timing = false;
};

void cmd_train(const TrainArgs& args) {
  auto cfg = load_config_with_warnings(args.config_path);
  if (auto s = env_seed()) {
    cfg.seed = *s;
  } else if (args.seed) {
    cfg.seed = *args.seed;
  }
  auto bundle = load_data(args.data_dir);

  harness::RunRequest request{cfg, bundle.name, args.target};
  auto run = harness::run_leave_one_out_full(request, bundle.domains);

  fs::create_directories(args.out_dir);
  io::CheckpointMeta meta{cfg, bundle.name, args.target, run.record.best_val_step};
  io::save_checkpoint(run.model, meta, fs::path(args.out_dir) / "checkpoint");
  io::write_text_file(fs::path(args.out_dir) / "run.json",
                      io::run_record_to_json(run.record, cfg, bundle.name, args.target));
  io::append_result(run.row, fs::path(args.out_dir) / "results.csv", !args.no_timing);
  std::cout << "target " << args.target << ": best_val_acc "
            << run.record.best_val_acc << " (step " << run.record.best_val_step
            << "), target_acc " << run.record.target_acc << "\n";
}

struct GridArgs {
  std::string config_path, data_dir, target, out_dir;
  std::vector<double> d_grid = {0.1, 0.3, 0.5, 0.8};
  std::vector<int> n_grid = {1, 2, 3, 4};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  int jobs = 1;
  bool no_timing = false;
};

void cmd_grid(const GridArgs& args) {
  auto cfg = load_config_with_warnings(args.config_path);
  auto bundle = load_data(args.data_dir);
  harness::RunRequest base{cfg, bundle.name, args.target};
  auto outcome =
      harness::grid_search(base, args.d_grid, args.n_grid, args.seeds, bundle.domains, args.jobs);
  fs::create_directories(args.out_dir);
  io::write_results(outcome.rows, fs::path(args.out_dir) / "results.csv", !args.no_timing);
  std::ostringstream best;
  best << "{\n  \"best_d\": " << outcome.best_d << ",\n  \"best_n\": " << outcome.best_n
       << ",\n  \"best_mean_val_acc\": " << outcome.best_mean_val << "\n}\n";
  io::write_text_file(fs::path(args.out_dir) / "grid_best.json", best.str());
  std::cout << "grid: " << outcome.rows.size() << " runs; best d=" << outcome.best_d
            << " n=" << outcome.best_n << " (mean val acc " << outcome.best_mean_val << ")\n";
}

struct AblateArgs {
  std::string mode = "strategy";
  std::string config_path, data_dir, target, out_dir;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  int jobs = 1;
  bool no_timing = false;
};

void cmd_ablate(const AblateArgs& args) {
  auto cfg = load_config_with_warnings(args.config_path);
  auto bundle = load_data(args.data_dir);
  harness::RunRequest base{cfg, bundle.name, args.target};
  std::vector<harness::ResultRow> rows;
  if (args.mode == "strategy") {
    rows = harness::strategy_ablation(base,
                                      {style::Strategy::kAll, style::Strategy::kRandom,
                                       style::Strategy::kLowCls, style::Strategy::kHighCls},
                                      args.seeds, bundle.domains, args.jobs);
  } else if (args.mode == "layers") {
    rows = harness::layer_policy_ablation(base, args.seeds, bundle.domains, args.jobs);
  } else {
    throw ConfigError("--mode must be 'strategy' or 'layers', got '" + args.mode + "'");
  }
  fs::create_directories(args.out_dir);
  io::write_results(rows, fs::path(args.out_dir) / "results.csv", !args.no_timing);
  std::cout << "ablate " << args.mode << ": " << rows.size() << " runs\n";
}

struct SingleSourceArgs {
  std::string config_path, data_dir, source = "all", out_dir;
  bool no_timing = false;
};

void cmd_single_source(const SingleSourceArgs& args) {
  auto cfg = load_config_with_warnings(args.config_path);
  auto bundle = load_data(args.data_dir);
  harness::RunRequest base{cfg, bundle.name, ""};
  std::vector<harness::ResultRow> rows;
  for (const auto& domain : bundle.domains) {
    if (args.source != "all" && domain.domain_id != args.source) continue;
    auto part = harness::single_source(base, domain.domain_id, bundle.domains);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  if (rows.empty()) throw ConfigError("unknown source domain '" + args.source + "'");
  harness::sort_rows(rows);
  fs::create_directories(args.out_dir);
  io::write_results(rows, fs::path(args.out_dir) / "results.csv", !args.no_timing);
  std::cout << "single-source: " << rows.size() << " (source,target) evaluations\n";
}

struct InDomainArgs {
  std::string config_path, data_dir, domain = "all", out_dir;
  bool no_timing = false;
};

void cmd_in_domain(const InDomainArgs& args) {
  auto cfg = load_config_with_warnings(args.config_path);
  auto bundle = load_data(args.data_dir);
  harness::RunRequest base{cfg, bundle.name, ""};
  std::vector<harness::ResultRow> rows;
  for (const auto& domain : bundle.domains) {
    if (args.domain != "all" && domain.domain_id != args.domain) continue;
    rows.push_back(harness::in_domain(base, domain.domain_id, bundle.domains));
  }
  if (rows.empty()) throw ConfigError("unknown domain '" + args.domain + "'");
  harness::sort_rows(rows);
  fs::create_directories(args.out_dir);
  io::write_results(rows, fs::path(args.out_dir) / "results.csv", !args.no_timing);
  std::cout << "in-domain: " << rows.size() << " runs\n";
}

struct AttnMapArgs {
  std::string checkpoint, data_dir, domain, layer = "last", out_path, overlay_path;
  long index = 0;
};

void cmd_attn_map(const AttnMapArgs& args) {
  auto ckpt = io::load_checkpoint(args.checkpoint);
  auto bundle = load_data(args.data_dir);
  const data::Dataset* domain = nullptr;
  for (const auto& d : bundle.domains) {
    if (d.domain_id == args.domain) domain = &d;
  }
  if (!domain) throw ConfigError("unknown domain '" + args.domain + "'");
  const num::Index n = static_cast<num::Index>(domain->labels.size());
  if (args.index < 0 || args.index >= n) {
    throw ConfigError("--index " + std::to_string(args.index) + " out of range [0," +
                      std::to_string(n) + ")");
  }
  const auto& model_cfg = ckpt.model.config();
  int layer = model_cfg.depth - 1;
  if (args.layer != "last") {
    try {
      layer = std::stoi(args.layer);
    } catch (const std::exception&) {
      throw ConfigError("--layer must be an integer or 'last'");
    }
    if (layer < 0 || layer >= model_cfg.depth) {
      throw ConfigError("--layer " + std::to_string(layer) + " out of range [0," +
                        std::to_string(model_cfg.depth) + ")");
    }
  }

  num::Tensor image = num::gather_rows(domain->images, {args.index});
  vit::ForwardOptions opts;
  opts.record_attention = true;
  auto out = ckpt.model.forward(image, nullptr, opts);
  num::Tensor m_cls = vit::cls_attention_map(out.attention[static_cast<std::size_t>(layer)]);

  const int grid = model_cfg.grid();
  double lo = m_cls.data()[0], hi = m_cls.data()[0];
  for (num::Index i = 0; i < m_cls.size(); ++i) {
    lo = std::min(lo, m_cls.data()[i]);
    hi = std::max(hi, m_cls.data()[i]);
  }
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(grid) * grid, 0);
  const double span = hi - lo;
  for (num::Index i = 0; i < m_cls.size(); ++i) {
    gray[static_cast<std::size_t>(i)] =
        span > 0.0 ? static_cast<std::uint8_t>(
                         std::lround(255.0 * (m_cls.data()[i] - lo) / span))
                   : 0;
  }
  const std::string comment = "seed=" + std::to_string(ckpt.meta.config.seed) +
                              " config=" + io::fnv1a_hex(io::train_config_to_json(ckpt.meta.config)) +
                              " domain=" + args.domain + " index=" + std::to_string(args.index) +
                              " layer=" + std::to_string(layer);
  io::write_pgm(args.out_path, grid, grid, gray, comment);
  std::cout << "wrote " << args.out_path << " (" << grid << "x" << grid << ")\n";

  if (!args.overlay_path.empty()) {
    // Nearest-neighbor upsample of the map blended onto the image at 50%.
    const int size = model_cfg.image_size;
    const int ps = model_cfg.patch_size;
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(size) * size * 3);
    const num::Index plane = static_cast<num::Index>(size) * size;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const int cell = (y / ps) * grid + (x / ps);
        const double heat = gray[static_cast<std::size_t>(cell)] / 255.0;
        for (int c = 0; c < 3; ++c) {
          const double pix = image.data()[c * plane + y * size + x];
          const double blended = 0.5 * pix + 0.5 * heat;
          rgb[(static_cast<std::size_t>(y) * size + x) * 3 + static_cast<std::size_t>(c)] =
              static_cast<std::uint8_t>(std::lround(255.0 * blended));
        }
      }
    }
    io::write_ppm(args.overlay_path, size, size, rgb, comment);
    std::cout << "wrote " << args.overlay_path << " (" << size << "x" << size << ")\n";
  }
}

struct ReportArgs {
  std::string results_path, out_path;
};

void cmd_report(const ReportArgs& args) {
  auto rows = io::read_results(args.results_path);
  io::write_text_file(args.out_path, io::make_report(rows));
  std::cout << "wrote " << args.out_path << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Token-level feature stylization (TFS/ATFS) experiments on a small ViT"};
  app.require_subcommand(1);

  GenDataArgs gen_args;
  auto* gen = app.add_subcommand("gen-data", "Generate the procedural multi-domain dataset");
  gen->add_option("--spec", gen_args.spec_path, "Dataset spec JSON")->required();
  gen->add_option("--out", gen_args.out_dir, "Output directory")->required();
  gen->add_option("--seed", gen_args.seed, "Master seed (TFS_SEED env overrides)");

  TrainArgs train_args;
  std::uint64_t train_seed_flag = 0;
  auto* train = app.add_subcommand("train", "One leave-one-domain-out training run");
  train->add_option("--config", train_args.config_path, "Train config JSON")->required();
  train->add_option("--data", train_args.data_dir, "Dataset directory")->required();
  train->add_option("--target", train_args.target, "Held-out target domain id")->required();
  train->add_option("--out", train_args.out_dir, "Output directory")->required();
  auto* train_seed_opt =
      train->add_option("--seed", train_seed_flag, "Seed override (TFS_SEED env wins)");
  train->add_flag("--no-timing", train_args.no_timing, "Write wall_time_s as 0");

  GridArgs grid_args;
  auto* grid = app.add_subcommand("grid", "Grid search over d and n");
  grid->add_option("--config", grid_args.config_path)->required();
  grid->add_option("--data", grid_args.data_dir)->required();
  grid->add_option("--target", grid_args.target)->required();
  grid->add_option("--out", grid_args.out_dir)->required();
  grid->add_option("--d-grid", grid_args.d_grid, "Token fractions")->delimiter(',');
  grid->add_option("--n-grid", grid_args.n_grid, "Layer counts")->delimiter(',');
  grid->add_option("--seeds", grid_args.seeds, "Seeds, one run per seed")->delimiter(',');
  grid->add_option("--jobs", grid_args.jobs, "Parallel workers");
  grid->add_flag("--no-timing", grid_args.no_timing, "Write wall_time_s as 0");

  AblateArgs ablate_args;
  auto* ablate = app.add_subcommand("ablate", "Token-strategy or layer-policy ablation");
  ablate->add_option("--mode", ablate_args.mode, "strategy|layers");
  ablate->add_option("--config", ablate_args.config_path)->required();
  ablate->add_option("--data", ablate_args.data_dir)->required();
  ablate->add_option("--target", ablate_args.target)->required();
  ablate->add_option("--out", ablate_args.out_dir)->required();
  ablate->add_option("--seeds", ablate_args.seeds)->delimiter(',');
  ablate->add_option("--jobs", ablate_args.jobs);
  ablate->add_flag("--no-timing", ablate_args.no_timing);

  SingleSourceArgs ss_args;
  auto* ss = app.add_subcommand("single-source", "Train on one domain, test on the others");
  ss->add_option("--config", ss_args.config_path)->required();
  ss->add_option("--data", ss_args.data_dir)->required();
  ss->add_option("--source", ss_args.source, "Source domain id or 'all'");
  ss->add_option("--out", ss_args.out_dir)->required();
  ss->add_flag("--no-timing", ss_args.no_timing);

  InDomainArgs id_args;
  auto* indom = app.add_subcommand("in-domain", "Train and test inside one domain");
  indom->add_option("--config", id_args.config_path)->required();
  indom->add_option("--data", id_args.data_dir)->required();
  indom->add_option("--domain", id_args.domain, "Domain id or 'all'");
  indom->add_option("--out", id_args.out_dir)->required();
  indom->add_flag("--no-timing", id_args.no_timing);

  AttnMapArgs attn_args;
  auto* attn = app.add_subcommand("attn-map", "Export a CLS attention heatmap");
  attn->add_option("--checkpoint", attn_args.checkpoint, "checkpoint .json path")->required();
  attn->add_option("--data", attn_args.data_dir)->required();
  attn->add_option("--domain", attn_args.domain)->required();
  attn->add_option("--index", attn_args.index, "Sample index in the domain");
  attn->add_option("--layer", attn_args.layer, "Block index or 'last'");
  attn->add_option("--out", attn_args.out_path, "Output P5 .pgm path")->required();
  attn->add_option("--overlay", attn_args.overlay_path, "Optional P6 .ppm overlay path");

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "Aggregate a results table (mean/std per group)");
  report->add_option("--results", report_args.results_path)->required();
  report->add_option("--out", report_args.out_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) cmd_gen_data(gen_args);
    if (*train) {
      if (train_seed_opt->count() > 0) train_args.seed = train_seed_flag;
      cmd_train(train_args);
    }
    if (*grid) cmd_grid(grid_args);
    if (*ablate) cmd_ablate(ablate_args);
    if (*ss) cmd_single_source(ss_args);
    if (*indom) cmd_in_domain(id_args);
    if (*attn) cmd_attn_map(attn_args);
    if (*report) cmd_report(report_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
