// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tfsvit/harness/experiments.hpp"
#include "tfsvit/harness/trainer.hpp"
#include "tfsvit/vit/vit.hpp"

namespace tfs::io {

namespace fs = std::filesystem;
using harness::ResultRow;
using num::Index;

// FNV-1a 64 of a canonical text form, as a 16-digit hex string. Embedded in
// every output manifest so artifacts trace back to their configuration.
std::string fnv1a_hex(const std::string& text);

// ---------------------------------------------------------------- configs

// Train configuration file (JSON). Every key is optional with spec
// defaults; unknown keys are a hard error. `warnings` (optional) collects
// non-fatal notices, e.g. stylization keys under method ERM.
harness::TrainConfig parse_train_config(const std::string& json_text,
                                        std::vector<std::string>* warnings = nullptr);
harness::TrainConfig load_train_config(const fs::path& path,
                                       std::vector<std::string>* warnings = nullptr);
// Canonical full echo (all keys, sorted); input for config hashing.
std::string train_config_to_json(const harness::TrainConfig& cfg);

// Dataset generation spec (JSON): name, images_per_domain, domain list.
struct GenSpec {
  std::string name;
  Index images_per_domain = 400;
  std::vector<data::DomainSpec> domains;
};
GenSpec parse_gen_spec(const std::string& json_text);
GenSpec load_gen_spec(const fs::path& path);
std::string gen_spec_to_json(const GenSpec& spec);

// ---------------------------------------------------------------- datasets

// Writes <dir>/manifest.json plus one <domain>.json + <domain>.bin pair per
// domain. The .bin holds row-major little-endian float64 images followed by
// one uint8 label per sample.
void save_datasets(const GenSpec& spec, const std::vector<data::Dataset>& datasets,
                   std::uint64_t master_seed, const fs::path& dir);

struct DatasetBundle {
  std::string name;
  std::uint64_t master_seed = 0;
  std::vector<data::Dataset> domains;
};
DatasetBundle load_datasets(const fs::path& dir);

// ------------------------------------------------------------- checkpoints

struct CheckpointMeta {
  harness::TrainConfig config;
  std::string dataset_name;
  std::string target_domain;
  long best_val_step = 0;
};

// Writes <base>.json (manifest) and <base>.bin (concatenated little-endian
// float64 parameter data in manifest order).
void save_checkpoint(const vit::ViTModel& model, const CheckpointMeta& meta, const fs::path& base);

struct LoadedCheckpoint {
  vit::ViTModel model;
  CheckpointMeta meta;
};
LoadedCheckpoint load_checkpoint(const fs::path& json_path);

// ------------------------------------------------------------ run records

std::string run_record_to_json(const harness::RunRecord& record,
                               const harness::TrainConfig& config,
                               const std::string& dataset_name,
                               const std::string& target_domain);

// ------------------------------------------------------------ results table

extern const char* kResultsHeader;

// One CSV line (no newline); numeric fields use 6 significant digits.
// include_timing=false writes wall_time_s as 0 for byte-stable replays.
std::string format_result_row(const ResultRow& row, bool include_timing);

void write_results(std::vector<ResultRow> rows, const fs::path& path, bool include_timing);
// Appends one row, creating the file (with header) first if needed.
void append_result(const ResultRow& row, const fs::path& path, bool include_timing);
std::vector<ResultRow> read_results(const fs::path& path);

// ----------------------------------------------------------------- report

// Groups rows by (target_domain, method, strategy, d, n); emits per-group
// mean and sample standard deviation of target_acc plus one per-method
// average-over-targets line. Throws ConfigError on an empty table.
std::string make_report(const std::vector<ResultRow>& rows);

// ------------------------------------------------------------------- pnm

// Binary portable graymap/pixmap, maxval 255, one comment line.
void write_pgm(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& gray,
               const std::string& comment);
void write_ppm(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& rgb,
               const std::string& comment);

// --------------------------------------------------------------- file util

std::string read_text_file(const fs::path& path);
void write_text_file(const fs::path& path, const std::string& text);
std::vector<std::uint8_t> read_binary_file(const fs::path& path);
void write_binary_file(const fs::path& path, const std::uint8_t* data, std::size_t size);

}  // namespace tfs::io
