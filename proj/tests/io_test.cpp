// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <filesystem>

#include "helpers.hpp"
#include "tfsvit/harness/dataset.hpp"
#include "tfsvit/io/formats.hpp"

using namespace tfs;
using namespace tfs::io;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("tfsvit_io_" + std::to_string(RngStream(::getpid(), "tmp").next_u64() % 100000000));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

GenSpec small_spec() {
  GenSpec spec;
  spec.name = "mini";
  spec.images_per_domain = 8;
  data::DomainSpec a;
  a.id = "one";
  a.background = {{0.9, 0.9, 0.9}};
  a.foreground = {{0.1, 0.1, 0.6}};
  a.noise_sigma = 0.01;
  data::DomainSpec b = a;
  b.id = "two";
  b.texture = data::TextureKind::kChecker;
  spec.domains = {a, b};
  return spec;
}

}  // namespace

TEST_CASE("train config: defaults, unknown keys, value validation, warnings") {
  auto cfg = parse_train_config("{}");
  CHECK(cfg.method == harness::Method::kTfs);
  CHECK(cfg.batch_size == 32);
  CHECK(cfg.stylization.token_fraction == 0.5);
  CHECK(cfg.model.depth == 8);

  CHECK_THROWS_AS(parse_train_config(R"({"lr": 3e-4, "typo_key": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_train_config(R"({"stylization": {"dd": 0.5}})"), ConfigError);
  CHECK_THROWS_AS(parse_train_config(R"({"stylization": {"d": 1.5}})"), ConfigError);
  CHECK_THROWS_AS(parse_train_config(R"({"stylization": {"n": 9}})"), ConfigError);
  CHECK_THROWS_AS(parse_train_config(R"({"method": "ATFS", "stylization": {"strategy": "Random"}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_train_config("{nope"), ConfigError);

  std::vector<std::string> warnings;
  auto erm = parse_train_config(R"({"method": "ERM", "stylization": {"d": 0.8}})", &warnings);
  CHECK(erm.method == harness::Method::kErm);
  REQUIRE(warnings.size() == 1);

  // Canonical echo is a fixed point of parse -> dump.
  auto echo = train_config_to_json(cfg);
  auto cfg2 = parse_train_config(echo);
  CHECK(train_config_to_json(cfg2) == echo);
}

TEST_CASE("gen spec: parse/dump round trip and validation") {
  auto spec = small_spec();
  auto text = gen_spec_to_json(spec);
  auto parsed = parse_gen_spec(text);
  CHECK(parsed.name == "mini");
  CHECK(parsed.images_per_domain == 8);
  REQUIRE(parsed.domains.size() == 2);
  CHECK(parsed.domains[1].texture == data::TextureKind::kChecker);
  CHECK(gen_spec_to_json(parsed) == text);

  CHECK_THROWS_AS(parse_gen_spec(R"({"name": "x"})"), ConfigError);
  CHECK_THROWS_AS(parse_gen_spec(R"({"name":"x","domains":[{"id":"a"}]})"), ConfigError);
}

TEST_CASE("dataset files: save -> load round trip, byte-identical regeneration") {
  TempDir tmp;
  auto spec = small_spec();
  std::vector<data::Dataset> sets;
  for (const auto& d : spec.domains) {
    sets.push_back(data::generate_domain(d, spec.images_per_domain, 77));
  }
  save_datasets(spec, sets, 77, tmp.path / "data");
  auto bundle = load_datasets(tmp.path / "data");
  CHECK(bundle.name == "mini");
  CHECK(bundle.master_seed == 77);
  REQUIRE(bundle.domains.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(bundle.domains[i].domain_id == sets[i].domain_id);
    CHECK(bundle.domains[i].labels == sets[i].labels);
    CHECK(std::memcmp(bundle.domains[i].images.data(), sets[i].images.data(),
                      sizeof(double) * static_cast<std::size_t>(sets[i].images.size())) == 0);
  }

  // Re-saving the same generation is byte-identical (no timestamps anywhere).
  save_datasets(spec, sets, 77, tmp.path / "data2");
  for (const auto& name : {"manifest.json", "one.json", "one.bin", "two.json", "two.bin"}) {
    auto a = read_binary_file(tmp.path / "data" / name);
    auto b = read_binary_file(tmp.path / "data2" / name);
    CHECK(a == b);
  }
}

TEST_CASE("checkpoint: save -> load -> save is byte-identical and weights survive") {
  TempDir tmp;
  vit::ViTConfig model_cfg = tfs::test::tiny_vit_config();
  vit::ViTModel model(model_cfg, RngStream(5, "init"));

  CheckpointMeta meta;
  meta.config.model = model_cfg;
  meta.config.stylization.eligible_count = 1;
  meta.config.stylization.layers_per_step = 1;
  meta.config.seed = 5;
  meta.dataset_name = "mini";
  meta.target_domain = "one";
  meta.best_val_step = 42;

  save_checkpoint(model, meta, tmp.path / "ckpt");
  auto loaded = load_checkpoint(tmp.path / "ckpt.json");
  CHECK(loaded.meta.best_val_step == 42);
  CHECK(loaded.meta.dataset_name == "mini");
  auto wa = model.snapshot();
  auto wb = loaded.model.snapshot();
  REQUIRE(wa.size() == wb.size());
  for (std::size_t i = 0; i < wa.size(); ++i) CHECK(wa[i] == wb[i]);

  save_checkpoint(loaded.model, loaded.meta, tmp.path / "ckpt2");
  CHECK(read_binary_file(tmp.path / "ckpt.json") == read_binary_file(tmp.path / "ckpt2.json"));
  CHECK(read_binary_file(tmp.path / "ckpt.bin") == read_binary_file(tmp.path / "ckpt2.bin"));

  // Corrupt blob size is rejected.
  auto blob = read_binary_file(tmp.path / "ckpt.bin");
  blob.pop_back();
  write_binary_file(tmp.path / "ckpt.bin", blob.data(), blob.size());
  CHECK_THROWS_AS(load_checkpoint(tmp.path / "ckpt.json"), IoError);
}

TEST_CASE("results table: formatting, write/read round trip, append") {
  TempDir tmp;
  ResultRow row;
  row.dataset = "mini";
  row.target_domain = "one";
  row.method = "TFS";
  row.strategy = "Random";
  row.d = 0.5;
  row.n = 3;
  row.layer_policy = "random";
  row.seed = 7;
  row.best_val_acc = 0.8123456789;
  row.target_acc = 0.7654321;
  row.steps = 2000;
  row.wall_time_s = 123.456789;

  const std::string line = format_result_row(row, true);
  CHECK(line == "mini,one,TFS,Random,0.5,3,random,7,0.812346,0.765432,2000,123.457");
  CHECK(format_result_row(row, false).ends_with(",0"));

  ResultRow erm = row;
  erm.method = "ERM";
  erm.strategy = "-";
  write_results({row, erm}, tmp.path / "results.csv", true);
  auto rows = read_results(tmp.path / "results.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].method == "ERM");  // sorted
  CHECK(rows[1].best_val_acc == doctest::Approx(0.812346).epsilon(1e-9));

  append_result(row, tmp.path / "fresh.csv", true);
  append_result(erm, tmp.path / "fresh.csv", true);
  auto appended = read_results(tmp.path / "fresh.csv");
  CHECK(appended.size() == 2);
}

TEST_CASE("report: grouping, hand-computed std, empty error") {
  ResultRow base;
  base.dataset = "mini";
  base.target_domain = "one";
  base.method = "TFS";
  base.strategy = "Random";
  base.d = 0.5;
  base.n = 3;
  std::vector<ResultRow> rows;
  for (double acc : {0.8, 0.82, 0.84}) {
    ResultRow r = base;
    r.target_acc = acc;
    r.seed = rows.size();
    rows.push_back(r);
  }
  ResultRow other = base;
  other.target_domain = "two";
  other.target_acc = 0.7;
  rows.push_back(other);

  auto report = make_report(rows);
  // Sample standard deviation of {0.8, 0.82, 0.84} is exactly 0.02.
  CHECK(report.find("one,TFS,Random,0.5,3,3,0.82,0.02") != std::string::npos);
  CHECK(report.find("two,TFS,Random,0.5,3,1,0.7,0") != std::string::npos);
  // Method average over targets: mean(0.82, 0.7) = 0.76.
  CHECK(report.find("TFS,2,0.76") != std::string::npos);

  CHECK_THROWS_AS(make_report({}), ConfigError);
}

TEST_CASE("pnm: header layout and payload bytes") {
  TempDir tmp;
  std::vector<std::uint8_t> gray = {0, 64, 128, 255};
  write_pgm(tmp.path / "map.pgm", 2, 2, gray, "seed=7 config=abc");
  auto bytes = read_binary_file(tmp.path / "map.pgm");
  const std::string head(bytes.begin(), bytes.begin() + 31);
  CHECK(head == "P5\n# seed=7 config=abc\n2 2\n255\n");
  CHECK(bytes.size() == 31 + 4);
  CHECK(bytes[31] == 0);
  CHECK(bytes[34] == 255);

  std::vector<std::uint8_t> rgb(2 * 2 * 3, 9);
  write_ppm(tmp.path / "map.ppm", 2, 2, rgb, "x");
  auto prgb = read_binary_file(tmp.path / "map.ppm");
  CHECK(std::string(prgb.begin(), prgb.begin() + 3) == "P6\n");
  CHECK_THROWS_AS(write_pgm(tmp.path / "bad.pgm", 3, 3, gray, "x"), IoError);
}

TEST_CASE("fnv1a hash is stable and sensitive") {
  CHECK(fnv1a_hex("abc") == fnv1a_hex("abc"));
  CHECK(fnv1a_hex("abc") != fnv1a_hex("abd"));
  CHECK(fnv1a_hex("abc").size() == 16);
}
