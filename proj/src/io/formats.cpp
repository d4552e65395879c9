// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "tfsvit/io/formats.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace tfs::io {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts need byte swaps");

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

// ---------------------------------------------------------------- file util

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<std::uint8_t> read_binary_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> data(size);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(size));
  if (!in) throw IoError("short read from " + path.string());
  return data;
}

void write_binary_file(const fs::path& path, const std::uint8_t* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw IoError("short write to " + path.string());
}

// ------------------------------------------------------------------ helpers

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

json parse_json(const std::string& text, const std::string& what) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ConfigError("malformed JSON in " + what);
  return j;
}

template <class T>
void maybe(const json& obj, const char* key, T* out) {
  if (obj.contains(key)) {
    try {
      *out = obj.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("bad value type for key '") + key + "'");
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- configs

harness::TrainConfig parse_train_config(const std::string& json_text,
                                        std::vector<std::string>* warnings) {
  json j = parse_json(json_text, "train config");
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  reject_unknown_keys(j,
                      {"method", "seed", "steps", "batch_size", "lr", "weight_decay",
                       "eval_every", "layer_policy", "stylization", "model"},
                      "train config");
  harness::TrainConfig cfg;
  std::string method = "TFS";
  maybe(j, "method", &method);
  cfg.method = harness::method_from_name(method);
  maybe(j, "seed", &cfg.seed);
  maybe(j, "steps", &cfg.steps);
  {
    long long batch = cfg.batch_size;
    maybe(j, "batch_size", &batch);
    cfg.batch_size = batch;
  }
  maybe(j, "lr", &cfg.lr);
  maybe(j, "weight_decay", &cfg.weight_decay);
  maybe(j, "eval_every", &cfg.eval_every);
  std::string policy = "random";
  maybe(j, "layer_policy", &policy);
  cfg.layer_policy = style::layer_policy_from_name(policy);

  if (j.contains("stylization")) {
    const json& s = j.at("stylization");
    if (!s.is_object()) throw ConfigError("'stylization' must be a JSON object");
    reject_unknown_keys(s,
                        {"d", "n", "beta_a", "beta_b", "strategy", "eligible_fraction",
                         "eligible_count", "eps", "detach_stats"},
                        "stylization config");
    if (cfg.method == harness::Method::kErm && warnings && !s.empty()) {
      warnings->push_back("method is ERM: stylization keys are ignored");
    }
    maybe(s, "d", &cfg.stylization.token_fraction);
    maybe(s, "n", &cfg.stylization.layers_per_step);
    maybe(s, "beta_a", &cfg.stylization.beta_a);
    maybe(s, "beta_b", &cfg.stylization.beta_b);
    if (s.contains("strategy")) {
      const auto name = s.at("strategy").get<std::string>();
      cfg.stylization.strategy = style::strategy_from_name(name);
      if (cfg.method == harness::Method::kAtfs &&
          cfg.stylization.strategy != style::Strategy::kHighCls) {
        throw ConfigError("method ATFS implies strategy HighCLS; got '" + name + "'");
      }
    }
    maybe(s, "eligible_fraction", &cfg.stylization.eligible_fraction);
    if (s.contains("eligible_count") && !s.at("eligible_count").is_null()) {
      cfg.stylization.eligible_count = s.at("eligible_count").get<int>();
    }
    maybe(s, "eps", &cfg.stylization.eps);
    maybe(s, "detach_stats", &cfg.stylization.detach_stats);
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    if (!m.is_object()) throw ConfigError("'model' must be a JSON object");
    reject_unknown_keys(m,
                        {"image_size", "patch_size", "in_channels", "embed_dim", "depth", "heads",
                         "mlp_ratio", "num_classes", "eps_ln"},
                        "model config");
    maybe(m, "image_size", &cfg.model.image_size);
    maybe(m, "patch_size", &cfg.model.patch_size);
    maybe(m, "in_channels", &cfg.model.in_channels);
    maybe(m, "embed_dim", &cfg.model.embed_dim);
    maybe(m, "depth", &cfg.model.depth);
    maybe(m, "heads", &cfg.model.heads);
    maybe(m, "mlp_ratio", &cfg.model.mlp_ratio);
    maybe(m, "num_classes", &cfg.model.num_classes);
    maybe(m, "eps_ln", &cfg.model.eps_ln);
  }

  cfg.validate();
  return cfg;
}

harness::TrainConfig load_train_config(const fs::path& path, std::vector<std::string>* warnings) {
  try {
    return parse_train_config(read_text_file(path), warnings);
  } catch (const IoError& e) {
    throw ConfigError(e.what());  // unreadable config file is a usage error
  }
}

std::string train_config_to_json(const harness::TrainConfig& cfg) {
  json s = {
      {"d", cfg.stylization.token_fraction},
      {"n", cfg.stylization.layers_per_step},
      {"beta_a", cfg.stylization.beta_a},
      {"beta_b", cfg.stylization.beta_b},
      {"strategy", style::strategy_name(cfg.stylization.strategy)},
      {"eligible_fraction", cfg.stylization.eligible_fraction},
      {"eligible_count",
       cfg.stylization.eligible_count ? json(*cfg.stylization.eligible_count) : json(nullptr)},
      {"eps", cfg.stylization.eps},
      {"detach_stats", cfg.stylization.detach_stats},
  };
  json m = {
      {"image_size", cfg.model.image_size}, {"patch_size", cfg.model.patch_size},
      {"in_channels", cfg.model.in_channels}, {"embed_dim", cfg.model.embed_dim},
      {"depth", cfg.model.depth},           {"heads", cfg.model.heads},
      {"mlp_ratio", cfg.model.mlp_ratio},   {"num_classes", cfg.model.num_classes},
      {"eps_ln", cfg.model.eps_ln},
  };
  json j = {
      {"method", harness::method_name(cfg.method)},
      {"seed", cfg.seed},
      {"steps", cfg.steps},
      {"batch_size", cfg.batch_size},
      {"lr", cfg.lr},
      {"weight_decay", cfg.weight_decay},
      {"eval_every", cfg.eval_every},
      {"layer_policy", style::layer_policy_name(cfg.layer_policy)},
      {"stylization", s},
      {"model", m},
  };
  return j.dump(2);
}

namespace {

json rgb_to_json(const data::Rgb& c) { return json::array({c.r, c.g, c.b}); }

data::Rgb rgb_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("color must be an [r,g,b] array");
  return data::Rgb{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json domain_spec_to_json(const data::DomainSpec& d) {
  json bg = json::array(), fg = json::array();
  for (const auto& c : d.background) bg.push_back(rgb_to_json(c));
  for (const auto& c : d.foreground) fg.push_back(rgb_to_json(c));
  return json{{"id", d.id},
              {"background", bg},
              {"foreground", fg},
              {"texture", data::texture_name(d.texture)},
              {"texture_period", d.texture_period},
              {"noise_sigma", d.noise_sigma},
              {"contrast", d.contrast}};
}

data::DomainSpec domain_spec_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"id", "background", "foreground", "texture", "texture_period",
                       "noise_sigma", "contrast"},
                      "domain spec");
  data::DomainSpec d;
  if (!j.contains("id")) throw ConfigError("domain spec needs an 'id'");
  d.id = j.at("id").get<std::string>();
  for (const char* key : {"background", "foreground"}) {
    if (!j.contains(key)) throw ConfigError("domain '" + d.id + "' needs a '" + key + "' palette");
    auto& palette = std::string(key) == "background" ? d.background : d.foreground;
    for (const auto& c : j.at(key)) palette.push_back(rgb_from_json(c));
  }
  std::string texture = "none";
  maybe(j, "texture", &texture);
  d.texture = data::texture_from_name(texture);
  maybe(j, "texture_period", &d.texture_period);
  maybe(j, "noise_sigma", &d.noise_sigma);
  maybe(j, "contrast", &d.contrast);
  d.validate();
  return d;
}

}  // namespace

GenSpec parse_gen_spec(const std::string& json_text) {
  json j = parse_json(json_text, "dataset spec");
  reject_unknown_keys(j, {"name", "images_per_domain", "domains"}, "dataset spec");
  GenSpec spec;
  maybe(j, "name", &spec.name);
  if (spec.name.empty()) throw ConfigError("dataset spec needs a non-empty 'name'");
  {
    long long n = spec.images_per_domain;
    maybe(j, "images_per_domain", &n);
    spec.images_per_domain = n;
  }
  if (!j.contains("domains") || !j.at("domains").is_array() || j.at("domains").empty()) {
    throw ConfigError("dataset spec needs a non-empty 'domains' array");
  }
  std::set<std::string> ids;
  for (const auto& d : j.at("domains")) {
    spec.domains.push_back(domain_spec_from_json(d));
    if (!ids.insert(spec.domains.back().id).second) {
      throw ConfigError("duplicate domain id '" + spec.domains.back().id + "'");
    }
  }
  return spec;
}

GenSpec load_gen_spec(const fs::path& path) {
  try {
    return parse_gen_spec(read_text_file(path));
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
}

std::string gen_spec_to_json(const GenSpec& spec) {
  json domains = json::array();
  for (const auto& d : spec.domains) domains.push_back(domain_spec_to_json(d));
  json j = {{"name", spec.name},
            {"images_per_domain", spec.images_per_domain},
            {"domains", domains}};
  return j.dump(2);
}

// ---------------------------------------------------------------- datasets

void save_datasets(const GenSpec& spec, const std::vector<data::Dataset>& datasets,
                   std::uint64_t master_seed, const fs::path& dir) {
  fs::create_directories(dir);
  const std::string hash = fnv1a_hex(gen_spec_to_json(spec) + "#" + std::to_string(master_seed));
  json ids = json::array();
  for (const auto& ds : datasets) ids.push_back(ds.domain_id);
  json manifest = {{"format_version", 1},
                   {"name", spec.name},
                   {"master_seed", master_seed},
                   {"config_hash", hash},
                   {"domains", ids}};
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");

  for (std::size_t di = 0; di < datasets.size(); ++di) {
    const auto& ds = datasets[di];
    const Index n = static_cast<Index>(ds.labels.size());
    json j = {{"format_version", 1},
              {"domain_id", ds.domain_id},
              {"shape", {n, data::kChannels, data::kImageSize, data::kImageSize}},
              {"seed", ds.seed},
              {"config_hash", hash},
              {"spec", domain_spec_to_json(spec.domains[di])},
              {"bin_file", ds.domain_id + ".bin"}};
    write_text_file(dir / (ds.domain_id + ".json"), j.dump(2) + "\n");

    const std::size_t image_bytes = sizeof(double) * static_cast<std::size_t>(ds.images.size());
    std::vector<std::uint8_t> blob(image_bytes + static_cast<std::size_t>(n));
    std::memcpy(blob.data(), ds.images.data(), image_bytes);
    for (Index i = 0; i < n; ++i) {
      blob[image_bytes + static_cast<std::size_t>(i)] =
          static_cast<std::uint8_t>(ds.labels[static_cast<std::size_t>(i)]);
    }
    write_binary_file(dir / (ds.domain_id + ".bin"), blob.data(), blob.size());
  }
}

DatasetBundle load_datasets(const fs::path& dir) {
  json manifest = parse_json(read_text_file(dir / "manifest.json"), "dataset manifest");
  DatasetBundle bundle;
  bundle.name = manifest.at("name").get<std::string>();
  bundle.master_seed = manifest.at("master_seed").get<std::uint64_t>();
  for (const auto& id_json : manifest.at("domains")) {
    const std::string id = id_json.get<std::string>();
    json j = parse_json(read_text_file(dir / (id + ".json")), "dataset " + id);
    auto shape = j.at("shape").get<std::vector<Index>>();
    if (shape.size() != 4 || shape[1] != data::kChannels || shape[2] != data::kImageSize ||
        shape[3] != data::kImageSize) {
      throw IoError("dataset " + id + ": unexpected shape");
    }
    const Index n = shape[0];
    auto blob = read_binary_file(dir / j.at("bin_file").get<std::string>());
    const std::size_t image_bytes =
        sizeof(double) * static_cast<std::size_t>(n * data::kChannels * data::kImageSize *
                                                  data::kImageSize);
    if (blob.size() != image_bytes + static_cast<std::size_t>(n)) {
      throw IoError("dataset " + id + ": blob size mismatch");
    }
    data::Dataset ds;
    ds.domain_id = id;
    ds.seed = j.at("seed").get<std::uint64_t>();
    num::DVec pixels(static_cast<std::size_t>(n * data::kChannels * data::kImageSize *
                                              data::kImageSize));
    std::memcpy(pixels.data(), blob.data(), image_bytes);
    ds.images = num::Tensor({n, data::kChannels, data::kImageSize, data::kImageSize},
                            std::move(pixels));
    ds.labels.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      ds.labels[static_cast<std::size_t>(i)] =
          static_cast<int>(blob[image_bytes + static_cast<std::size_t>(i)]);
    }
    bundle.domains.push_back(std::move(ds));
  }
  return bundle;
}

// ------------------------------------------------------------- checkpoints

void save_checkpoint(const vit::ViTModel& model, const CheckpointMeta& meta, const fs::path& base) {
  const std::string config_json = train_config_to_json(meta.config);
  json params = json::array();
  std::size_t offset = 0;
  for (const auto& p : model.parameters()) {
    params.push_back({{"name", p.name},
                      {"shape", p.value.shape()},
                      {"byte_offset", offset},
                      {"element_count", p.value.size()}});
    offset += sizeof(double) * static_cast<std::size_t>(p.value.size());
  }
  json manifest = {{"format_version", 1},
                   {"config_hash", fnv1a_hex(config_json)},
                   {"master_seed", meta.config.seed},
                   {"dataset", meta.dataset_name},
                   {"target_domain", meta.target_domain},
                   {"best_val_step", meta.best_val_step},
                   {"train_config", json::parse(config_json)},
                   {"params", params}};
  write_text_file(fs::path(base).replace_extension(".json"), manifest.dump(2) + "\n");

  std::vector<std::uint8_t> blob(offset);
  std::size_t cursor = 0;
  for (const auto& p : model.parameters()) {
    const std::size_t bytes = sizeof(double) * static_cast<std::size_t>(p.value.size());
    std::memcpy(blob.data() + cursor, p.value.data(), bytes);
    cursor += bytes;
  }
  write_binary_file(fs::path(base).replace_extension(".bin"), blob.data(), blob.size());
}

LoadedCheckpoint load_checkpoint(const fs::path& json_path) {
  json manifest = parse_json(read_text_file(json_path), "checkpoint manifest");
  CheckpointMeta meta;
  meta.config = parse_train_config(manifest.at("train_config").dump());
  meta.dataset_name = manifest.at("dataset").get<std::string>();
  meta.target_domain = manifest.at("target_domain").get<std::string>();
  meta.best_val_step = manifest.at("best_val_step").get<long>();

  vit::ViTModel model(meta.config.model, RngStream(meta.config.seed, "init"));
  auto blob = read_binary_file(fs::path(json_path).replace_extension(".bin"));
  std::size_t expected = 0;
  for (const auto& p : model.parameters()) {
    expected += sizeof(double) * static_cast<std::size_t>(p.value.size());
  }
  if (blob.size() != expected) {
    throw IoError("checkpoint blob is " + std::to_string(blob.size()) + " bytes, expected " +
                  std::to_string(expected));
  }
  const auto& params_json = manifest.at("params");
  auto& params = model.parameters();
  if (params_json.size() != params.size()) throw IoError("checkpoint parameter list mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& pj = params_json[i];
    if (pj.at("name").get<std::string>() != params[i].name) {
      throw IoError("checkpoint parameter order mismatch at '" + params[i].name + "'");
    }
    const auto offset = pj.at("byte_offset").get<std::size_t>();
    const auto count = pj.at("element_count").get<Index>();
    if (count != params[i].value.size()) {
      throw IoError("checkpoint element count mismatch for '" + params[i].name + "'");
    }
    std::memcpy(params[i].value.mutable_data(), blob.data() + offset,
                sizeof(double) * static_cast<std::size_t>(count));
  }
  for (const auto& p : params) num::ensure_finite(p.value, "checkpoint load");
  return LoadedCheckpoint{std::move(model), std::move(meta)};
}

// ------------------------------------------------------------ run records

std::string run_record_to_json(const harness::RunRecord& record,
                               const harness::TrainConfig& config,
                               const std::string& dataset_name,
                               const std::string& target_domain) {
  const std::string config_json = train_config_to_json(config);
  json curve = json::array();
  for (const auto& point : record.val_curve) {
    curve.push_back(json::array({point.step, point.accuracy}));
  }
  json j = {{"format_version", 1},
            {"master_seed", config.seed},
            {"config_hash", fnv1a_hex(config_json)},
            {"dataset", dataset_name},
            {"target_domain", target_domain},
            {"train_config", json::parse(config_json)},
            {"val_curve", curve},
            {"best_val_step", record.best_val_step},
            {"best_val_acc", record.best_val_acc},
            {"target_acc", record.target_acc},
            {"wall_time_s", record.wall_time_s},
            {"peak_rss_kb", record.peak_rss_kb}};
  return j.dump(2) + "\n";
}

// ------------------------------------------------------------ results table

const char* kResultsHeader =
    "dataset,target_domain,method,strategy,d,n,layer_policy,seed,best_val_acc,target_acc,steps,"
    "wall_time_s";

namespace {

std::string sig6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return std::string(buf);
}

}  // namespace

std::string format_result_row(const ResultRow& row, bool include_timing) {
  std::ostringstream ss;
  ss << row.dataset << ',' << row.target_domain << ',' << row.method << ',' << row.strategy << ','
     << sig6(row.d) << ',' << row.n << ',' << row.layer_policy << ',' << row.seed << ','
     << sig6(row.best_val_acc) << ',' << sig6(row.target_acc) << ',' << row.steps << ','
     << sig6(include_timing ? row.wall_time_s : 0.0);
  return ss.str();
}

void write_results(std::vector<ResultRow> rows, const fs::path& path, bool include_timing) {
  harness::sort_rows(rows);
  std::ostringstream ss;
  ss << kResultsHeader << '\n';
  for (const auto& row : rows) ss << format_result_row(row, include_timing) << '\n';
  write_text_file(path, ss.str());
}

void append_result(const ResultRow& row, const fs::path& path, bool include_timing) {
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  if (fresh) out << kResultsHeader << '\n';
  out << format_result_row(row, include_timing) << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<ResultRow> read_results(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty results file " + path.string());
  if (line != kResultsHeader) throw IoError("unexpected results header in " + path.string());
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 12) throw IoError("bad results row: " + line);
    ResultRow row;
    row.dataset = fields[0];
    row.target_domain = fields[1];
    row.method = fields[2];
    row.strategy = fields[3];
    row.d = std::stod(fields[4]);
    row.n = std::stoi(fields[5]);
    row.layer_policy = fields[6];
    row.seed = std::stoull(fields[7]);
    row.best_val_acc = std::stod(fields[8]);
    row.target_acc = std::stod(fields[9]);
    row.steps = std::stol(fields[10]);
    row.wall_time_s = std::stod(fields[11]);
    rows.push_back(std::move(row));
  }
  return rows;
}

// ----------------------------------------------------------------- report

std::string make_report(const std::vector<ResultRow>& rows) {
  if (rows.empty()) throw ConfigError("report: results table is empty");
  using GroupKey = std::tuple<std::string, std::string, std::string, double, int>;
  std::map<GroupKey, std::vector<double>> groups;
  for (const auto& row : rows) {
    groups[{row.target_domain, row.method, row.strategy, row.d, row.n}].push_back(row.target_acc);
  }
  std::ostringstream ss;
  ss << "target_domain,method,strategy,d,n,runs,target_acc_mean,target_acc_std\n";
  for (const auto& [key, accs] : groups) {
    double mean = 0.0;
    for (double a : accs) mean += a;
    mean /= static_cast<double>(accs.size());
    double std_dev = 0.0;
    if (accs.size() > 1) {
      double ssq = 0.0;
      for (double a : accs) ssq += (a - mean) * (a - mean);
      std_dev = std::sqrt(ssq / static_cast<double>(accs.size() - 1));
    }
    ss << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ','
       << sig6(std::get<3>(key)) << ',' << std::get<4>(key) << ',' << accs.size() << ','
       << sig6(mean) << ',' << sig6(std_dev) << '\n';
  }

  // Per-method average over targets (mean of per-target mean target_acc).
  std::map<std::string, std::map<std::string, std::vector<double>>> by_method;
  for (const auto& row : rows) {
    by_method[row.method][row.target_domain].push_back(row.target_acc);
  }
  ss << "method,targets,target_acc_mean\n";
  for (const auto& [method, targets] : by_method) {
    double sum = 0.0;
    for (const auto& [target, accs] : targets) {
      double mean = 0.0;
      for (double a : accs) mean += a;
      sum += mean / static_cast<double>(accs.size());
    }
    ss << method << ',' << targets.size() << ','
       << sig6(sum / static_cast<double>(targets.size())) << '\n';
  }
  return ss.str();
}

// ------------------------------------------------------------------- pnm

namespace {

std::string sanitize_comment(const std::string& comment) {
  std::string out = comment;
  for (char& c : out) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return out;
}

void write_pnm(const fs::path& path, const char* magic, int width, int height, int channels,
               const std::vector<std::uint8_t>& data, const std::string& comment) {
  if (static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
          static_cast<std::size_t>(channels) != data.size()) {
    throw IoError("pnm: pixel buffer size mismatch");
  }
  std::ostringstream header;
  header << magic << '\n'
         << "# " << sanitize_comment(comment) << '\n'
         << width << ' ' << height << '\n'
         << 255 << '\n';
  std::string text = header.str();
  std::vector<std::uint8_t> blob(text.begin(), text.end());
  blob.insert(blob.end(), data.begin(), data.end());
  write_binary_file(path, blob.data(), blob.size());
}

}  // namespace

void write_pgm(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& gray,
               const std::string& comment) {
  write_pnm(path, "P5", width, height, 1, gray, comment);
}

void write_ppm(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& rgb,
               const std::string& comment) {
  write_pnm(path, "P6", width, height, 3, rgb, comment);
}

}  // namespace tfs::io
