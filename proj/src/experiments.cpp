// Copyright 2026 The PPP Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ppp/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <exception>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "ppp/composer.hpp"
#include "ppp/csv.hpp"
#include "ppp/error.hpp"
#include "ppp/hash.hpp"

namespace ppp::experiments {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config parsing

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed,
                    const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      fail(ErrorCode::parse, "config " + where + ": unknown key '" + key + "'");
    }
  }
}

embedding::ProviderConfig parse_provider(const json& j, const std::string& encoder_id,
                                         const fs::path& base) {
  reject_unknown(j, {"endpoint", "batch_size", "timeout_ms", "retries", "cache_dir"},
                 "provider of '" + encoder_id + "'");
  embedding::ProviderConfig p;
  p.encoder_id = encoder_id;
  p.endpoint = j.at("endpoint").get<std::string>();
  if (j.contains("batch_size")) p.batch_size = j["batch_size"].get<std::size_t>();
  if (j.contains("timeout_ms")) p.timeout = std::chrono::milliseconds(j["timeout_ms"].get<long>());
  if (j.contains("retries")) p.retries = j["retries"].get<int>();
  if (j.contains("cache_dir")) p.cache_dir = resolve(base, j["cache_dir"].get<std::string>());
  if (p.batch_size == 0) fail(ErrorCode::invalid_argument, "provider batch_size must be positive");
  return p;
}

EncoderSpec parse_encoder(const json& j, embedding::Modality modality, const fs::path& base) {
  reject_unknown(j, {"encoder_id", "store", "provider", "key", "pairs_with"}, "encoder");
  EncoderSpec e;
  e.modality = modality;
  e.encoder_id = j.at("encoder_id").get<std::string>();
  if (e.encoder_id.empty()) fail(ErrorCode::invalid_argument, "config: empty encoder_id");
  if (j.contains("store")) e.store = resolve(base, j["store"].get<std::string>());
  if (j.contains("provider")) e.provider = parse_provider(j["provider"], e.encoder_id, base);
  if (e.store.has_value() == e.provider.has_value()) {
    fail(ErrorCode::invalid_argument,
         "config: encoder '" + e.encoder_id + "' needs exactly one of 'store' or 'provider'");
  }
  if (j.contains("key")) e.key = j["key"].get<std::string>();
  if (e.key != "image_id" && e.key != "prompt_key") {
    fail(ErrorCode::invalid_argument, "config: encoder key must be 'image_id' or 'prompt_key'");
  }
  if (j.contains("pairs_with")) e.pairs_with = j["pairs_with"].get<std::string>();
  return e;
}

// ---------------------------------------------------------------------------
// Embedding sources

class StoreSource final : public EmbeddingSource {
 public:
  explicit StoreSource(const EncoderSpec& spec) : store_(embedding::load_store(*spec.store)) {
    if (store_.encoder_id() != spec.encoder_id) {
      fail(ErrorCode::invalid_argument, "store " + spec.store->string() + " holds encoder '" +
                                            store_.encoder_id() + "', config expects '" +
                                            spec.encoder_id + "'");
    }
    if (store_.modality() != spec.modality) {
      fail(ErrorCode::invalid_argument,
           "store " + spec.store->string() + " holds " +
               std::string(embedding::to_string(store_.modality())) + " embeddings, expected " +
               std::string(embedding::to_string(spec.modality)));
    }
    describe_ = "store:" + store_.content_hash();
  }
  Eigen::MatrixXd lookup(std::span<const std::string> keys) override { return store_.gather(keys); }
  std::string describe() const override { return describe_; }

 private:
  embedding::EmbeddingStore store_;
  std::string describe_;
};

class ProviderSource final : public EmbeddingSource {
 public:
  explicit ProviderSource(const EncoderSpec& spec) : embedder_(*spec.provider) {}
  Eigen::MatrixXd lookup(std::span<const std::string> keys) override {
    return embedder_.embed(keys);
  }
  std::string describe() const override {
    return "provider:" + embedder_.config().endpoint;
  }

 private:
  embedding::CachedEmbedder embedder_;
};

// ---------------------------------------------------------------------------
// Shared helpers

std::string matrix_hash(const Eigen::MatrixXd& m) {
  const auto* bytes = reinterpret_cast<const std::byte*>(m.data());
  return sha256_hex(std::span<const std::byte>(bytes, sizeof(double) * m.size()));
}

struct Dataset {
  std::vector<ingest::ImageRecord> records;
  std::vector<std::string> record_keys;  // normalized prompt per record
  std::vector<ingest::PromptGroup> groups;
  std::unordered_map<std::string, std::size_t> group_index;
};

Dataset load_dataset(const ExperimentConfig& cfg, report::Metadata& meta) {
  Dataset ds;
  ds.records = cfg.dataset_format ? ingest::load_records(cfg.dataset_path, *cfg.dataset_format)
                                  : ingest::load_records(cfg.dataset_path);
  ds.groups = ingest::aggregate(ds.records);
  ds.record_keys.reserve(ds.records.size());
  for (const auto& r : ds.records) ds.record_keys.push_back(ingest::normalize_prompt(r.prompt_raw));
  for (std::size_t i = 0; i < ds.groups.size(); ++i) ds.group_index[ds.groups[i].prompt_key] = i;
  meta.input_hashes["dataset"] = sha256_file(cfg.dataset_path);
  return ds;
}

ingest::SplitAssignment make_split(const ExperimentConfig& cfg, std::vector<std::string> keys,
                                   report::Metadata& meta) {
  if (cfg.split_file) {
    const std::string text = read_file(*cfg.split_file);
    meta.input_hashes["split"] = sha256_hex(text);
    ingest::SplitAssignment s = ingest::split_from_json(text);
    for (const auto& k : keys) (void)s.of(k);
    meta.split_seed = s.seed;
    return s;
  }
  meta.split_seed = cfg.split_seed;
  return ingest::split_keys(std::move(keys), cfg.split_ratios, cfg.split_seed);
}

void check_disjoint(const std::vector<std::string>& fit_keys,
                    const std::vector<std::string>& eval_keys, const std::string& cell) {
  const std::unordered_set<std::string> fit(fit_keys.begin(), fit_keys.end());
  for (const auto& k : eval_keys) {
    if (fit.contains(k)) {
      throw std::logic_error("split hygiene violated in " + cell + ": '" + k +
                             "' is in both the fit and the evaluation set");
    }
  }
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& X, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Runs fn(0..n-1) on up to `jobs` threads; rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first) first = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first) std::rethrow_exception(first);
}

struct Rows {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> keys;
};

struct Cell {
  stats::CorrelationResult result;
  probe::LinearHead head;
};

std::uint64_t cell_seed(std::uint64_t base, std::size_t index) {
  return base + 0x9E3779B97F4A7C15ULL * (index + 1);
}

Cell fit_cell(const Rows& train, const Rows& val, const Rows& test, const ExperimentConfig& cfg,
              std::size_t index, const std::string& label) {
  check_disjoint(train.keys, test.keys, label);
  check_disjoint(val.keys, test.keys, label);
  if (train.X.rows() < 2) {
    fail(ErrorCode::invalid_argument, label + ": only " + std::to_string(train.X.rows()) +
                                          " training rows");
  }
  if (test.X.rows() < 3) {
    fail(ErrorCode::invalid_argument, label + ": only " + std::to_string(test.X.rows()) +
                                          " test rows, need at least 3");
  }
  Cell cell;
  if (!cfg.lambda_grid.empty()) {
    if (val.X.rows() < 1) fail(ErrorCode::invalid_argument, label + ": lambda grid needs validation rows");
    cell.head = probe::fit_ridge_select(train.X, train.y, val.X, val.y, cfg.lambda_grid).first;
  } else {
    cell.head = probe::fit_ridge(train.X, train.y, cfg.lambda).first;
  }
  if (val.X.rows() >= 2) probe::attach_validation(cell.head, val.X, val.y);
  const Eigen::VectorXd pred = probe::predict(cell.head, test.X);
  const std::span<const double> p(pred.data(), static_cast<std::size_t>(pred.size()));
  const std::span<const double> t(test.y.data(), static_cast<std::size_t>(test.y.size()));
  cell.result = stats::pearson(p, t);
  if (cfg.bootstrap) {
    const auto [lo, hi] = stats::bootstrap_ci(p, t, cfg.bootstrap->resamples,
                                              cell_seed(cfg.bootstrap->seed, index),
                                              cfg.bootstrap->alpha);
    cell.result.ci_low = lo;
    cell.result.ci_high = hi;
  }
  return cell;
}

std::string head_stem(std::string_view encoder, std::string_view name) {
  std::string out;
  auto append = [&](std::string_view s) {
    for (char c : s) {
      out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_'
                        ? c
                        : '_');
    }
  };
  append(encoder);
  out += "__";
  append(name);
  return out;
}

bool usable(const ingest::PromptGroup& g, const std::string& metric, bool include_partial) {
  return include_partial ? g.metric_means.contains(metric) : g.complete_for(metric);
}

// Group-level rows for one metric and split, from an embedding matrix whose
// row i belongs to groups[i].
Rows group_rows(const Dataset& ds, const Eigen::MatrixXd& X, const ingest::SplitAssignment& sp,
                const std::string& metric, ingest::Split which, bool include_partial) {
  std::vector<std::size_t> idx;
  std::vector<double> y;
  Rows out;
  for (std::size_t i = 0; i < ds.groups.size(); ++i) {
    const auto& g = ds.groups[i];
    if (!usable(g, metric, include_partial) || sp.of(g.prompt_key) != which) continue;
    idx.push_back(i);
    y.push_back(g.metric_means.at(metric));
    out.keys.push_back(g.prompt_key);
  }
  out.X = select_rows(X, idx);
  out.y = to_vector(y);
  return out;
}

std::vector<std::string> group_keys(const Dataset& ds) {
  std::vector<std::string> keys;
  keys.reserve(ds.groups.size());
  for (const auto& g : ds.groups) keys.push_back(g.prompt_key);
  return keys;
}

void require_metrics(const ExperimentConfig& cfg) {
  if (cfg.metrics.empty()) fail(ErrorCode::invalid_argument, "config: 'metrics' must be non-empty");
}

void require_encoders(const ExperimentConfig& cfg) {
  if (cfg.encoders.empty()) fail(ErrorCode::invalid_argument, "config: 'encoders' must be non-empty");
}

const EncoderSpec& paired_text_encoder(const ExperimentConfig& cfg, const EncoderSpec& image) {
  if (image.pairs_with.empty()) {
    if (cfg.encoders.size() == 1) return cfg.encoders.front();
    fail(ErrorCode::invalid_argument, "config: image encoder '" + image.encoder_id +
                                          "' needs 'pairs_with' when several text encoders exist");
  }
  for (const auto& e : cfg.encoders) {
    if (e.encoder_id == image.pairs_with) return e;
  }
  fail(ErrorCode::not_found, "config: image encoder '" + image.encoder_id +
                                 "' pairs with unknown text encoder '" + image.pairs_with + "'");
}

Eigen::MatrixXd lookup_hashed(EmbeddingSource& src, std::span<const std::string> keys,
                              const std::string& name, report::Metadata& meta) {
  Eigen::MatrixXd X = src.lookup(keys);
  meta.input_hashes["embeddings/" + name] = matrix_hash(X);
  return X;
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

json metadata_json(const report::Metadata& m) {
  return {{"dataset", m.dataset},
          {"split_seed", m.split_seed},
          {"lambda", m.lambda},
          {"input_hashes", m.input_hashes},
          {"advisories", m.advisories}};
}

report::Metadata base_metadata(const ExperimentConfig& cfg) {
  report::Metadata meta;
  meta.dataset = cfg.dataset_name.empty() ? cfg.dataset_path.stem().string() : cfg.dataset_name;
  meta.lambda = cfg.lambda;
  meta.split_seed = cfg.split_seed;
  return meta;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(Kind k) {
  switch (k) {
    case Kind::probe_grid: return "probe_grid";
    case Kind::transfer: return "transfer";
    case Kind::modality_gap: return "modality_gap";
    case Kind::metric_matrix: return "metric_matrix";
    case Kind::modifier_variance: return "modifier_variance";
    case Kind::paintings_ablation: return "paintings_ablation";
  }
  return "unknown";
}

Kind parse_kind(std::string_view name) {
  for (Kind k : {Kind::probe_grid, Kind::transfer, Kind::modality_gap, Kind::metric_matrix,
                 Kind::modifier_variance, Kind::paintings_ablation}) {
    if (to_string(k) == name) return k;
  }
  fail(ErrorCode::invalid_argument, "unknown experiment kind '" + std::string(name) + "'");
}

ExperimentConfig parse_config(std::string_view json_text, const fs::path& base_dir) {
  ExperimentConfig cfg;
  try {
    const json j = json::parse(json_text);
    if (!j.is_object()) fail(ErrorCode::parse, "config: expected a JSON object");
    reject_unknown(j,
                   {"kind", "dataset", "encoders", "image_encoders", "metrics", "split", "lambda",
                    "lambda_grid", "bootstrap", "jobs", "include_partial", "image_heads",
                    "levene_center", "max_points", "max_components", "template",
                    "advisory_pairs", "output_dir"},
                   "root");
    if (j.contains("kind")) cfg.kind = parse_kind(j["kind"].get<std::string>());

    const json& d = j.at("dataset");
    reject_unknown(d, {"name", "path", "format"}, "dataset");
    cfg.dataset_path = resolve(base_dir, d.at("path").get<std::string>());
    cfg.dataset_name = d.value("name", cfg.dataset_path.stem().string());
    if (d.contains("format")) cfg.dataset_format = ingest::parse_format(d["format"].get<std::string>());

    if (j.contains("encoders")) {
      for (const auto& e : j["encoders"]) {
        cfg.encoders.push_back(parse_encoder(e, embedding::Modality::text, base_dir));
      }
    }
    if (j.contains("image_encoders")) {
      for (const auto& e : j["image_encoders"]) {
        cfg.image_encoders.push_back(parse_encoder(e, embedding::Modality::image, base_dir));
      }
    }
    std::set<std::string> ids;
    for (const auto* list : {&cfg.encoders, &cfg.image_encoders}) {
      for (const auto& e : *list) {
        if (!ids.insert(e.encoder_id).second) {
          fail(ErrorCode::invalid_argument, "config: duplicate encoder_id '" + e.encoder_id + "'");
        }
      }
    }
    if (j.contains("metrics")) cfg.metrics = j["metrics"].get<std::vector<std::string>>();

    if (j.contains("split")) {
      const json& s = j["split"];
      reject_unknown(s, {"ratios", "seed", "file"}, "split");
      if (s.contains("ratios")) cfg.split_ratios = s["ratios"].get<std::array<double, 3>>();
      if (s.contains("seed")) cfg.split_seed = s["seed"].get<std::uint64_t>();
      if (s.contains("file")) cfg.split_file = resolve(base_dir, s["file"].get<std::string>());
    }
    if (j.contains("lambda")) cfg.lambda = j["lambda"].get<double>();
    if (j.contains("lambda_grid")) cfg.lambda_grid = j["lambda_grid"].get<std::vector<double>>();
    if (j.contains("bootstrap")) {
      const json& b = j["bootstrap"];
      reject_unknown(b, {"resamples", "alpha", "seed"}, "bootstrap");
      BootstrapSpec spec;
      spec.resamples = b.value("resamples", spec.resamples);
      spec.alpha = b.value("alpha", spec.alpha);
      spec.seed = b.value("seed", spec.seed);
      cfg.bootstrap = spec;
    }
    cfg.jobs = j.value("jobs", cfg.jobs);
    cfg.include_partial = j.value("include_partial", cfg.include_partial);
    if (j.contains("image_heads")) {
      for (const auto& [metric, path] : j["image_heads"].items()) {
        cfg.image_heads[metric] = resolve(base_dir, path.get<std::string>());
      }
    }
    if (j.contains("levene_center")) {
      cfg.levene_center = stats::parse_center(j["levene_center"].get<std::string>());
    }
    cfg.max_points = j.value("max_points", cfg.max_points);
    cfg.max_components = j.value("max_components", cfg.max_components);
    cfg.template_id = j.value("template", cfg.template_id);
    if (j.contains("advisory_pairs")) {
      cfg.advisory_pairs = j["advisory_pairs"].get<std::vector<std::array<std::string, 2>>>();
    }
    cfg.output_dir = resolve(base_dir, j.value("output_dir", std::string("out")));
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("config: ") + e.what());
  }
  if (cfg.jobs == 0) cfg.jobs = 1;
  if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda)) {
    fail(ErrorCode::invalid_argument, "config: lambda must be finite and >= 0");
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::not_found, "config file not found: " + path.string());
  try {
    return parse_config(read_file(path), path.parent_path());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::unique_ptr<EmbeddingSource> EmbeddingSource::open(const EncoderSpec& spec) {
  if (spec.store) return std::make_unique<StoreSource>(spec);
  if (spec.provider) return std::make_unique<ProviderSource>(spec);
  fail(ErrorCode::invalid_argument, "encoder '" + spec.encoder_id + "' has no store or provider");
}

// ---------------------------------------------------------------------------
// Runners

RunResult run_probe_grid(const ExperimentConfig& cfg) {
  require_metrics(cfg);
  require_encoders(cfg);
  RunResult out;
  out.kind = Kind::probe_grid;
  out.metadata = base_metadata(cfg);
  const Dataset ds = load_dataset(cfg, out.metadata);
  const std::vector<std::string> keys = group_keys(ds);
  const ingest::SplitAssignment sp = make_split(cfg, keys, out.metadata);

  std::vector<Eigen::MatrixXd> X;
  for (const auto& enc : cfg.encoders) {
    auto src = EmbeddingSource::open(enc);
    X.push_back(lookup_hashed(*src, keys, enc.encoder_id, out.metadata));
  }

  const std::size_t n_enc = cfg.encoders.size();
  const std::size_t n_cells = cfg.metrics.size() * n_enc;
  std::vector<Cell> cells(n_cells);
  parallel_for(n_cells, cfg.jobs, [&](std::size_t i) {
    const std::string& metric = cfg.metrics[i / n_enc];
    const std::size_t e = i % n_enc;
    const std::string label = cfg.encoders[e].encoder_id + " x " + metric;
    const Rows train = group_rows(ds, X[e], sp, metric, ingest::Split::train, cfg.include_partial);
    const Rows val = group_rows(ds, X[e], sp, metric, ingest::Split::validation, cfg.include_partial);
    const Rows test = group_rows(ds, X[e], sp, metric, ingest::Split::test, cfg.include_partial);
    cells[i] = fit_cell(train, val, test, cfg, i, label);
    cells[i].head.encoder_id = cfg.encoders[e].encoder_id;
    cells[i].head.metric = metric;
    cells[i].head.trained_modality = embedding::Modality::text;
  });

  report::ReportTable t;
  t.kind = "probe_grid";
  t.title = "Pearson correlation of linear-probe predictions (test split)";
  t.row_labels = cfg.metrics;
  for (const auto& enc : cfg.encoders) t.column_labels.push_back(enc.encoder_id);
  for (std::size_t m = 0; m < cfg.metrics.size(); ++m) {
    std::vector<stats::CorrelationResult> row;
    for (std::size_t e = 0; e < n_enc; ++e) {
      Cell& c = cells[m * n_enc + e];
      row.push_back(c.result);
      out.heads.emplace(head_stem(c.head.encoder_id, c.head.metric), std::move(c.head));
    }
    t.cells.push_back(std::move(row));
  }
  t.metadata = out.metadata;
  out.table = std::move(t);
  return out;
}

RunResult run_transfer(const ExperimentConfig& cfg) {
  require_metrics(cfg);
  require_encoders(cfg);
  if (cfg.image_encoders.empty()) {
    fail(ErrorCode::invalid_argument, "transfer: config needs at least one image encoder");
  }
  RunResult out;
  out.kind = Kind::transfer;
  out.metadata = base_metadata(cfg);
  const Dataset ds = load_dataset(cfg, out.metadata);
  const std::vector<std::string> keys = group_keys(ds);
  const ingest::SplitAssignment sp = make_split(cfg, keys, out.metadata);
  for (const auto& [metric, path] : cfg.image_heads) {
    out.metadata.input_hashes["image_head/" + metric] = sha256_file(path);
  }

  struct Pair {
    const EncoderSpec* text;
    const EncoderSpec* image;
    Eigen::MatrixXd X_text;
    Eigen::MatrixXd X_image;  // rows follow image_keys
    std::vector<std::string> image_keys;
    std::vector<std::size_t> image_record;  // record index per row, image_id keyed only
  };
  std::vector<Pair> pairs;
  std::map<std::string, Eigen::MatrixXd> text_cache;
  for (const auto& img : cfg.image_encoders) {
    Pair p;
    p.image = &img;
    p.text = &paired_text_encoder(cfg, img);
    if (!text_cache.contains(p.text->encoder_id)) {
      auto src = EmbeddingSource::open(*p.text);
      text_cache[p.text->encoder_id] = lookup_hashed(*src, keys, p.text->encoder_id, out.metadata);
    }
    p.X_text = text_cache[p.text->encoder_id];
    const bool need_image_rows = std::any_of(cfg.metrics.begin(), cfg.metrics.end(),
                                             [&](const auto& m) { return !cfg.image_heads.contains(m); });
    if (need_image_rows) {
      if (img.key == "image_id") {
        for (std::size_t r = 0; r < ds.records.size(); ++r) {
          if (sp.of(ds.record_keys[r]) != ingest::Split::train) continue;
          p.image_keys.push_back(ds.records[r].image_id);
          p.image_record.push_back(r);
        }
      } else {
        p.image_keys = sp.keys_in(ingest::Split::train);
      }
      auto src = EmbeddingSource::open(img);
      p.X_image = lookup_hashed(*src, p.image_keys, img.encoder_id, out.metadata);
    }
    pairs.push_back(std::move(p));
  }

  const std::size_t n_pairs = pairs.size();
  const std::size_t n_cells = cfg.metrics.size() * n_pairs;
  std::vector<Cell> same(n_cells);
  std::vector<stats::CorrelationResult> transfer(n_cells);
  std::vector<probe::LinearHead> image_heads(n_cells);
  parallel_for(n_cells, cfg.jobs, [&](std::size_t i) {
    const std::string& metric = cfg.metrics[i / n_pairs];
    const Pair& p = pairs[i % n_pairs];
    const std::string label = p.text->encoder_id + " x " + metric;
    const Rows train = group_rows(ds, p.X_text, sp, metric, ingest::Split::train, cfg.include_partial);
    const Rows val = group_rows(ds, p.X_text, sp, metric, ingest::Split::validation, cfg.include_partial);
    const Rows test = group_rows(ds, p.X_text, sp, metric, ingest::Split::test, cfg.include_partial);
    same[i] = fit_cell(train, val, test, cfg, i, label);
    same[i].head.encoder_id = p.text->encoder_id;
    same[i].head.metric = metric;
    same[i].head.trained_modality = embedding::Modality::text;

    probe::LinearHead head;
    if (auto it = cfg.image_heads.find(metric); it != cfg.image_heads.end()) {
      head = probe::load_head(it->second);
      if (head.trained_modality != embedding::Modality::image) {
        fail(ErrorCode::invalid_argument, "transfer: imported head " + it->second.string() +
                                              " was not trained on image embeddings");
      }
    } else {
      std::vector<std::size_t> rows;
      std::vector<double> y;
      std::vector<std::string> fit_keys;
      for (std::size_t r = 0; r < p.image_keys.size(); ++r) {
        const ingest::PromptGroup* g = nullptr;
        double target = 0.0;
        if (p.image->key == "image_id") {
          const auto& rec = ds.records[p.image_record[r]];
          g = &ds.groups[ds.group_index.at(ds.record_keys[p.image_record[r]])];
          auto s = rec.scores.find(metric);
          if (s == rec.scores.end()) continue;
          target = s->second;
        } else {
          g = &ds.groups[ds.group_index.at(p.image_keys[r])];
          if (!g->metric_means.contains(metric)) continue;
          target = g->metric_means.at(metric);
        }
        if (!usable(*g, metric, cfg.include_partial)) continue;
        rows.push_back(r);
        y.push_back(target);
        fit_keys.push_back(g->prompt_key);
      }
      check_disjoint(fit_keys, test.keys, p.image->encoder_id + " image head x " + metric);
      if (rows.size() < 2) {
        fail(ErrorCode::invalid_argument, "transfer: fewer than 2 training images for '" + metric + "'");
      }
      head = probe::fit_ridge(select_rows(p.X_image, rows), to_vector(y), cfg.lambda).first;
      head.encoder_id = p.image->encoder_id;
      head.metric = metric;
      head.trained_modality = embedding::Modality::image;
    }
    if (head.dim() != test.X.cols()) {
      fail(ErrorCode::invalid_argument, "transfer: image head dim " + std::to_string(head.dim()) +
                                            " does not match prompt embedding dim " +
                                            std::to_string(test.X.cols()));
    }
    const auto applied = probe::transfer_apply(head, test.X, embedding::Modality::text);
    transfer[i] = stats::pearson(
        std::span<const double>(applied.values.data(), static_cast<std::size_t>(applied.values.size())),
        std::span<const double>(test.y.data(), static_cast<std::size_t>(test.y.size())));
    image_heads[i] = std::move(head);
  });

  report::ReportTable t;
  t.kind = "transfer";
  t.title = "Same-modality probe vs image-head transfer on prompt embeddings (test split)";
  t.row_labels = cfg.metrics;
  for (const auto& p : pairs) {
    t.column_labels.push_back(p.text->encoder_id + "/same_modality");
    t.column_labels.push_back(p.text->encoder_id + "/transfer:" + p.image->encoder_id);
  }
  for (std::size_t m = 0; m < cfg.metrics.size(); ++m) {
    std::vector<stats::CorrelationResult> row;
    for (std::size_t q = 0; q < n_pairs; ++q) {
      const std::size_t i = m * n_pairs + q;
      row.push_back(same[i].result);
      row.push_back(transfer[i]);
      out.heads.emplace(head_stem(same[i].head.encoder_id, same[i].head.metric),
                        std::move(same[i].head));
      out.heads.emplace(head_stem(image_heads[i].encoder_id, image_heads[i].metric),
                        std::move(image_heads[i]));
    }
    t.cells.push_back(std::move(row));
  }
  t.metadata = out.metadata;
  out.table = std::move(t);
  return out;
}

RunResult run_modality_gap(const ExperimentConfig& cfg) {
  require_encoders(cfg);
  if (cfg.image_encoders.empty()) {
    fail(ErrorCode::invalid_argument, "modality_gap: config needs at least one image encoder");
  }
  RunResult out;
  out.kind = Kind::modality_gap;
  out.metadata = base_metadata(cfg);
  const Dataset ds = load_dataset(cfg, out.metadata);

  auto subsample = [&](std::vector<std::string> keys) {
    std::sort(keys.begin(), keys.end());
    if (cfg.max_points == 0 || keys.size() <= cfg.max_points) return keys;
    Rng rng(cfg.split_seed);
    rng.shuffle(keys);
    keys.resize(cfg.max_points);
    std::sort(keys.begin(), keys.end());
    return keys;
  };
  const std::vector<std::string> prompt_keys = subsample(group_keys(ds));
  std::vector<std::string> all_images;
  for (const auto& r : ds.records) all_images.push_back(r.image_id);

  for (const auto& img : cfg.image_encoders) {
    const EncoderSpec& text = paired_text_encoder(cfg, img);
    auto tsrc = EmbeddingSource::open(text);
    auto isrc = EmbeddingSource::open(img);
    const Eigen::MatrixXd P = lookup_hashed(*tsrc, prompt_keys, text.encoder_id, out.metadata);
    const std::vector<std::string> image_keys =
        img.key == "image_id" ? subsample(all_images) : prompt_keys;
    const Eigen::MatrixXd I = lookup_hashed(*isrc, image_keys, img.encoder_id, out.metadata);
    ModalityGapEntry entry;
    entry.text_encoder = text.encoder_id;
    entry.image_encoder = img.encoder_id;
    entry.separation =
        stats::modality_separation(P, I, static_cast<Eigen::Index>(cfg.max_components));
    out.gaps.push_back(std::move(entry));
  }
  return out;
}

RunResult run_metric_matrix(const ExperimentConfig& cfg) {
  require_metrics(cfg);
  RunResult out;
  out.kind = Kind::metric_matrix;
  out.metadata = base_metadata(cfg);
  const Dataset ds = load_dataset(cfg, out.metadata);
  std::vector<ingest::PromptGroup> used;
  for (const auto& g : ds.groups) {
    const bool ok = std::all_of(cfg.metrics.begin(), cfg.metrics.end(), [&](const std::string& m) {
      return usable(g, m, cfg.include_partial);
    });
    if (ok) used.push_back(g);
  }
  const stats::MetricMatrix mm = stats::metric_correlation_matrix(used, cfg.metrics);

  std::vector<std::array<std::string, 2>> pairs = cfg.advisory_pairs;
  if (pairs.empty()) {
    for (const auto& a : cfg.metrics) {
      for (const auto& b : cfg.metrics) {
        if (lower(a).find("aes") != std::string::npos && lower(b).find("mem") != std::string::npos) {
          pairs.push_back({a, b});
        }
      }
    }
  }
  for (const auto& [a, b] : pairs) {
    const auto ia = std::find(cfg.metrics.begin(), cfg.metrics.end(), a);
    const auto ib = std::find(cfg.metrics.begin(), cfg.metrics.end(), b);
    if (ia == cfg.metrics.end() || ib == cfg.metrics.end()) {
      out.metadata.advisories.push_back("advisory pair " + a + "/" + b + " skipped: metric not in matrix");
      continue;
    }
    const double r = mm.cells[ia - cfg.metrics.begin()][ib - cfg.metrics.begin()].r;
    const bool slight_negative = r < 0.0 && r > -0.5;
    out.metadata.advisories.push_back(a + " vs " + b + ": r = " + fmt("%.4f", r) +
                                      (slight_negative ? "; slight negative correlation as expected"
                                                       : "; expected a slight negative correlation"));
  }

  report::ReportTable t;
  t.kind = "metric_matrix";
  t.title = "Pearson correlation between relevance metrics over prompt groups";
  t.row_labels = mm.metrics;
  t.column_labels = mm.metrics;
  t.cells = mm.cells;
  t.metadata = out.metadata;
  out.table = std::move(t);
  return out;
}

RunResult run_modifier_variance(const ExperimentConfig& cfg) {
  require_metrics(cfg);
  RunResult out;
  out.kind = Kind::modifier_variance;
  out.metadata = base_metadata(cfg);
  const Dataset ds = load_dataset(cfg, out.metadata);
  const std::string& metric = cfg.metrics.front();

  std::vector<double> without, with;
  for (std::size_t r = 0; r < ds.records.size(); ++r) {
    auto s = ds.records[r].scores.find(metric);
    if (s == ds.records[r].scores.end()) continue;
    const auto& g = ds.groups[ds.group_index.at(ds.record_keys[r])];
    (g.modifier_count == 0 ? without : with).push_back(s->second);
  }
  auto require_size = [&](const std::vector<double>& v, const char* name) {
    if (v.size() < 2) {
      fail(ErrorCode::invalid_argument, std::string("modifier_variance: the ") + name + " group has " +
                                            std::to_string(v.size()) + " image(s) scored on '" +
                                            metric + "', need at least 2");
    }
  };
  require_size(without, "zero-modifier");
  require_size(with, "with-modifier");

  ModifierVarianceResult res;
  res.metric = metric;
  const std::vector<std::vector<double>> groups{without, with};
  res.levene = stats::levene(groups, cfg.levene_center);
  auto summarize = [](std::string label, const std::vector<double>& v) {
    return GroupSummary{std::move(label), v.size(), stats::mean(v), stats::stddev(v)};
  };
  res.without_modifiers = summarize("modifier_count = 0", without);
  res.with_modifiers = summarize("modifier_count >= 1", with);
  out.metadata.advisories.push_back(
      "with modifiers: mean " + fmt("%.4f", res.with_modifiers.mean) + ", std " +
      fmt("%.4f", res.with_modifiers.stddev) + "; without: mean " +
      fmt("%.4f", res.without_modifiers.mean) + ", std " + fmt("%.4f", res.without_modifiers.stddev));
  out.modifiers = std::move(res);
  return out;
}

RunResult run_paintings_ablation(const ExperimentConfig& cfg) {
  require_encoders(cfg);
  RunResult out;
  out.kind = Kind::paintings_ablation;
  out.metadata = base_metadata(cfg);
  const std::vector<composer::PaintingRecord> paintings = composer::load_paintings(cfg.dataset_path);
  out.metadata.input_hashes["dataset"] = sha256_file(cfg.dataset_path);

  std::vector<std::string> features = cfg.metrics;
  if (features.empty()) {
    std::set<std::string> all;
    for (const auto& p : paintings) {
      for (const auto& [f, _] : p.appreciation_scores) all.insert(f);
    }
    features.assign(all.begin(), all.end());
  }
  if (features.empty()) fail(ErrorCode::invalid_argument, "paintings: no appreciation features found");

  std::vector<std::string> ids;
  for (const auto& p : paintings) ids.push_back(p.painting_id);
  const ingest::SplitAssignment sp = make_split(cfg, ids, out.metadata);

  struct RowInput {
    std::string label;
    std::vector<std::size_t> eligible;  // painting indices
    Eigen::MatrixXd X;                  // one row per eligible painting
    std::string encoder_id;
  };
  std::vector<RowInput> inputs;
  const std::size_t N = paintings.size();

  auto text_src = EmbeddingSource::open(cfg.encoders.front());
  for (const auto& parts : composer::ablation_configs()) {
    RowInput in;
    in.label = composer::label(parts);
    in.encoder_id = cfg.encoders.front().encoder_id;
    std::vector<std::string> prompts;
    for (std::size_t i = 0; i < N; ++i) {
      if (!composer::has_parts(paintings[i], parts)) continue;
      in.eligible.push_back(i);
      prompts.push_back(composer::compose(paintings[i], parts, cfg.template_id));
    }
    const std::size_t missing = N - in.eligible.size();
    if (2 * missing > N) {
      fail(ErrorCode::invalid_argument,
           "paintings ablation '" + in.label + "': required parts are missing from " +
               std::to_string(missing) + " of " + std::to_string(N) +
               " paintings (more than half); enrich the painting metadata upstream");
    }
    in.X = lookup_hashed(*text_src, prompts, in.encoder_id + "/" + in.label, out.metadata);
    inputs.push_back(std::move(in));
  }
  if (!cfg.image_encoders.empty()) {
    RowInput in;
    in.label = "image-based features";
    in.encoder_id = cfg.image_encoders.front().encoder_id;
    for (std::size_t i = 0; i < N; ++i) in.eligible.push_back(i);
    auto src = EmbeddingSource::open(cfg.image_encoders.front());
    in.X = lookup_hashed(*src, ids, in.encoder_id, out.metadata);
    inputs.push_back(std::move(in));
  }

  const std::size_t n_feat = features.size();
  const std::size_t n_cells = inputs.size() * n_feat;
  std::vector<Cell> cells(n_cells);
  parallel_for(n_cells, cfg.jobs, [&](std::size_t c) {
    const RowInput& in = inputs[c / n_feat];
    const std::string& feature = features[c % n_feat];
    auto rows_for = [&](ingest::Split which) {
      Rows r;
      std::vector<std::size_t> idx;
      std::vector<double> y;
      for (std::size_t k = 0; k < in.eligible.size(); ++k) {
        const auto& p = paintings[in.eligible[k]];
        auto s = p.appreciation_scores.find(feature);
        if (s == p.appreciation_scores.end() || sp.of(p.painting_id) != which) continue;
        idx.push_back(k);
        y.push_back(s->second);
        r.keys.push_back(p.painting_id);
      }
      r.X = select_rows(in.X, idx);
      r.y = to_vector(y);
      return r;
    };
    const Rows train = rows_for(ingest::Split::train);
    const Rows val = rows_for(ingest::Split::validation);
    const Rows test = rows_for(ingest::Split::test);
    cells[c] = fit_cell(train, val, test, cfg, c, in.label + " x " + feature);
    cells[c].head.encoder_id = in.encoder_id;
    cells[c].head.metric = feature;
    cells[c].head.trained_modality =
        c / n_feat < composer::ablation_configs().size() ? embedding::Modality::text
                                                         : embedding::Modality::image;
  });

  report::ReportTable t;
  t.kind = "paintings_ablation";
  t.title = "Appreciation prediction by prompt parts (test split)";
  t.column_labels = features;
  for (std::size_t r = 0; r < inputs.size(); ++r) {
    t.row_labels.push_back(inputs[r].label);
    std::vector<stats::CorrelationResult> row;
    for (std::size_t f = 0; f < n_feat; ++f) {
      Cell& c = cells[r * n_feat + f];
      row.push_back(c.result);
      out.heads.emplace(head_stem(c.head.encoder_id, inputs[r].label + "__" + features[f]),
                        std::move(c.head));
    }
    t.cells.push_back(std::move(row));
  }
  t.metadata = out.metadata;
  out.table = std::move(t);
  return out;
}

RunResult run(const ExperimentConfig& cfg) {
  switch (cfg.kind) {
    case Kind::probe_grid: return run_probe_grid(cfg);
    case Kind::transfer: return run_transfer(cfg);
    case Kind::modality_gap: return run_modality_gap(cfg);
    case Kind::metric_matrix: return run_metric_matrix(cfg);
    case Kind::modifier_variance: return run_modifier_variance(cfg);
    case Kind::paintings_ablation: return run_paintings_ablation(cfg);
  }
  fail(ErrorCode::invalid_argument, "unknown experiment kind");
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

std::string exact(double v) { return fmt("%.17g", v); }

std::string render_modifiers(const RunResult& r, report::Format format) {
  const ModifierVarianceResult& m = *r.modifiers;
  const std::array<const GroupSummary*, 2> groups{&m.without_modifiers, &m.with_modifiers};
  switch (format) {
    case report::Format::json: {
      json g = json::array();
      for (const auto* s : groups) {
        g.push_back({{"label", s->label}, {"n", s->n}, {"mean", s->mean}, {"stddev", s->stddev}});
      }
      json j = {{"version", 1},
                {"kind", "modifier_variance"},
                {"metric", m.metric},
                {"levene",
                 {{"W", m.levene.W},
                  {"p_value", m.levene.p_value},
                  {"group_sizes", m.levene.group_sizes},
                  {"center", stats::to_string(m.levene.center)}}},
                {"groups", std::move(g)},
                {"metadata", metadata_json(r.metadata)}};
      return j.dump(2) + "\n";
    }
    case report::Format::markdown: {
      std::string s = "## Levene test on '" + m.metric + "' by modifier presence\n\n";
      s += "| Group | n | mean | std |\n|---|---|---|---|\n";
      for (const auto* g : groups) {
        s += "| " + g->label + " | " + std::to_string(g->n) + " | " + fmt("%.4f", g->mean) + " | " +
             fmt("%.4f", g->stddev) + " |\n";
      }
      s += "\nW = " + fmt("%.4f", m.levene.W) + ", p = " + fmt("%.4g", m.levene.p_value) +
           " (center: " + std::string(stats::to_string(m.levene.center)) + ")\n";
      return s;
    }
    case report::Format::csv: {
      std::string s = csv::join_row({"group", "n", "mean", "stddev", "W", "p_value"}) + "\n";
      for (const auto* g : groups) {
        s += csv::join_row({g->label, std::to_string(g->n), exact(g->mean), exact(g->stddev),
                            exact(m.levene.W), exact(m.levene.p_value)}) +
             "\n";
      }
      return s;
    }
  }
  return {};
}

std::string render_gaps(const RunResult& r, report::Format format) {
  switch (format) {
    case report::Format::json: {
      json pairs = json::array();
      for (const auto& g : r.gaps) {
        const auto& s = g.separation;
        pairs.push_back({{"text_encoder", g.text_encoder},
                         {"image_encoder", g.image_encoder},
                         {"pc1_auc", s.pc1_auc},
                         {"pc1_threshold_accuracy", s.pc1_threshold_accuracy},
                         {"per_component_auc", s.per_component_auc},
                         {"explained_variance", s.explained_variance},
                         {"n_prompts", s.n_prompts},
                         {"n_images", s.n_images}});
      }
      json j = {{"version", 1},
                {"kind", "modality_gap"},
                {"pairs", std::move(pairs)},
                {"metadata", metadata_json(r.metadata)}};
      return j.dump(2) + "\n";
    }
    case report::Format::markdown: {
      std::string s = "## Prompt vs image embedding separation along principal components\n\n";
      s += "| Text encoder | Image encoder | PC1 AUC | PC1 threshold accuracy | prompts | images |\n";
      s += "|---|---|---|---|---|---|\n";
      for (const auto& g : r.gaps) {
        s += "| " + g.text_encoder + " | " + g.image_encoder + " | " +
             fmt("%.4f", g.separation.pc1_auc) + " | " +
             fmt("%.4f", g.separation.pc1_threshold_accuracy) + " | " +
             std::to_string(g.separation.n_prompts) + " | " + std::to_string(g.separation.n_images) +
             " |\n";
      }
      return s;
    }
    case report::Format::csv: {
      std::string s = csv::join_row({"text_encoder", "image_encoder", "component", "auc",
                                     "explained_variance"}) +
                      "\n";
      for (const auto& g : r.gaps) {
        for (std::size_t c = 0; c < g.separation.per_component_auc.size(); ++c) {
          s += csv::join_row({g.text_encoder, g.image_encoder, std::to_string(c + 1),
                              exact(g.separation.per_component_auc[c]),
                              exact(g.separation.explained_variance[c])}) +
               "\n";
        }
      }
      return s;
    }
  }
  return {};
}

}  // namespace

std::string render_result(const RunResult& result, report::Format format) {
  if (result.table) return report::render(*result.table, format);
  if (result.modifiers) return render_modifiers(result, format);
  return render_gaps(result, format);
}

void write_outputs(const RunResult& result, const fs::path& out_dir, double elapsed_ms) {
  std::error_code ec;
  fs::create_directories(out_dir / "heads", ec);
  if (ec) fail(ErrorCode::io, "cannot create output directory " + out_dir.string() + ": " + ec.message());

  const std::string report_json = render_result(result, report::Format::json);
  write_file_atomic(out_dir / "report.json", report_json);
  write_file_atomic(out_dir / "report.md", render_result(result, report::Format::markdown));
  write_file_atomic(out_dir / "report.csv", render_result(result, report::Format::csv));

  json heads = json::array();
  for (const auto& [stem, head] : result.heads) {
    probe::save_head(head, out_dir / "heads" / (stem + ".json"));
    heads.push_back("heads/" + stem + ".json");
  }
  json manifest = {{"kind", to_string(result.kind)},
                   {"split_seed", result.metadata.split_seed},
                   {"lambda", result.metadata.lambda},
                   {"input_hashes", result.metadata.input_hashes},
                   {"report_sha256", sha256_hex(report_json)},
                   {"heads", std::move(heads)},
                   {"timings_ms", {{"total", elapsed_ms}}}};
  write_file_atomic(out_dir / "run_manifest.json", manifest.dump(2) + "\n");
}

}  // namespace ppp::experiments
