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

#include "ppp/cli.hpp"

#include <chrono>
#include <fstream>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "ppp/embedding.hpp"
#include "ppp/error.hpp"
#include "ppp/experiments.hpp"
#include "ppp/hash.hpp"
#include "ppp/ingest.hpp"
#include "ppp/report.hpp"
#include "ppp/serve.hpp"

namespace ppp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::string format = "md";
};

void add_common(CLI::App* sub, CommonFlags& f, bool config_required) {
  auto* c = sub->add_option("--config", f.config, "Experiment or service config (JSON)");
  if (config_required) c->required();
  sub->add_option("--out", f.out, "Output directory (overrides output_dir)");
  sub->add_option("--seed", f.seed, "Split seed (overrides split.seed)");
  sub->add_option("--jobs", f.jobs, "Worker threads for grid cells")->check(CLI::PositiveNumber);
  sub->add_option("--format", f.format, "Format printed to stdout")
      ->check(CLI::IsMember({"md", "csv", "json"}));
}

int run_experiment(experiments::Kind kind, const CommonFlags& f, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  experiments::ExperimentConfig cfg = experiments::load_config(f.config);
  cfg.kind = kind;
  if (!f.out.empty()) cfg.output_dir = f.out;
  if (f.seed) cfg.split_seed = *f.seed;
  if (f.jobs) cfg.jobs = *f.jobs;
  const experiments::RunResult result = experiments::run(cfg);
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  experiments::write_outputs(result, cfg.output_dir, ms);
  out << experiments::render_result(result, report::parse_format(f.format));
  return kExitOk;
}

struct IngestFlags {
  std::string input;
  std::string input_format;
  std::vector<double> ratios{0.8, 0.1, 0.1};
};

int run_ingest(const CommonFlags& f, const IngestFlags& g, std::ostream& out) {
  if (f.out.empty()) fail(ErrorCode::invalid_argument, "ingest: --out is required");
  if (g.ratios.size() != 3) fail(ErrorCode::invalid_argument, "ingest: --ratios takes three values");
  const auto records = g.input_format.empty()
                           ? ingest::load_records(g.input)
                           : ingest::load_records(g.input, ingest::parse_format(g.input_format));
  const auto groups = ingest::aggregate(records);
  const auto stats = ingest::dataset_stats(groups, records);
  const fs::path dir(f.out);
  fs::create_directories(dir);

  std::string lines;
  for (const auto& grp : groups) {
    json j = {{"prompt_key", grp.prompt_key},
              {"prompt_text", grp.prompt_text},
              {"image_count", grp.image_count},
              {"metric_means", grp.metric_means},
              {"metric_stddevs", grp.metric_stddevs},
              {"metric_counts", grp.metric_counts},
              {"modifier_count", grp.modifier_count},
              {"partial", grp.partial}};
    lines += j.dump() + "\n";
  }
  write_file_atomic(dir / "groups.jsonl", lines);
  json s = {{"total_images", stats.total_images},
            {"total_prompt_occurrences", stats.total_prompt_occurrences},
            {"unique_prompts", stats.unique_prompts},
            {"fraction_zero_modifier_prompts", stats.fraction_zero_modifier_prompts},
            {"input_sha256", sha256_file(g.input)}};
  write_file_atomic(dir / "stats.json", s.dump(2) + "\n");
  if (groups.size() >= 3) {
    const auto sp = ingest::split(groups, {g.ratios[0], g.ratios[1], g.ratios[2]}, f.seed.value_or(0));
    write_file_atomic(dir / "split.json", ingest::split_to_json(sp));
  }
  out << s.dump(2) << "\n";
  return kExitOk;
}

struct EmbedFlags {
  std::string input;
  std::string texts;
  std::string endpoint;
  std::string encoder_id;
  std::string key = "prompt_key";
  std::string modality = "text";
  std::size_t batch_size = 64;
  std::string cache_dir;
};

int run_embed(const CommonFlags& f, const EmbedFlags& e, std::ostream& out) {
  if (f.out.empty()) fail(ErrorCode::invalid_argument, "embed: --out is required");
  if (e.input.empty() == e.texts.empty()) {
    fail(ErrorCode::invalid_argument, "embed: give exactly one of --input or --texts");
  }
  std::set<std::string> unique;
  if (!e.input.empty()) {
    for (const auto& r : ingest::load_records(e.input)) {
      unique.insert(e.key == "image_id" ? r.image_id : ingest::normalize_prompt(r.prompt_raw));
    }
  } else {
    std::ifstream in(e.texts);
    if (!in) fail(ErrorCode::not_found, "cannot open texts file: " + e.texts);
    for (std::string line; std::getline(in, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) unique.insert(line);
    }
  }
  const std::vector<std::string> keys(unique.begin(), unique.end());
  embedding::ProviderConfig pc;
  pc.endpoint = e.endpoint;
  pc.encoder_id = e.encoder_id;
  pc.batch_size = e.batch_size;
  if (!e.cache_dir.empty()) pc.cache_dir = e.cache_dir;
  embedding::EmbeddingStore fetched = embedding::fetch_remote(keys, pc);
  embedding::EmbeddingStore store(e.encoder_id, fetched.dim(), embedding::parse_modality(e.modality));
  for (std::size_t i = 0; i < fetched.rows(); ++i) store.add(fetched.keys()[i], fetched.row(i));
  embedding::write_store(store, f.out);
  out << "wrote " << store.rows() << " x " << store.dim() << " embeddings to " << f.out << "\n";
  return kExitOk;
}

int run_serve(const CommonFlags& f, const std::string& host, std::optional<int> port, std::ostream& out) {
  serve::ServiceConfig cfg = serve::load_service_config(f.config);
  if (!host.empty()) cfg.host = host;
  if (port) cfg.port = *port;
  auto service = serve::PromptService::from_config(cfg);
  serve::HttpServer server(*service, cfg.host, cfg.port);
  const int bound = server.bind();
  out << "serving " << service->registry().size() << " head(s) on " << cfg.host << ":" << bound
      << std::endl;
  server.listen();
  return kExitOk;
}

int run_report(const CommonFlags& f, const std::string& input, std::ostream& out) {
  const report::ReportTable table = report::from_json(read_file(input));
  const report::Format format = report::parse_format(f.format);
  const std::string text = report::render(table, format);
  if (f.out.empty()) {
    out << text;
  } else {
    fs::create_directories(f.out);
    write_file_atomic(fs::path(f.out) / ("report." + std::string(report::extension(format))), text);
  }
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ppp: prompt performance prediction toolkit"};
  app.name("ppp");
  app.require_subcommand(1, 1);

  CommonFlags flags;
  IngestFlags ingest_flags;
  EmbedFlags embed_flags;
  std::string serve_host;
  std::optional<int> serve_port;
  std::string report_input;

  auto* ingest_cmd = app.add_subcommand("ingest", "Aggregate image records into prompt groups");
  add_common(ingest_cmd, flags, false);
  ingest_cmd->add_option("--input", ingest_flags.input, "Dataset (.jsonl or .csv)")->required();
  ingest_cmd->add_option("--input-format", ingest_flags.input_format, "jsonl or csv");
  ingest_cmd->add_option("--ratios", ingest_flags.ratios, "train validation test")->expected(3);

  auto* embed_cmd = app.add_subcommand("embed", "Fetch embeddings from a provider into a store");
  add_common(embed_cmd, flags, false);
  embed_cmd->add_option("--input", embed_flags.input, "Dataset whose keys to embed");
  embed_cmd->add_option("--texts", embed_flags.texts, "File with one text per line");
  embed_cmd->add_option("--endpoint", embed_flags.endpoint, "Provider URL")->required();
  embed_cmd->add_option("--encoder-id", embed_flags.encoder_id, "Encoder id")->required();
  embed_cmd->add_option("--key", embed_flags.key, "prompt_key or image_id")
      ->check(CLI::IsMember({"prompt_key", "image_id"}));
  embed_cmd->add_option("--modality", embed_flags.modality, "text or image")
      ->check(CLI::IsMember({"text", "image"}));
  embed_cmd->add_option("--batch-size", embed_flags.batch_size)->check(CLI::PositiveNumber);
  embed_cmd->add_option("--cache-dir", embed_flags.cache_dir);

  struct ExperimentCmd {
    const char* name;
    const char* help;
    experiments::Kind kind;
  };
  const ExperimentCmd experiment_cmds[] = {
      {"train", "Fit probe heads (same outputs as grid)", experiments::Kind::probe_grid},
      {"grid", "Encoder x metric correlation grid", experiments::Kind::probe_grid},
      {"transfer", "Image-head transfer onto prompt embeddings", experiments::Kind::transfer},
      {"gap", "Prompt vs image embedding separation", experiments::Kind::modality_gap},
      {"matrix", "Correlation matrix between metrics", experiments::Kind::metric_matrix},
      {"modifiers", "Levene test by modifier presence", experiments::Kind::modifier_variance},
      {"paintings", "Prompt-part ablation on paintings", experiments::Kind::paintings_ablation},
  };
  std::vector<std::pair<CLI::App*, experiments::Kind>> experiment_apps;
  for (const auto& c : experiment_cmds) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, flags, true);
    experiment_apps.emplace_back(sub, c.kind);
  }

  auto* serve_cmd = app.add_subcommand("serve", "Run the scoring HTTP service");
  add_common(serve_cmd, flags, true);
  serve_cmd->add_option("--host", serve_host, "Bind address (overrides host)");
  serve_cmd->add_option("--port", serve_port, "Port (overrides port)");

  auto* report_cmd = app.add_subcommand("report", "Re-render a report.json");
  add_common(report_cmd, flags, false);
  report_cmd->add_option("--input", report_input, "report.json to render")->required();

  std::vector<const char*> argv{"ppp"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "ppp: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (ingest_cmd->parsed()) return run_ingest(flags, ingest_flags, out);
    if (embed_cmd->parsed()) return run_embed(flags, embed_flags, out);
    if (serve_cmd->parsed()) return run_serve(flags, serve_host, serve_port, out);
    if (report_cmd->parsed()) return run_report(flags, report_input, out);
    for (const auto& [sub, kind] : experiment_apps) {
      if (sub->parsed()) return run_experiment(kind, flags, out);
    }
  } catch (const Error& e) {
    err << "ppp: error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return kExitDomainError;
  } catch (const std::exception& e) {
    err << "ppp: error: " << e.what() << "\n";
    return kExitDomainError;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace ppp::cli
