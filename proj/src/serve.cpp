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

#include "ppp/serve.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "httplib.h"
#include "json.hpp"
#include "ppp/hash.hpp"

namespace ppp::serve {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  for (std::string w; in >> w;) words.push_back(std::move(w));
  return words;
}

std::string join_without(const std::vector<std::string>& words, std::size_t skip) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i == skip) continue;
    if (!out.empty()) out.push_back(' ');
    out += words[i];
  }
  return out;
}

// Reported scores live on a 2^-40 grid. Below 2^12 in magnitude the
// difference of two grid values is exact, and so is full - delta.
double on_grid(double x) { return std::ldexp(std::nearbyint(std::ldexp(x, 40)), -40); }

// Nudges d so that full - d reproduces `without` bit for bit.
double consistent_delta(double full, double without) {
  double d = full - without;
  for (int step = 0; step < 64 && full - d != without; ++step) {
    d = std::nextafter(d, full - d > without ? HUGE_VAL : -HUGE_VAL);
  }
  return d;
}

class InFlight {
 public:
  explicit InFlight(std::counting_semaphore<1 << 20>& s) : s_(s) { s_.acquire(); }
  ~InFlight() { s_.release(); }

 private:
  std::counting_semaphore<1 << 20>& s_;
};

}  // namespace

// ---------------------------------------------------------------------------

ModelRegistry::ModelRegistry(std::vector<probe::LinearHead> heads) {
  std::map<std::string, Eigen::Index> dims;
  for (auto& h : heads) {
    auto key = std::make_pair(h.encoder_id, h.metric);
    if (heads_.contains(key)) {
      fail(ErrorCode::invalid_argument, "registry: duplicate head for encoder '" + h.encoder_id +
                                            "', metric '" + h.metric + "'");
    }
    auto [it, fresh] = dims.emplace(h.encoder_id, h.dim());
    if (!fresh && it->second != h.dim()) {
      fail(ErrorCode::invalid_argument, "registry: encoder '" + h.encoder_id +
                                            "' has heads of dim " + std::to_string(it->second) +
                                            " and " + std::to_string(h.dim()));
    }
    std::string id = h.encoder_id + "/" + h.metric + "@" + sha256_hex(probe::head_to_json(h)).substr(0, 12);
    heads_.emplace(std::move(key), Entry{std::move(h), std::move(id)});
  }
}

ModelRegistry ModelRegistry::load(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorCode::not_found, "registry directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<probe::LinearHead> heads;
  for (const auto& f : files) heads.push_back(probe::load_head(f));
  return ModelRegistry(std::move(heads));
}

const probe::LinearHead* ModelRegistry::find(const std::string& encoder_id,
                                             const std::string& metric) const {
  auto it = heads_.find({encoder_id, metric});
  return it == heads_.end() ? nullptr : &it->second.head;
}

const std::string& ModelRegistry::head_id(const std::string& encoder_id,
                                          const std::string& metric) const {
  auto it = heads_.find({encoder_id, metric});
  if (it == heads_.end()) fail(ErrorCode::not_found, "no head for " + encoder_id + "/" + metric);
  return it->second.head_id;
}

std::vector<std::string> ModelRegistry::encoders() const {
  std::vector<std::string> out;
  for (const auto& [key, _] : heads_) {
    if (out.empty() || out.back() != key.first) out.push_back(key.first);
  }
  return out;
}

std::vector<std::string> ModelRegistry::metrics_for(const std::string& encoder_id) const {
  std::vector<std::string> out;
  for (const auto& [key, _] : heads_) {
    if (key.first == encoder_id) out.push_back(key.second);
  }
  return out;
}

std::vector<HeadInfo> ModelRegistry::list() const {
  std::vector<HeadInfo> out;
  for (const auto& [key, e] : heads_) {
    HeadInfo info;
    info.encoder_id = key.first;
    info.metric = key.second;
    info.dim = static_cast<std::size_t>(e.head.dim());
    info.lambda = e.head.lambda;
    if (e.head.validation) info.validation_rmse = e.head.validation->rmse;
    info.head_id = e.head_id;
    out.push_back(std::move(info));
  }
  return out;
}

// ---------------------------------------------------------------------------

ServiceConfig parse_service_config(std::string_view json_text, const fs::path& base_dir) {
  ServiceConfig cfg;
  try {
    const json j = json::parse(json_text);
    for (const auto& [key, _] : j.items()) {
      static const std::set<std::string> allowed{"registry_dir", "providers", "default_encoder",
                                                 "host", "port", "max_in_flight"};
      if (!allowed.contains(key)) fail(ErrorCode::parse, "service config: unknown key '" + key + "'");
    }
    cfg.registry_dir = resolve(base_dir, j.at("registry_dir").get<std::string>());
    cfg.default_encoder = j.value("default_encoder", std::string());
    cfg.host = j.value("host", cfg.host);
    cfg.port = j.value("port", cfg.port);
    cfg.max_in_flight = j.value("max_in_flight", cfg.max_in_flight);
    if (j.contains("providers")) {
      for (const auto& [encoder, p] : j["providers"].items()) {
        embedding::ProviderConfig pc;
        pc.encoder_id = encoder;
        pc.endpoint = p.at("endpoint").get<std::string>();
        pc.batch_size = p.value("batch_size", pc.batch_size);
        pc.timeout = std::chrono::milliseconds(p.value("timeout_ms", 30000L));
        pc.retries = p.value("retries", pc.retries);
        if (p.contains("cache_dir")) pc.cache_dir = resolve(base_dir, p["cache_dir"].get<std::string>());
        cfg.providers.emplace(encoder, std::move(pc));
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("service config: ") + e.what());
  }
  if (cfg.max_in_flight == 0) fail(ErrorCode::invalid_argument, "service config: max_in_flight must be positive");
  if (cfg.port < 0 || cfg.port > 65535) fail(ErrorCode::invalid_argument, "service config: bad port");
  return cfg;
}

ServiceConfig load_service_config(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::not_found, "service config not found: " + path.string());
  return parse_service_config(read_file(path), path.parent_path());
}

// ---------------------------------------------------------------------------

std::string to_json(const ScoreResponse& r) {
  json scores = json::object();
  for (const auto& [metric, s] : r.scores) {
    json m = {{"prediction", s.prediction}, {"head_id", s.head_id}};
    if (s.ci) m["ci"] = {(*s.ci)[0], (*s.ci)[1]};
    scores[metric] = std::move(m);
  }
  json j = {{"prompt", r.prompt},
            {"encoder_id", r.encoder_id},
            {"latency_ms", r.latency_ms},
            {"scores", std::move(scores)}};
  return j.dump();
}

std::string to_json(const ExplainResponse& r) {
  json tokens = json::array();
  for (const auto& t : r.tokens) tokens.push_back({{"span", t.span}, {"delta", t.delta}});
  return json{{"full_score", r.full_score}, {"tokens", std::move(tokens)}}.dump();
}

std::string to_json(const std::vector<HeadInfo>& models) {
  json list = json::array();
  for (const auto& m : models) {
    list.push_back({{"encoder_id", m.encoder_id},
                    {"metric", m.metric},
                    {"dim", m.dim},
                    {"lambda", m.lambda},
                    {"validation_rmse", m.validation_rmse ? json(*m.validation_rmse) : json(nullptr)},
                    {"head_id", m.head_id}});
  }
  return json{{"models", std::move(list)}}.dump();
}

// ---------------------------------------------------------------------------

PromptService::PromptService(
    ModelRegistry registry,
    std::map<std::string, std::shared_ptr<embedding::CachedEmbedder>> embedders,
    std::string default_encoder, std::size_t max_in_flight)
    : registry_(std::move(registry)),
      embedders_(std::move(embedders)),
      default_encoder_(std::move(default_encoder)),
      in_flight_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, max_in_flight))) {
  for (const auto& enc : registry_.encoders()) {
    if (!embedders_.contains(enc)) {
      fail(ErrorCode::invalid_argument, "service: no provider configured for encoder '" + enc + "'");
    }
  }
  if (default_encoder_.empty()) {
    const auto encs = registry_.encoders();
    if (encs.size() == 1) default_encoder_ = encs.front();
  } else if (!embedders_.contains(default_encoder_)) {
    fail(ErrorCode::invalid_argument, "service: default encoder '" + default_encoder_ +
                                          "' has no provider");
  }
}

std::unique_ptr<PromptService> PromptService::from_config(const ServiceConfig& config) {
  ModelRegistry registry = ModelRegistry::load(config.registry_dir);
  std::map<std::string, std::shared_ptr<embedding::CachedEmbedder>> embedders;
  for (const auto& [encoder, pc] : config.providers) {
    embedders.emplace(encoder, std::make_shared<embedding::CachedEmbedder>(pc));
  }
  return std::make_unique<PromptService>(std::move(registry), std::move(embedders),
                                         config.default_encoder, config.max_in_flight);
}

const std::string& PromptService::resolve_encoder(const std::optional<std::string>& encoder_id) const {
  const std::string& enc = encoder_id ? *encoder_id : default_encoder_;
  if (enc.empty()) fail(ErrorCode::invalid_argument, "encoder_id required: no default encoder configured");
  if (registry_.metrics_for(enc).empty()) fail(ErrorCode::not_found, "unknown encoder '" + enc + "'");
  return enc;
}

Eigen::MatrixXd PromptService::embed(const std::string& encoder_id,
                                     std::span<const std::string> texts) const {
  auto it = embedders_.find(encoder_id);
  if (it == embedders_.end()) fail(ErrorCode::not_found, "no provider for encoder '" + encoder_id + "'");
  InFlight guard(in_flight_);
  Eigen::MatrixXd X = it->second->embed(texts);
  const auto metrics = registry_.metrics_for(encoder_id);
  const Eigen::Index dim = registry_.find(encoder_id, metrics.front())->dim();
  if (X.cols() != dim) {
    fail(ErrorCode::provider, "provider for '" + encoder_id + "' returned dim " +
                                  std::to_string(X.cols()) + ", heads expect " + std::to_string(dim));
  }
  return X;
}

ScoreResponse PromptService::score(const std::string& prompt, const std::vector<std::string>& metrics,
                                   const std::optional<std::string>& encoder_id) const {
  const auto start = std::chrono::steady_clock::now();
  if (split_words(prompt).empty()) fail(ErrorCode::invalid_argument, "prompt is empty");
  const std::string& enc = resolve_encoder(encoder_id);
  std::vector<std::string> wanted = metrics.empty() ? registry_.metrics_for(enc) : metrics;
  for (const auto& m : wanted) {
    if (!registry_.find(enc, m)) fail(ErrorCode::not_found, "unknown metric '" + m + "' for encoder '" + enc + "'");
  }
  const std::string texts[1] = {prompt};
  const Eigen::MatrixXd X = embed(enc, texts);

  ScoreResponse out;
  out.prompt = prompt;
  out.encoder_id = enc;
  for (const auto& m : wanted) {
    const probe::LinearHead& head = *registry_.find(enc, m);
    MetricScore s;
    s.prediction = on_grid(probe::predict(head, X)(0));
    if (head.validation) {
      s.ci = std::array<double, 2>{s.prediction + head.validation->residual_interval[0],
                                   s.prediction + head.validation->residual_interval[1]};
    }
    s.head_id = registry_.head_id(enc, m);
    out.scores[m] = std::move(s);
  }
  out.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

ExplainResponse PromptService::explain(const std::string& prompt, const std::string& metric,
                                       const std::optional<std::string>& encoder_id) const {
  const std::vector<std::string> words = split_words(prompt);
  if (words.empty()) fail(ErrorCode::invalid_argument, "prompt is empty");
  if (words.size() < 2) fail(ErrorCode::invalid_argument, "nothing to ablate: prompt has a single word");
  const std::string& enc = resolve_encoder(encoder_id);
  const probe::LinearHead* head = registry_.find(enc, metric);
  if (!head) fail(ErrorCode::not_found, "unknown metric '" + metric + "' for encoder '" + enc + "'");

  std::vector<std::string> texts{prompt};
  for (std::size_t i = 0; i < words.size(); ++i) texts.push_back(join_without(words, i));
  const Eigen::VectorXd scores = probe::predict(*head, embed(enc, texts));

  ExplainResponse out;
  out.full_score = on_grid(scores(0));
  for (std::size_t i = 0; i < words.size(); ++i) {
    out.tokens.push_back({words[i], consistent_delta(out.full_score, on_grid(scores(static_cast<Eigen::Index>(i + 1))))});
  }
  return out;
}

std::optional<std::string> PromptService::health() const {
  for (const auto& [encoder, embedder] : embedders_) {
    try {
      const std::string probe_text[1] = {"healthz"};
      InFlight guard(in_flight_);
      embedder->embed_uncached(probe_text);
    } catch (const std::exception& e) {
      return "provider for '" + encoder + "' failed: " + e.what();
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument:
    case ErrorCode::parse: return 400;
    case ErrorCode::not_found: return 404;
    case ErrorCode::provider: return 502;
    case ErrorCode::degenerate: return 422;
    case ErrorCode::io: return 500;
  }
  return 500;
}

struct HttpServer::Impl {
  const PromptService& service;
  std::string host;
  int port;
  httplib::Server server;

  Impl(const PromptService& s, std::string h, int p) : service(s), host(std::move(h)), port(p) {}
};

namespace {

void send_error(httplib::Response& res, int status, ErrorCode code, const std::string& message) {
  json body = {{"error", {{"code", to_string(code)}, {"message", message}}}};
  if (code == ErrorCode::provider) {
    body["error"]["retry"] = "the embedding provider failed; retry the request shortly";
  }
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename Fn>
void guarded(httplib::Response& res, Fn fn) {
  try {
    fn();
  } catch (const Error& e) {
    send_error(res, http_status(e.code()), e.code(), e.what());
  } catch (const json::exception& e) {
    send_error(res, 400, ErrorCode::parse, std::string("invalid request body: ") + e.what());
  } catch (const std::exception& e) {
    res.status = 500;
    res.set_content(json{{"error", {{"code", "internal"}, {"message", e.what()}}}}.dump(),
                    "application/json");
  }
}

json parse_body(const httplib::Request& req) {
  json body = json::parse(req.body);
  if (!body.is_object()) fail(ErrorCode::parse, "request body must be a JSON object");
  if (!body.contains("prompt") || !body["prompt"].is_string()) {
    fail(ErrorCode::invalid_argument, "'prompt' must be a string");
  }
  return body;
}

std::optional<std::string> optional_encoder(const json& body) {
  if (!body.contains("encoder_id") || body["encoder_id"].is_null()) return std::nullopt;
  return body["encoder_id"].get<std::string>();
}

}  // namespace

HttpServer::HttpServer(const PromptService& service, std::string host, int port)
    : impl_(std::make_unique<Impl>(service, std::move(host), port)) {
  auto& srv = impl_->server;
  const PromptService& svc = service;

  srv.Post("/v1/score", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = parse_body(req);
      std::vector<std::string> metrics;
      if (body.contains("metrics") && !body["metrics"].is_null()) {
        metrics = body["metrics"].get<std::vector<std::string>>();
      }
      res.set_content(to_json(svc.score(body["prompt"].get<std::string>(), metrics,
                                        optional_encoder(body))),
                      "application/json");
    });
  });
  srv.Post("/v1/explain", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = parse_body(req);
      if (!body.contains("metric") || !body["metric"].is_string()) {
        fail(ErrorCode::invalid_argument, "'metric' must be a string");
      }
      res.set_content(to_json(svc.explain(body["prompt"].get<std::string>(),
                                          body["metric"].get<std::string>(), optional_encoder(body))),
                      "application/json");
    });
  });
  srv.Get("/v1/models", [&svc](const httplib::Request&, httplib::Response& res) {
    res.set_content(to_json(svc.list_models()), "application/json");
  });
  srv.Get("/healthz", [&svc](const httplib::Request&, httplib::Response& res) {
    if (auto problem = svc.health()) {
      res.status = 503;
      res.set_content(json{{"status", "unavailable"}, {"error", *problem}}.dump(), "application/json");
      return;
    }
    res.set_content(json{{"status", "ok"}, {"heads", svc.registry().size()}}.dump(), "application/json");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  if (impl_->port == 0) {
    const int port = impl_->server.bind_to_any_port(impl_->host);
    if (port < 0) fail(ErrorCode::io, "cannot bind " + impl_->host);
    impl_->port = port;
  } else if (!impl_->server.bind_to_port(impl_->host, impl_->port)) {
    fail(ErrorCode::io, "cannot bind " + impl_->host + ":" + std::to_string(impl_->port));
  }
  return impl_->port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace ppp::serve
