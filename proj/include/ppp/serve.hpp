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

#pragma once

#include <array>
#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <utility>
#include <vector>

#include "ppp/embedding.hpp"
#include "ppp/error.hpp"
#include "ppp/probe.hpp"

namespace ppp::serve {

struct HeadInfo {
  std::string encoder_id;
  std::string metric;
  std::size_t dim = 0;
  double lambda = 0.0;
  std::optional<double> validation_rmse;
  std::string head_id;
};

/// Immutable map (encoder_id, metric) -> head.
class ModelRegistry {
 public:
  ModelRegistry() = default;
  /// Throws on duplicate (encoder_id, metric) or mixed dims per encoder.
  explicit ModelRegistry(std::vector<probe::LinearHead> heads);

  /// Loads every *.json head in `dir`.
  static ModelRegistry load(const std::filesystem::path& dir);

  const probe::LinearHead* find(const std::string& encoder_id, const std::string& metric) const;
  const std::string& head_id(const std::string& encoder_id, const std::string& metric) const;
  std::vector<std::string> encoders() const;
  std::vector<std::string> metrics_for(const std::string& encoder_id) const;
  /// Sorted by (encoder_id, metric).
  std::vector<HeadInfo> list() const;
  std::size_t size() const { return heads_.size(); }

 private:
  struct Entry {
    probe::LinearHead head;
    std::string head_id;
  };
  std::map<std::pair<std::string, std::string>, Entry> heads_;
};

struct ServiceConfig {
  std::filesystem::path registry_dir;
  std::map<std::string, embedding::ProviderConfig> providers;  // per encoder_id
  std::string default_encoder;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t max_in_flight = 8;
};

/// Relative paths resolve against `base_dir`.
ServiceConfig parse_service_config(std::string_view json_text,
                                   const std::filesystem::path& base_dir);
ServiceConfig load_service_config(const std::filesystem::path& path);

struct MetricScore {
  double prediction = 0.0;
  std::optional<std::array<double, 2>> ci;
  std::string head_id;
};

struct ScoreResponse {
  std::string prompt;
  std::string encoder_id;
  double latency_ms = 0.0;
  std::map<std::string, MetricScore> scores;
};

struct TokenDelta {
  std::string span;
  double delta = 0.0;
};

struct ExplainResponse {
  double full_score = 0.0;
  std::vector<TokenDelta> tokens;
};

std::string to_json(const ScoreResponse& r);
std::string to_json(const ExplainResponse& r);
std::string to_json(const std::vector<HeadInfo>& models);

/// Request handling without the transport. Thread-safe.
class PromptService {
 public:
  PromptService(ModelRegistry registry,
                std::map<std::string, std::shared_ptr<embedding::CachedEmbedder>> embedders,
                std::string default_encoder, std::size_t max_in_flight = 8);

  static std::unique_ptr<PromptService> from_config(const ServiceConfig& config);

  /// Empty `metrics` means every metric of the encoder.
  ScoreResponse score(const std::string& prompt, const std::vector<std::string>& metrics,
                      const std::optional<std::string>& encoder_id) const;

  /// Leave-one-word-out over whitespace-delimited words.
  ExplainResponse explain(const std::string& prompt, const std::string& metric,
                          const std::optional<std::string>& encoder_id) const;

  std::vector<HeadInfo> list_models() const { return registry_.list(); }

  /// Embeds a probe text through every provider, bypassing caches. Returns
  /// an error description, or nullopt when healthy.
  std::optional<std::string> health() const;

  const ModelRegistry& registry() const { return registry_; }

 private:
  const std::string& resolve_encoder(const std::optional<std::string>& encoder_id) const;
  Eigen::MatrixXd embed(const std::string& encoder_id, std::span<const std::string> texts) const;

  ModelRegistry registry_;
  std::map<std::string, std::shared_ptr<embedding::CachedEmbedder>> embedders_;
  std::string default_encoder_;
  mutable std::counting_semaphore<1 << 20> in_flight_;
};

/// 400 bad input, 404 unknown encoder/metric, 502 provider failure.
int http_status(ErrorCode code);

/// HTTP transport for PromptService.
class HttpServer {
 public:
  HttpServer(const PromptService& service, std::string host, int port);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds the socket; returns the bound port (useful with port 0).
  int bind();
  /// Serves until stop(); call after bind().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ppp::serve
