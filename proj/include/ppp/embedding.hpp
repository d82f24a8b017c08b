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

#include <Eigen/Dense>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ppp::embedding {

enum class Modality { text, image };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view name);

/// Dense matrix of float32 embeddings keyed by prompt or image identifier.
///
/// On disk a store is a directory holding `manifest.json` and `matrix.f32`
/// (row-major little-endian binary32, no header). The manifest records a
/// SHA-256 of the matrix bytes, checked on load.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  EmbeddingStore(std::string encoder_id, std::size_t dim, Modality modality);

  const std::string& encoder_id() const { return encoder_id_; }
  std::size_t dim() const { return dim_; }
  Modality modality() const { return modality_; }
  std::size_t rows() const { return keys_.size(); }

  /// Keys in row order.
  const std::vector<std::string>& keys() const { return keys_; }
  const std::vector<float>& matrix() const { return matrix_; }

  /// Appends a row. Throws on duplicate key, wrong length or non-finite value.
  void add(std::string key, std::span<const float> row);
  void add(std::string key, std::span<const double> row);

  bool contains(const std::string& key) const { return index_.contains(key); }
  std::optional<std::size_t> find(const std::string& key) const;
  std::span<const float> row(std::size_t i) const;

  /// Row for `key` widened to double. Throws not_found naming the key.
  std::vector<double> get(const std::string& key) const;

  /// Rows for `keys` stacked in order. A missing key fails with a message
  /// listing up to ten of the missing keys.
  Eigen::MatrixXd gather(std::span<const std::string> keys) const;

  std::string content_hash() const;

 private:
  std::string encoder_id_;
  std::size_t dim_ = 0;
  Modality modality_ = Modality::text;
  std::vector<std::string> keys_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<float> matrix_;
};

EmbeddingStore load_store(const std::filesystem::path& dir);

/// Writes into a sibling temp directory, then swaps it into place.
void write_store(const EmbeddingStore& store, const std::filesystem::path& dir);

std::vector<double> get(const EmbeddingStore& store, const std::string& key);

struct ProviderConfig {
  std::string endpoint;  // e.g. http://127.0.0.1:9000/embed
  std::string encoder_id;
  std::size_t batch_size = 64;
  std::chrono::milliseconds timeout{30000};
  int retries = 2;  // extra attempts after the first on transport/5xx failure
  std::optional<std::filesystem::path> cache_dir;
};

/// Something that turns texts into vectors. Implementations must return one
/// row per input text, in input order.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<std::vector<double>> embed(const std::string& encoder_id,
                                                 std::span<const std::string> texts) = 0;
};

/// JSON-over-HTTP client:
///   POST {"encoder_id": str, "texts": [str, ...]}
///   200  {"dim": int, "embeddings": [[number, ...], ...]}
class HttpProvider final : public EmbeddingProvider {
 public:
  explicit HttpProvider(ProviderConfig config);
  std::vector<std::vector<double>> embed(const std::string& encoder_id,
                                         std::span<const std::string> texts) override;

 private:
  ProviderConfig config_;
  std::string base_;  // scheme://host[:port]
  std::string path_;
};

/// Provider front end with an in-memory cache and an optional on-disk cache
/// (an EmbeddingStore under cache_dir). Provider output is rounded to float32
/// before it is cached or returned, so warm and cold lookups agree bit for
/// bit. Safe for concurrent use.
class CachedEmbedder {
 public:
  CachedEmbedder(ProviderConfig config, std::shared_ptr<EmbeddingProvider> provider);
  /// Uses an HttpProvider built from `config`.
  explicit CachedEmbedder(ProviderConfig config);

  /// One row per text, duplicates allowed. Only cache misses reach the
  /// provider, in batches of config.batch_size.
  Eigen::MatrixXd embed(std::span<const std::string> texts);

  /// Embeds without consulting or filling the cache.
  Eigen::MatrixXd embed_uncached(std::span<const std::string> texts);

  const ProviderConfig& config() const { return config_; }
  /// 0 until the first row is known.
  std::size_t dim() const;

 private:
  std::vector<std::vector<float>> request(std::span<const std::string> texts);
  void commit_to_disk(const std::vector<std::string>& keys,
                      const std::vector<std::vector<float>>& rows);
  std::filesystem::path cache_store_dir() const;

  ProviderConfig config_;
  std::shared_ptr<EmbeddingProvider> provider_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, std::vector<float>> memory_;
  std::size_t dim_ = 0;
};

/// Embeds distinct `texts` into a text-modality store whose keys are the
/// texts themselves.
EmbeddingStore fetch_remote(std::span<const std::string> texts, const ProviderConfig& config);
EmbeddingStore fetch_remote(std::span<const std::string> texts, const ProviderConfig& config,
                            std::shared_ptr<EmbeddingProvider> provider);

}  // namespace ppp::embedding
