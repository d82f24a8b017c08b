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

// Eigen must precede httplib: <resolv.h> defines a _res macro.
#include "ppp/embedding.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cctype>
#include <cmath>
#include <mutex>
#include <thread>
#include <unordered_set>

#include "httplib.h"
#include "json.hpp"
#include "ppp/error.hpp"

namespace ppp::embedding {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Splits "http://host:port/path" into ("http://host:port", "/path").
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    fail(ErrorCode::invalid_argument, "provider endpoint must be an http URL: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string describe_indices(const std::vector<std::size_t>& idx) {
  std::string out;
  for (std::size_t i = 0; i < idx.size() && i < 20; ++i) {
    if (i) out += ",";
    out += std::to_string(idx[i]);
  }
  if (idx.size() > 20) out += ",...";
  return out;
}

// Serializes cache commits across threads; flock() covers other processes.
std::mutex& commit_mutex() {
  static std::mutex m;
  return m;
}

class FileLock {
 public:
  explicit FileLock(const fs::path& path) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) fail(ErrorCode::io, "cannot open cache lock " + path.string());
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      fail(ErrorCode::io, "cannot lock " + path.string());
    }
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

std::string sanitize(const std::string& id) {
  std::string out;
  for (char c : id) {
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_');
  }
  return out.empty() ? "default" : out;
}

}  // namespace

HttpProvider::HttpProvider(ProviderConfig config) : config_(std::move(config)) {
  std::tie(base_, path_) = split_url(config_.endpoint);
}

std::vector<std::vector<double>> HttpProvider::embed(const std::string& encoder_id,
                                                     std::span<const std::string> texts) {
  const json body = {{"encoder_id", encoder_id},
                     {"texts", std::vector<std::string>(texts.begin(), texts.end())}};
  const std::string payload = body.dump();

  httplib::Client client(base_);
  const auto seconds = config_.timeout.count() / 1000;
  const auto micros = (config_.timeout.count() % 1000) * 1000;
  client.set_connection_timeout(seconds, micros);
  client.set_read_timeout(seconds, micros);
  client.set_write_timeout(seconds, micros);

  std::string last_error;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(50 << (attempt - 1)));
    auto res = client.Post(path_, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      fail(ErrorCode::provider, "provider " + config_.endpoint + " rejected request: HTTP " +
                                    std::to_string(res->status) + " " + res->body);
    }
    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::exception& e) {
      fail(ErrorCode::provider, "provider " + config_.endpoint + ": invalid JSON reply: " +
                                    e.what());
    }
    const auto dim_it = reply.find("dim");
    const auto emb_it = reply.find("embeddings");
    if (dim_it == reply.end() || !dim_it->is_number_unsigned() || emb_it == reply.end() ||
        !emb_it->is_array()) {
      fail(ErrorCode::provider, "provider " + config_.endpoint +
                                    ": reply must carry integer 'dim' and array 'embeddings'");
    }
    const auto dim = dim_it->get<std::size_t>();
    if (emb_it->size() != texts.size()) {
      fail(ErrorCode::provider, "provider " + config_.endpoint + " returned " +
                                    std::to_string(emb_it->size()) + " embeddings for " +
                                    std::to_string(texts.size()) + " texts");
    }
    std::vector<std::vector<double>> rows(texts.size());
    std::vector<std::size_t> bad;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      const json& row = (*emb_it)[i];
      if (!row.is_array() || row.size() != dim) {
        bad.push_back(i);
        continue;
      }
      rows[i].reserve(dim);
      for (const auto& v : row) {
        if (!v.is_number() || !std::isfinite(v.get<double>())) {
          bad.push_back(i);
          break;
        }
        rows[i].push_back(v.get<double>());
      }
    }
    if (!bad.empty()) {
      fail(ErrorCode::provider, "provider " + config_.endpoint +
                                    ": malformed embeddings at batch indices " +
                                    describe_indices(bad));
    }
    return rows;
  }
  fail(ErrorCode::provider, "provider " + config_.endpoint + " failed after " +
                                std::to_string(config_.retries + 1) + " attempt(s): " +
                                last_error);
}

CachedEmbedder::CachedEmbedder(ProviderConfig config, std::shared_ptr<EmbeddingProvider> provider)
    : config_(std::move(config)), provider_(std::move(provider)) {
  if (config_.batch_size == 0) fail(ErrorCode::invalid_argument, "batch_size must be >= 1");
  if (!provider_) fail(ErrorCode::invalid_argument, "CachedEmbedder needs a provider");
  if (config_.cache_dir) {
    const fs::path dir = cache_store_dir();
    if (fs::exists(dir / "manifest.json")) {
      EmbeddingStore cached = load_store(dir);
      dim_ = cached.dim();
      for (std::size_t r = 0; r < cached.rows(); ++r) {
        auto row = cached.row(r);
        memory_.emplace(cached.keys()[r], std::vector<float>(row.begin(), row.end()));
      }
    }
  }
}

CachedEmbedder::CachedEmbedder(ProviderConfig config)
    : CachedEmbedder(config, std::make_shared<HttpProvider>(config)) {}

std::size_t CachedEmbedder::dim() const {
  std::shared_lock lock(mutex_);
  return dim_;
}

fs::path CachedEmbedder::cache_store_dir() const {
  return *config_.cache_dir / sanitize(config_.encoder_id);
}

std::vector<std::vector<float>> CachedEmbedder::request(std::span<const std::string> texts) {
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  const std::size_t batch = config_.batch_size;
  for (std::size_t start = 0; start < texts.size(); start += batch) {
    const std::size_t len = std::min(batch, texts.size() - start);
    std::vector<std::vector<double>> rows;
    try {
      rows = provider_->embed(config_.encoder_id, texts.subspan(start, len));
    } catch (const Error& e) {
      fail(ErrorCode::provider, "embedding failed for input indices " + std::to_string(start) +
                                    ".." + std::to_string(start + len - 1) + ": " + e.what());
    }
    if (rows.size() != len) {
      fail(ErrorCode::provider, "provider returned " + std::to_string(rows.size()) +
                                    " rows for a batch of " + std::to_string(len) +
                                    " (input indices " + std::to_string(start) + ".." +
                                    std::to_string(start + len - 1) + ")");
    }
    std::size_t expected = dim();
    if (expected == 0) expected = out.empty() ? rows.front().size() : out.front().size();
    std::vector<std::size_t> bad;
    for (std::size_t i = 0; i < len; ++i) {
      if (rows[i].size() != expected || expected == 0) {
        bad.push_back(start + i);
        continue;
      }
      out.emplace_back(rows[i].begin(), rows[i].end());
    }
    if (!bad.empty()) {
      fail(ErrorCode::provider, "provider returned wrong embedding dim (expected " +
                                    std::to_string(expected) + ") at input indices " +
                                    describe_indices(bad));
    }
  }
  return out;
}

Eigen::MatrixXd CachedEmbedder::embed_uncached(std::span<const std::string> texts) {
  const auto rows = request(texts);
  const std::size_t d = rows.empty() ? 0 : rows.front().size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < d; ++c) out(r, c) = rows[r][c];
  }
  return out;
}

Eigen::MatrixXd CachedEmbedder::embed(std::span<const std::string> texts) {
  std::vector<std::string> missing;
  {
    std::shared_lock lock(mutex_);
    std::unordered_set<std::string> queued;
    for (const auto& t : texts) {
      if (!memory_.contains(t) && queued.insert(t).second) missing.push_back(t);
    }
  }
  if (!missing.empty()) {
    auto rows = request(missing);
    {
      std::unique_lock lock(mutex_);
      if (dim_ == 0 && !rows.empty()) dim_ = rows.front().size();
      if (!rows.empty() && rows.front().size() != dim_) {
        fail(ErrorCode::provider, "provider dim " + std::to_string(rows.front().size()) +
                                      " differs from cached dim " + std::to_string(dim_));
      }
      for (std::size_t i = 0; i < missing.size(); ++i) memory_.try_emplace(missing[i], rows[i]);
    }
    if (config_.cache_dir) commit_to_disk(missing, rows);
  }

  std::shared_lock lock(mutex_);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(texts.size()), static_cast<Eigen::Index>(dim_));
  for (std::size_t r = 0; r < texts.size(); ++r) {
    const auto& row = memory_.at(texts[r]);
    for (std::size_t c = 0; c < dim_; ++c) out(r, c) = row[c];
  }
  return out;
}

void CachedEmbedder::commit_to_disk(const std::vector<std::string>& keys,
                                    const std::vector<std::vector<float>>& rows) {
  std::lock_guard guard(commit_mutex());
  std::error_code ec;
  fs::create_directories(*config_.cache_dir, ec);
  if (ec) fail(ErrorCode::io, "cannot create cache dir " + config_.cache_dir->string());
  fs::path lock_path = cache_store_dir();
  lock_path += ".lock";
  FileLock lock(lock_path);

  const fs::path dir = cache_store_dir();
  EmbeddingStore merged = fs::exists(dir / "manifest.json")
                              ? load_store(dir)
                              : EmbeddingStore(config_.encoder_id, rows.front().size(),
                                               Modality::text);
  if (merged.dim() != rows.front().size()) {
    fail(ErrorCode::provider, "cache at " + dir.string() + " has dim " +
                                  std::to_string(merged.dim()) + ", provider returned " +
                                  std::to_string(rows.front().size()));
  }
  bool changed = false;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (!merged.contains(keys[i])) {
      merged.add(keys[i], std::span<const float>(rows[i]));
      changed = true;
    }
  }
  if (changed) write_store(merged, dir);
}

EmbeddingStore fetch_remote(std::span<const std::string> texts, const ProviderConfig& config,
                            std::shared_ptr<EmbeddingProvider> provider) {
  if (texts.empty()) fail(ErrorCode::invalid_argument, "fetch_remote: no texts given");
  std::unordered_set<std::string> seen;
  for (const auto& t : texts) {
    if (!seen.insert(t).second) {
      fail(ErrorCode::invalid_argument, "fetch_remote: duplicate text '" + t + "'");
    }
  }
  CachedEmbedder embedder(config, std::move(provider));
  const Eigen::MatrixXd rows = embedder.embed(texts);
  EmbeddingStore store(config.encoder_id, static_cast<std::size_t>(rows.cols()), Modality::text);
  std::vector<float> row(static_cast<std::size_t>(rows.cols()));
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < rows.cols(); ++c) row[c] = static_cast<float>(rows(r, c));
    store.add(texts[r], std::span<const float>(row));
  }
  return store;
}

EmbeddingStore fetch_remote(std::span<const std::string> texts, const ProviderConfig& config) {
  return fetch_remote(texts, config, std::make_shared<HttpProvider>(config));
}

}  // namespace ppp::embedding
