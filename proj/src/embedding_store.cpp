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

#include <unistd.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "ppp/embedding.hpp"
#include "ppp/error.hpp"
#include "ppp/hash.hpp"

namespace ppp::embedding {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kManifestVersion = 1;

std::string matrix_bytes(const std::vector<float>& matrix) {
  std::string bytes(matrix.size() * sizeof(float), '\0');
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(bytes.data(), matrix.data(), bytes.size());
  } else {
    for (std::size_t i = 0; i < matrix.size(); ++i) {
      const auto word = std::bit_cast<std::uint32_t>(matrix[i]);
      for (int b = 0; b < 4; ++b) {
        bytes[i * 4 + b] = static_cast<char>((word >> (8 * b)) & 0xff);
      }
    }
  }
  return bytes;
}

std::vector<float> floats_from_bytes(const std::string& bytes) {
  std::vector<float> out(bytes.size() / sizeof(float));
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data(), bytes.data(), out.size() * sizeof(float));
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::uint32_t word = 0;
      for (int b = 0; b < 4; ++b) {
        word |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b]))
                << (8 * b);
      }
      out[i] = std::bit_cast<float>(word);
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(Modality m) { return m == Modality::text ? "text" : "image"; }

Modality parse_modality(std::string_view name) {
  if (name == "text") return Modality::text;
  if (name == "image") return Modality::image;
  fail(ErrorCode::parse, "unknown modality '" + std::string(name) + "'");
}

EmbeddingStore::EmbeddingStore(std::string encoder_id, std::size_t dim, Modality modality)
    : encoder_id_(std::move(encoder_id)), dim_(dim), modality_(modality) {
  if (dim_ == 0) fail(ErrorCode::invalid_argument, "embedding dim must be positive");
}

void EmbeddingStore::add(std::string key, std::span<const float> row) {
  if (row.size() != dim_) {
    fail(ErrorCode::invalid_argument, "row for '" + key + "' has length " +
                                          std::to_string(row.size()) + ", store dim is " +
                                          std::to_string(dim_));
  }
  for (float v : row) {
    if (!std::isfinite(v)) {
      fail(ErrorCode::invalid_argument, "non-finite value in row for '" + key + "'");
    }
  }
  if (index_.contains(key)) {
    fail(ErrorCode::invalid_argument, "duplicate store key '" + key + "'");
  }
  index_.emplace(key, keys_.size());
  keys_.push_back(std::move(key));
  matrix_.insert(matrix_.end(), row.begin(), row.end());
}

void EmbeddingStore::add(std::string key, std::span<const double> row) {
  std::vector<float> narrowed(row.begin(), row.end());
  add(std::move(key), std::span<const float>(narrowed));
}

std::optional<std::size_t> EmbeddingStore::find(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::span<const float> EmbeddingStore::row(std::size_t i) const {
  return std::span<const float>(matrix_).subspan(i * dim_, dim_);
}

std::vector<double> EmbeddingStore::get(const std::string& key) const {
  auto i = find(key);
  if (!i) fail(ErrorCode::not_found, "embedding store has no key '" + key + "'");
  auto r = row(*i);
  return {r.begin(), r.end()};
}

Eigen::MatrixXd EmbeddingStore::gather(std::span<const std::string> keys) const {
  std::vector<std::string> missing;
  std::size_t missing_total = 0;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(keys.size()), static_cast<Eigen::Index>(dim_));
  for (std::size_t k = 0; k < keys.size(); ++k) {
    auto i = find(keys[k]);
    if (!i) {
      ++missing_total;
      if (missing.size() < 10) missing.push_back(keys[k]);
      continue;
    }
    auto r = row(*i);
    for (std::size_t c = 0; c < dim_; ++c) {
      out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = r[c];
    }
  }
  if (missing_total) {
    std::string msg = "encoder '" + encoder_id_ + "': " + std::to_string(missing_total) +
                      " key(s) missing from embedding store:";
    for (const auto& m : missing) msg += " '" + m + "'";
    if (missing_total > missing.size()) msg += " ...";
    fail(ErrorCode::not_found, msg);
  }
  return out;
}

std::string EmbeddingStore::content_hash() const { return sha256_hex(matrix_bytes(matrix_)); }

std::vector<double> get(const EmbeddingStore& store, const std::string& key) {
  return store.get(key);
}

EmbeddingStore load_store(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  const fs::path matrix_path = dir / "matrix.f32";
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, manifest_path.string() + ": " + e.what());
  }

  std::string encoder_id, modality, sha;
  std::size_t dim = 0, rows = 0;
  std::vector<std::pair<std::string, std::size_t>> index;
  try {
    const int version = manifest.at("version").get<int>();
    if (version != kManifestVersion) {
      fail(ErrorCode::parse, manifest_path.string() + ": unsupported manifest version " +
                                 std::to_string(version));
    }
    encoder_id = manifest.at("encoder_id").get<std::string>();
    dim = manifest.at("dim").get<std::size_t>();
    rows = manifest.at("rows").get<std::size_t>();
    modality = manifest.at("modality").get<std::string>();
    sha = manifest.at("sha256").get<std::string>();
    for (const auto& [key, row] : manifest.at("index").items()) {
      index.emplace_back(key, row.get<std::size_t>());
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, manifest_path.string() + ": " + e.what());
  }

  const std::string bytes = read_file(matrix_path);
  if (bytes.size() != rows * dim * sizeof(float)) {
    fail(ErrorCode::parse, matrix_path.string() + ": size mismatch, expected " +
                               std::to_string(rows * dim * sizeof(float)) + " bytes for " +
                               std::to_string(rows) + "x" + std::to_string(dim) + ", found " +
                               std::to_string(bytes.size()));
  }
  if (index.size() != rows) {
    fail(ErrorCode::parse, manifest_path.string() + ": index has " +
                               std::to_string(index.size()) + " keys but rows = " +
                               std::to_string(rows));
  }
  if (sha256_hex(bytes) != sha) {
    fail(ErrorCode::parse, matrix_path.string() + ": content hash does not match manifest");
  }

  std::vector<const std::string*> by_row(rows, nullptr);
  for (const auto& [key, row] : index) {
    if (row >= rows || by_row[row] != nullptr) {
      fail(ErrorCode::parse, manifest_path.string() + ": index is not a bijection onto rows (key '" +
                                 key + "')");
    }
    by_row[row] = &key;
  }

  const std::vector<float> values = floats_from_bytes(bytes);
  EmbeddingStore store(encoder_id, dim, parse_modality(modality));
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = std::span<const float>(values).subspan(r * dim, dim);
    for (float v : row) {
      if (!std::isfinite(v)) {
        fail(ErrorCode::parse, matrix_path.string() + ": non-finite value in row " +
                                   std::to_string(r));
      }
    }
    store.add(*by_row[r], row);
  }
  return store;
}

void write_store(const EmbeddingStore& store, const fs::path& dir) {
  const std::string bytes = matrix_bytes(store.matrix());
  json index = json::object();
  for (std::size_t r = 0; r < store.rows(); ++r) index[store.keys()[r]] = r;
  json manifest = {
      {"version", kManifestVersion},
      {"encoder_id", store.encoder_id()},
      {"dim", store.dim()},
      {"rows", store.rows()},
      {"modality", std::string(to_string(store.modality()))},
      {"sha256", sha256_hex(bytes)},
      {"index", std::move(index)},
  };

  std::error_code ec;
  fs::path target = dir.lexically_normal();
  if (target.filename().empty()) target = target.parent_path();
  const std::string suffix = "." + std::to_string(::getpid());
  fs::path staging = target;
  staging += ".staging" + suffix;
  fs::path retired = target;
  retired += ".retired" + suffix;

  fs::remove_all(staging, ec);
  fs::create_directories(staging, ec);
  if (ec) fail(ErrorCode::io, "cannot create " + staging.string() + ": " + ec.message());
  {
    std::ofstream out(staging / "matrix.f32", std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::io, "write failed: " + (staging / "matrix.f32").string());
  }
  {
    std::ofstream out(staging / "manifest.json", std::ios::binary | std::ios::trunc);
    out << manifest.dump(2) << "\n";
    if (!out) fail(ErrorCode::io, "write failed: " + (staging / "manifest.json").string());
  }

  const bool existed = fs::exists(target, ec);
  if (existed) {
    fs::remove_all(retired, ec);
    fs::rename(target, retired, ec);
    if (ec) fail(ErrorCode::io, "cannot replace " + target.string() + ": " + ec.message());
  }
  fs::rename(staging, target, ec);
  if (ec) {
    if (existed) fs::rename(retired, target);
    fail(ErrorCode::io, "cannot move store into " + target.string() + ": " + ec.message());
  }
  if (existed) fs::remove_all(retired, ec);
}

}  // namespace ppp::embedding
