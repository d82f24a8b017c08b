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

#include "mock_provider.hpp"

#include <atomic>
#include <cctype>
#include <stdexcept>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "ppp/hash.hpp"

namespace ppp::testing {

struct MockProvider::Impl {
  EmbedFn fn;
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<std::size_t> requests{0};
  std::atomic<std::size_t> texts{0};
  std::atomic<int> failures_left{0};
  std::atomic<int> failure_status{500};
};

MockProvider::MockProvider(EmbedFn fn) : impl_(std::make_unique<Impl>()) {
  impl_->fn = std::move(fn);
  Impl* impl = impl_.get();
  impl->server.Post("/embed", [impl](const httplib::Request& req, httplib::Response& res) {
    impl->requests++;
    if (impl->failures_left.load() > 0) {
      impl->failures_left--;
      res.status = impl->failure_status.load();
      return;
    }
    const auto body = nlohmann::json::parse(req.body);
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& t : body.at("texts")) {
      impl->texts++;
      rows.push_back(impl->fn(t.get<std::string>()));
    }
    const std::size_t dim = rows.empty() ? 0 : rows.front().size();
    res.set_content(nlohmann::json{{"dim", dim}, {"embeddings", std::move(rows)}}.dump(),
                    "application/json");
  });
  impl->port = impl->server.bind_to_any_port("127.0.0.1");
  if (impl->port <= 0) throw std::runtime_error("mock provider: cannot bind loopback port");
  impl->thread = std::thread([impl] { impl->server.listen_after_bind(); });
  impl->server.wait_until_ready();
}

MockProvider::~MockProvider() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string MockProvider::endpoint() const {
  return "http://127.0.0.1:" + std::to_string(impl_->port) + "/embed";
}

std::size_t MockProvider::requests() const { return impl_->requests.load(); }
std::size_t MockProvider::texts_seen() const { return impl_->texts.load(); }

void MockProvider::fail_next(int count, int status) {
  impl_->failure_status = status;
  impl_->failures_left = count;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<double> word_vector(std::string_view word, std::size_t dim, std::uint64_t seed) {
  Rng rng(fnv1a(word) ^ (seed * 0x9E3779B97F4A7C15ULL));
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal();
  return v;
}

std::vector<std::string> tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (std::isspace(u)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<double> bag_of_words(std::string_view text, std::size_t dim, std::uint64_t seed) {
  std::vector<double> sum(dim, 0.0);
  for (const auto& t : tokens(text)) {
    const auto v = word_vector(t, dim, seed);
    for (std::size_t i = 0; i < dim; ++i) sum[i] += v[i];
  }
  return sum;
}

}  // namespace ppp::testing
