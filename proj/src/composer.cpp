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

#include "ppp/composer.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "json.hpp"
#include "ppp/error.hpp"

namespace ppp::composer {

using nlohmann::json;

namespace {

constexpr double kNeutralBand = 0.15;

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Trims, collapses whitespace and comma runs, drops edge commas.
std::string clean(std::string_view raw) {
  std::string out;
  bool pending_space = false;
  for (char c : raw) {
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (c == ',') {
      if (!out.empty() && out.back() != ',') out.push_back(',');
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  while (!out.empty() && (out.back() == ',' || out.back() == ' ')) out.pop_back();
  while (!out.empty() && (out.front() == ',' || out.front() == ' ')) out.erase(out.begin());
  return out;
}

std::optional<std::string> present(const std::optional<std::string>& part) {
  if (!part) return std::nullopt;
  std::string c = clean(*part);
  if (c.empty()) return std::nullopt;
  return c;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

[[noreturn]] void missing(const PaintingRecord& r, std::string_view part) {
  fail(ErrorCode::invalid_argument, "painting '" + r.painting_id + "': selected part '" +
                                        std::string(part) + "' is missing");
}

}  // namespace

std::string label(const PartsSelection& parts) {
  std::string out;
  auto add = [&](std::string_view s) {
    if (!out.empty()) out += " + ";
    out += s;
  };
  if (parts.use_caption) add("description");
  if (parts.use_painter_epoch) add("painter + epoch");
  if (parts.use_valence) add("valence");
  return out.empty() ? "none" : out;
}

std::string valence_word(const Valence& v) {
  if (const double* x = std::get_if<double>(&v)) {
    if (*x > kNeutralBand) return "positive";
    if (*x < -kNeutralBand) return "negative";
    return "neutral";
  }
  const std::string s = lower(clean(std::get<std::string>(v)));
  if (s == "+" || s == "pos" || s == "positive" || s == "1" || s == "+1") return "positive";
  if (s == "-" || s == "neg" || s == "negative" || s == "-1") return "negative";
  if (s == "0" || s == "neutral" || s == "neu") return "neutral";
  return s;
}

bool has_parts(const PaintingRecord& record, const PartsSelection& parts) {
  if (parts.use_caption && !present(record.caption)) return false;
  if (parts.use_painter_epoch && !present(record.painter)) return false;
  if (parts.use_valence) {
    if (!record.valence) return false;
    if (valence_word(*record.valence).empty()) return false;
  }
  return true;
}

std::string compose(const PaintingRecord& record, const PartsSelection& parts,
                    std::string_view template_id) {
  if (!parts.use_caption && !parts.use_painter_epoch && !parts.use_valence) {
    fail(ErrorCode::invalid_argument, "compose: no prompt part selected");
  }
  if (template_id != "default" && template_id != "bare") {
    fail(ErrorCode::not_found, "unknown prompt template '" + std::string(template_id) + "'");
  }
  std::optional<std::string> caption, painter, epoch, valence;
  if (parts.use_caption) {
    caption = present(record.caption);
    if (!caption) missing(record, "caption");
  }
  if (parts.use_painter_epoch) {
    painter = present(record.painter);
    if (!painter) missing(record, "painter");
    epoch = present(record.epoch);
  }
  if (parts.use_valence) {
    if (record.valence) valence = valence_word(*record.valence);
    if (!valence || valence->empty()) missing(record, "valence");
  }

  if (template_id == "bare") {
    std::string out;
    auto add = [&](const std::string& s) {
      if (!out.empty()) out += ", ";
      out += s;
    };
    if (caption) add(*caption);
    if (painter) add(epoch ? *painter + " (" + *epoch + ")" : *painter);
    if (valence) add(*valence);
    return out;
  }

  std::string out;
  if (caption) out += "A painting of " + *caption;
  if (painter) {
    out += ", by " + *painter;
    if (epoch) out += " (" + *epoch + ")";
  }
  if (valence) out += ", " + *valence + " mood";
  if (!caption) {
    out.erase(0, 2);
    out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  }
  return out;
}

std::vector<PartsSelection> ablation_configs() {
  return {
      {.use_caption = false, .use_painter_epoch = false, .use_valence = true},
      {.use_caption = true, .use_painter_epoch = false, .use_valence = false},
      {.use_caption = false, .use_painter_epoch = true, .use_valence = false},
      {.use_caption = true, .use_painter_epoch = true, .use_valence = false},
      {.use_caption = true, .use_painter_epoch = true, .use_valence = true},
  };
}

std::vector<PaintingRecord> parse_paintings(std::istream& in) {
  std::vector<PaintingRecord> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t row = 0;
  auto error = [&](const std::string& why) {
    fail(ErrorCode::parse, "paintings row " + std::to_string(row) + ": " + why);
  };
  auto opt_string = [&](const json& obj, const char* key) -> std::optional<std::string> {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) error(std::string("'") + key + "' must be a string");
    return it->get<std::string>();
  };
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      error(std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) error("expected a JSON object");
    PaintingRecord rec;
    auto id = obj.find("painting_id");
    if (id == obj.end() || !id->is_string() || id->get<std::string>().empty()) {
      error("missing non-empty string 'painting_id'");
    }
    rec.painting_id = id->get<std::string>();
    if (!seen.insert(rec.painting_id).second) error("duplicate painting_id '" + rec.painting_id + "'");
    rec.caption = opt_string(obj, "caption");
    rec.painter = opt_string(obj, "painter");
    rec.epoch = opt_string(obj, "epoch");
    if (auto v = obj.find("valence"); v != obj.end() && !v->is_null()) {
      if (v->is_string()) {
        rec.valence = v->get<std::string>();
      } else if (v->is_number() && std::isfinite(v->get<double>())) {
        rec.valence = v->get<double>();
      } else {
        error("'valence' must be a string or a finite number");
      }
    }
    if (auto a = obj.find("appreciation"); a != obj.end()) {
      if (!a->is_object()) error("'appreciation' must be an object");
      for (const auto& [feature, value] : a->items()) {
        if (value.is_null()) continue;
        if (!value.is_number() || !std::isfinite(value.get<double>())) {
          error("appreciation '" + feature + "' is not a finite number");
        }
        rec.appreciation_scores[feature] = value.get<double>();
      }
    }
    if (!present(rec.caption) && !present(rec.painter) && !present(rec.epoch) && !rec.valence) {
      error("painting '" + rec.painting_id + "' has none of caption/painter/epoch/valence");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<PaintingRecord> load_paintings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::not_found, "cannot open painting dataset: " + path.string());
  try {
    return parse_paintings(in);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace ppp::composer
