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

#include "ppp/csv.hpp"

#include "ppp/error.hpp"

namespace ppp::csv {

std::optional<std::vector<std::string>> Reader::next() {
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  bool any = false;
  const std::size_t number = record_ + 1;

  auto error = [&](const std::string& why) {
    fail(ErrorCode::parse, "csv record " + std::to_string(number) + ": " + why);
  };

  for (;;) {
    const int c = in_.get();
    if (c == std::char_traits<char>::eof()) {
      if (in_quotes) {
        error("unterminated quoted field");
      }
      if (!any) {
        return std::nullopt;
      }
      fields.push_back(std::move(field));
      break;
    }
    any = true;
    const char ch = static_cast<char>(c);
    if (in_quotes) {
      if (ch == '"') {
        if (in_.peek() == '"') {
          in_.get();
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
      field_was_quoted = false;
    } else if (ch == '"') {
      if (!field.empty() || field_was_quoted) {
        error("quote inside unquoted field");
      }
      in_quotes = true;
      field_was_quoted = true;
    } else if (ch == '\r' && in_.peek() == '\n') {
      in_.get();
      fields.push_back(std::move(field));
      break;
    } else if (ch == '\n') {
      fields.push_back(std::move(field));
      break;
    } else {
      if (field_was_quoted) {
        error("characters after closing quote");
      }
      field.push_back(ch);
    }
  }
  record_ = number;
  return fields;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') {
      out += "\"\"";
    } else {
      out.push_back(c);
    }
  }
  out.push_back('"');
  return out;
}

std::string join_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += escape(fields[i]);
  }
  return out;
}

}  // namespace ppp::csv
