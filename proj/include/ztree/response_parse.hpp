#pragma once

// Typed extraction from model text. The deterministic extractors understand
// the "Output: <value>" convention and the "Nothing" sentinel; when they come
// up empty, parse_with_fallback asks the model to restate its answer through
// the matching parser prompt and tries again.

#include <algorithm>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ztree/chat.hpp"
#include "ztree/prompt_forge.hpp"
#include "ztree/schema.hpp"
#include "ztree/split.hpp"

namespace ztree {

enum class parse_method { deterministic, llm_assisted };

template <class V>
struct parse_outcome {
  std::optional<V> value;
  parse_method method = parse_method::deterministic;
  std::string raw;

  bool has_value() const { return value.has_value(); }
};

namespace detail {

inline bool is_word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

struct numeric_token {
  double value = 0.0;
  bool percent = false;
};

// Standalone numbers: optional sign, digits, optional fraction. A token may
// not touch letters, digits, underscores or a preceding '.', so "x2", "1,000"
// halves and version strings do not masquerade as a single value.
inline std::vector<numeric_token> numeric_tokens(std::string_view s) {
  std::vector<numeric_token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t start = i;
    std::size_t j = i;
    if ((s[j] == '+' || s[j] == '-') && j + 1 < s.size() && (is_digit(s[j + 1]) || s[j + 1] == '.')) ++j;
    const std::size_t mantissa = j;
    while (j < s.size() && is_digit(s[j])) ++j;
    bool frac = false;
    if (j < s.size() && s[j] == '.' && j + 1 < s.size() && is_digit(s[j + 1])) {
      ++j;
      while (j < s.size() && is_digit(s[j])) ++j;
      frac = true;
    }
    const bool has_digits = j > mantissa && (is_digit(s[mantissa]) || frac);
    const bool clean_before = start == 0 || (!is_word_char(s[start - 1]) && s[start - 1] != '.');
    if (!has_digits || !clean_before) {
      i = start + 1;
      continue;
    }
    const bool clean_after = j >= s.size() || (!is_word_char(s[j]) && !(s[j] == '.' && j + 1 < s.size() && is_digit(s[j + 1])));
    if (!clean_after) {
      // swallow the rest of this word so its digits are not re-read
      while (j < s.size() && (is_word_char(s[j]) || s[j] == '.')) ++j;
      i = j;
      continue;
    }
    numeric_token t;
    t.value = std::strtod(std::string(s.substr(start, j - start)).c_str(), nullptr);
    t.percent = j < s.size() && s[j] == '%';
    out.push_back(t);
    i = j;
  }
  return out;
}

// Position just past the last "Output:" (case-insensitive), if any.
inline std::optional<std::size_t> after_last_output(std::string_view text) {
  const std::string lower = to_lower(text);
  const auto pos = lower.rfind("output:");
  if (pos == std::string::npos) return std::nullopt;
  return pos + 7;
}

inline std::string_view strip_decoration(std::string_view s) {
  const auto junk = " \t\r\n'\"`*";
  auto b = s.find_first_not_of(junk);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(junk);
  return s.substr(b, e - b + 1);
}

// First non-empty line of the text following the last Output: marker.
inline std::optional<std::string> output_payload(std::string_view text) {
  auto at = after_last_output(text);
  if (!at) return std::nullopt;
  auto rest = text.substr(*at);
  while (!rest.empty()) {
    auto nl = rest.find('\n');
    auto line = strip_decoration(rest.substr(0, nl));
    if (!line.empty()) return std::string(line);
    if (nl == std::string_view::npos) break;
    rest = rest.substr(nl + 1);
  }
  return std::string();
}

inline bool is_nothing(std::string_view s) {
  auto t = strip_decoration(s);
  while (!t.empty() && (t.back() == '.' || t.back() == '!')) t.remove_suffix(1);
  return to_lower(t) == "nothing";
}

// Shared numeric logic; returns the token found (value + percent flag).
inline std::optional<numeric_token> extract_number_token(std::string_view text) {
  if (auto payload = output_payload(text)) {
    if (is_nothing(*payload)) return std::nullopt;
    auto toks = numeric_tokens(*payload);
    if (toks.size() != 1) return std::nullopt;
    return toks.front();
  }
  if (is_nothing(text)) return std::nullopt;
  auto toks = numeric_tokens(text);
  if (toks.size() != 1) return std::nullopt;
  return toks.front();
}

}  // namespace detail

/// Number after the last "Output:"; without a marker, the only standalone
/// number in the text. Integer dtype rejects fractional values.
inline parse_outcome<double> extract_numeric(std::string_view text, numeric_dtype dtype = numeric_dtype::real) {
  parse_outcome<double> out;
  out.raw = std::string(text);
  auto tok = detail::extract_number_token(text);
  if (!tok || !std::isfinite(tok->value)) return out;
  if (dtype == numeric_dtype::integer && tok->value != std::floor(tok->value)) return out;
  out.value = tok->value;
  return out;
}

/// Like extract_numeric, then requires a value in [0, 1]; "80%" reads as 0.8.
inline parse_outcome<double> extract_probability(std::string_view text) {
  parse_outcome<double> out;
  out.raw = std::string(text);
  auto tok = detail::extract_number_token(text);
  if (!tok) return out;
  double v = tok->percent ? tok->value / 100.0 : tok->value;
  if (!(v >= 0.0 && v <= 1.0)) return out;
  out.value = v;
  return out;
}

/// "Output: red, green;;blue". Succeeds only for two disjoint, non-empty
/// groups that together cover `allowed` exactly. Groups come back in the
/// order of `allowed`.
inline parse_outcome<bipartition> extract_bipartition(std::string_view text, const std::vector<std::string>& allowed) {
  parse_outcome<bipartition> out;
  out.raw = std::string(text);
  std::string payload;
  if (auto p = detail::output_payload(text)) {
    payload = *p;
  } else {
    auto t = detail::strip_decoration(text);
    if (t.find(";;") == std::string_view::npos || t.find('\n') != std::string_view::npos) return out;
    payload = std::string(t);
  }
  if (detail::is_nothing(payload)) return out;

  const auto sep = payload.find(";;");
  if (sep == std::string::npos || payload.find(";;", sep + 2) != std::string::npos) return out;

  auto read_group = [&](std::string_view side, std::vector<std::string>& group) -> bool {
    std::string cleaned;
    for (char c : side)
      if (c != '[' && c != ']' && c != '{' && c != '}' && c != '(' && c != ')' && c != '\'' && c != '"') cleaned += c;
    std::string_view rest = cleaned;
    while (true) {
      auto comma = rest.find(',');
      auto tok = detail::trim(rest.substr(0, comma));
      if (!tok.empty()) {
        std::string name;
        try {
          name = normalize_identifier(tok);
        } catch (const error&) {
          return false;
        }
        if (std::find(allowed.begin(), allowed.end(), name) == allowed.end()) return false;
        if (std::find(group.begin(), group.end(), name) == group.end()) group.push_back(name);
      }
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    return !group.empty();
  };

  std::vector<std::string> g1, g2;
  if (!read_group(std::string_view(payload).substr(0, sep), g1)) return out;
  if (!read_group(std::string_view(payload).substr(sep + 2), g2)) return out;
  for (const auto& a : g1)
    if (std::find(g2.begin(), g2.end(), a) != g2.end()) return out;
  if (g1.size() + g2.size() != allowed.size()) return out;

  bipartition b;
  for (const auto& c : allowed) {
    if (std::find(g1.begin(), g1.end(), c) != g1.end())
      b.group1.push_back(c);
    else
      b.group2.push_back(c);
  }
  out.value = std::move(b);
  return out;
}

/// Runs `extract` on the task reply; if that yields nothing, builds the
/// parser prompt of `kind`, completes it and runs `extract` on the parser's
/// reply. Transport failures propagate.
template <class Extract>
auto parse_with_fallback(prompt_forge::parse_kind kind, const std::string& text, prompt_forge::parser_inputs inputs,
                         Extract&& extract, const prompt_forge& forge, text_completer& llm) -> decltype(extract(text)) {
  auto first = extract(text);
  first.method = parse_method::deterministic;
  if (first.has_value()) return first;
  if (detail::trim(text).empty()) return first;
  inputs.response_text = text;
  const auto reply = llm.complete(forge.parser(kind, inputs));
  auto second = extract(reply.text);
  second.method = parse_method::llm_assisted;
  return second;
}

}  // namespace ztree
