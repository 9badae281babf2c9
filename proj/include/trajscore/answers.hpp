#pragma once

#include <cctype>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "trajscore/errors.hpp"

/**
 * Final-answer extraction and equivalence checking for math-style outputs.
 * Everything here is pure string/arithmetic work; the AnswerChecker provider
 * interface delegates to it. The checker is deliberately forgiving on the
 * candidate side (an unparseable candidate is simply wrong, never an error)
 * and strict about numeric equality: when both sides parse as rationals the
 * comparison is exact, with no floating-point round-off.
 */
namespace trajscore::answers {

// ============================================================================
// Extraction
// ============================================================================

/**
 * Returns the contents of the last \boxed{...} span, matching braces so
 * nested groups like \boxed{\frac{1}{2}} survive intact. Returns nullopt
 * when no complete boxed span exists.
 */
inline std::optional<std::string> last_boxed_span(std::string_view text) {
  constexpr std::string_view kMarker = "\\boxed{";
  std::optional<std::string> found;
  size_t pos = 0;
  while ((pos = text.find(kMarker, pos)) != std::string_view::npos) {
    size_t body = pos + kMarker.size();
    int depth = 1;
    size_t i = body;
    for (; i < text.size() && depth > 0; ++i) {
      if (text[i] == '{') ++depth;
      else if (text[i] == '}') --depth;
    }
    if (depth == 0) {
      found = std::string(text.substr(body, i - 1 - body));
      pos = i;
    } else {
      break;  // unbalanced: no complete span from here on
    }
  }
  return found;
}

/// Last non-empty line of the text, or nullopt when every line is blank.
inline std::optional<std::string> last_nonempty_line(std::string_view text) {
  size_t end = text.size();
  while (end > 0) {
    size_t start = text.rfind('\n', end - 1);
    size_t line_begin = (start == std::string_view::npos) ? 0 : start + 1;
    std::string_view line = text.substr(line_begin, end - line_begin);
    size_t b = 0, e = line.size();
    while (b < e && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(line[e - 1]))) --e;
    if (e > b) return std::string(line.substr(b, e - b));
    if (line_begin == 0) break;
    end = line_begin - 1;
  }
  return std::nullopt;
}

/// Boxed span if present, otherwise the last non-empty line.
inline std::optional<std::string> extract_final_answer(std::string_view text) {
  if (auto boxed = last_boxed_span(text)) return boxed;
  return last_nonempty_line(text);
}

// ============================================================================
// Normalization
// ============================================================================

namespace detail_ans {

/// Rewrites every \frac{a}{b} (and \dfrac/\tfrac) as a/b, innermost first.
inline std::string rewrite_fractions(std::string s) {
  for (std::string_view name : {"\\dfrac", "\\tfrac", "\\frac"}) {
    size_t pos;
    while ((pos = s.find(name)) != std::string::npos) {
      size_t i = pos + name.size();
      auto read_group = [&](std::string& out) -> bool {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        if (i >= s.size()) return false;
        if (s[i] == '{') {
          int depth = 1;
          size_t body = ++i;
          while (i < s.size() && depth > 0) {
            if (s[i] == '{') ++depth;
            else if (s[i] == '}') --depth;
            ++i;
          }
          if (depth != 0) return false;
          out = s.substr(body, i - 1 - body);
          return true;
        }
        out = s.substr(i, 1);  // \frac12 shorthand: single-char groups
        ++i;
        return true;
      };
      std::string num, den;
      if (!read_group(num) || !read_group(den)) break;
      s.replace(pos, i - pos, num + "/" + den);
    }
  }
  return s;
}

}  // namespace detail_ans

/**
 * Canonical text form: LaTeX fractions rewritten to a/b, math-mode dollars
 * and \left/\right dropped, \% unescaped, lowercased, internal whitespace
 * runs collapsed to single spaces, outer whitespace trimmed.
 */
inline std::string normalize_answer(std::string_view raw) {
  std::string s = detail_ans::rewrite_fractions(std::string(raw));
  for (std::string_view noise : {"\\left", "\\right", "\\!", "\\,"}) {
    size_t pos;
    while ((pos = s.find(noise)) != std::string::npos) s.erase(pos, noise.size());
  }
  size_t pos;
  while ((pos = s.find("\\%")) != std::string::npos) s.replace(pos, 2, "%");

  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (c == '$') continue;
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

// ============================================================================
// Exact rational comparison
// ============================================================================

/// Reduced fraction with positive denominator; covers int64-scale answers.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;
  friend bool operator==(const Rational&, const Rational&) = default;
};

/**
 * Parses optional-sign integers ("181"), decimals ("0.25"), and simple
 * fractions ("-35/9", "3/4"), reducing to lowest terms. Intermediate math
 * runs in 128-bit so values near the int64 edge reduce without overflow;
 * anything that still cannot be represented returns nullopt.
 */
inline std::optional<Rational> parse_rational(std::string_view s) {
  size_t i = 0, n = s.size();
  while (i < n && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  while (n > i && std::isspace(static_cast<unsigned char>(s[n - 1]))) --n;
  if (i >= n) return std::nullopt;

  auto read_signed_decimal = [&](size_t& p) -> std::optional<std::pair<__int128, __int128>> {
    bool neg = false;
    if (p < n && (s[p] == '+' || s[p] == '-')) neg = (s[p++] == '-');
    __int128 whole = 0, scale = 1;
    bool any_digit = false, seen_dot = false;
    constexpr __int128 kLimit = static_cast<__int128>(1) << 100;
    for (; p < n; ++p) {
      char c = s[p];
      if (c >= '0' && c <= '9') {
        whole = whole * 10 + (c - '0');
        if (seen_dot) scale *= 10;
        any_digit = true;
        if (whole > kLimit || scale > kLimit) return std::nullopt;
      } else if (c == '.' && !seen_dot) {
        seen_dot = true;
      } else {
        break;
      }
    }
    if (!any_digit) return std::nullopt;
    return std::make_pair(neg ? -whole : whole, scale);
  };

  size_t p = i;
  auto first = read_signed_decimal(p);
  if (!first) return std::nullopt;
  __int128 num = first->first, den = first->second;
  if (p < n && s[p] == '/') {
    ++p;
    auto second = read_signed_decimal(p);
    if (!second || second->first == 0) return std::nullopt;
    num = num * second->second;
    den = den * second->first;
  }
  if (p != n) return std::nullopt;
  if (den < 0) { num = -num; den = -den; }
  if (den == 0) return std::nullopt;

  __int128 a = num < 0 ? -num : num, b = den;
  while (b != 0) { __int128 t = a % b; a = b; b = t; }
  if (a != 0) { num /= a; den /= a; }

  constexpr __int128 kMax = std::numeric_limits<std::int64_t>::max();
  constexpr __int128 kMin = std::numeric_limits<std::int64_t>::min();
  if (num > kMax || num < kMin || den > kMax) return std::nullopt;
  return Rational{static_cast<std::int64_t>(num), static_cast<std::int64_t>(den)};
}

// ============================================================================
// Equivalence
// ============================================================================

/// Last whitespace-delimited token of a normalized string that parses as a
/// rational; lets "answer: -35/9" match a numeric gold answer.
inline std::optional<Rational> last_rational_token(std::string_view normalized) {
  std::optional<Rational> found;
  size_t pos = 0;
  while (pos < normalized.size()) {
    size_t end = normalized.find(' ', pos);
    if (end == std::string_view::npos) end = normalized.size();
    std::string_view token = normalized.substr(pos, end - pos);
    // Peel label punctuation like "answer:" or "(7)".
    while (!token.empty() && (token.front() == '(' || token.front() == ':' || token.front() == '=')) token.remove_prefix(1);
    while (!token.empty() && (token.back() == ')' || token.back() == '.' || token.back() == ',' || token.back() == ';')) token.remove_suffix(1);
    if (auto r = parse_rational(token)) found = r;
    pos = end + 1;
  }
  return found;
}

/**
 * True when the candidate's final answer matches the gold answer. The
 * candidate's last \boxed{...} span (fallback: its last non-empty line) and
 * the gold answer are both normalized; rationals compare exactly, everything
 * else as strings. An unparseable candidate is false, never an error.
 */
inline bool is_correct(std::string_view candidate, std::string_view gold_answer) {
  if (gold_answer.empty()) throw Error(ErrorCode::InvalidArgument, "gold answer must be non-empty");
  auto extracted = extract_final_answer(candidate);
  if (!extracted) return false;

  std::string gold_src(gold_answer);
  if (auto boxed = last_boxed_span(gold_answer)) gold_src = *boxed;
  std::string cand = normalize_answer(*extracted);
  std::string gold = normalize_answer(gold_src);
  if (cand == gold && !gold.empty()) return true;

  auto gold_rat = parse_rational(gold);
  if (!gold_rat) return false;
  if (auto cand_rat = parse_rational(cand)) return *cand_rat == *gold_rat;
  // Whole-string parse failed (e.g. "answer: -35/9"): fall back to the last
  // numeric token in the candidate.
  if (auto token_rat = last_rational_token(cand)) return *token_rat == *gold_rat;
  return false;
}

}  // namespace trajscore::answers
