// SPDX-License-Identifier: Apache-2.0
// Reference implementations used only by tests. They are written
// independently of the library code paths they check.
#pragma once

#include <array>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pgn/baselines.hpp"
#include "pgn/lexicon.hpp"
#include "pgn/rng.hpp"

namespace pgn::testing {

/// Plain recursion: try every prefix that is a lexicon entry.
inline void enumerate_splits(std::string_view rest, const std::set<std::string>& lex, std::vector<std::string>& cur,
                             std::set<std::vector<std::string>>& out) {
  if (rest.empty()) {
    out.insert(cur);
    return;
  }
  for (std::size_t len = 1; len <= rest.size(); ++len) {
    const std::string head(rest.substr(0, len));
    if (!lex.count(head)) continue;
    cur.push_back(head);
    enumerate_splits(rest.substr(len), lex, cur, out);
    cur.pop_back();
  }
}

inline std::set<std::vector<std::string>> brute_force_splits(std::string_view name, const std::set<std::string>& lex) {
  std::set<std::vector<std::string>> out;
  std::vector<std::string> cur;
  enumerate_splits(name, lex, cur, out);
  return out;
}

inline std::set<std::vector<std::string>> as_parts(const std::set<Segmentation>& segs) {
  std::set<std::vector<std::string>> out;
  for (const auto& s : segs) out.insert(s.parts);
  return out;
}

/// Applies the canonical rule directly to an enumerated candidate set.
inline std::optional<std::vector<std::string>> pick_canonical(const std::set<std::vector<std::string>>& all,
                                                              std::optional<std::size_t> count) {
  std::optional<std::vector<std::string>> best;
  auto lengths = [](const std::vector<std::string>& v) {
    std::vector<std::size_t> l;
    for (const auto& s : v) l.push_back(s.size());
    return l;
  };
  for (const auto& cand : all) {
    if (count && cand.size() != *count) continue;
    if (!best) {
      best = cand;
      continue;
    }
    if (!count && cand.size() != best->size()) {
      if (cand.size() < best->size()) best = cand;
      continue;
    }
    if (lengths(cand) > lengths(*best)) best = cand;
  }
  return best;
}

/// Test strings: concatenations of random syllables cut to max_len, mixed
/// with uniformly random letters so unsegmentable inputs are covered too.
inline std::string random_pinyin_like(Rng& rng, const std::vector<std::string>& syllables, std::size_t max_len) {
  std::string s;
  if (rng.bernoulli(0.2)) {
    const std::size_t len = 1 + rng.below(max_len);
    for (std::size_t i = 0; i < len; ++i) s.push_back(static_cast<char>('a' + rng.below(26)));
    return s;
  }
  const std::size_t target = 1 + rng.below(max_len);
  while (s.size() < target) s += syllables[rng.below(syllables.size())];
  if (s.size() > max_len) s.resize(max_len);
  return s;
}

/// Smoothed Naive Bayes posterior (alpha = 1) evaluated with exact
/// rationals straight from the training list, then a 50-digit log.
inline boost::multiprecision::cpp_bin_float_50 oracle_log_posterior_female(const std::vector<LabeledName>& train,
                                                                          const std::vector<std::string>& query) {
  using boost::multiprecision::cpp_rational;
  std::map<std::string, std::array<cpp_rational, 2>> counts;
  std::array<cpp_rational, 2> totals{0, 0}, docs{0, 0};
  for (const auto& n : train) {
    const int g = label_of(n.gender);
    docs[g] += 1;
    for (const auto& s : n.syllables) {
      counts[s][g] += 1;
      totals[g] += 1;
    }
  }
  const cpp_rational v(static_cast<long>(counts.size()));
  std::array<cpp_rational, 2> joint;
  for (int g = 0; g < 2; ++g) {
    joint[g] = docs[g] / (docs[0] + docs[1]);
    for (const auto& s : query) {
      const cpp_rational c = counts.count(s) ? counts[s][g] : cpp_rational(0);
      joint[g] *= (c + 1) / (totals[g] + v);
    }
  }
  const cpp_rational post = joint[1] / (joint[0] + joint[1]);
  return log(boost::multiprecision::cpp_bin_float_50(post));
}

/// Majority vote per name; ties resolve to female like the weighted vote.
inline std::map<std::string, Gender> majority_vote(const std::vector<CctReport>& reports) {
  std::map<std::string, int> margin;
  for (const auto& r : reports) margin[r.name] += r.label == Gender::Female ? 1 : -1;
  std::map<std::string, Gender> out;
  for (const auto& [name, m] : margin) out[name] = m >= 0 ? Gender::Female : Gender::Male;
  return out;
}

}  // namespace pgn::testing
