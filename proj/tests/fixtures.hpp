// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstring>
#include <map>
#include <vector>

#include "pgn/corpus.hpp"
#include "pgn/neural.hpp"

namespace pgn::testing {

/// Small many-to-one corpus where every record carries hanzi.
inline std::vector<NameRecord> small_corpus(std::size_t count, std::uint64_t seed, std::size_t syllables = 8) {
  AmbiguousCorpusOptions opts;
  opts.syllables = syllables;
  opts.chars_per_syllable = 3;
  auto cfg = ambiguous_generator_config(opts, default_lexicon(), seed);
  cfg.count = count;
  return generate_synthetic(cfg, seed + 1);
}

/// Keeps the first record per pinyin so the labels are learnable from pinyin.
inline std::vector<NameRecord> unique_pinyin(const std::vector<NameRecord>& records) {
  std::map<std::string, bool> seen;
  std::vector<NameRecord> out;
  for (const auto& r : records)
    if (seen.emplace(r.pinyin, true).second) out.push_back(r);
  return out;
}

inline TrainConfig small_config(int d = 16) {
  TrainConfig cfg;
  cfg.d = d;
  cfg.batch_size = 16;
  cfg.epochs = 3;
  return cfg;
}

template <typename Model>
bool bit_equal(const Model& a, const Model& b) {
  std::vector<const Matrix*> xs, ys;
  Model::visit(a, [&](const std::string&, const Matrix& m) { xs.push_back(&m); });
  Model::visit(b, [&](const std::string&, const Matrix& m) { ys.push_back(&m); });
  if (xs.size() != ys.size()) return false;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i]->rows() != ys[i]->rows() || xs[i]->cols() != ys[i]->cols()) return false;
    if (std::memcmp(xs[i]->data(), ys[i]->data(), sizeof(double) * static_cast<std::size_t>(xs[i]->size())) != 0)
      return false;
  }
  return true;
}

template <typename Model>
bool all_zero(const Model& m) {
  bool zero = true;
  Model::visit(m, [&](const std::string&, const Matrix& x) { zero = zero && (x.array() == 0.0).all(); });
  return zero;
}

}  // namespace pgn::testing
