// SPDX-License-Identifier: Apache-2.0
#include "pgn/lexicon.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "pgn/error.hpp"

namespace pgn {

std::string Segmentation::joined(std::string_view sep) const {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

bool is_lower_letters(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

SyllableLexicon::SyllableLexicon(const std::vector<std::string>& syllables) {
  for (const auto& s : syllables) {
    if (!is_lower_letters(s)) throw InvalidInput("lexicon entry is not [a-z]+: '" + s + "'");
    syllables_.insert(s);
    max_len_ = std::max(max_len_, s.size());
  }
  if (syllables_.empty()) throw InvalidInput("lexicon is empty");
}

std::vector<std::string> SyllableLexicon::entries() const {
  std::vector<std::string> out(syllables_.begin(), syllables_.end());
  std::sort(out.begin(), out.end());
  return out;
}

SyllableLexicon load_lexicon(std::string_view text) {
  std::vector<std::string> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::string lowered;
    lowered.reserve(line.size());
    for (char c : line) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      if (c < 'a' || c > 'z') throw MalformedLexicon(lineno, "non-letter character in '" + line + "'");
      lowered.push_back(c);
    }
    entries.push_back(std::move(lowered));
  }
  if (entries.empty()) throw InvalidInput("lexicon has no entries");
  return SyllableLexicon(entries);
}

SyllableLexicon load_lexicon_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open lexicon file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_lexicon(buf.str());
}

const SyllableLexicon& default_lexicon() {
  static const SyllableLexicon lex = load_lexicon(default_lexicon_text());
  return lex;
}

namespace {

void require_letters(std::string_view name) {
  if (!is_lower_letters(name)) throw InvalidInput("pinyin must be non-empty lowercase letters: '" + std::string(name) + "'");
}

// ends[i] lists the lengths of lexicon syllables starting at offset i.
std::vector<std::vector<std::size_t>> syllable_spans(std::string_view name, const SyllableLexicon& lex) {
  std::vector<std::vector<std::size_t>> ends(name.size());
  for (std::size_t i = 0; i < name.size(); ++i) {
    const std::size_t max_len = std::min(lex.max_syllable_len(), name.size() - i);
    for (std::size_t len = max_len; len >= 1; --len) {
      if (lex.contains(name.substr(i, len))) ends[i].push_back(len);
    }
  }
  return ends;
}

std::size_t saturating_add(std::size_t a, std::size_t b) {
  return a > std::numeric_limits<std::size_t>::max() - b ? std::numeric_limits<std::size_t>::max() : a + b;
}

}  // namespace

std::size_t count_segmentations(std::string_view name, const SyllableLexicon& lex) {
  require_letters(name);
  const auto spans = syllable_spans(name, lex);
  std::vector<std::size_t> ways(name.size() + 1, 0);
  ways[name.size()] = 1;
  for (std::size_t i = name.size(); i-- > 0;) {
    for (std::size_t len : spans[i]) ways[i] = saturating_add(ways[i], ways[i + len]);
  }
  return ways[0];
}

std::set<Segmentation> segment_all(std::string_view name, const SyllableLexicon& lex) {
  const std::size_t total = count_segmentations(name, lex);
  if (total > kMaxSegmentations) {
    throw InvalidInput("'" + std::string(name) + "' has " + std::to_string(total) +
                       " segmentations, above the cap of " + std::to_string(kMaxSegmentations));
  }
  const auto spans = syllable_spans(name, lex);
  // suffixes[i]: all splits of name[i..]
  std::vector<std::vector<std::vector<std::string>>> suffixes(name.size() + 1);
  suffixes[name.size()].push_back({});
  for (std::size_t i = name.size(); i-- > 0;) {
    for (std::size_t len : spans[i]) {
      for (const auto& tail : suffixes[i + len]) {
        std::vector<std::string> parts;
        parts.reserve(tail.size() + 1);
        parts.emplace_back(name.substr(i, len));
        parts.insert(parts.end(), tail.begin(), tail.end());
        suffixes[i].push_back(std::move(parts));
      }
    }
  }
  std::set<Segmentation> out;
  for (auto& parts : suffixes[0]) out.insert(Segmentation{std::move(parts)});
  return out;
}

std::optional<Segmentation> canonical_segment(std::string_view name, const SyllableLexicon& lex,
                                              std::optional<std::size_t> expected_count) {
  require_letters(name);
  const std::size_t n = name.size();
  const auto spans = syllable_spans(name, lex);
  // feasible[i][k]: name[i..] splits into exactly k syllables (k <= n).
  std::vector<std::vector<char>> feasible(n + 1, std::vector<char>(n + 1, 0));
  feasible[n][0] = 1;
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t len : spans[i]) {
      for (std::size_t k = 0; k < n; ++k) {
        if (feasible[i + len][k]) feasible[i][k + 1] = 1;
      }
    }
  }
  std::size_t target = 0;
  if (expected_count) {
    if (*expected_count == 0 || *expected_count > n || !feasible[0][*expected_count]) return std::nullopt;
    target = *expected_count;
  } else {
    while (target <= n && !feasible[0][target]) ++target;
    if (target > n) return std::nullopt;
  }
  // Greedy longest-first under the count constraint yields the
  // lexicographically greatest length vector among splits of that size.
  Segmentation seg;
  std::size_t pos = 0;
  for (std::size_t remaining = target; remaining > 0; --remaining) {
    for (std::size_t len : spans[pos]) {  // spans are sorted longest first
      if (feasible[pos + len][remaining - 1]) {
        seg.parts.emplace_back(name.substr(pos, len));
        pos += len;
        break;
      }
    }
  }
  return seg;
}

}  // namespace pgn
