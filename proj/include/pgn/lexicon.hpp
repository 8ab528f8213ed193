// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace pgn {

/// An ordered split of a pinyin string into syllables.
struct Segmentation {
  std::vector<std::string> parts;

  std::string joined(std::string_view sep = "") const;
  std::size_t size() const { return parts.size(); }

  friend auto operator<=>(const Segmentation&, const Segmentation&) = default;
};

/// Immutable inventory of toneless syllables.
class SyllableLexicon {
 public:
  /// Throws InvalidInput if the set is empty or an entry is not [a-z]+.
  explicit SyllableLexicon(const std::vector<std::string>& syllables);

  bool contains(std::string_view s) const { return syllables_.count(std::string(s)) != 0; }
  std::size_t size() const { return syllables_.size(); }
  std::size_t max_syllable_len() const { return max_len_; }
  /// Entries in sorted order.
  std::vector<std::string> entries() const;

 private:
  std::unordered_set<std::string> syllables_;
  std::size_t max_len_ = 0;
};

/// Parses a line-oriented lexicon. Blank lines and lines starting with '#'
/// are skipped, entries are lowercased and deduplicated. Any other line with
/// a non-letter character raises MalformedLexicon carrying its 1-based line.
SyllableLexicon load_lexicon(std::string_view text);
SyllableLexicon load_lexicon_file(const std::string& path);

/// The packaged Mandarin inventory (data/syllables.txt compiled in).
const SyllableLexicon& default_lexicon();
std::string_view default_lexicon_text();

/// Upper bound on the number of segmentations segment_all will enumerate.
inline constexpr std::size_t kMaxSegmentations = 1024;

/// Every sequence of lexicon syllables whose concatenation is `name`.
/// Throws InvalidInput for empty or non-[a-z] input, and when the result would
/// exceed kMaxSegmentations.
std::set<Segmentation> segment_all(std::string_view name, const SyllableLexicon& lex);

/// Number of segmentations without materializing them (saturates at SIZE_MAX).
std::size_t count_segmentations(std::string_view name, const SyllableLexicon& lex);

/// Deterministic choice among segment_all's results. With expected_count,
/// only splits of that length are eligible; otherwise the fewest syllables
/// win. Remaining ties go to the lexicographically greatest vector of
/// syllable lengths (longest syllables first).
std::optional<Segmentation> canonical_segment(std::string_view name, const SyllableLexicon& lex,
                                              std::optional<std::size_t> expected_count = {});

/// True if `s` is non-empty and consists only of 'a'..'z'.
bool is_lower_letters(std::string_view s);

}  // namespace pgn
