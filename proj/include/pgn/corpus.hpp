// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "pgn/lexicon.hpp"

namespace pgn {

enum class Gender : std::uint8_t { Male = 0, Female = 1 };

inline int label_of(Gender g) { return static_cast<int>(g); }
inline Gender gender_from_label(int y) { return y ? Gender::Female : Gender::Male; }

/// Hanzi given names hold at most this many characters.
inline constexpr std::size_t kMaxHanziLength = 3;

struct NameRecord {
  std::string pinyin;                               // lowercase letters
  std::optional<std::vector<std::string>> hanzi;    // one code point per element
  Gender gender = Gender::Male;
  std::optional<int> source;

  std::string hanzi_text() const;
  friend bool operator==(const NameRecord&, const NameRecord&) = default;
};

struct RejectedRow {
  std::size_t row = 0;  // 1-based, header excluded
  std::string reason;
};

struct RecordSet {
  std::vector<NameRecord> records;
  std::vector<RejectedRow> rejects;
};

/// Validates one already-split CSV row. Returns the reject reason on failure.
/// `columns` maps pinyin, hanzi, gender, source (source/hanzi may be absent).
struct RecordColumns {
  std::size_t pinyin, gender;
  std::optional<std::size_t> hanzi, source;
};
RecordColumns resolve_record_columns(const std::vector<std::string>& header);
std::variant<NameRecord, std::string> parse_record(const std::vector<std::string>& fields,
                                                   const RecordColumns& cols, const SyllableLexicon& lex);

/// Reads a records CSV (header `pinyin,hanzi,gender[,source]`). Rows that
/// fail validation land in `rejects`, so records + rejects covers every row.
RecordSet read_records(std::istream& in, const SyllableLexicon& lex);
RecordSet read_records(const std::string& path, const SyllableLexicon& lex);

void write_records(std::ostream& out, const std::vector<NameRecord>& records);
void write_records(const std::string& path, const std::vector<NameRecord>& records);
void write_rejects(std::ostream& out, const std::vector<RejectedRow>& rejects);

/// Syllables aligned to the record's hanzi when present, the canonical
/// split otherwise. Empty when the pinyin cannot be segmented.
std::vector<std::string> record_syllables(const NameRecord& r, const SyllableLexicon& lex);

/// Letters of a pinyin string, one token each.
std::vector<std::string> letter_tokens(std::string_view pinyin);

enum class TokenMode { Syllable, Letter, HanziChar };

std::string to_string(TokenMode m);
TokenMode token_mode_from_string(std::string_view s);

/// Token sequence for a record under a mode. Syllable mode falls back to
/// letters when the pinyin is unsegmentable. HanziChar mode yields nothing
/// for records without hanzi.
std::vector<std::string> tokenize(const NameRecord& r, TokenMode mode, const SyllableLexicon& lex);

/// Token inventory with three reserved ids ahead of the data tokens.
class Vocab {
 public:
  static constexpr int kAgg = 0;
  static constexpr int kPad = 1;
  static constexpr int kUnk = 2;
  static constexpr int kNumSpecials = 3;
  static const std::array<std::string, 3>& specials();

  Vocab();
  /// Builds from data tokens in the given order. Throws on duplicates or
  /// collisions with the special tokens.
  explicit Vocab(const std::vector<std::string>& data_tokens);

  int id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  /// Every token including specials, in id order.
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::vector<std::string> data_tokens() const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Tokens ordered by descending frequency, ties lexicographic; tokens seen
/// fewer than min_count times are left out (they map to UNK).
Vocab build_vocab(const std::vector<NameRecord>& records, TokenMode mode, const SyllableLexicon& lex,
                  std::size_t min_count = 1);

struct GenderCounts {
  std::uint64_t male = 0;
  std::uint64_t female = 0;

  std::uint64_t total() const { return male + female; }
  void add(Gender g) { (g == Gender::Female ? female : male) += 1; }
  GenderCounts& operator+=(const GenderCounts& o) {
    male += o.male;
    female += o.female;
    return *this;
  }
  friend bool operator==(const GenderCounts&, const GenderCounts&) = default;
};

/// Co-occurrence counts keyed by space-joined syllable sequences. Merging is
/// associative and commutative, so shards can be folded in any order.
struct NameStatistics {
  std::map<std::string, GenderCounts> name_gender;
  std::map<std::string, std::map<std::string, std::uint64_t>> pinyin_to_hanzi;
  std::map<std::string, std::map<std::string, std::uint64_t>> syllable_to_char;
  std::uint64_t records = 0;
  std::uint64_t skipped = 0;  // rows that were unparseable or unsegmentable

  void add(const NameRecord& r, const SyllableLexicon& lex);
  void merge(const NameStatistics& other);
  friend bool operator==(const NameStatistics&, const NameStatistics&) = default;
};

NameStatistics build_statistics(const std::vector<NameRecord>& records, const SyllableLexicon& lex);
/// Single pass over a records CSV; memory grows with distinct keys only.
NameStatistics build_statistics(std::istream& in, const SyllableLexicon& lex);
/// Splits the file into `shards` byte ranges on line boundaries, counts each
/// on its own thread and merges the partial results.
NameStatistics build_statistics_sharded(const std::string& path, const SyllableLexicon& lex, std::size_t shards);

struct DatasetSplit {
  std::vector<NameRecord> train, validation, test;
};

/// Seeded shuffle, then partition by largest-remainder apportionment of the
/// ratios (each part is within 1 of its exact share).
DatasetSplit split_dataset(std::vector<NameRecord> records, std::array<unsigned, 3> ratios, std::uint64_t seed);

/// Seeded shuffle into k folds whose sizes differ by at most one; the first
/// |records| mod k folds get the extra record.
std::vector<std::vector<NameRecord>> kfold_split(std::vector<NameRecord> records, std::size_t k, std::uint64_t seed);

/// Synthetic name generator settings.
struct GeneratorConfig {
  struct Character {
    std::string hanzi;
    std::string syllable;
    double p_female = 0.5;
    double weight = 1.0;  // relative sampling frequency
  };
  std::vector<Character> characters;
  std::array<double, 3> length_weights{0.1, 0.8, 0.1};  // P(1), P(2), P(3) characters
  std::size_t count = 0;
};

GeneratorConfig generator_config_from_json(const std::string& json_text);
std::string generator_config_to_json(const GeneratorConfig& cfg);

/// Options for the built-in many-to-one construction: several characters per
/// syllable with divergent gender leanings, so the pinyin alone is ambiguous
/// while the characters are informative.
struct AmbiguousCorpusOptions {
  std::size_t syllables = 40;
  std::size_t chars_per_syllable = 4;
  std::size_t count = 5000;
  /// Per-character female probabilities are drawn from these levels.
  std::vector<double> gender_levels{0.05, 0.25, 0.75, 0.95};
  /// Zipf exponent for per-syllable character frequencies.
  double zipf = 1.0;
};
GeneratorConfig ambiguous_generator_config(const AmbiguousCorpusOptions& opts, const SyllableLexicon& lex,
                                           std::uint64_t seed);

/// Each record: length from length_weights, characters by weight, gender
/// from the mean female probability of its characters.
std::vector<NameRecord> generate_synthetic(const GeneratorConfig& cfg, std::uint64_t seed);

}  // namespace pgn
