// SPDX-License-Identifier: Apache-2.0
#include "pgn/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "pgn/csv.hpp"
#include "pgn/error.hpp"
#include "pgn/rng.hpp"
#include "pgn/utf8.hpp"

namespace pgn {

std::string NameRecord::hanzi_text() const {
  std::string out;
  if (hanzi) {
    for (const auto& c : *hanzi) out += c;
  }
  return out;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::string lowercase(std::string s) {
  for (auto& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

}  // namespace

RecordColumns resolve_record_columns(const std::vector<std::string>& header) {
  const csv::Header h(header);
  return RecordColumns{h.require("pinyin"), h.require("gender"), h.find("hanzi"), h.find("source")};
}

std::variant<NameRecord, std::string> parse_record(const std::vector<std::string>& fields,
                                                   const RecordColumns& cols, const SyllableLexicon& lex) {
  auto field = [&](std::size_t i) -> std::string { return i < fields.size() ? trim(fields[i]) : std::string(); };
  NameRecord r;
  r.pinyin = lowercase(field(cols.pinyin));
  if (r.pinyin.empty()) return std::string("empty pinyin");
  if (!is_lower_letters(r.pinyin)) return "pinyin '" + r.pinyin + "' is not letters only";

  const std::string g = field(cols.gender);
  if (g == "0") {
    r.gender = Gender::Male;
  } else if (g == "1") {
    r.gender = Gender::Female;
  } else {
    return "gender '" + g + "' is not 0 or 1";
  }

  if (cols.hanzi) {
    const std::string hz = field(*cols.hanzi);
    if (!hz.empty()) {
      std::vector<std::string> chars;
      try {
        chars = utf8::split_code_points(hz);
      } catch (const InvalidInput& e) {
        return std::string("hanzi: ") + e.what();
      }
      if (chars.size() > kMaxHanziLength) {
        return "hanzi length " + std::to_string(chars.size()) + " > " + std::to_string(kMaxHanziLength);
      }
      if (!canonical_segment(r.pinyin, lex, chars.size())) {
        return "pinyin '" + r.pinyin + "' does not split into " + std::to_string(chars.size()) + " syllables";
      }
      r.hanzi = std::move(chars);
    }
  }
  if (cols.source) {
    const std::string s = field(*cols.source);
    if (!s.empty()) {
      int v = 0;
      try {
        std::size_t used = 0;
        v = std::stoi(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
      } catch (const std::exception&) {
        return "source '" + s + "' is not an integer";
      }
      r.source = v;
    }
  }
  return r;
}

RecordSet read_records(std::istream& in, const SyllableLexicon& lex) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("records file is empty (no header)");
  const RecordColumns cols = resolve_record_columns(csv::split_line(line));
  RecordSet out;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    auto parsed = parse_record(csv::split_line(line), cols, lex);
    if (auto* rec = std::get_if<NameRecord>(&parsed)) {
      out.records.push_back(std::move(*rec));
    } else {
      out.rejects.push_back({row, std::get<std::string>(parsed)});
    }
  }
  return out;
}

RecordSet read_records(const std::string& path, const SyllableLexicon& lex) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open records file: " + path);
  return read_records(in, lex);
}

void write_records(std::ostream& out, const std::vector<NameRecord>& records) {
  const bool with_source = std::any_of(records.begin(), records.end(), [](const auto& r) { return r.source.has_value(); });
  out << "pinyin,hanzi,gender" << (with_source ? ",source" : "") << '\n';
  for (const auto& r : records) {
    out << r.pinyin << ',' << csv::escape(r.hanzi_text()) << ',' << label_of(r.gender);
    if (with_source) {
      out << ',';
      if (r.source) out << *r.source;
    }
    out << '\n';
  }
}

void write_records(const std::string& path, const std::vector<NameRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write records file: " + path);
  write_records(out, records);
}

void write_rejects(std::ostream& out, const std::vector<RejectedRow>& rejects) {
  out << "row,reason\n";
  for (const auto& r : rejects) out << r.row << ',' << csv::escape(r.reason) << '\n';
}

std::vector<std::string> record_syllables(const NameRecord& r, const SyllableLexicon& lex) {
  std::optional<std::size_t> expected;
  if (r.hanzi) expected = r.hanzi->size();
  if (auto seg = canonical_segment(r.pinyin, lex, expected)) return std::move(seg->parts);
  return {};
}

std::vector<std::string> letter_tokens(std::string_view pinyin) {
  std::vector<std::string> out;
  out.reserve(pinyin.size());
  for (char c : pinyin) out.emplace_back(1, c);
  return out;
}

std::string to_string(TokenMode m) {
  switch (m) {
    case TokenMode::Syllable: return "syllable";
    case TokenMode::Letter: return "letter";
    case TokenMode::HanziChar: return "hanzi_char";
  }
  return "?";
}

TokenMode token_mode_from_string(std::string_view s) {
  if (s == "syllable") return TokenMode::Syllable;
  if (s == "letter") return TokenMode::Letter;
  if (s == "hanzi_char") return TokenMode::HanziChar;
  throw InvalidInput("unknown token mode '" + std::string(s) + "'");
}

std::vector<std::string> tokenize(const NameRecord& r, TokenMode mode, const SyllableLexicon& lex) {
  switch (mode) {
    case TokenMode::Syllable: {
      auto s = record_syllables(r, lex);
      return s.empty() ? letter_tokens(r.pinyin) : s;
    }
    case TokenMode::Letter: return letter_tokens(r.pinyin);
    case TokenMode::HanziChar: return r.hanzi ? *r.hanzi : std::vector<std::string>{};
  }
  return {};
}

const std::array<std::string, 3>& Vocab::specials() {
  static const std::array<std::string, 3> s{"[AGG]", "[PAD]", "[UNK]"};
  return s;
}

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(const std::vector<std::string>& data_tokens) {
  tokens_.assign(specials().begin(), specials().end());
  tokens_.insert(tokens_.end(), data_tokens.begin(), data_tokens.end());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw InvalidInput("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

int Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

std::vector<std::string> Vocab::data_tokens() const { return {tokens_.begin() + kNumSpecials, tokens_.end()}; }

Vocab build_vocab(const std::vector<NameRecord>& records, TokenMode mode, const SyllableLexicon& lex,
                  std::size_t min_count) {
  if (records.empty()) throw InvalidInput("cannot build a vocabulary from no records");
  std::map<std::string, std::size_t> freq;
  std::size_t seen = 0;
  for (const auto& r : records) {
    for (auto& t : tokenize(r, mode, lex)) {
      ++freq[std::move(t)];
      ++seen;
    }
  }
  if (seen == 0) throw InvalidInput("token stream is empty for mode " + to_string(mode));
  std::vector<std::pair<std::string, std::size_t>> items;
  for (auto& [tok, n] : freq) {
    if (n >= min_count) items.emplace_back(tok, n);
  }
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  tokens.reserve(items.size());
  for (auto& [tok, n] : items) tokens.push_back(tok);
  return Vocab(tokens);
}

void NameStatistics::add(const NameRecord& r, const SyllableLexicon& lex) {
  const auto syllables = record_syllables(r, lex);
  if (syllables.empty()) {
    ++skipped;
    return;
  }
  ++records;
  std::string key;
  for (std::size_t i = 0; i < syllables.size(); ++i) {
    if (i) key += ' ';
    key += syllables[i];
  }
  name_gender[key].add(r.gender);
  if (r.hanzi) {
    ++pinyin_to_hanzi[key][r.hanzi_text()];
    for (std::size_t i = 0; i < syllables.size(); ++i) ++syllable_to_char[syllables[i]][(*r.hanzi)[i]];
  }
}

void NameStatistics::merge(const NameStatistics& other) {
  for (const auto& [k, c] : other.name_gender) name_gender[k] += c;
  for (const auto& [k, m] : other.pinyin_to_hanzi) {
    auto& dst = pinyin_to_hanzi[k];
    for (const auto& [h, n] : m) dst[h] += n;
  }
  for (const auto& [k, m] : other.syllable_to_char) {
    auto& dst = syllable_to_char[k];
    for (const auto& [h, n] : m) dst[h] += n;
  }
  records += other.records;
  skipped += other.skipped;
}

NameStatistics build_statistics(const std::vector<NameRecord>& records, const SyllableLexicon& lex) {
  NameStatistics s;
  for (const auto& r : records) s.add(r, lex);
  return s;
}

namespace {

// Counts rows starting at byte offset `pos` until a line would start at or
// past `stop_at` (or EOF).
NameStatistics count_rows(std::istream& in, const RecordColumns& cols, const SyllableLexicon& lex,
                          std::streamoff pos, std::optional<std::streamoff> stop_at) {
  NameStatistics s;
  std::string line;
  while ((!stop_at || pos < *stop_at) && std::getline(in, line)) {
    pos += static_cast<std::streamoff>(line.size()) + 1;
    if (line.empty() || line == "\r") continue;
    auto parsed = parse_record(csv::split_line(line), cols, lex);
    if (auto* rec = std::get_if<NameRecord>(&parsed)) {
      s.add(*rec, lex);
    } else {
      ++s.skipped;
    }
  }
  return s;
}

}  // namespace

NameStatistics build_statistics(std::istream& in, const SyllableLexicon& lex) {
  std::string header;
  if (!std::getline(in, header)) throw InvalidInput("records stream is empty (no header)");
  return count_rows(in, resolve_record_columns(csv::split_line(header)), lex, 0, std::nullopt);
}

NameStatistics build_statistics_sharded(const std::string& path, const SyllableLexicon& lex, std::size_t shards) {
  if (shards == 0) throw InvalidInput("shard count must be positive");
  std::ifstream probe(path, std::ios::binary | std::ios::ate);
  if (!probe) throw IoError("cannot open records file: " + path);
  const std::streamoff size = probe.tellg();
  probe.seekg(0);
  std::string header;
  if (!std::getline(probe, header)) throw InvalidInput("records file is empty (no header)");
  const RecordColumns cols = resolve_record_columns(csv::split_line(header));
  const std::streamoff body = probe.tellg();

  // A shard owns every line that starts inside its byte range.
  std::vector<std::streamoff> bounds;
  for (std::size_t i = 0; i <= shards; ++i) {
    bounds.push_back(body + (size - body) * static_cast<std::streamoff>(i) / static_cast<std::streamoff>(shards));
  }
  std::vector<std::future<NameStatistics>> parts;
  for (std::size_t i = 0; i < shards; ++i) {
    parts.push_back(std::async(std::launch::async, [&, i] {
      std::ifstream in(path, std::ios::binary);
      if (!in) throw IoError("cannot open records file: " + path);
      std::streamoff start = bounds[i];
      if (start > body) {
        // Skip the partial line unless the range begins exactly at a line start.
        in.seekg(start - 1);
        std::string partial;
        std::getline(in, partial);
        start += static_cast<std::streamoff>(partial.size());
      } else {
        in.seekg(start);
      }
      return count_rows(in, cols, lex, start, bounds[i + 1]);
    }));
  }
  NameStatistics total;
  for (auto& p : parts) total.merge(p.get());
  return total;
}

DatasetSplit split_dataset(std::vector<NameRecord> records, std::array<unsigned, 3> ratios, std::uint64_t seed) {
  if (std::any_of(ratios.begin(), ratios.end(), [](unsigned r) { return r == 0; })) {
    throw InvalidInput("split ratios must all be positive");
  }
  if (records.size() < 10) throw InvalidInput("need at least 10 records to split");
  Rng rng(seed);
  rng.shuffle(records);

  const std::size_t n = records.size();
  const unsigned total = ratios[0] + ratios[1] + ratios[2];
  std::array<std::size_t, 3> sizes{};
  std::array<std::size_t, 3> remainders{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    sizes[i] = n * ratios[i] / total;
    remainders[i] = n * ratios[i] % total;
    assigned += sizes[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainders[a] > remainders[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % 3]];

  DatasetSplit out;
  auto it = std::make_move_iterator(records.begin());
  out.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes[0]));
  it += static_cast<std::ptrdiff_t>(sizes[0]);
  out.validation.assign(it, it + static_cast<std::ptrdiff_t>(sizes[1]));
  it += static_cast<std::ptrdiff_t>(sizes[1]);
  out.test.assign(it, std::make_move_iterator(records.end()));
  return out;
}

std::vector<std::vector<NameRecord>> kfold_split(std::vector<NameRecord> records, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw InvalidInput("k must be at least 2");
  if (k > records.size()) {
    throw InvalidInput("k=" + std::to_string(k) + " exceeds record count " + std::to_string(records.size()));
  }
  Rng rng(seed);
  rng.shuffle(records);
  std::vector<std::vector<NameRecord>> folds(k);
  const std::size_t base = records.size() / k;
  const std::size_t extra = records.size() % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    folds[f].assign(std::make_move_iterator(records.begin() + static_cast<std::ptrdiff_t>(pos)),
                    std::make_move_iterator(records.begin() + static_cast<std::ptrdiff_t>(pos + len)));
    pos += len;
  }
  return folds;
}

GeneratorConfig generator_config_from_json(const std::string& json_text) {
  GeneratorConfig cfg;
  try {
    const auto j = nlohmann::json::parse(json_text);
    for (const auto& c : j.at("characters")) {
      GeneratorConfig::Character ch;
      ch.hanzi = c.at("hanzi").get<std::string>();
      ch.syllable = c.at("syllable").get<std::string>();
      ch.p_female = c.at("p_female").get<double>();
      ch.weight = c.value("weight", 1.0);
      if (utf8::split_code_points(ch.hanzi).size() != 1) throw InvalidInput("hanzi must be one character: " + ch.hanzi);
      if (!is_lower_letters(ch.syllable)) throw InvalidInput("syllable must be lowercase letters: " + ch.syllable);
      if (!(ch.p_female >= 0.0 && ch.p_female <= 1.0)) throw InvalidInput("p_female outside [0,1] for " + ch.hanzi);
      if (!(ch.weight > 0.0)) throw InvalidInput("weight must be positive for " + ch.hanzi);
      cfg.characters.push_back(std::move(ch));
    }
    if (j.contains("length_weights")) {
      const auto w = j.at("length_weights").get<std::vector<double>>();
      if (w.size() != 3) throw InvalidInput("length_weights needs three entries");
      std::copy(w.begin(), w.end(), cfg.length_weights.begin());
    }
    cfg.count = j.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("generator config: ") + e.what());
  }
  return cfg;
}

std::string generator_config_to_json(const GeneratorConfig& cfg) {
  nlohmann::json j;
  j["count"] = cfg.count;
  j["length_weights"] = cfg.length_weights;
  j["characters"] = nlohmann::json::array();
  for (const auto& c : cfg.characters) {
    j["characters"].push_back({{"hanzi", c.hanzi}, {"syllable", c.syllable}, {"p_female", c.p_female}, {"weight", c.weight}});
  }
  return j.dump(2);
}

namespace {

// True when every concatenation of up to three syllables from `chosen` (at
// least one being `candidate`) splits back into its own parts.
bool joins_unambiguously(const std::vector<std::string>& chosen, const std::string& candidate,
                         const SyllableLexicon& lex) {
  std::vector<std::string> pool = chosen;
  pool.push_back(candidate);
  auto check = [&](const std::vector<std::string>& parts) {
    std::string joined;
    for (const auto& p : parts) joined += p;
    auto seg = canonical_segment(joined, lex, parts.size());
    return seg && seg->parts == parts;
  };
  for (const auto& a : pool) {
    if (!check({a, candidate}) || !check({candidate, a})) return false;
    for (const auto& b : pool) {
      if (!check({candidate, a, b}) || !check({a, candidate, b}) || !check({a, b, candidate})) return false;
    }
  }
  return true;
}

}  // namespace

GeneratorConfig ambiguous_generator_config(const AmbiguousCorpusOptions& opts, const SyllableLexicon& lex,
                                           std::uint64_t seed) {
  if (opts.syllables == 0 || opts.chars_per_syllable == 0) throw InvalidInput("need at least one syllable and character");
  if (opts.gender_levels.empty()) throw InvalidInput("gender_levels must not be empty");
  Rng rng(seed);
  auto candidates = lex.entries();
  rng.shuffle(candidates);
  std::vector<std::string> chosen;
  for (const auto& s : candidates) {
    if (chosen.size() == opts.syllables) break;
    if (joins_unambiguously(chosen, s, lex)) chosen.push_back(s);
  }
  if (chosen.size() < opts.syllables) throw InvalidInput("lexicon too small for the requested syllable count");

  GeneratorConfig cfg;
  cfg.count = opts.count;
  char32_t next_cp = 0x4E00;  // start of the CJK unified ideographs block
  for (const auto& syl : chosen) {
    for (std::size_t k = 0; k < opts.chars_per_syllable; ++k) {
      GeneratorConfig::Character ch;
      ch.hanzi = utf8::encode(next_cp++);
      ch.syllable = syl;
      ch.p_female = opts.gender_levels[rng.below(opts.gender_levels.size())];
      ch.weight = 1.0 / std::pow(static_cast<double>(k + 1), opts.zipf);
      cfg.characters.push_back(std::move(ch));
    }
  }
  return cfg;
}

std::vector<NameRecord> generate_synthetic(const GeneratorConfig& cfg, std::uint64_t seed) {
  if (cfg.characters.empty()) throw InvalidInput("generator config has no characters");
  Rng rng(seed);
  std::vector<double> weights;
  weights.reserve(cfg.characters.size());
  for (const auto& c : cfg.characters) weights.push_back(c.weight);
  const std::vector<double> length_weights(cfg.length_weights.begin(), cfg.length_weights.end());

  std::vector<NameRecord> out;
  out.reserve(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    const std::size_t len = rng.weighted(length_weights) + 1;
    NameRecord r;
    r.hanzi.emplace();
    double p = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      const auto& ch = cfg.characters[rng.weighted(weights)];
      r.pinyin += ch.syllable;
      r.hanzi->push_back(ch.hanzi);
      p += ch.p_female;
    }
    r.gender = rng.bernoulli(p / static_cast<double>(len)) ? Gender::Female : Gender::Male;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace pgn
