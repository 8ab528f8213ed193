// SPDX-License-Identifier: Apache-2.0
#include "pgn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "pgn/csv.hpp"
#include "pgn/error.hpp"
#include "pgn/utf8.hpp"

namespace pgn {

std::vector<LabeledName> labeled_names(const std::vector<NameRecord>& records, const SyllableLexicon& lex) {
  std::vector<LabeledName> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    auto s = record_syllables(r, lex);
    if (!s.empty()) out.push_back({std::move(s), r.gender});
  }
  return out;
}

std::string name_key(const std::vector<std::string>& syllables) {
  std::string key;
  for (std::size_t i = 0; i < syllables.size(); ++i) {
    if (i) key += ' ';
    key += syllables[i];
  }
  return key;
}

FrequencyTable frequency_fit(const std::vector<LabeledName>& names) {
  FrequencyTable t;
  for (const auto& n : names) t.counts[name_key(n.syllables)].add(n.gender);
  return t;
}

FrequencyTable frequency_table(const NameStatistics& stats) { return {stats.name_gender}; }

FrequencyGuess frequency_predict(const FrequencyTable& table, const std::vector<std::string>& syllables) {
  auto it = table.counts.find(name_key(syllables));
  if (it == table.counts.end() || it->second.total() == 0) return {};
  const auto& c = it->second;
  const double total = static_cast<double>(c.total());
  if (c.male == c.female) return {Prediction::Unknown, 0.5};
  if (c.male > c.female) return {Prediction::Male, static_cast<double>(c.male) / total};
  return {Prediction::Female, static_cast<double>(c.female) / total};
}

NaiveBayesModel nb_fit(const std::vector<LabeledName>& names, double alpha) {
  if (!(alpha > 0.0)) throw InvalidInput("Naive Bayes smoothing alpha must be > 0");
  if (names.empty()) throw InvalidInput("Naive Bayes needs at least one trainable record");
  NaiveBayesModel m;
  m.alpha = alpha;
  std::size_t female = 0;
  for (const auto& n : names) {
    female += n.gender == Gender::Female;
    for (const auto& s : n.syllables) {
      m.counts[s].add(n.gender);
      m.totals.add(n.gender);
    }
  }
  m.prior_female = static_cast<double>(female) / static_cast<double>(names.size());
  m.vocab_size = m.counts.size();
  return m;
}

NaiveBayesGuess nb_predict(const NaiveBayesModel& m, const std::vector<std::string>& syllables) {
  const double v = static_cast<double>(m.vocab_size);
  double log_f = std::log(m.prior_female);
  double log_m = std::log(1.0 - m.prior_female);
  const double den_f = std::log(static_cast<double>(m.totals.female) + m.alpha * v);
  const double den_m = std::log(static_cast<double>(m.totals.male) + m.alpha * v);
  for (const auto& s : syllables) {
    GenderCounts c;
    if (auto it = m.counts.find(s); it != m.counts.end()) c = it->second;
    log_f += std::log(static_cast<double>(c.female) + m.alpha) - den_f;
    log_m += std::log(static_cast<double>(c.male) + m.alpha) - den_m;
  }
  const double mx = std::max(log_f, log_m);
  const double log_norm = mx + std::log(std::exp(log_f - mx) + std::exp(log_m - mx));
  NaiveBayesGuess g;
  g.log_posterior_female = log_f - log_norm;
  g.posterior_female = std::exp(g.log_posterior_female);
  g.label = g.posterior_female > 0.5 ? Gender::Female : Gender::Male;
  return g;
}

std::map<std::string, CctConsensus> cct_e_step(const std::vector<CctReport>& reports,
                                               const std::map<int, double>& competences) {
  std::map<std::string, double> margin;  // > 0 favours female
  for (const auto& r : reports) {
    const double theta = competences.at(r.source);
    const double w = std::log(theta / (1.0 - theta));
    margin[r.name] += r.label == Gender::Female ? w : -w;
  }
  std::map<std::string, CctConsensus> out;
  for (const auto& [name, m] : margin) {
    const Gender label = m >= 0.0 ? Gender::Female : Gender::Male;
    out[name] = {label, 1.0 / (1.0 + std::exp(-std::abs(m)))};
  }
  return out;
}

CctModel cct_fit(const std::vector<CctReport>& reports, int max_iters, double tol, Gender na_policy) {
  if (reports.empty()) throw InvalidInput("CCT needs at least one report");
  CctModel m;
  m.na_policy = na_policy;
  for (const auto& r : reports) m.competences[r.source] = kCompetenceInit;

  for (int it = 1; it <= std::max(1, max_iters); ++it) {
    m.consensus = cct_e_step(reports, m.competences);
    std::map<int, std::pair<std::size_t, std::size_t>> agree;  // source -> (agreeing, total)
    for (const auto& r : reports) {
      auto& a = agree[r.source];
      a.first += m.consensus.at(r.name).label == r.label;
      ++a.second;
    }
    double delta = 0.0;
    for (auto& [src, theta] : m.competences) {
      const auto [ok, total] = agree[src];
      const double next = std::clamp(static_cast<double>(ok) / static_cast<double>(total), kCompetenceFloor,
                                     kCompetenceCeiling);
      delta = std::max(delta, std::abs(next - theta));
      theta = next;
    }
    m.iterations = it;
    m.history.push_back(m.competences);
    if (delta < tol) break;
  }
  m.consensus = cct_e_step(reports, m.competences);
  return m;
}

Gender cct_predict(const CctModel& model, const std::string& name) {
  auto it = model.consensus.find(name);
  return it == model.consensus.end() ? model.na_policy : it->second.label;
}

std::vector<CctReport> read_cct_reports(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open reports file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("reports file is empty (no header)");
  const csv::Header h(csv::split_line(line));
  const std::size_t src = h.require("source"), name = h.require("pinyin"), gender = h.require("gender");
  std::vector<CctReport> out;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const auto f = csv::split_line(line);
    if (f.size() <= std::max({src, name, gender})) throw InvalidInput("reports row " + std::to_string(row) + ": too few columns");
    CctReport r;
    try {
      r.source = std::stoi(f[src]);
    } catch (const std::exception&) {
      throw InvalidInput("reports row " + std::to_string(row) + ": bad source id '" + f[src] + "'");
    }
    r.name = f[name];
    for (auto& c : r.name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (f[gender] != "0" && f[gender] != "1") throw InvalidInput("reports row " + std::to_string(row) + ": gender must be 0 or 1");
    r.label = f[gender] == "1" ? Gender::Female : Gender::Male;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<CctReport> cct_reports_from_records(const std::vector<NameRecord>& records) {
  std::vector<CctReport> out;
  for (const auto& r : records) {
    if (r.source) out.push_back({*r.source, r.pinyin, r.gender});
  }
  return out;
}

namespace {

// Highest count; ties resolved to the smallest key (UTF-8 byte order is
// code-point order).
const std::string& argmax_key(const std::map<std::string, std::uint64_t>& counts) {
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

}  // namespace

std::vector<std::string> convert_to_hanzi(const NameStatistics& stats, const std::vector<std::string>& syllables) {
  if (syllables.empty()) throw InvalidInput("cannot convert an empty name");
  if (auto it = stats.pinyin_to_hanzi.find(name_key(syllables)); it != stats.pinyin_to_hanzi.end() && !it->second.empty()) {
    return utf8::split_code_points(argmax_key(it->second));
  }
  std::vector<std::string> out;
  for (const auto& s : syllables) {
    auto it = stats.syllable_to_char.find(s);
    if (it == stats.syllable_to_char.end() || it->second.empty()) {
      throw UnknownMapping("no character observed for syllable '" + s + "'");
    }
    out.push_back(argmax_key(it->second));
  }
  return out;
}

Gender conversion_predict(const NameStatistics& stats, const ModelBundle& teacher_bundle,
                          const std::vector<std::string>& syllables) {
  return predict_gender_from_hanzi(teacher_bundle, convert_to_hanzi(stats, syllables)).label;
}

}  // namespace pgn
