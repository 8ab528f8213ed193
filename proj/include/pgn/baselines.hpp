// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "pgn/corpus.hpp"
#include "pgn/metrics.hpp"
#include "pgn/neural.hpp"

namespace pgn {

/// A segmented name with its label.
struct LabeledName {
  std::vector<std::string> syllables;
  Gender gender = Gender::Male;
};

/// Segments records via record_syllables, dropping unsegmentable ones.
std::vector<LabeledName> labeled_names(const std::vector<NameRecord>& records, const SyllableLexicon& lex);

std::string name_key(const std::vector<std::string>& syllables);

// --- Frequency lookup -------------------------------------------------------

struct FrequencyTable {
  std::map<std::string, GenderCounts> counts;  // keyed by name_key
};

FrequencyTable frequency_fit(const std::vector<LabeledName>& names);
FrequencyTable frequency_table(const NameStatistics& stats);

struct FrequencyGuess {
  Prediction label = Prediction::Unknown;
  double score = 0.0;  // share of the winning gender; 0.5 on ties, 0 when unseen
};

/// Majority gender under the name; unknown on unseen names and exact ties.
FrequencyGuess frequency_predict(const FrequencyTable& table, const std::vector<std::string>& syllables);

// --- Naive Bayes over syllables ---------------------------------------------

struct NaiveBayesModel {
  double prior_female = 0.5;
  std::map<std::string, GenderCounts> counts;
  GenderCounts totals;  // syllable tokens per gender
  double alpha = 1.0;
  std::size_t vocab_size = 0;
};

/// Throws InvalidInput when `names` is empty or alpha <= 0.
NaiveBayesModel nb_fit(const std::vector<LabeledName>& names, double alpha = 1.0);

struct NaiveBayesGuess {
  Gender label = Gender::Male;  // female only when the posterior exceeds 1/2
  double posterior_female = 0.5;
  double log_posterior_female = 0.0;
};

/// Smoothed posterior prior(g) * prod_s (count(s,g) + alpha) / (total(g) + alpha * V),
/// evaluated in log space.
NaiveBayesGuess nb_predict(const NaiveBayesModel& model, const std::vector<std::string>& syllables);

// --- Simplified cultural consensus ------------------------------------------

struct CctReport {
  int source = 0;
  std::string name;
  Gender label = Gender::Male;
};

struct CctConsensus {
  Gender label = Gender::Male;
  double confidence = 0.5;  // logistic of the weighted vote margin
};

struct CctModel {
  std::map<int, double> competences;
  std::map<std::string, CctConsensus> consensus;
  Gender na_policy = Gender::Male;
  int iterations = 0;
  /// Competences after each M-step.
  std::vector<std::map<int, double>> history;
};

inline constexpr double kCompetenceFloor = 0.01;
inline constexpr double kCompetenceCeiling = 0.99;
inline constexpr double kCompetenceInit = 0.51;

/// Weighted vote per name with weights log(theta / (1 - theta)); a zero
/// margin resolves to female.
std::map<std::string, CctConsensus> cct_e_step(const std::vector<CctReport>& reports,
                                               const std::map<int, double>& competences);

/// Alternates the weighted vote with competence = agreement rate (clamped to
/// [0.01, 0.99]) until max |delta theta| < tol or max_iters is reached.
/// Throws InvalidInput on an empty report list.
CctModel cct_fit(const std::vector<CctReport>& reports, int max_iters = 100, double tol = 1e-6,
                 Gender na_policy = Gender::Male);

/// Consensus label for seen names, the NA policy otherwise.
Gender cct_predict(const CctModel& model, const std::string& name);

/// Reads `source,pinyin,gender`.
std::vector<CctReport> read_cct_reports(const std::string& path);
/// Reports from records that carry a source id.
std::vector<CctReport> cct_reports_from_records(const std::vector<NameRecord>& records);

// --- Conversion --------------------------------------------------------------

/// Most frequent hanzi name seen for the whole syllable sequence (ties go to
/// the smallest code-point sequence), else the most frequent character per
/// syllable. Throws UnknownMapping when a syllable was never seen.
std::vector<std::string> convert_to_hanzi(const NameStatistics& stats, const std::vector<std::string>& syllables);

/// Converts to hanzi and asks the teacher model.
Gender conversion_predict(const NameStatistics& stats, const ModelBundle& teacher_bundle,
                          const std::vector<std::string>& syllables);

}  // namespace pgn
