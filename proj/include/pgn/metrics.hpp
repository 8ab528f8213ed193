// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "pgn/corpus.hpp"

namespace pgn {

enum class Prediction : std::uint8_t { Male, Female, Unknown };

std::string to_string(Prediction p);
/// Case-insensitive male/female/unknown; anything else is nullopt.
std::optional<Prediction> parse_prediction(std::string_view s);
inline Prediction prediction_of(Gender g) { return g == Gender::Female ? Prediction::Female : Prediction::Male; }

struct PredictionRecord {
  std::string pinyin;
  Prediction predicted = Prediction::Unknown;
  friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

/// Rows: true class (male, female). Columns: predicted (male, female, unknown).
struct ConfusionMatrix6 {
  std::uint64_t m_m = 0, m_f = 0, m_u = 0;
  std::uint64_t f_m = 0, f_f = 0, f_u = 0;

  std::uint64_t total() const { return m_m + m_f + m_u + f_m + f_f + f_u; }
  std::uint64_t classified() const { return m_m + m_f + f_m + f_f; }
  void add(Gender truth, Prediction predicted);
  friend bool operator==(const ConfusionMatrix6&, const ConfusionMatrix6&) = default;
};

/// Error-rate metrics over all records, with "unknown" counted as an error
/// by error_coded. Fields that need classified records are nullopt when
/// there are none.
struct ErrorMetrics {
  double error_coded = 0.0;
  std::optional<double> error_coded_without_na;
  double na_coded = 0.0;
  std::optional<double> error_gender_bias;  // > 0: males misclassified more often
};

/// Precision/recall/F1 macro-averaged over male and female, on classified
/// records only.
struct PrfMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  /// Per-class values that hit a zero denominator and were set to 0.
  std::vector<std::string> zero_division;
};

struct MetricReport {
  ConfusionMatrix6 matrix;
  ErrorMetrics errors;
  std::optional<PrfMetrics> prf;  // absent when nothing was classified
};

/// Pairs each truth entry with the prediction for the same pinyin and
/// occurrence index (so the two lists may be in different orders). Throws
/// InvalidInput when a truth entry has no prediction or a prediction is left
/// over.
ConfusionMatrix6 tally_confusion(const std::vector<std::pair<std::string, Gender>>& truth,
                                 const std::vector<PredictionRecord>& preds);

/// Throws InvalidInput on an empty matrix.
ErrorMetrics compute_error_metrics(const ConfusionMatrix6& cm);
/// Throws InvalidInput when nothing was classified.
PrfMetrics compute_prf(const ConfusionMatrix6& cm);
MetricReport make_report(const ConfusionMatrix6& cm);

void write_report_table(std::ostream& out, const MetricReport& report);
/// `metric,value` rows; undefined values are written as `undefined`.
void write_report_csv(std::ostream& out, const MetricReport& report);

struct PredictionSet {
  std::vector<PredictionRecord> predictions;
  std::vector<RejectedRow> rejects;
};

/// Header must contain `pinyin,predicted`; other columns are ignored.
PredictionSet import_predictions(std::istream& in);
PredictionSet import_predictions(const std::string& path);

/// Writes `pinyin,predicted[,probability_female]`.
void write_predictions(std::ostream& out, const std::vector<PredictionRecord>& preds,
                       const std::vector<double>* probability_female = nullptr);

}  // namespace pgn
