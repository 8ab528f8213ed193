// SPDX-License-Identifier: Apache-2.0
#include "pgn/metrics.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "pgn/csv.hpp"
#include "pgn/error.hpp"

namespace pgn {

std::string to_string(Prediction p) {
  switch (p) {
    case Prediction::Male: return "male";
    case Prediction::Female: return "female";
    case Prediction::Unknown: return "unknown";
  }
  return "?";
}

std::optional<Prediction> parse_prediction(std::string_view s) {
  std::string lower;
  for (char c : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  lower.erase(0, lower.find_first_not_of(" \t"));
  lower.erase(lower.find_last_not_of(" \t") + 1);
  if (lower == "male") return Prediction::Male;
  if (lower == "female") return Prediction::Female;
  if (lower == "unknown") return Prediction::Unknown;
  return std::nullopt;
}

void ConfusionMatrix6::add(Gender truth, Prediction predicted) {
  const bool female = truth == Gender::Female;
  switch (predicted) {
    case Prediction::Male: ++(female ? f_m : m_m); break;
    case Prediction::Female: ++(female ? f_f : m_f); break;
    case Prediction::Unknown: ++(female ? f_u : m_u); break;
  }
}

ConfusionMatrix6 tally_confusion(const std::vector<std::pair<std::string, Gender>>& truth,
                                 const std::vector<PredictionRecord>& preds) {
  // (pinyin, occurrence) -> prediction
  std::map<std::pair<std::string, std::size_t>, Prediction> keyed;
  std::map<std::string, std::size_t> seen;
  for (const auto& p : preds) keyed.emplace(std::make_pair(p.pinyin, seen[p.pinyin]++), p.predicted);

  ConfusionMatrix6 cm;
  seen.clear();
  for (const auto& [name, gender] : truth) {
    auto it = keyed.find({name, seen[name]++});
    if (it == keyed.end()) {
      throw InvalidInput("no prediction for '" + name + "' (occurrence " + std::to_string(seen[name]) + ")");
    }
    cm.add(gender, it->second);
    keyed.erase(it);
  }
  if (!keyed.empty()) throw InvalidInput("prediction for '" + keyed.begin()->first.first + "' has no truth record");
  return cm;
}

ErrorMetrics compute_error_metrics(const ConfusionMatrix6& cm) {
  const auto n = static_cast<double>(cm.total());
  if (cm.total() == 0) throw InvalidInput("confusion matrix is empty");
  ErrorMetrics e;
  e.error_coded = static_cast<double>(cm.f_m + cm.m_f + cm.m_u + cm.f_u) / n;
  e.na_coded = static_cast<double>(cm.m_u + cm.f_u) / n;
  if (const auto c = static_cast<double>(cm.classified()); c > 0) {
    e.error_coded_without_na = static_cast<double>(cm.f_m + cm.m_f) / c;
    e.error_gender_bias = (static_cast<double>(cm.m_f) - static_cast<double>(cm.f_m)) / c;
  }
  return e;
}

PrfMetrics compute_prf(const ConfusionMatrix6& cm) {
  if (cm.classified() == 0) throw InvalidInput("no classified records");
  PrfMetrics out;
  const auto mm = static_cast<double>(cm.m_m), mf = static_cast<double>(cm.m_f);
  const auto fm = static_cast<double>(cm.f_m), ff = static_cast<double>(cm.f_f);
  out.accuracy = (mm + ff) / (mm + mf + fm + ff);

  auto ratio = [&](double num, double den, const char* what) {
    if (den == 0.0) {
      out.zero_division.emplace_back(what);
      return 0.0;
    }
    return num / den;
  };
  const double p_male = ratio(mm, mm + fm, "precision_male");
  const double p_female = ratio(ff, ff + mf, "precision_female");
  const double r_male = ratio(mm, mm + mf, "recall_male");
  const double r_female = ratio(ff, ff + fm, "recall_female");
  const double f1_male = ratio(2 * p_male * r_male, p_male + r_male, "f1_male");
  const double f1_female = ratio(2 * p_female * r_female, p_female + r_female, "f1_female");
  out.precision = (p_male + p_female) / 2;
  out.recall = (r_male + r_female) / 2;
  out.f1 = (f1_male + f1_female) / 2;
  return out;
}

MetricReport make_report(const ConfusionMatrix6& cm) {
  MetricReport r;
  r.matrix = cm;
  r.errors = compute_error_metrics(cm);
  if (cm.classified() > 0) r.prf = compute_prf(cm);
  return r;
}

namespace {

std::string fmt(std::optional<double> v) {
  if (!v) return "undefined";
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << *v;
  return s.str();
}

std::string full(std::optional<double> v) {
  if (!v) return "undefined";
  std::ostringstream s;
  s << std::setprecision(17) << *v;
  return s.str();
}

std::vector<std::pair<std::string, std::optional<double>>> rows(const MetricReport& r) {
  std::vector<std::pair<std::string, std::optional<double>>> out{
      {"errorCoded", r.errors.error_coded},
      {"errorCodedWithoutNA", r.errors.error_coded_without_na},
      {"naCoded", r.errors.na_coded},
      {"errorGenderBias", r.errors.error_gender_bias},
  };
  const auto pick = [&](double PrfMetrics::*m) -> std::optional<double> {
    return r.prf ? std::optional<double>((*r.prf).*m) : std::nullopt;
  };
  out.emplace_back("accuracy", pick(&PrfMetrics::accuracy));
  out.emplace_back("precision", pick(&PrfMetrics::precision));
  out.emplace_back("recall", pick(&PrfMetrics::recall));
  out.emplace_back("f1", pick(&PrfMetrics::f1));
  return out;
}

}  // namespace

void write_report_table(std::ostream& out, const MetricReport& r) {
  const auto& m = r.matrix;
  out << "             pred_male  pred_female  pred_unknown\n";
  out << "true_male   " << std::setw(10) << m.m_m << std::setw(13) << m.m_f << std::setw(14) << m.m_u << '\n';
  out << "true_female " << std::setw(10) << m.f_m << std::setw(13) << m.f_f << std::setw(14) << m.f_u << '\n';
  for (const auto& [name, v] : rows(r)) out << std::left << std::setw(22) << name << std::right << fmt(v) << '\n';
  if (r.prf && !r.prf->zero_division.empty()) {
    out << "zero-denominator terms set to 0:";
    for (const auto& z : r.prf->zero_division) out << ' ' << z;
    out << '\n';
  }
}

void write_report_csv(std::ostream& out, const MetricReport& r) {
  out << "metric,value\n";
  const auto& m = r.matrix;
  out << "m_m," << m.m_m << "\nm_f," << m.m_f << "\nm_u," << m.m_u << "\nf_m," << m.f_m << "\nf_f," << m.f_f
      << "\nf_u," << m.f_u << '\n';
  for (const auto& [name, v] : rows(r)) out << name << ',' << full(v) << '\n';
}

PredictionSet import_predictions(std::istream& in) {
  PredictionSet out;
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("predictions file is empty (no header)");
  const csv::Header header(csv::split_line(line));
  const std::size_t name_col = header.require("pinyin");
  const std::size_t pred_col = header.require("predicted");
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const auto fields = csv::split_line(line);
    if (fields.size() <= std::max(name_col, pred_col)) {
      out.rejects.push_back({row, "too few columns"});
      continue;
    }
    auto label = parse_prediction(fields[pred_col]);
    if (!label) {
      out.rejects.push_back({row, "label '" + fields[pred_col] + "' is not male/female/unknown"});
      continue;
    }
    std::string name = fields[name_col];
    for (auto& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.predictions.push_back({std::move(name), *label});
  }
  return out;
}

PredictionSet import_predictions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open predictions file: " + path);
  return import_predictions(in);
}

void write_predictions(std::ostream& out, const std::vector<PredictionRecord>& preds,
                       const std::vector<double>* probability_female) {
  out << "pinyin,predicted" << (probability_female ? ",probability_female" : "") << '\n';
  for (std::size_t i = 0; i < preds.size(); ++i) {
    out << csv::escape(preds[i].pinyin) << ',' << to_string(preds[i].predicted);
    if (probability_female) out << ',' << std::setprecision(6) << (*probability_female)[i];
    out << '\n';
  }
}

}  // namespace pgn
