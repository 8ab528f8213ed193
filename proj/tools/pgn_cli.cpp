// SPDX-License-Identifier: Apache-2.0
// pgn: command-line front end for the pinyin name-gender toolkit.
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "config_args.hpp"
#include "pgn/baselines.hpp"
#include "pgn/checkpoint.hpp"
#include "pgn/corpus.hpp"
#include "pgn/csv.hpp"
#include "pgn/error.hpp"
#include "pgn/lexicon.hpp"
#include "pgn/metrics.hpp"
#include "pgn/neural.hpp"

namespace fs = std::filesystem;
using namespace pgn;

namespace {

struct Common {
  std::uint64_t seed = 1;
  std::string config;
  std::string lexicon;
  bool quiet = false;

  const SyllableLexicon& lex() {
    if (lexicon.empty()) return default_lexicon();
    if (!custom) custom = std::make_unique<SyllableLexicon>(load_lexicon_file(lexicon));
    return *custom;
  }

 private:
  std::unique_ptr<SyllableLexicon> custom;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Seed for every random choice");
  sub->add_option("--config", c.config, "File of `key = value` lines; command-line flags take precedence");
  sub->add_option("--lexicon", c.lexicon, "Syllable inventory (default: packaged)")->check(CLI::ExistingFile);
  sub->add_flag("--quiet", c.quiet, "Suppress the banner and progress output");
}

struct TrainFlags {
  TrainConfig cfg;
  std::string tokenizer = "syllable";
  bool no_pre = false, no_name = false, no_feature = false, no_response = false;
  bool joint_teacher = false;

  TrainConfig resolve(std::uint64_t seed) const {
    TrainConfig c = cfg;
    c.seed = seed;
    c.tokenizer = token_mode_from_string(tokenizer);
    if (c.tokenizer == TokenMode::HanziChar) throw InvalidInput("tokenizer must be syllable or letter");
    c.switches = {!no_pre, !no_name, !no_feature, !no_response};
    c.stop_teacher_gradient = !joint_teacher;
    if (c.d <= 0 || c.batch_size <= 0 || c.max_len <= 0 || c.letter_max_len <= 0 || c.epochs < 0)
      throw InvalidInput("dim, batch-size, max-len and letter-max-len must be positive; epochs non-negative");
    return c;
  }
};

void add_train_flags(CLI::App* sub, TrainFlags& t) {
  sub->add_option("--dim", t.cfg.d, "Encoder width");
  sub->add_option("--max-len", t.cfg.max_len, "Syllable positions");
  sub->add_option("--letter-max-len", t.cfg.letter_max_len, "Positions in letter mode");
  sub->add_option("--batch-size", t.cfg.batch_size);
  sub->add_option("--lr", t.cfg.learning_rate, "Adam learning rate");
  sub->add_option("--beta1", t.cfg.beta1);
  sub->add_option("--beta2", t.cfg.beta2);
  sub->add_option("--adam-eps", t.cfg.adam_epsilon);
  sub->add_option("--epochs", t.cfg.epochs);
  sub->add_option("--min-count", t.cfg.min_count, "Rarer tokens map to [UNK]");
  sub->add_option("--tokenizer", t.tokenizer, "syllable or letter")->check(CLI::IsMember({"syllable", "letter"}));
  sub->add_flag("--no-pre", t.no_pre, "Drop the character prediction loss");
  sub->add_flag("--no-name", t.no_name, "Drop the teacher gender loss");
  sub->add_flag("--no-feature", t.no_feature, "Drop feature distillation");
  sub->add_flag("--no-response", t.no_response, "Drop response distillation");
  sub->add_flag("--joint-teacher", t.joint_teacher, "Let distillation gradients reach the teacher");
}

std::string option_value(const CLI::Option* o) {
  if (o->get_expected_min() == 0) return o->count() && o->as<bool>() ? "true" : "false";
  if (o->count() == 0) return o->get_default_str();
  if (o->get_expected_max() == 1) return o->as<std::string>();
  std::string v;
  for (const auto& r : o->results()) v += (v.empty() ? "" : " ") + r;
  return v;
}

/// Prints the subcommand's settings in config-file syntax, so a run can be
/// repeated with --config.
void banner(const CLI::App* sub, const Common& c) {
  if (c.quiet) return;
  std::cerr << "# pgn " << sub->get_name() << " effective configuration\n";
  for (const CLI::Option* o : sub->get_options()) {
    const std::string name = o->get_single_name();
    if (name == "help" || name == "config" || name == "quiet" || o->get_lnames().empty()) continue;
    const std::string v = option_value(o);
    if (!v.empty()) std::cerr << o->get_lnames().front() << " = " << v << '\n';
  }
}

void ensure_distinct(const std::vector<std::string>& inputs, const std::string& output) {
  if (output.empty() || output == "-") return;
  std::error_code ec;
  const auto out = fs::weakly_canonical(output, ec);
  for (const auto& in : inputs) {
    if (in.empty()) continue;
    if (fs::weakly_canonical(in, ec) == out) throw InvalidInput("output " + output + " would overwrite input " + in);
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

RecordSet load_records(const std::string& path, const SyllableLexicon& lex, bool quiet) {
  auto set = read_records(path, lex);
  if (!quiet && !set.rejects.empty())
    std::cerr << path << ": " << set.rejects.size() << " rejected row(s), first at row " << set.rejects.front().row
              << ": " << set.rejects.front().reason << '\n';
  return set;
}

/// Seeded 10% holdout for model selection when no validation file is given.
std::pair<std::vector<NameRecord>, std::vector<NameRecord>> carve_holdout(std::vector<NameRecord> records,
                                                                          std::uint64_t seed) {
  Rng rng(seed ^ 0x5EEDF00Dull);
  rng.shuffle(records);
  const std::size_t n_val = records.size() >= 2 ? std::max<std::size_t>(1, records.size() / 10) : 0;
  std::vector<NameRecord> val(records.end() - static_cast<long>(n_val), records.end());
  records.resize(records.size() - n_val);
  return {std::move(records), std::move(val)};
}

std::vector<std::pair<std::string, Gender>> truth_of(const std::vector<NameRecord>& records) {
  std::vector<std::pair<std::string, Gender>> t;
  for (const auto& r : records) t.emplace_back(r.pinyin, r.gender);
  return t;
}

void report(const MetricReport& r, const std::string& csv_path) {
  write_report_table(std::cout, r);
  if (!csv_path.empty()) {
    auto out = open_out(csv_path);
    write_report_csv(out, r);
  }
}

/// Inference-time syllables for the lookup baselines: the canonical split,
/// or the raw string as a single (unseen) token when it cannot be split.
std::vector<std::string> query_syllables(const std::string& pinyin, const SyllableLexicon& lex) {
  if (auto seg = canonical_segment(pinyin, lex)) return seg->parts;
  return {pinyin};
}

TrainResult run_training(const std::vector<NameRecord>& train_set, const std::vector<NameRecord>& val_set,
                         const SyllableLexicon& lex, const TrainConfig& cfg, bool quiet, const std::string& tag) {
  auto bundle = init_bundle(train_set, lex, cfg);
  return train(bundle, train_set, val_set, lex, cfg, [&](const EpochTrace& t) {
    if (quiet) return;
    std::cerr << tag << "epoch " << t.epoch << " total " << std::fixed << std::setprecision(4) << t.loss.total
              << " pinyin " << t.loss.l_pinyin << " val_acc " << t.val_acc << std::defaultfloat << '\n';
  });
}

// --- subcommands ------------------------------------------------------------

int cmd_segment(Common& c, const std::vector<std::string>& names) {
  const auto& lex = c.lex();
  for (const auto& raw : names) {
    std::string name = raw;
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::tolower(ch); });
    const auto canonical = canonical_segment(name, lex);
    if (!canonical) {
      std::cout << name << ": no segmentation\n";
      continue;
    }
    std::cout << canonical->joined(" ") << '\n';
    if (c.quiet) continue;
    for (const auto& s : segment_all(name, lex))
      if (s != *canonical) std::cout << "  " << s.joined(" ") << '\n';
  }
  return 0;
}

int cmd_ingest(Common& c, const std::string& data, const std::string& out, const std::string& rejects) {
  ensure_distinct({data}, out);
  ensure_distinct({data}, rejects);
  const auto set = read_records(data, c.lex());
  if (!out.empty()) {
    auto f = open_out(out);
    write_records(f, set.records);
  }
  if (!rejects.empty()) {
    auto f = open_out(rejects);
    write_rejects(f, set.rejects);
  } else if (!c.quiet) {
    write_rejects(std::cerr, set.rejects);
  }
  std::cout << "accepted " << set.records.size() << "\nrejected " << set.rejects.size() << '\n';
  return 0;
}

int cmd_stats(Common& c, const std::string& data, std::size_t shards, std::size_t top, const std::string& out) {
  ensure_distinct({data}, out);
  const auto stats = build_statistics_sharded(data, c.lex(), std::max<std::size_t>(1, shards));
  std::cout << "records " << stats.records << "\nskipped " << stats.skipped << "\ndistinct_names "
            << stats.name_gender.size() << "\ndistinct_syllables " << stats.syllable_to_char.size()
            << "\ndistinct_hanzi_names ";
  std::size_t hanzi_names = 0;
  for (const auto& [k, m] : stats.pinyin_to_hanzi) hanzi_names += m.size();
  std::cout << hanzi_names << '\n';

  std::vector<std::pair<std::string, GenderCounts>> names(stats.name_gender.begin(), stats.name_gender.end());
  std::stable_sort(names.begin(), names.end(),
                   [](const auto& a, const auto& b) { return a.second.total() > b.second.total(); });
  for (std::size_t i = 0; i < std::min(top, names.size()); ++i)
    std::cout << "  " << names[i].first << "  male " << names[i].second.male << "  female " << names[i].second.female
              << '\n';
  if (!out.empty()) {
    auto f = open_out(out);
    f << "pinyin,male,female\n";
    for (const auto& [k, g] : stats.name_gender) f << csv::escape(k) << ',' << g.male << ',' << g.female << '\n';
  }
  return 0;
}

struct SynthFlags {
  std::string out, generator, save_generator;
  AmbiguousCorpusOptions opts;
};

int cmd_synth(Common& c, const SynthFlags& s) {
  ensure_distinct({s.generator}, s.out);
  GeneratorConfig cfg;
  if (!s.generator.empty()) {
    std::ifstream in(s.generator, std::ios::binary);
    if (!in) throw IoError("cannot read " + s.generator);
    std::ostringstream text;
    text << in.rdbuf();
    cfg = generator_config_from_json(text.str());
  } else {
    cfg = ambiguous_generator_config(s.opts, c.lex(), c.seed);
  }
  cfg.count = s.opts.count;
  if (!s.save_generator.empty()) {
    auto f = open_out(s.save_generator);
    f << generator_config_to_json(cfg) << '\n';
  }
  const auto records = generate_synthetic(cfg, c.seed + 1);
  if (s.out.empty() || s.out == "-") {
    write_records(std::cout, records);
  } else {
    write_records(s.out, records);
    if (!c.quiet) std::cerr << "wrote " << records.size() << " records to " << s.out << '\n';
  }
  return 0;
}

int cmd_train(Common& c, const TrainFlags& tf, const std::string& data, const std::string& val,
              const std::string& checkpoint, const std::string& trace) {
  ensure_distinct({data, val}, checkpoint);
  ensure_distinct({data, val}, trace);
  const auto cfg = tf.resolve(c.seed);
  const auto& lex = c.lex();
  auto records = load_records(data, lex, c.quiet).records;
  std::vector<NameRecord> validation;
  if (val.empty()) {
    std::tie(records, validation) = carve_holdout(std::move(records), c.seed);
  } else {
    validation = load_records(val, lex, c.quiet).records;
  }
  if (records.empty()) throw InvalidInput("no trainable records in " + data);
  const auto res = run_training(records, validation, lex, cfg, c.quiet, "");
  save_checkpoint(checkpoint, res.best);
  if (!trace.empty()) {
    auto f = open_out(trace);
    write_trace_csv(f, res.trace);
  }
  std::cout << "best_epoch " << res.best_epoch << "\nbest_val_acc " << res.best_val_acc << "\ncheckpoint "
            << checkpoint << '\n';
  return 0;
}

int cmd_eval(Common& c, const std::string& checkpoint, const std::string& test, const std::string& out,
             const std::string& report_csv) {
  ensure_distinct({checkpoint, test}, out);
  ensure_distinct({checkpoint, test}, report_csv);
  const auto bundle = load_checkpoint(checkpoint);
  const auto& lex = c.lex();
  const auto records = load_records(test, lex, c.quiet).records;
  std::vector<std::string> names;
  for (const auto& r : records) names.push_back(r.pinyin);
  const auto guesses = predict_genders(bundle, names, lex);
  std::vector<PredictionRecord> preds;
  std::vector<double> prob;
  for (std::size_t i = 0; i < names.size(); ++i) {
    preds.push_back({names[i], prediction_of(guesses[i].label)});
    prob.push_back(guesses[i].probability_female);
  }
  if (!out.empty()) {
    auto f = open_out(out);
    write_predictions(f, preds, &prob);
  }
  report(make_report(tally_confusion(truth_of(records), preds)), report_csv);
  return 0;
}

std::vector<std::string> read_name_list(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::vector<std::string> names;
  std::string line;
  std::optional<std::size_t> column;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      first = false;
      const csv::Header h(csv::split_line(line));
      if ((column = h.find("pinyin"))) continue;
    }
    if (line.empty()) continue;
    if (column) {
      const auto fields = csv::split_line(line);
      if (*column >= fields.size()) throw InvalidInput(path + ": row without a pinyin field");
      names.push_back(fields[*column]);
    } else {
      names.push_back(line);
    }
  }
  return names;
}

int cmd_predict(Common& c, const std::string& checkpoint, std::vector<std::string> names, const std::string& input,
                const std::string& out) {
  ensure_distinct({checkpoint, input}, out);
  const auto bundle = load_checkpoint(checkpoint);
  if (!input.empty()) {
    auto more = read_name_list(input);
    names.insert(names.end(), more.begin(), more.end());
  }
  if (names.empty()) throw InvalidInput("no names given (use positional names or --input)");
  const auto guesses = predict_genders(bundle, names, c.lex());
  std::vector<PredictionRecord> preds;
  std::vector<double> prob;
  for (std::size_t i = 0; i < names.size(); ++i) {
    preds.push_back({names[i], prediction_of(guesses[i].label)});
    prob.push_back(guesses[i].probability_female);
  }
  if (out.empty() || out == "-") {
    write_predictions(std::cout, preds, &prob);
  } else {
    auto f = open_out(out);
    write_predictions(f, preds, &prob);
  }
  return 0;
}

struct BaselineFlags {
  std::string method, train, test, reports, checkpoint, out, report_csv;
  std::string na = "male";
  double alpha = 1.0;
};

int cmd_baseline(Common& c, const BaselineFlags& b) {
  ensure_distinct({b.train, b.test, b.reports, b.checkpoint}, b.out);
  ensure_distinct({b.train, b.test, b.reports, b.checkpoint}, b.report_csv);
  const auto& lex = c.lex();
  const auto test = load_records(b.test, lex, c.quiet).records;
  std::vector<PredictionRecord> preds;

  if (b.method == "freq" || b.method == "nb") {
    if (b.train.empty()) throw InvalidInput("--train is required for " + b.method);
    const auto names = labeled_names(load_records(b.train, lex, c.quiet).records, lex);
    if (b.method == "freq") {
      const auto table = frequency_fit(names);
      for (const auto& r : test) preds.push_back({r.pinyin, frequency_predict(table, query_syllables(r.pinyin, lex)).label});
    } else {
      const auto model = nb_fit(names, b.alpha);
      for (const auto& r : test)
        preds.push_back({r.pinyin, prediction_of(nb_predict(model, query_syllables(r.pinyin, lex)).label)});
    }
  } else if (b.method == "cct") {
    std::vector<CctReport> reports;
    if (!b.reports.empty()) {
      reports = read_cct_reports(b.reports);
    } else if (!b.train.empty()) {
      reports = cct_reports_from_records(load_records(b.train, lex, c.quiet).records);
    } else {
      throw InvalidInput("cct needs --reports or a --train file with a source column");
    }
    const auto model = cct_fit(reports, 100, 1e-6, b.na == "female" ? Gender::Female : Gender::Male);
    if (!c.quiet) std::cerr << "cct converged after " << model.iterations << " iteration(s)\n";
    for (const auto& r : test) preds.push_back({r.pinyin, prediction_of(cct_predict(model, r.pinyin))});
  } else if (b.method == "conversion") {
    if (b.train.empty() || b.checkpoint.empty()) throw InvalidInput("conversion needs --train and --checkpoint");
    std::ifstream in(b.train, std::ios::binary);
    if (!in) throw IoError("cannot read " + b.train);
    const auto stats = build_statistics(in, lex);
    const auto bundle = load_checkpoint(b.checkpoint);
    std::size_t unmapped = 0;
    for (const auto& r : test) {
      try {
        preds.push_back({r.pinyin, prediction_of(conversion_predict(stats, bundle, query_syllables(r.pinyin, lex)))});
      } catch (const UnknownMapping&) {
        preds.push_back({r.pinyin, Prediction::Unknown});
        ++unmapped;
      }
    }
    if (!c.quiet && unmapped) std::cerr << unmapped << " name(s) had unseen syllables and were marked unknown\n";
  }

  if (!b.out.empty()) {
    auto f = open_out(b.out);
    write_predictions(f, preds);
  }
  report(make_report(tally_confusion(truth_of(test), preds)), b.report_csv);
  return 0;
}

int cmd_cv(Common& c, const TrainFlags& tf, const std::string& data, std::size_t k) {
  const auto cfg = tf.resolve(c.seed);
  const auto& lex = c.lex();
  const auto folds = kfold_split(load_records(data, lex, c.quiet).records, k, c.seed);
  std::vector<double> acc, err, f1;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    std::vector<NameRecord> rest;
    for (std::size_t j = 0; j < folds.size(); ++j)
      if (j != i) rest.insert(rest.end(), folds[j].begin(), folds[j].end());
    auto [train_set, val_set] = carve_holdout(std::move(rest), c.seed + i);
    const auto res = run_training(train_set, val_set, lex, cfg, c.quiet, "fold " + std::to_string(i + 1) + " ");
    std::vector<std::string> names;
    for (const auto& r : folds[i]) names.push_back(r.pinyin);
    const auto guesses = predict_genders(res.best, names, lex);
    std::vector<PredictionRecord> preds;
    for (std::size_t n = 0; n < names.size(); ++n) preds.push_back({names[n], prediction_of(guesses[n].label)});
    const auto rep = make_report(tally_confusion(truth_of(folds[i]), preds));
    acc.push_back(rep.prf->accuracy);
    f1.push_back(rep.prf->f1);
    err.push_back(rep.errors.error_coded);
    std::cout << "fold " << i + 1 << " accuracy " << acc.back() << " f1 " << f1.back() << " errorCoded " << err.back()
              << '\n';
  }
  auto summary = [](const char* name, const std::vector<double>& v) {
    double mean = 0, var = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    std::cout << name << " mean " << mean << " sd " << sd << '\n';
  };
  summary("accuracy", acc);
  summary("f1", f1);
  summary("errorCoded", err);
  return 0;
}

int cmd_gradcheck(Common& c, const TrainFlags& tf, const std::string& data, std::size_t batch_size, double eps,
                  std::size_t coords, double tolerance) {
  const auto& lex = c.lex();
  auto cfg = tf.resolve(c.seed);
  std::vector<NameRecord> records;
  if (!data.empty()) {
    records = load_records(data, lex, c.quiet).records;
  } else {
    AmbiguousCorpusOptions opts;
    opts.syllables = 12;
    auto g = ambiguous_generator_config(opts, lex, c.seed);
    g.count = 64;
    records = generate_synthetic(g, c.seed + 1);
  }
  std::erase_if(records, [](const NameRecord& r) { return !r.hanzi; });
  if (records.size() < batch_size) throw InvalidInput("not enough records with hanzi for the batch");
  Rng rng(c.seed);
  rng.shuffle(records);
  records.resize(batch_size);
  const auto bundle = init_bundle(records, lex, cfg);
  const auto examples = make_examples(records, bundle, lex);

  const std::vector<std::pair<std::string, LossSwitches>> variants = {
      {"configured", cfg.switches},
      {"full", LossSwitches::full()},
      {"w/o logits", LossSwitches::without_logits()},
      {"w/o logits&feat", LossSwitches::without_logits_and_feature()},
      {"w/o distill&namepre", LossSwitches::without_distill_and_namepre()}};
  double worst = 0.0;
  for (const auto& [name, sw] : variants) {
    const auto r = gradient_check(bundle.student, bundle.teacher, examples, {sw, cfg.stop_teacher_gradient}, eps,
                                  coords, c.seed);
    worst = std::max(worst, r.max_relative_error);
    std::cout << std::left << std::setw(22) << name << " max_rel_error " << std::scientific << std::setprecision(3)
              << r.max_relative_error << std::defaultfloat << " coords " << r.coordinates << " worst "
              << r.worst_parameter << '\n';
  }
  if (worst >= tolerance) throw RuntimeFailure("gradient check exceeded tolerance " + std::to_string(tolerance));
  return 0;
}

int cmd_import(Common& c, const std::string& preds_path, const std::string& truth, const std::string& rejects,
               const std::string& report_csv) {
  ensure_distinct({preds_path, truth}, rejects);
  ensure_distinct({preds_path, truth}, report_csv);
  const auto preds = import_predictions(preds_path);
  if (!rejects.empty()) {
    auto f = open_out(rejects);
    write_rejects(f, preds.rejects);
  } else if (!preds.rejects.empty() && !c.quiet) {
    std::cerr << preds.rejects.size() << " prediction row(s) rejected:\n";
    write_rejects(std::cerr, preds.rejects);
  }
  const auto records = load_records(truth, c.lex(), c.quiet).records;
  report(make_report(tally_confusion(truth_of(records), preds.predictions)), report_csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gender inference for pinyin given names"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Common common;
  std::vector<std::string> names;

  auto* seg = app.add_subcommand("segment", "Split pinyin names into syllables");
  seg->add_option("names", names, "Pinyin names")->required();
  add_common(seg, common);

  std::string data, out, rejects_path, val, checkpoint, trace, test, report_csv, input;
  auto* ingest = app.add_subcommand("ingest", "Validate a records CSV");
  ingest->add_option("--data", data)->required()->check(CLI::ExistingFile);
  ingest->add_option("--out", out, "Accepted records");
  ingest->add_option("--rejects", rejects_path, "Rejects report (row,reason)");
  add_common(ingest, common);

  std::size_t shards = 1, top = 10;
  auto* stats = app.add_subcommand("stats", "Name and character co-occurrence counts");
  stats->add_option("--data", data)->required()->check(CLI::ExistingFile);
  stats->add_option("--shards", shards, "Parallel byte-range shards");
  stats->add_option("--top", top, "Most frequent names to list");
  stats->add_option("--out", out, "Per-name gender counts CSV");
  add_common(stats, common);

  SynthFlags sf;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--out", sf.out, "Records CSV (default stdout)");
  synth->add_option("--generator", sf.generator, "Generator JSON")->check(CLI::ExistingFile);
  synth->add_option("--save-generator", sf.save_generator, "Write the generator JSON used");
  synth->add_option("--count", sf.opts.count);
  synth->add_option("--syllables", sf.opts.syllables);
  synth->add_option("--chars-per-syllable", sf.opts.chars_per_syllable);
  synth->add_option("--zipf", sf.opts.zipf, "Character frequency exponent");
  add_common(synth, common);

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "Train the student and teacher models");
  train_cmd->add_option("--data", data)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--val", val, "Validation records (default: 10% holdout of --data)")->check(CLI::ExistingFile);
  train_cmd->add_option("--checkpoint", checkpoint)->required();
  train_cmd->add_option("--trace", trace, "Per-epoch loss CSV");
  add_train_flags(train_cmd, tf);
  add_common(train_cmd, common);

  auto* eval = app.add_subcommand("eval", "Score a checkpoint on labelled records");
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--test", test)->required()->check(CLI::ExistingFile);
  eval->add_option("--out", out, "Predictions CSV");
  eval->add_option("--report-csv", report_csv, "metric,value CSV");
  add_common(eval, common);

  auto* predict = app.add_subcommand("predict", "Predict gender for names");
  predict->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  predict->add_option("names", names, "Pinyin names");
  predict->add_option("--input", input, "Names file (one per line, or CSV with a pinyin column)")
      ->check(CLI::ExistingFile);
  predict->add_option("--out", out, "Predictions CSV (default stdout)");
  add_common(predict, common);

  BaselineFlags bf;
  auto* baseline = app.add_subcommand("baseline", "Fit and score a non-neural baseline");
  baseline->add_option("method,--method", bf.method, "freq, nb, cct or conversion")
      ->required()
      ->check(CLI::IsMember({"freq", "nb", "cct", "conversion"}));
  baseline->add_option("--train", bf.train)->check(CLI::ExistingFile);
  baseline->add_option("--test", bf.test)->required()->check(CLI::ExistingFile);
  baseline->add_option("--reports", bf.reports, "CCT reports CSV (source,pinyin,gender)")->check(CLI::ExistingFile);
  baseline->add_option("--checkpoint", bf.checkpoint, "Teacher for conversion")->check(CLI::ExistingFile);
  baseline->add_option("--na", bf.na, "CCT label for unseen names")->check(CLI::IsMember({"male", "female"}));
  baseline->add_option("--alpha", bf.alpha, "Naive Bayes smoothing");
  baseline->add_option("--out", bf.out, "Predictions CSV");
  baseline->add_option("--report-csv", bf.report_csv, "metric,value CSV");
  add_common(baseline, common);

  std::size_t k = 5;
  auto* cv = app.add_subcommand("cv", "k-fold cross validation of the neural model");
  cv->add_option("--data", data)->required()->check(CLI::ExistingFile);
  cv->add_option("--k", k)->check(CLI::Range(2, 1000));
  add_train_flags(cv, tf);
  add_common(cv, common);

  std::size_t gc_batch = 4, gc_coords = 1000;
  double gc_eps = 1e-4, gc_tol = 1e-3;
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  gradcheck->add_option("--data", data, "Records to draw the batch from (default: synthetic)")
      ->check(CLI::ExistingFile);
  gradcheck->add_option("--batch", gc_batch)->check(CLI::Range(1, 8));
  gradcheck->add_option("--eps", gc_eps);
  gradcheck->add_option("--coords", gc_coords, "Minimum sampled coordinates");
  gradcheck->add_option("--tolerance", gc_tol);
  add_train_flags(gradcheck, tf);
  add_common(gradcheck, common);

  std::string preds_path;
  auto* import = app.add_subcommand("import-preds", "Score an external predictions CSV");
  import->add_option("--preds", preds_path, "pinyin,predicted CSV")->required()->check(CLI::ExistingFile);
  import->add_option("--truth", test, "Labelled records")->required()->check(CLI::ExistingFile);
  import->add_option("--rejects", rejects_path);
  import->add_option("--report-csv", report_csv);
  add_common(import, common);

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (!args.empty()) {
      if (CLI::App* sub = app.get_subcommand_no_throw(args.front())) {
        std::vector<std::string> rest(args.begin() + 1, args.end());
        rest = cli::expand_config(rest, [&](const std::string& key) {
          return sub->get_option_no_throw("--" + key) != nullptr;
        });
        rest.insert(rest.begin(), args.front());
        args = std::move(rest);
      }
    }
    std::reverse(args.begin(), args.end());  // CLI11 consumes a reversed vector
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    banner(sub, common);
    if (sub == seg) return cmd_segment(common, names);
    if (sub == ingest) return cmd_ingest(common, data, out, rejects_path);
    if (sub == stats) return cmd_stats(common, data, shards, top, out);
    if (sub == synth) return cmd_synth(common, sf);
    if (sub == train_cmd) return cmd_train(common, tf, data, val, checkpoint, trace);
    if (sub == eval) return cmd_eval(common, checkpoint, test, out, report_csv);
    if (sub == predict) return cmd_predict(common, checkpoint, names, input, out);
    if (sub == baseline) return cmd_baseline(common, bf);
    if (sub == cv) return cmd_cv(common, tf, data, k);
    if (sub == gradcheck) return cmd_gradcheck(common, tf, data, gc_batch, gc_eps, gc_coords, gc_tol);
    if (sub == import) return cmd_import(common, preds_path, test, rejects_path, report_csv);
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const RuntimeFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
