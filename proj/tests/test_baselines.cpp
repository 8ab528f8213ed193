// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "oracles.hpp"
#include "pgn/baselines.hpp"
#include "pgn/error.hpp"

using namespace pgn;
using pgn::testing::oracle_log_posterior_female;

namespace {

LabeledName ln(std::vector<std::string> s, Gender g) { return {std::move(s), g}; }

}  // namespace

TEST_CASE("frequency lookup") {
  std::vector<LabeledName> names;
  for (int i = 0; i < 7; ++i) names.push_back(ln({"wei"}, Gender::Male));
  for (int i = 0; i < 3; ++i) names.push_back(ln({"wei"}, Gender::Female));
  for (int i = 0; i < 5; ++i) names.push_back(ln({"xin"}, Gender::Male));
  for (int i = 0; i < 5; ++i) names.push_back(ln({"xin"}, Gender::Female));
  const auto t = frequency_fit(names);
  const auto wei = frequency_predict(t, {"wei"});
  CHECK(wei.label == Prediction::Male);
  CHECK(wei.score == doctest::Approx(0.7));
  CHECK(frequency_predict(t, {"xin"}).label == Prediction::Unknown);
  CHECK(frequency_predict(t, {"yan"}).label == Prediction::Unknown);
  CHECK(frequency_predict(t, {"wei", "xin"}).label == Prediction::Unknown);
}

TEST_CASE("Naive Bayes fitting") {
  std::vector<LabeledName> names = {ln({"yan"}, Gender::Female), ln({"yan"}, Gender::Female),
                                    ln({"yan"}, Gender::Female), ln({"yan"}, Gender::Male)};
  const auto m = nb_fit(names);
  CHECK(m.prior_female == 0.75);
  CHECK(m.counts.at("yan") == GenderCounts{1, 3});
  CHECK_THROWS_AS(nb_fit({}), InvalidInput);
  CHECK_THROWS_AS(nb_fit(names, 0.0), InvalidInput);
}

TEST_CASE("Naive Bayes hand case") {
  // Female syllables {yan:3, li:1}, male {yan:1, li:3}, equal priors.
  std::vector<LabeledName> names = {ln({"yan", "yan"}, Gender::Female), ln({"yan", "li"}, Gender::Female),
                                    ln({"yan", "li"}, Gender::Male), ln({"li", "li"}, Gender::Male)};
  const auto m = nb_fit(names);
  CHECK(m.vocab_size == 2);
  const auto g = nb_predict(m, {"yan"});
  CHECK(std::abs(g.posterior_female - 2.0 / 3.0) < 1e-15);
  CHECK(g.label == Gender::Female);
  const auto unseen = nb_predict(m, {"zhuang", "qiong"});
  CHECK(std::abs(unseen.posterior_female - 0.5) < 1e-15);
}

TEST_CASE("Naive Bayes matches an exact rational oracle") {
  const std::vector<std::string> syl = {"yan", "li", "wei", "jian", "guo", "xin", "hua"};
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<LabeledName> train;
    const std::size_t n = 2 + rng.below(99);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::string> s;
      for (std::size_t k = 0, len = 1 + rng.below(3); k < len; ++k) s.push_back(syl[rng.below(5)]);
      train.push_back(ln(s, i == 0 ? Gender::Male : i == 1 ? Gender::Female : gender_from_label(rng.bernoulli(0.4))));
    }
    const auto model = nb_fit(train);
    for (int q = 0; q < 10; ++q) {
      std::vector<std::string> query;
      for (std::size_t k = 0, len = 1 + rng.below(3); k < len; ++k) query.push_back(syl[rng.below(syl.size())]);
      const auto got = nb_predict(model, query);
      const auto want = oracle_log_posterior_female(train, query);
      CHECK(std::abs(got.log_posterior_female - want.convert_to<double>()) <= 1e-12);
    }
  }
}

TEST_CASE("Naive Bayes is invariant to record order") {
  std::vector<LabeledName> names = {ln({"yan"}, Gender::Female), ln({"li", "wei"}, Gender::Male),
                                    ln({"wei"}, Gender::Female), ln({"yan", "li"}, Gender::Male)};
  const auto a = nb_fit(names);
  std::reverse(names.begin(), names.end());
  const auto b = nb_fit(names);
  CHECK(a.counts == b.counts);
  CHECK(a.prior_female == b.prior_female);
  CHECK(nb_predict(a, {"li", "yan"}).log_posterior_female == nb_predict(b, {"li", "yan"}).log_posterior_female);
}

TEST_CASE("CCT unanimous sources") {
  std::vector<CctReport> reports;
  for (int s = 0; s < 3; ++s)
    for (const char* name : {"yan", "li", "wei"}) reports.push_back({s, name, Gender::Female});
  const auto m = cct_fit(reports);
  CHECK(m.iterations <= 2);
  for (const auto& [src, theta] : m.competences) CHECK(theta == kCompetenceCeiling);
  for (const auto& [name, c] : m.consensus) CHECK(c.label == Gender::Female);
  for (std::size_t i = 1; i < m.history.size(); ++i)
    for (const auto& [src, theta] : m.history[i]) CHECK(theta >= m.history[i - 1].at(src));
}

TEST_CASE("CCT first E-step is majority vote") {
  std::vector<CctReport> reports = {{0, "yan", Gender::Female}, {1, "yan", Gender::Female}, {2, "yan", Gender::Male}};
  const auto c = cct_e_step(reports, {{0, kCompetenceInit}, {1, kCompetenceInit}, {2, kCompetenceInit}});
  CHECK(c.at("yan").label == Gender::Female);
  CHECK(cct_fit(reports).consensus.at("yan").label == Gender::Female);

  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<CctReport> rs;
    const int sources = 1 + 2 * static_cast<int>(rng.below(3));  // odd, so no ties
    std::map<int, double> theta;
    for (int s = 0; s < sources; ++s) theta[s] = kCompetenceInit;
    for (const char* name : {"a", "b", "c", "d"})
      for (int s = 0; s < sources; ++s) rs.push_back({s, name, gender_from_label(rng.bernoulli(0.5))});
    const auto consensus = cct_e_step(rs, theta);
    for (const auto& [name, cons] : consensus) {
      int female = 0;
      for (const auto& r : rs) female += r.name == name && r.label == Gender::Female;
      CHECK((cons.label == Gender::Female) == (2 * female > sources));
    }
  }
}

TEST_CASE("CCT single source and NA policy") {
  std::vector<CctReport> reports = {{4, "yan", Gender::Female}, {4, "li", Gender::Male}};
  const auto m = cct_fit(reports);
  CHECK(cct_predict(m, "yan") == Gender::Female);
  CHECK(cct_predict(m, "li") == Gender::Male);
  CHECK(cct_predict(m, "zhuang") == Gender::Male);
  CHECK(cct_predict(cct_fit(reports, 100, 1e-6, Gender::Female), "zhuang") == Gender::Female);
  CHECK_THROWS_AS(cct_fit({}), InvalidInput);
}

TEST_CASE("CCT discounts an unreliable source") {
  std::vector<CctReport> reports;
  const char* names[] = {"a", "b", "c", "d", "e", "f", "g", "h"};
  for (int i = 0; i < 8; ++i) {
    const Gender truth = gender_from_label(i % 2);
    for (int s = 0; s < 3; ++s) reports.push_back({s, names[i], truth});
    reports.push_back({3, names[i], gender_from_label(1 - i % 2)});
  }
  const auto m = cct_fit(reports);
  CHECK(m.competences.at(3) == kCompetenceFloor);
  CHECK(m.competences.at(0) == kCompetenceCeiling);
}

TEST_CASE("conversion to hanzi") {
  const auto& lex = default_lexicon();
  std::vector<NameRecord> recs;
  auto add = [&](const char* py, std::vector<std::string> hz, Gender g, int times) {
    for (int i = 0; i < times; ++i) recs.push_back({py, hz, g, std::nullopt});
  };
  add("yan", {"妍"}, Gender::Female, 3);
  add("yan", {"炎"}, Gender::Male, 1);
  add("jianhua", {"建", "华"}, Gender::Male, 1);
  add("guoqiang", {"国", "强"}, Gender::Male, 1);
  add("li", {"丽"}, Gender::Female, 1);
  add("li", {"力"}, Gender::Male, 1);
  const auto stats = build_statistics(recs, lex);
  CHECK(convert_to_hanzi(stats, {"yan"}) == std::vector<std::string>{"妍"});
  CHECK(convert_to_hanzi(stats, {"jian", "guo"}) == std::vector<std::string>{"建", "国"});
  // Tie between 丽 (U+4E3D) and 力 (U+529B): smaller code point wins.
  CHECK(convert_to_hanzi(stats, {"li"}) == std::vector<std::string>{"丽"});
  CHECK_THROWS_AS(convert_to_hanzi(stats, {"zhuang"}), UnknownMapping);

  TrainConfig cfg;
  cfg.d = 8;
  const auto bundle = init_bundle(recs, lex, cfg);
  CHECK(conversion_predict(stats, bundle, {"yan"}) == predict_gender_from_hanzi(bundle, {"妍"}).label);
  CHECK(conversion_predict(stats, bundle, {"jian", "guo"}) == predict_gender_from_hanzi(bundle, {"建", "国"}).label);
}
