// SPDX-License-Identifier: Apache-2.0
// End-to-end runs of the pgn executable.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

/// Runs `pgn ARGS` in the scratch directory, capturing stdout.
Run pgn(const std::string& args) {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "pgn_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  const std::string cmd = "cd '" + dir.string() + "' && '" PGN_EXECUTABLE "' " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
  const int raw = pclose(p);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string scratch(const std::string& name) { return (fs::temp_directory_path() / "pgn_cli_test" / name).string(); }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const std::string& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

}  // namespace

TEST_CASE("segment prints the canonical split and the alternatives") {
  const auto r = pgn("segment jianguo");
  CHECK(r.status == 0);
  CHECK(r.out.rfind("jian guo\n", 0) == 0);
  CHECK(r.out.find("ji an gu o") != std::string::npos);
  CHECK(r.out.find("ji an guo") != std::string::npos);
  CHECK(r.out.find("jian gu o") != std::string::npos);
}

TEST_CASE("exit codes") {
  CHECK(pgn("").status == 1);
  CHECK(pgn("frobnicate").status == 1);
  CHECK(pgn("segment jianguo --no-such-flag").status == 1);
  CHECK(pgn("segment 'ji an'").status == 1);
  CHECK(pgn("eval --checkpoint missing.ckpt --test missing.csv").status == 1);
  write(scratch("garbage.ckpt"), "not a checkpoint");
  write(scratch("tiny.csv"), "pinyin,hanzi,gender\nyan,,1\n");
  CHECK(pgn("eval --checkpoint garbage.ckpt --test tiny.csv").status == 2);
  CHECK(pgn("segment --help").status == 0);
}

TEST_CASE("synth, train, eval, predict, baselines") {
  REQUIRE(pgn("synth --out corpus.csv --count 600 --syllables 10 --seed 4 --save-generator gen.json").status == 0);
  CHECK(slurp(scratch("corpus.csv")).rfind("pinyin,hanzi,gender\n", 0) == 0);
  REQUIRE(pgn("synth --out again.csv --count 600 --syllables 10 --seed 4").status == 0);
  CHECK(slurp(scratch("corpus.csv")) == slurp(scratch("again.csv")));
  REQUIRE(pgn("synth --out from_json.csv --generator gen.json --count 600 --seed 4").status == 0);
  CHECK(slurp(scratch("corpus.csv")) == slurp(scratch("from_json.csv")));

  write(scratch("run.cfg"), "# small model\ndim = 8\nepochs = 2\nbatch_size = 32\n");
  const std::string before = slurp(scratch("corpus.csv"));
  REQUIRE(pgn("train --data corpus.csv --config run.cfg --seed 7 --checkpoint a.ckpt --trace trace.csv").status == 0);
  REQUIRE(pgn("train --data corpus.csv --config run.cfg --seed 7 --checkpoint b.ckpt").status == 0);
  CHECK(slurp(scratch("a.ckpt")) == slurp(scratch("b.ckpt")));
  CHECK(slurp(scratch("corpus.csv")) == before);
  CHECK(slurp(scratch("trace.csv")).rfind("epoch,l_pre,l_name,l_feature,l_response,l_pinyin,total,val_acc\n", 0) == 0);

  // Flags override the config file.
  REQUIRE(pgn("train --data corpus.csv --config run.cfg --epochs 1 --seed 7 --checkpoint c.ckpt --trace c.csv").status == 0);
  std::istringstream trace(slurp(scratch("c.csv")));
  std::string line;
  int lines = 0;
  while (std::getline(trace, line)) ++lines;
  CHECK(lines == 2);

  write(scratch("bad.cfg"), "learning_rate_typo = 3\n");
  CHECK(pgn("train --data corpus.csv --config bad.cfg --checkpoint d.ckpt").status == 1);
  CHECK(pgn("train --data corpus.csv --checkpoint corpus.csv").status == 1);

  const auto ev = pgn("eval --checkpoint a.ckpt --test corpus.csv --report-csv report.csv");
  CHECK(ev.status == 0);
  CHECK(ev.out.find("errorCoded") != std::string::npos);
  const auto report = slurp(scratch("report.csv"));
  CHECK(report.find("naCoded,0") != std::string::npos);

  const auto pr = pgn("predict --checkpoint a.ckpt yan qzx");
  CHECK(pr.status == 0);
  CHECK(pr.out.rfind("pinyin,predicted,probability_female\nyan,", 0) == 0);

  for (const char* method : {"freq", "nb"})
    CHECK(pgn(std::string("baseline ") + method + " --train corpus.csv --test corpus.csv").status == 0);
  CHECK(pgn("baseline conversion --train corpus.csv --test corpus.csv --checkpoint a.ckpt").status == 0);
  write(scratch("reports.csv"), "source,pinyin,gender\n1,yan,1\n2,yan,1\n3,yan,0\n");
  const auto cct = pgn("baseline cct --reports reports.csv --test tiny.csv --out cct.csv");
  CHECK(cct.status == 0);
  CHECK(slurp(scratch("cct.csv")) == "pinyin,predicted\nyan,female\n");
  CHECK(pgn("baseline bogus --test tiny.csv").status == 1);

  CHECK(pgn("cv --data corpus.csv --k 3 --dim 8 --epochs 1").out.find("accuracy mean") != std::string::npos);
  CHECK(pgn("gradcheck --dim 8 --seed 3").status == 0);
  CHECK(pgn("stats --data corpus.csv --shards 3").out.find("records 600") != std::string::npos);
  const auto ing = pgn("ingest --data corpus.csv --out clean.csv --rejects rejects.csv");
  CHECK(ing.out == "accepted 600\nrejected 0\n");
}

TEST_CASE("import-preds scores external predictions") {
  write(scratch("truth.csv"), "pinyin,hanzi,gender\nyan,,1\nli,,0\nwei,,0\n");
  write(scratch("ext.csv"), "pinyin,predicted\nyan,FEMALE\nli,unknown\nwei,female\nzhang,NA\n");
  const auto r = pgn("import-preds --preds ext.csv --truth truth.csv --report-csv ext_report.csv --rejects ext_rejects.csv");
  CHECK(r.status == 0);
  CHECK(slurp(scratch("ext_rejects.csv")).find("4,") != std::string::npos);
  const auto rep = slurp(scratch("ext_report.csv"));
  CHECK(rep.find("naCoded,0.333333") != std::string::npos);
  write(scratch("short.csv"), "pinyin,predicted\nyan,female\n");
  CHECK(pgn("import-preds --preds short.csv --truth truth.csv").status == 1);
}
