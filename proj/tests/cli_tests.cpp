// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks that drive the installed binary the way a user would.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string binary_path() {
  const char* env = std::getenv("CPAFORMER_BIN");
  REQUIRE_MESSAGE(env != nullptr, "CPAFORMER_BIN must point at the CLI");
  return env;
}

struct RunResult {
  int exit_code = 0;
  std::string stdout_text;
};

RunResult run(const std::string& args) {
  const std::string out_file =
      "/tmp/cpaformer_cli_out_" + std::to_string(::getpid()) + ".txt";
  const std::string cmd =
      binary_path() + " " + args + " > " + out_file + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  r.stdout_text = ss.str();
  std::remove(out_file.c_str());
  return r;
}

std::string write_temp(const std::string& name, const std::string& content) {
  const std::string path = "/tmp/cpaformer_cli_" + name;
  std::ofstream out(path);
  out << content;
  return path;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("parse reports counts and errors") {
  const std::string input = write_temp("mols.smi",
                                       "CCO\nc1ccccc1\nC1CC broken\n");
  const RunResult r = run("parse --input " + input + " --format smiles");
  CHECK(r.exit_code == 0);
  CHECK(r.stdout_text.find("2\t9\t8\t1") != std::string::npos);
}

TEST_CASE("topo spd reproduces the P10 coverage value") {
  const std::string input = write_temp("p10.smi", "CCCCCCCCCC p10\n");
  const RunResult r = run("topo spd --k 3 --input " + input);
  CHECK(r.exit_code == 0);
  CHECK(r.stdout_text.find("corpus_median_coverage_pct\t58") !=
        std::string::npos);
}

TEST_CASE("expressivity suites pass from the command line") {
  const RunResult r = run("--seed 42 expressivity --suite prop1 --trials 100");
  CHECK(r.exit_code == 0);
  CHECK(r.stdout_text.find("prop1\t100/100 pass") != std::string::npos);
}

TEST_CASE("stats bootstrap on identical predictions pins the CI at zero") {
  const std::string a = write_temp("a.txt", "0.1\n0.9\n0.4\n0.6\n");
  const std::string labels = write_temp("y.txt", "0\n1\n0\n1\n");
  const RunResult r = run("--seed 5 stats bootstrap --a " + a + " --b " + a +
                          " --labels " + labels +
                          " --metric auc --resamples 1000");
  CHECK(r.exit_code == 0);
  CHECK(r.stdout_text.find("delta\t0\n") != std::string::npos);
  CHECK(r.stdout_text.find("ci_lo\t0\n") != std::string::npos);
  CHECK(r.stdout_text.find("ci_hi\t0\n") != std::string::npos);
}

TEST_CASE("stats holm matches the worked example") {
  const std::string p = write_temp("p.txt", "0.01\n0.04\n0.03\n");
  const RunResult r = run("stats holm --input " + p);
  CHECK(r.exit_code == 0);
  std::stringstream ss(r.stdout_text);
  std::string header;
  std::getline(ss, header);
  std::vector<double> raw(3), adjusted(3);
  for (int i = 0; i < 3; ++i) ss >> raw[i] >> adjusted[i];
  CHECK(adjusted[0] == doctest::Approx(0.03).epsilon(1e-12));
  CHECK(adjusted[1] == doctest::Approx(0.06).epsilon(1e-12));
  CHECK(adjusted[2] == doctest::Approx(0.06).epsilon(1e-12));
}

TEST_CASE("audit emits the padding table") {
  std::string lines;
  for (int i = 0; i < 6; ++i) lines += "CCCCCC\n";
  for (int i = 0; i < 6; ++i) lines += "CCCCCCCCCCCC\n";
  const std::string input = write_temp("audit.smi", lines);
  const RunResult r = run("audit --k 3 --width 5 --key support --input " +
                          input);
  CHECK(r.exit_code == 0);
  CHECK(r.stdout_text.find("mean_padded_length") != std::string::npos);
  CHECK(r.stdout_text.find("k=3\t") != std::string::npos);
}

TEST_CASE("model forward emits one embedding row per graph") {
  const std::string input = write_temp("fwd.smi", "CCO\nc1ccccc1\n");
  const RunResult r = run("--seed 3 model forward --input " + input +
                          " --variant cpa");
  CHECK(r.exit_code == 0);
  int rows = 0;
  std::stringstream ss(r.stdout_text);
  std::string line;
  while (std::getline(ss, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("report with no runs succeeds with an empty report") {
  const RunResult r = run("report --runs /tmp/cpaformer_no_such_dir");
  CHECK(r.exit_code == 0);
  CHECK(r.stdout_text.find("no runs found") != std::string::npos);
}

TEST_CASE("error taxonomy maps to exit codes") {
  CHECK(run("parse --input /tmp/definitely_missing.smi").exit_code == 1);
  const std::string bad_cfg = write_temp("bad.json", "{\"model_dim\": 7}");
  const std::string input = write_temp("one.smi", "C\n");
  CHECK(run("model forward --config " + bad_cfg + " --input " + input)
            .exit_code == 1);
}

TEST_CASE("same config and seed produce byte-identical artifacts") {
  const std::string corpus_path = [] {
    std::string lines;
    for (int i = 0; i < 8; ++i) lines += "CCOC(=O)CC\n";
    for (int i = 0; i < 8; ++i) lines += "c1ccccc1O\n";
    return write_temp("det.smi", lines);
  }();
  const std::string cfg = write_temp(
      "det_cfg.json",
      "{\"layers\":1,\"model_dim\":8,\"heads\":2,\"ffn_dim\":16,"
      "\"proj_dim\":8,\"decoder_hidden\":8}");
  const std::string out1 = "/tmp/cpaformer_cli_det1";
  const std::string out2 = "/tmp/cpaformer_cli_det2";
  fs::remove_all(out1);
  fs::remove_all(out2);
  const std::string args = " pretrain --config " + cfg + " --input " +
                           corpus_path +
                           " --objective both --steps 6 --batch 4";
  CHECK(run("--seed 7 --out " + out1 + args).exit_code == 0);
  CHECK(run("--seed 7 --out " + out2 + args).exit_code == 0);
  CHECK(slurp(fs::path(out1) / "loss_trace.tsv") ==
        slurp(fs::path(out2) / "loss_trace.tsv"));
  CHECK(slurp(fs::path(out1) / "checkpoint.bin") ==
        slurp(fs::path(out2) / "checkpoint.bin"));
  CHECK_FALSE(slurp(fs::path(out1) / "checkpoint.bin").empty());
  fs::remove_all(out1);
  fs::remove_all(out2);
}

TEST_CASE("finetune and report produce the ablation grid") {
  // labeled records via the parse command: label = any aromatic atom
  const std::string smi = write_temp(
      "ft.smi",
      "CCO\nCCC\nCCCC\nCCOC\nc1ccccc1\nc1ccccc1C\nc1ccccc1O\nc1ccncc1\n"
      "CCN\nCCCCC\nc1ccccc1N\nc1ccccc1CC\n");
  const std::string parse_out = "/tmp/cpaformer_cli_ft_parse";
  fs::remove_all(parse_out);
  REQUIRE(run("parse --input " + smi + " --out " + parse_out).exit_code ==
          0);
  // attach labels: aromatic flag on any atom
  std::ifstream in(fs::path(parse_out) / "parsed.jsonl");
  std::ostringstream labeled_lines;
  std::string line;
  while (std::getline(in, line)) {
    const bool aromatic = line.find("\"arom\":true") != std::string::npos;
    line.insert(line.size() - 1,
                std::string(",\"label\":") + (aromatic ? "1.0" : "0.0"));
    labeled_lines << line << "\n";
  }
  const std::string labeled_path =
      write_temp("ft_labeled.jsonl", labeled_lines.str());
  const std::string cfg = write_temp(
      "ft_cfg.json",
      "{\"layers\":1,\"model_dim\":8,\"heads\":2,\"ffn_dim\":16,"
      "\"proj_dim\":8,\"variant\":\"cpa\"}");
  const std::string runs = "/tmp/cpaformer_cli_ft_runs";
  fs::remove_all(runs);
  const RunResult ft =
      run("--seed 3 --out " + runs + "/ft finetune --config " + cfg +
          " --input " + labeled_path + " --task binary --epochs 6");
  CHECK(ft.exit_code == 0);
  CHECK(ft.stdout_text.find("train_auc") != std::string::npos);
  const RunResult rep = run("report --runs " + runs);
  CHECK(rep.exit_code == 0);
  CHECK(rep.stdout_text.find("Ablation grid") != std::string::npos);
  CHECK(rep.stdout_text.find("| cpa |") != std::string::npos);
  fs::remove_all(parse_out);
  fs::remove_all(runs);
}
