#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "prunekit/commands.hpp"
#include "prunekit/digest.hpp"
#include "prunekit/error.hpp"
#include "prunekit/rng.hpp"
#include "support.hpp"

#ifndef PRUNEKIT_CLI_PATH
#error "PRUNEKIT_CLI_PATH must name the prunekit executable"
#endif

using namespace prunekit;
using testsupport::slurp;

namespace {

struct Run {
  int code = -1;
  std::string err;
};

/// Runs the CLI with PRUNEKIT_SEED cleared; stdout is discarded.
Run cli(const testsupport::TempDir& dir, const std::string& args) {
  const auto err_path = dir.file("stderr.txt");
  const std::string cmd = "env -u PRUNEKIT_SEED " + std::string(PRUNEKIT_CLI_PATH) + " " + args + " >/dev/null 2>" + err_path;
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err_path)};
}

constexpr const char* kFast = " --set score.subset_fraction=0.2 --set train.lr=0.01 --set train.warmup=5";

/// Small corpus, scores and coresets shared by the cases below.
struct Workspace {
  testsupport::TempDir dir{"pipeline"};
  Workspace() {
    REQUIRE(cli(dir, "gen -o " + dir.file("c") + " -n 300 --set gen.heldout=60").code == 0);
    REQUIRE(cli(dir, "score " + dir.file("c.fasta") + " -o " + dir.file("s.tsv") + kFast).code == 0);
  }
  std::string f(const std::string& name) const { return dir.file(name); }
};

Workspace& workspace() {
  static Workspace ws;
  return ws;
}

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("score writes one row per record plus a sidecar") {
  auto& ws = workspace();
  CHECK(count_lines(slurp(ws.f("s.tsv"))) == 301);
  const auto meta = read_sidecar(ws.f("s.tsv"));
  bool found = false;
  for (const auto& [k, v] : meta) {
    if (k == "corpus_digest") {
      CHECK(v == file_sha256(ws.f("c.fasta")));
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("reruns are byte identical") {
  auto& ws = workspace();
  REQUIRE(cli(ws.dir, "gen -o " + ws.f("c2") + " -n 300 --set gen.heldout=60").code == 0);
  CHECK(slurp(ws.f("c.fasta")) == slurp(ws.f("c2.fasta")));
  REQUIRE(cli(ws.dir, "score " + ws.f("c.fasta") + " -o " + ws.f("s2.tsv") + kFast).code == 0);
  CHECK(slurp(ws.f("s.tsv")) == slurp(ws.f("s2.tsv")));
  CHECK(slurp(ws.f("s.tsv.meta")) == slurp(ws.f("s2.tsv.meta")));
  for (const char* strategy : {"cci", "random", "top_i"}) {
    CAPTURE(strategy);
    const std::string base = "select " + ws.f("s.tsv") + " --alpha 0.9 --beta 0.05 --strategy " + strategy + " -o ";
    REQUIRE(cli(ws.dir, base + ws.f(std::string(strategy) + "_a.txt")).code == 0);
    REQUIRE(cli(ws.dir, base + ws.f(std::string(strategy) + "_b.txt")).code == 0);
    CHECK(slurp(ws.f(std::string(strategy) + "_a.txt")) == slurp(ws.f(std::string(strategy) + "_b.txt")));
  }
  const std::string pre = "pretrain " + ws.f("c.fasta") + " " + ws.f("cci_a.txt") + " --epochs 2" + kFast + " -o ";
  REQUIRE(cli(ws.dir, pre + ws.f("m1.ckpt")).code == 0);
  REQUIRE(cli(ws.dir, pre + ws.f("m2.ckpt")).code == 0);
  CHECK(slurp(ws.f("m1.ckpt")) == slurp(ws.f("m2.ckpt")));
}

TEST_CASE("scores do not depend on worker count") {
  auto& ws = workspace();
  const auto base = read_scores_file(ws.f("s.tsv"));
  for (int w : {2, 4}) {
    const auto out = ws.f("s_w" + std::to_string(w) + ".tsv");
    REQUIRE(cli(ws.dir, "score " + ws.f("c.fasta") + " -o " + out + kFast + " --workers " + std::to_string(w)).code == 0);
    const auto other = read_scores_file(out);
    REQUIRE(other.size() == base.size());
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(testsupport::rel_err(base[i].score, other[i].score) <= 1e-10);
  }
}

TEST_CASE("top_i selection matches the library") {
  auto& ws = workspace();
  REQUIRE(cli(ws.dir, "select " + ws.f("s.tsv") + " --strategy top_i --alpha 0.9 -o " + ws.f("top.txt")).code == 0);
  const auto records = read_scores_file(ws.f("s.tsv"));
  CHECK(read_coreset_file(ws.f("top.txt")).ids == select_top_i(records, 30).ids);
}

TEST_CASE("random selection has a stable digest") {
  auto& ws = workspace();
  const std::string cmd = "select " + ws.f("s.tsv") + " --strategy random --alpha 0.5 --seed 3 -o ";
  REQUIRE(cli(ws.dir, cmd + ws.f("r1.txt")).code == 0);
  REQUIRE(cli(ws.dir, cmd + ws.f("r2.txt")).code == 0);
  CHECK(file_sha256(ws.f("r1.txt")) == file_sha256(ws.f("r2.txt")));
  REQUIRE(cli(ws.dir, "select " + ws.f("s.tsv") + " --strategy random --alpha 0.5 --seed 4 -o " + ws.f("r3.txt")).code ==
          0);
  CHECK(file_sha256(ws.f("r1.txt")) != file_sha256(ws.f("r3.txt")));
}

TEST_CASE("usage errors exit with 2") {
  auto& ws = workspace();
  auto r = cli(ws.dir, "score " + ws.f("missing.fasta") + " -o " + ws.f("x.tsv"));
  CHECK(r.code == 2);
  CHECK(r.err.find("FileNotFound") != std::string::npos);

  testsupport::spit(ws.f("bad.fasta"), "ACGU\n");
  r = cli(ws.dir, "score " + ws.f("bad.fasta") + " -o " + ws.f("x.tsv"));
  CHECK(r.code == 2);
  CHECK(r.err.find("MalformedFasta") != std::string::npos);

  r = cli(ws.dir, "select " + ws.f("s.tsv") + " --strategy cci --alpha 0.9 --beta 0.2 -o " + ws.f("x.txt"));
  CHECK(r.code == 2);
  CHECK(r.err.find("BetaExceedsComplement") != std::string::npos);

  r = cli(ws.dir, "select " + ws.f("s.tsv") + " --set select.nonsense=1 -o " + ws.f("x.txt"));
  CHECK(r.code == 2);
  CHECK(r.err.find("UnknownConfigKey") != std::string::npos);

  CHECK(cli(ws.dir, "frobnicate").code == 2);
  CHECK(cli(ws.dir, "select").code == 2);
}

TEST_CASE("tampered score files are rejected") {
  auto& ws = workspace();
  auto text = slurp(ws.f("s.tsv"));
  text[text.size() - 2] = text[text.size() - 2] == '1' ? '2' : '1';
  testsupport::spit(ws.f("tampered.tsv"), text);
  testsupport::spit(ws.f("tampered.tsv.meta"), slurp(ws.f("s.tsv.meta")));
  const auto r = cli(ws.dir, "select " + ws.f("tampered.tsv") + " -o " + ws.f("x.txt"));
  CHECK(r.code == 2);
  CHECK(r.err.find("ProvenanceMismatch") != std::string::npos);
}

TEST_CASE("checkpoints trained on another corpus are rejected") {
  auto& ws = workspace();
  REQUIRE(cli(ws.dir, "gen -o " + ws.f("other") + " -n 300 --seed 9 --set gen.heldout=0").code == 0);
  REQUIRE(cli(ws.dir, "select " + ws.f("s.tsv") + " --alpha 0.9 -o " + ws.f("sel.txt")).code == 0);
  const auto r = cli(ws.dir, "pretrain " + ws.f("other.fasta") + " " + ws.f("sel.txt") + " -o " + ws.f("x.ckpt"));
  CHECK(r.code == 2);
  CHECK(r.err.find("ProvenanceMismatch") != std::string::npos);
}

TEST_CASE("evaluation: untrained checkpoint, leakage and tampering") {
  auto& ws = workspace();
  REQUIRE(cli(ws.dir, "select " + ws.f("s.tsv") + " --alpha 0.9 -o " + ws.f("e.txt")).code == 0);
  const std::string pre = "pretrain " + ws.f("c.fasta") + " " + ws.f("e.txt") + " --epochs 0";
  REQUIRE(cli(ws.dir, pre + " --set model.init_scale=0 -o " + ws.f("uniform.ckpt")).code == 0);
  REQUIRE(cli(ws.dir, pre + " -o " + ws.f("zero.ckpt")).code == 0);

  PipelineConfig cfg;
  cfg.finalize();
  const auto heldout = load_labelled(ws.f("c.heldout.fasta"), ws.f("c.heldout.labels.tsv"), Alphabet::rna(), 512);
  const auto report = evaluate_checkpoints({ws.f("uniform.ckpt"), ws.f("zero.ckpt")}, heldout,
                                           file_sha256(ws.f("c.heldout.fasta")), cfg.eval);
  REQUIRE(report.checkpoints.size() == 2);
  CHECK(std::abs(report.checkpoints[0].mlm_loss - std::log(4.0)) <= 1e-6);
  // Default init: logits of order 1e-3, so the loss sits just off ln 4.
  CHECK(std::abs(report.checkpoints[1].mlm_loss - std::log(4.0)) <= 1e-4);
  CHECK(report.strategies.empty());

  auto r = cli(ws.dir, "eval " + ws.f("zero.ckpt") + " --heldout " + ws.f("c.fasta") + " --labels " +
                           ws.f("c.labels.tsv") + " -o " + ws.f("leak.tsv"));
  CHECK(r.code == 2);
  CHECK(r.err.find("LeakageError") != std::string::npos);

  auto bytes = slurp(ws.f("zero.ckpt"));
  bytes.back() = static_cast<char>(bytes.back() ^ 1);
  testsupport::spit(ws.f("zero.ckpt"), bytes);
  r = cli(ws.dir, "eval " + ws.f("zero.ckpt") + " --heldout " + ws.f("c.heldout.fasta") + " --labels " +
                      ws.f("c.heldout.labels.tsv") + " -o " + ws.f("t.tsv"));
  CHECK(r.code == 2);
  CHECK(r.err.find("ProvenanceMismatch") != std::string::npos);
}

TEST_CASE("epochs=0 checkpoint equals the initialization") {
  auto& ws = workspace();
  REQUIRE(cli(ws.dir, "select " + ws.f("s.tsv") + " --alpha 0.9 -o " + ws.f("z.txt")).code == 0);
  REQUIRE(cli(ws.dir, "pretrain " + ws.f("c.fasta") + " " + ws.f("z.txt") + " --epochs 0 --seed 5 -o " + ws.f("z.ckpt"))
              .code == 0);
  CHECK(load_checkpoint(ws.f("z.ckpt")) == init_params(ModelConfig{}, 5));
}

TEST_CASE("probe on random labels sits at chance") {
  Rng rng(1);
  const std::size_t n = 2000, classes = 4;
  std::vector<std::vector<double>> emb(n, std::vector<double>(8));
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : emb[i]) v = rng.normal();
    labels[i] = rng.below(classes);
  }
  const double acc = probe_accuracy(emb, labels, classes, 0.5, 1e-2, 0);
  const double sigma = std::sqrt(0.25 * 0.75 / 1000.0);
  CHECK(std::abs(acc - 0.25) <= 4.0 * sigma);
}

TEST_CASE("oracle command writes both correlations") {
  auto& ws = workspace();
  REQUIRE(cli(ws.dir, "oracle -o " + ws.f("o.tsv")).code == 0);
  std::istringstream in(slurp(ws.f("o.tsv")));
  const auto report = read_oracle_report(in);
  CHECK(report.rows.size() == 200);
  CHECK(report.spearman_approx_vs_exact >= 0.8);
  CHECK(report.spearman_approx_vs_loo >= 0.6);
  REQUIRE(cli(ws.dir, "oracle --instance orthogonal --set oracle.with_loo=false -o " + ws.f("o2.tsv")).code == 0);
  std::istringstream in2(slurp(ws.f("o2.tsv")));
  CHECK(read_oracle_report(in2).spearman_approx_vs_exact == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mean and sample deviation") {
  const auto [m, s] = mean_sd({1.0, 2.0, 3.0, 4.0});
  CHECK(m == 2.5);
  CHECK(s == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(mean_sd({7.0}).second == 0.0);
}

}
