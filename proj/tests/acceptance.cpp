// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "prunekit/commands.hpp"
#include "prunekit/coreset.hpp"
#include "prunekit/digest.hpp"
#include "prunekit/error.hpp"
#include "prunekit/influence.hpp"
#include "prunekit/oracle.hpp"
#include "prunekit/rng.hpp"
#include "prunekit/synthetic.hpp"
#include "support.hpp"

#ifndef PRUNEKIT_CLI_PATH
#error "PRUNEKIT_CLI_PATH must name the prunekit executable"
#endif

using namespace prunekit;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int run_cli(const std::string& args) {
  const std::string cmd = "env -u PRUNEKIT_SEED " + std::string(PRUNEKIT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<TokenSequence> synthetic_tokens(std::size_t n, std::uint64_t seed) {
  SyntheticCorpusConfig g;
  g.n_sequences = n;
  g.heldout = 0;
  g.seed = seed;
  std::vector<SequenceRecord> recs;
  for (const auto& s : generate_corpus(g).train) recs.push_back(s.record);
  return tokenize_all(recs, Alphabet::rna(), 512);
}

// ------------------------------------------------------------------ AC-1

Outcome gradient_fidelity() {
  Outcome out;
  Rng rng(101);
  double worst_mlm = 0.0, worst_probe = 0.0;
  for (int pair = 0; pair < 100; ++pair) {
    ModelConfig mc;
    mc.embed_dim = 2 + rng.below(8);
    mc.hidden_dim = 2 + rng.below(12);
    mc.context_window = 1 + 2 * rng.below(4);
    mc.init_scale = 0.5;
    const MlmModel mlm(mc);
    const auto p = init_params(mc, rng.next_u64());
    TokenSequence s;
    const std::size_t len = 4 + rng.below(30);
    for (std::size_t i = 0; i < len; ++i) s.tokens.push_back(static_cast<TokenId>(kFirstSymbolId + rng.below(4)));
    const auto ex = mask_tokens(s, 0.1 + 0.4 * rng.uniform(), rng.next_u64());
    const auto g = mlm.per_sample_grad(p, ex).second;
    worst_mlm = std::max(worst_mlm, testsupport::fd_rel_err(g.values(), finite_diff_grad(mlm, p, ex, 1e-5).values()));

    ModelConfig pc;
    pc.kind = ModelKind::ConvexProbe;
    pc.n_features = 1 + rng.below(12);
    pc.n_classes = 2 + rng.below(4);
    pc.l2_reg = rng.uniform(0.0, 0.1);
    pc.probe_bias = rng.below(2) == 0;
    const ConvexProbe probe(pc);
    auto q = init_params(pc, 0);
    for (auto& v : q.values()) v = rng.uniform(-1.0, 1.0);
    std::vector<double> x(pc.n_features);
    for (auto& v : x) v = rng.normal();
    const std::size_t y = rng.below(pc.n_classes);
    GradVector pg(probe.layout());
    probe.loss_and_grad(q, x, y, pg);
    worst_probe = std::max(worst_probe, testsupport::fd_rel_err(pg.values(), finite_diff_grad(probe, q, x, y, 1e-5).values()));
  }
  out.require(worst_mlm <= 1e-5, "MLM relative error " + fmt(worst_mlm));
  out.require(worst_probe <= 1e-5, "probe relative error " + fmt(worst_probe));
  out.note("max rel err mlm " + fmt(worst_mlm, 3) + ", probe " + fmt(worst_probe, 3));
  return out;
}

// ------------------------------------------------------------------ AC-2

Outcome fisher_identities() {
  Outcome out;
  const auto corpus = synthetic_tokens(400, 3);
  const MlmModel model(ModelConfig{});
  auto params = init_params(ModelConfig{}, 7);
  for (auto& v : params.values()) v *= 25.0;
  const MlmGradientSource source(model, corpus, 0.15, 5);
  const auto layout = model.layout();
  const std::size_t d = layout->total_size();

  std::vector<GradVector> grads;
  for (std::size_t i = 0; i < 200; ++i) {
    GradVector g(layout);
    source.loss_and_grad(params, i, 0, g);
    grads.push_back(std::move(g));
  }
  std::vector<double> ref(d, 0.0);
  for (const auto& g : grads) {
    for (std::size_t j = 0; j < d; ++j) ref[j] += g[j] * g[j];
  }
  for (auto& v : ref) v /= static_cast<double>(grads.size());
  const auto fisher = accumulate_fisher(grads);
  const double fisher_err = testsupport::max_rel_err(fisher.values, ref);
  out.require(fisher_err <= 1e-12, "Fisher vs elementwise mean " + fmt(fisher_err));

  std::vector<std::size_t> ids(200);
  for (std::size_t i = 0; i < 200; ++i) ids[i] = i;
  const auto streamed = fisher_over(source, params, ids, 3, 64);
  out.require(testsupport::max_rel_err(streamed.values, ref) <= 1e-12, "streamed Fisher vs elementwise mean");

  PrecisionDiagonal identity{layout, std::vector<double>(d, 1.0), 0.0};
  double id_err = 0.0;
  for (std::size_t i = 200; i < 260; ++i) {
    GradVector g(layout);
    source.loss_and_grad(params, i, 0, g);
    double norm2 = 0.0;
    for (const auto v : g.values()) norm2 += v * v;
    id_err = std::max(id_err, testsupport::rel_err(self_influence_score(g, identity), norm2));
  }
  out.require(id_err <= 1e-12, "identity precision vs squared norm " + fmt(id_err));

  // Scaling. The damping regime must hold on both sides, so each query is
  // supported on coordinates with min(F, c^2 F) >= 1e6 * lambda.
  const double lambda = ScoringConfig{}.damping_rel * fisher.mean();
  std::vector<GradVector> raw_queries;
  for (std::size_t i = 260; i < 320; ++i) {
    GradVector g(layout);
    source.loss_and_grad(params, i, 0, g);
    raw_queries.push_back(std::move(g));
  }
  auto ranking = [](const std::vector<double>& s) {
    std::vector<std::size_t> o(s.size());
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = i;
    std::stable_sort(o.begin(), o.end(), [&](auto a, auto b) { return s[a] > s[b]; });
    return o;
  };
  const auto base_prec = precision_with_damping(fisher, lambda);
  double fisher_scale_err = 0.0, score_scale_err = 0.0;
  bool same_rank = true;
  std::size_t min_support = d;
  for (double c : {0.25, 2.0, 8.0, 3.0}) {
    auto scaled = grads;
    for (auto& g : scaled) {
      for (auto& v : g.values()) v *= c;
    }
    const auto fc = accumulate_fisher(scaled);
    for (std::size_t j = 0; j < d; ++j) {
      const double expect = c * c * fisher.values[j];
      // Powers of two scale exactly; 3 is held to rounding.
      fisher_scale_err = std::max(fisher_scale_err, c == 3.0 ? testsupport::rel_err(fc.values[j], expect) / 1e-15
                                                            : (fc.values[j] == expect ? 0.0 : 1e300));
    }
    std::size_t support = 0;
    auto queries = raw_queries;
    for (std::size_t j = 0; j < d; ++j) {
      const bool strong = std::min(fisher.values[j], fc.values[j]) >= 1e6 * lambda;
      support += strong;
      if (strong) continue;
      for (auto& q : queries) q[j] = 0.0;
    }
    min_support = std::min(min_support, support);
    const auto pc = precision_with_damping(fc, lambda);
    std::vector<double> base_scores, scores;
    for (const auto& q : queries) {
      base_scores.push_back(self_influence_score(q, base_prec));
      scores.push_back(self_influence_score(q, pc));
      score_scale_err = std::max(score_scale_err, testsupport::rel_err(scores.back(), base_scores.back() / (c * c)));
    }
    same_rank = same_rank && ranking(scores) == ranking(base_scores);
  }
  out.require(fisher_scale_err <= 4.0, "Fisher scaling by c^2");
  out.require(score_scale_err <= 1e-6, "score scaling by 1/c^2 " + fmt(score_scale_err));
  out.require(same_rank, "ranking under scaling");
  out.require(min_support > 0, "no coordinate satisfies the damping regime");
  const std::size_t n_strong = min_support;
  out.note("fisher err " + fmt(fisher_err, 2) + ", identity err " + fmt(id_err, 2) + ", scaling err " +
           fmt(score_scale_err, 2) + " over " + std::to_string(n_strong) + "/" + std::to_string(d) + " coords");
  return out;
}

// --------------------------------------------------------------- AC-3/4

OracleReport default_oracle_report() {
  PipelineConfig cfg;
  cfg.finalize();
  const auto inst = make_probe_instance(cfg.oracle.probe);
  return run_oracle_report(inst.data, inst.model, cfg.oracle.oracle);
}

Outcome oracle_equivalence(const OracleReport& report) {
  Outcome out;
  out.require(report.spearman_approx_vs_exact >= 0.8, "default instance spearman " + fmt(report.spearman_approx_vs_exact));
  const auto ortho = make_orthogonal_instance();
  OracleConfig oc;
  oc.scoring.subset_fraction = 1.0;
  oc.with_loo = false;
  const double rho = run_oracle_report(ortho.data, ortho.model, oc).spearman_approx_vs_exact;
  out.require(std::abs(rho - 1.0) <= 1e-12, "orthogonal instance spearman " + fmt(rho, 17));
  out.note("spearman default " + fmt(report.spearman_approx_vs_exact) + ", orthogonal " + fmt(rho, 12));
  return out;
}

/// Median rank of the flagged samples as a fraction of n, ranks ascending by value.
double median_rank_fraction(const std::vector<double>& values, const std::vector<bool>& flagged) {
  std::vector<std::size_t> order(values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (flagged[order[r]]) ranks.push_back((static_cast<double>(r) + 0.5) / static_cast<double>(order.size()));
  }
  std::sort(ranks.begin(), ranks.end());
  const std::size_t k = ranks.size();
  return k % 2 ? ranks[k / 2] : 0.5 * (ranks[k / 2 - 1] + ranks[k / 2]);
}

Outcome loo_consistency(const OracleReport& report) {
  Outcome out;
  out.require(report.spearman_approx_vs_loo >= 0.6, "spearman vs LOO " + fmt(report.spearman_approx_vs_loo));
  PipelineConfig cfg;
  cfg.finalize();
  const auto inst = make_probe_instance(cfg.oracle.probe);
  std::vector<double> approx, loo;
  for (const auto& r : report.rows) {
    approx.push_back(r.approx_score);
    loo.push_back(std::abs(r.loo_delta));
  }
  const double dup_approx = median_rank_fraction(approx, inst.is_duplicate);
  const double dup_loo = median_rank_fraction(loo, inst.is_duplicate);
  out.require(dup_approx < 0.5, "duplicates' median score rank " + fmt(dup_approx));
  out.require(dup_loo < 0.5, "duplicates' median LOO rank " + fmt(dup_loo));
  out.note("spearman " + fmt(report.spearman_approx_vs_loo) + ", duplicate median rank (score, LOO) " + fmt(dup_approx, 3) +
           ", " + fmt(dup_loo, 3));
  return out;
}

// ------------------------------------------------------------------ AC-5

std::vector<InfluenceRecord> records_from(const std::vector<double>& scores) {
  std::vector<InfluenceRecord> out;
  for (std::size_t i = 0; i < scores.size(); ++i) out.push_back({i, scores[i], 0.0, 1});
  return out;
}

SelectionConfig cci(double alpha, double beta, std::size_t k, std::uint64_t seed) {
  SelectionConfig c;
  c.alpha = alpha;
  c.beta = beta;
  c.k = k;
  c.seed = seed;
  return c;
}

std::vector<std::size_t> taken(const Coreset& c) {
  std::vector<std::size_t> out;
  for (const auto& a : c.allocations) out.push_back(a.taken);
  return out;
}

Outcome algorithm_conformance() {
  Outcome out;
  auto in_range = [](const std::vector<std::size_t>& ids, std::size_t lo, std::size_t hi) {
    return static_cast<std::size_t>(std::count_if(ids.begin(), ids.end(), [&](auto i) { return i >= lo && i <= hi; }));
  };
  const auto a = select_cci(records_from({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}), cci(0.5, 0.2, 2, 3));
  out.require(a.budget == 5 && a.pruned_ids == std::vector<std::size_t>{8, 9} &&
                  taken(a) == std::vector<std::size_t>{2, 3} && in_range(a.ids, 0, 3) == 2 && in_range(a.ids, 4, 7) == 3,
              "trace 1");
  const auto b = select_cci(records_from({0, 0.1, 0.2, 2.5, 9, 9.5, 10, 100}), cci(0.5, 0.125, 3, 1));
  out.require(b.budget == 4 && b.pruned_ids == std::vector<std::size_t>{7} &&
                  taken(b) == std::vector<std::size_t>{0, 2, 2} && b.allocations[0].stratum == 1 &&
                  in_range(b.ids, 0, 3) == 2 && in_range(b.ids, 4, 6) == 2,
              "trace 2");

  Rng rng(55);
  std::size_t violations = 0, feasible = 0, rejected = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(500);
    std::vector<double> scores(n);
    for (auto& s : scores) s = rng.below(4) == 0 ? static_cast<double>(rng.below(3)) : std::exp(2.0 * rng.normal());
    const auto recs = records_from(scores);
    const auto cfg = cci(rng.uniform(0.01, 0.99), rng.below(4) == 0 ? 0.0 : rng.uniform(0.0, 0.7), 1 + rng.below(80),
                         rng.next_u64());
    const std::size_t m = static_cast<std::size_t>(std::llround(static_cast<double>(n) * (1.0 - cfg.alpha)));
    const std::size_t cut = hard_cutoff_count(n, cfg.beta);
    const bool beta_bad = cfg.beta > 1.0 - cfg.alpha + 1e-12;
    try {
      const auto c = select_cci(recs, cfg);
      ++feasible;
      std::vector<std::size_t> order(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return scores[x] > scores[y]; });
      const std::set<std::size_t> pruned(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
      bool ok = !beta_bad && c.ids.size() == m && std::set<std::size_t>(c.ids.begin(), c.ids.end()).size() == m;
      for (const auto id : c.ids) ok = ok && pruned.count(id) == 0 && id < n;
      ok = ok && select_cci(recs, cfg).ids == c.ids;
      violations += !ok;
    } catch (const Error& e) {
      ++rejected;
      const bool expected = (beta_bad && e.code() == ErrorCode::BetaExceedsComplement) ||
                            (!beta_bad && m == 0 && e.code() == ErrorCode::InvalidBudget) ||
                            (!beta_bad && m > 0 && cut >= n && e.code() == ErrorCode::EmptyAfterCutoff) ||
                            (!beta_bad && m > 0 && cut < n && m > n - cut && e.code() == ErrorCode::InfeasibleBudget);
      violations += !expected;
    }
  }
  out.require(violations == 0, std::to_string(violations) + " randomized violations");
  out.note("hand traces reproduced; 1000 configs, " + std::to_string(feasible) + " selected, " + std::to_string(rejected) +
           " rejected as expected");
  return out;
}

// ------------------------------------------------------------------ AC-6

// Experiment protocol, fixed before the comparison was run.
constexpr const char* kScoreArgs =
    " --set score.adapt_epochs=5 --set score.adapt_lr=0.01 --set score.adapt_warmup=10 --set score.mask_samples=4";
constexpr const char* kTrainArgs = " --set train.lr=0.01 --set train.warmup=10";

std::map<std::string, std::pair<double, double>> read_strategy_rows(const std::string& path) {
  std::map<std::string, std::pair<double, double>> out;
  std::istringstream in(testsupport::slurp(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("strategy\t", 0) != 0) continue;
    std::vector<std::string> cols;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, '\t');) cols.push_back(c);
    if (cols.size() >= 8) out[cols[1]] = {std::stod(cols[5]), std::stod(cols[7])};
  }
  return out;
}

Outcome redundancy_experiment(const testsupport::TempDir& dir) {
  Outcome out;
  const auto f = [&](const std::string& n) { return dir.file(n); };
  out.require(run_cli("gen -o " + f("c")) == 0, "gen");
  out.require(run_cli("score " + f("c.fasta") + " -o " + f("s.tsv") + kScoreArgs) == 0, "score");
  std::string checkpoints;
  for (int seed = 0; seed < 5 && out.pass; ++seed) {
    for (const std::string st : {"cci", "random", "top_i"}) {
      const auto tag = st + std::to_string(seed);
      const std::string s = " --seed " + std::to_string(seed);
      out.require(run_cli("select " + f("s.tsv") + " --strategy " + st + " --alpha 0.95 --beta 0.05" + s + " -o " +
                          f(tag + ".txt")) == 0,
                  "select " + tag);
      out.require(run_cli("pretrain " + f("c.fasta") + " " + f(tag + ".txt") + s + kTrainArgs + " -o " + f(tag + ".ckpt")) ==
                      0,
                  "pretrain " + tag);
      checkpoints += " " + f(tag + ".ckpt");
    }
  }
  if (!out.pass) return out;
  out.require(run_cli("eval" + checkpoints + " --heldout " + f("c.heldout.fasta") + " --labels " + f("c.heldout.labels.tsv") +
                      " -o " + f("report.tsv")) == 0,
              "eval");
  const auto rows = read_strategy_rows(f("report.tsv"));
  if (rows.size() != 3) {
    out.require(false, "report lacks strategy summaries");
    return out;
  }
  const auto [cci_loss, cci_acc] = rows.at("cci");
  const auto [rnd_loss, rnd_acc] = rows.at("random");
  const auto [top_loss, top_acc] = rows.at("top_i");
  out.require(cci_loss <= rnd_loss, "CCI loss " + fmt(cci_loss, 6) + " > random " + fmt(rnd_loss, 6));
  out.require(cci_acc >= rnd_acc, "CCI accuracy " + fmt(cci_acc) + " < random " + fmt(rnd_acc));
  out.require(top_loss <= rnd_loss || top_acc >= rnd_acc, "Top I beats random on neither metric");
  out.note("loss cci/random/top_i " + fmt(cci_loss, 5) + "/" + fmt(rnd_loss, 5) + "/" + fmt(top_loss, 5) + ", accuracy " +
           fmt(cci_acc, 3) + "/" + fmt(rnd_acc, 3) + "/" + fmt(top_acc, 3));
  return out;
}

// ------------------------------------------------------------------ AC-7

Outcome linear_complexity() {
  Outcome out;
  const MlmModel model(ModelConfig{});
  const auto params = init_params(ModelConfig{}, 1);
  ScoringConfig cfg;
  cfg.adapt_epochs = 0;
  auto time_per_sample = [&](std::size_t n, StreamStats& stats) {
    const auto corpus = synthetic_tokens(n, 8);
    double best = 1e300;
    for (int rep = 0; rep < 3; ++rep) {
      const auto t0 = Clock::now();
      auto r = score_corpus(model, params, corpus, cfg);
      best = std::min(best, seconds_since(t0));
      stats = r.stats;
    }
    return best / static_cast<double>(n);
  };
  StreamStats s1, s2;
  const double t1 = time_per_sample(5000, s1);
  const double t2 = time_per_sample(10000, s2);
  const double change = std::abs(t2 - t1) / t1;
  out.require(change < 0.25, "per-sample time changed by " + fmt(100 * change, 3) + "%");
  out.require(s1.peak_bytes() == s2.peak_bytes(), "peak buffer bytes depend on N");
  out.require(s1.buffer_doubles == model.layout()->total_size(), "buffers are not parameter sized");
  out.note("per-sample " + fmt(1e6 * t1, 3) + " us vs " + fmt(1e6 * t2, 3) + " us (" + fmt(100 * change, 2) +
           "%), peak " + std::to_string(s1.peak_buffers) + " buffers of d=" + std::to_string(s1.buffer_doubles) +
           " at both sizes");
  return out;
}

// ------------------------------------------------------------------ AC-8

Outcome reproducibility(const testsupport::TempDir& dir) {
  Outcome out;
  const auto f = [&](const std::string& n) { return dir.file(n); };
  const std::string fast = " --set score.subset_fraction=0.1 --set train.lr=0.01 --set train.warmup=5";
  std::vector<std::pair<std::string, std::string>> outputs;  // (run a, run b)
  for (const std::string run : {"a", "b"}) {
    const auto p = [&](const std::string& n) { return f(run + n); };
    bool ok = run_cli("gen -o " + p("c") + " -n 1000 --set gen.heldout=100 --workers 1") == 0;
    ok = ok && run_cli("score " + p("c.fasta") + " -o " + p("s.tsv") + fast + " --workers 1") == 0;
    ok = ok && run_cli("select " + p("s.tsv") + " --alpha 0.9 -o " + p("sel.txt")) == 0;
    ok = ok && run_cli("pretrain " + p("c.fasta") + " " + p("sel.txt") + " --epochs 2" + fast + " --workers 1 -o " +
                       p("m.ckpt")) == 0;
    ok = ok && run_cli("eval " + p("m.ckpt") + " --heldout " + p("c.heldout.fasta") + " --labels " +
                       p("c.heldout.labels.tsv") + " -o " + p("e.tsv")) == 0;
    ok = ok && run_cli("oracle -o " + p("o.tsv") + " --set oracle.n_samples=80") == 0;
    out.require(ok, "run " + run + " failed");
  }
  if (!out.pass) return out;
  std::size_t compared = 0;
  for (const std::string name : {"c.fasta", "c.labels.tsv", "c.heldout.fasta", "s.tsv", "sel.txt", "sel.txt.alloc.tsv",
                                 "m.ckpt", "m.ckpt.loss.tsv", "o.tsv"}) {
    out.require(testsupport::slurp(f("a" + name)) == testsupport::slurp(f("b" + name)), name + " differs");
    ++compared;
  }
  // The eval report names its checkpoint path, which differs between runs.
  auto strip_paths = [](std::string text, const std::string& path) {
    for (auto pos = text.find(path); pos != std::string::npos; pos = text.find(path)) text.erase(pos, path.size());
    return text;
  };
  out.require(strip_paths(testsupport::slurp(f("ae.tsv")), f("am.ckpt")) ==
                  strip_paths(testsupport::slurp(f("be.tsv")), f("bm.ckpt")),
              "eval report differs");
  ++compared;

  const auto base = read_scores_file(f("as.tsv"));
  double worst = 0.0;
  for (int w : {2, 4}) {
    const auto path = f("s_w" + std::to_string(w) + ".tsv");
    out.require(run_cli("score " + f("ac.fasta") + " -o " + path + fast + " --workers " + std::to_string(w)) == 0, "score");
    const auto other = read_scores_file(path);
    out.require(other.size() == base.size(), "row count");
    for (std::size_t i = 0; i < std::min(base.size(), other.size()); ++i) {
      worst = std::max(worst, testsupport::rel_err(base[i].score, other[i].score));
    }
  }
  out.require(worst <= 1e-10, "worker score difference " + fmt(worst));
  out.note(std::to_string(compared) + " outputs byte identical; max worker rel diff " + fmt(worst, 3));
  return out;
}

}  // namespace

int main() {
  testsupport::TempDir dir("acceptance");
  bool all = true;
  auto report = [&](const char* id, const char* name, double limit_s, const std::function<Outcome()>& fn) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = seconds_since(t0);
    if (limit_s > 0.0) o.require(secs < limit_s, "runtime over " + fmt(limit_s, 4) + " s");
    all = all && o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << id << ' ' << name << " (" << fmt(secs, 3) << " s): " << o.detail
              << std::endl;
  };

  report("AC-1", "gradient fidelity", 60, gradient_fidelity);
  report("AC-2", "Fisher identities", 0, fisher_identities);
  OracleReport oracle;
  const auto t0 = Clock::now();
  oracle = default_oracle_report();
  const double oracle_secs = seconds_since(t0);
  std::cout << "(shared oracle run with LOO: " << fmt(oracle_secs, 3) << " s, counted against AC-3 and AC-4)" << std::endl;
  report("AC-3", "oracle equivalence", 120 - oracle_secs, [&] { return oracle_equivalence(oracle); });
  report("AC-4", "LOO consistency", 300 - oracle_secs, [&] { return loo_consistency(oracle); });
  report("AC-5", "selection conformance", 60, algorithm_conformance);
  report("AC-6", "redundancy experiment", 1200, [&] { return redundancy_experiment(dir); });
  report("AC-7", "linear complexity", 0, linear_complexity);
  report("AC-8", "reproducibility", 0, [&] { return reproducibility(dir); });
  return all ? 0 : 1;
}
