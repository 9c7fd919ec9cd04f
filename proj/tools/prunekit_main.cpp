#include <CLI11.hpp>

#include <iostream>
#include <sstream>
#include <optional>
#include <string>
#include <vector>

#include "prunekit/commands.hpp"
#include "prunekit/error.hpp"
#include "prunekit/simd.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "key=value configuration file");
  cmd->add_option("--set", c.sets, "override one configuration key (key=value), repeatable");
  cmd->add_option("--seed", c.seed, "global seed (default: PRUNEKIT_SEED, else 0)");
  cmd->add_option("--workers", c.workers, "worker threads");
}

prunekit::PipelineConfig build_config(const Common& c, const std::vector<std::pair<std::string, std::string>>& flags) {
  prunekit::PipelineConfig cfg;
  if (!c.config.empty()) prunekit::load_config_file(c.config, cfg);
  for (const auto& s : c.sets) prunekit::apply_assignment(s, cfg);
  for (const auto& [key, value] : flags) cfg.set(key, value);
  if (c.seed) cfg.seed = *c.seed;
  if (c.workers) cfg.workers = *c.workers;
  cfg.finalize();
  return cfg;
}

template <typename T>
void flag_if(std::vector<std::pair<std::string, std::string>>& flags, const char* key, const std::optional<T>& v) {
  if (!v) return;
  if constexpr (std::is_same_v<T, std::string>) {
    flags.emplace_back(key, *v);
  } else {
    std::ostringstream os;
    os.precision(17);
    os << *v;
    flags.emplace_back(key, os.str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prunekit: influence scoring and coreset selection for sequence corpora"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "prunekit 1.0");
  bool scalar_kernels = false;
  app.add_flag("--scalar", scalar_kernels, "force the scalar reference kernels");

  Common gen_c, score_c, select_c, pretrain_c, eval_c, oracle_c;

  auto* gen = app.add_subcommand("gen", "generate a synthetic labelled corpus");
  add_common(gen, gen_c);
  std::string gen_prefix;
  std::optional<std::size_t> gen_n;
  std::optional<double> gen_red;
  gen->add_option("-o,--out", gen_prefix, "output prefix")->required();
  gen->add_option("-n,--n-sequences", gen_n, "gen.n_sequences");
  gen->add_option("--redundancy", gen_red, "gen.redundancy");

  auto* score = app.add_subcommand("score", "score every corpus sequence");
  add_common(score, score_c);
  std::string score_corpus_path, score_out = "scores.tsv", score_init;
  score->add_option("corpus", score_corpus_path, "FASTA corpus")->required();
  score->add_option("-o,--out", score_out, "scores file");
  score->add_option("--init", score_init, "start from this checkpoint instead of a seeded init");

  auto* sel = app.add_subcommand("select", "select a coreset from scores");
  add_common(sel, select_c);
  std::string sel_scores, sel_out = "coreset.txt";
  std::optional<std::string> strategy;
  std::optional<double> alpha, beta;
  std::optional<std::size_t> strata;
  sel->add_option("scores", sel_scores, "scores file")->required();
  sel->add_option("-o,--out", sel_out, "coreset file");
  sel->add_option("--strategy", strategy, "top_i | cci | random");
  sel->add_option("--alpha", alpha, "pruning rate");
  sel->add_option("--beta", beta, "hard cutoff rate");
  sel->add_option("-k,--strata", strata, "number of strata");

  auto* pre = app.add_subcommand("pretrain", "train the masked-LM on a coreset");
  add_common(pre, pretrain_c);
  std::string pre_corpus, pre_coreset, pre_out = "model.ckpt";
  std::optional<std::size_t> epochs;
  pre->add_option("corpus", pre_corpus, "FASTA corpus")->required();
  pre->add_option("coreset", pre_coreset, "coreset file")->required();
  pre->add_option("-o,--out", pre_out, "checkpoint path");
  pre->add_option("--epochs", epochs, "train.epochs");

  auto* ev = app.add_subcommand("eval", "evaluate checkpoints on a labelled held-out set");
  add_common(ev, eval_c);
  std::vector<std::string> ev_ckpts;
  std::string ev_fasta, ev_labels, ev_out = "eval_report.tsv";
  std::optional<std::string> probe_seeds;
  ev->add_option("checkpoints", ev_ckpts, "checkpoints")->required();
  ev->add_option("--heldout", ev_fasta, "held-out FASTA")->required();
  ev->add_option("--labels", ev_labels, "held-out labels (id<TAB>class)")->required();
  ev->add_option("-o,--out", ev_out, "report path");
  ev->add_option("--probe-seeds", probe_seeds, "eval.probe_seeds, comma separated");

  auto* orc = app.add_subcommand("oracle", "compare scores against exact influence and leave-one-out");
  add_common(orc, oracle_c);
  std::string orc_out = "oracle.tsv";
  std::optional<std::string> instance;
  orc->add_option("-o,--out", orc_out, "report path");
  orc->add_option("--instance", instance, "default | orthogonal");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (scalar_kernels) prunekit::simd::set_active_isa(prunekit::simd::Isa::Scalar);
    std::vector<std::pair<std::string, std::string>> flags;
    if (*gen) {
      flag_if(flags, "gen.n_sequences", gen_n);
      flag_if(flags, "gen.redundancy", gen_red);
      prunekit::cmd_gen(build_config(gen_c, flags), gen_prefix, std::cout);
    } else if (*score) {
      prunekit::cmd_score(build_config(score_c, flags), score_corpus_path, score_out, std::cout, score_init);
    } else if (*sel) {
      flag_if(flags, "select.strategy", strategy);
      flag_if(flags, "select.alpha", alpha);
      flag_if(flags, "select.beta", beta);
      flag_if(flags, "select.k", strata);
      prunekit::cmd_select(build_config(select_c, flags), sel_scores, sel_out, std::cout);
    } else if (*pre) {
      flag_if(flags, "train.epochs", epochs);
      prunekit::cmd_pretrain(build_config(pretrain_c, flags), pre_corpus, pre_coreset, pre_out, std::cout);
    } else if (*ev) {
      flag_if(flags, "eval.probe_seeds", probe_seeds);
      prunekit::cmd_eval(build_config(eval_c, flags), ev_ckpts, ev_fasta, ev_labels, ev_out, std::cout);
    } else if (*orc) {
      flag_if(flags, "oracle.instance", instance);
      prunekit::cmd_oracle(build_config(oracle_c, flags), orc_out, std::cout);
    }
  } catch (const prunekit::Error& e) {
    std::cerr << "prunekit: " << e.what() << '\n';
    return prunekit::is_usage_error(e.code()) ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "prunekit: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
