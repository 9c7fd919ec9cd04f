#include "prunekit/commands.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

#include "prunekit/digest.hpp"
#include "prunekit/error.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write '" + path + "'");
  return out;
}

void echo_keys(std::ostream& out, const PipelineConfig& cfg, std::initializer_list<std::string_view> prefixes) {
  for (const auto& key : PipelineConfig::keys()) {
    const bool wanted = std::any_of(prefixes.begin(), prefixes.end(), [&](std::string_view p) {
      return key == p || (p.back() == '.' && key.rfind(p, 0) == 0);
    });
    if (wanted) out << "config." << key << '=' << cfg.get(key) << '\n';
  }
}

std::string lookup(const std::vector<std::pair<std::string, std::string>>& kv, std::string_view key) {
  for (const auto& [k, v] : kv) {
    if (k == key) return v;
  }
  return "";
}

std::vector<TokenSequence> load_tokens(const PipelineConfig& cfg, const std::string& path,
                                       std::vector<SequenceRecord>* records = nullptr) {
  FastaOptions opts;
  opts.t_to_u = cfg.t_to_u;
  auto recs = read_fasta_file(path, opts);
  if (recs.empty()) throw Error(ErrorCode::EmptyCorpus, "'" + path + "' holds no records");
  auto tokens = tokenize_all(recs, Alphabet::from_name(cfg.alphabet), cfg.max_len);
  if (records != nullptr) *records = std::move(recs);
  return tokens;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> read_sidecar(const std::string& path) {
  std::vector<std::pair<std::string, std::string>> out;
  std::ifstream in(path + ".meta", std::ios::binary);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) out.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return out;
}

SyntheticCorpus cmd_gen(const PipelineConfig& cfg, const std::string& prefix, std::ostream& log) {
  cfg.gen.validate(cfg.model.context_window);
  auto corpus = generate_corpus(cfg.gen);
  write_corpus_files(prefix, corpus);
  const auto dups = std::count_if(corpus.train.begin(), corpus.train.end(),
                                  [](const LabelledSequence& s) { return s.origin == Origin::Duplicate; });
  log << "gen: " << corpus.train.size() << " training records (" << dups << " near-duplicates), "
      << corpus.heldout.size() << " held-out records -> " << prefix << ".fasta\n";
  return corpus;
}

ScoreResult cmd_score(const PipelineConfig& cfg, const std::string& corpus_path, const std::string& out_path,
                      std::ostream& log, const std::string& init_checkpoint) {
  const auto corpus = load_tokens(cfg, corpus_path);
  const std::string corpus_digest = file_sha256(corpus_path);

  ModelConfig model_cfg = cfg.model;
  ParamVector init;
  if (init_checkpoint.empty()) {
    init = init_params(model_cfg, derive_seed(cfg.resolve(cfg.score_seed), 0x696e6974u));
  } else {
    model_cfg = CheckpointMeta::read(init_checkpoint).model;
    init = load_checkpoint(init_checkpoint);
  }
  const MlmModel model(model_cfg);
  require_same_layout(init.layout(), model.layout(), "initial checkpoint");

  auto result = score_corpus(model, std::move(init), corpus, cfg.score);
  write_scores_file(out_path, result.records);

  auto meta = open_out(out_path + ".meta");
  meta << "corpus_digest=" << corpus_digest << '\n'
       << "scores_sha256=" << file_sha256(out_path) << '\n'
       << "records=" << result.records.size() << '\n'
       << "subset_size=" << result.subset_ids.size() << '\n'
       << "subset_digest=" << ids_digest(result.subset_ids) << '\n'
       << "init=" << (init_checkpoint.empty() ? "seed" : file_sha256(init_checkpoint)) << '\n'
       << "damping=" << format_real(result.damping) << '\n'
       << "fisher_mean=" << format_real(result.fisher.mean()) << '\n'
       << "adapt_loss_before=" << format_real(result.adapt_audit.loss_before) << '\n'
       << "adapt_loss_after=" << format_real(result.adapt_audit.loss_after) << '\n'
       << "adapt_grad_norm=" << format_real(result.adapt_audit.grad_norm_after) << '\n'
       << "seed=" << cfg.resolve(cfg.score_seed) << '\n';
  echo_keys(meta, cfg, {"alphabet", "max_len", "t_to_u", "model.", "score."});

  log << "score: " << result.records.size() << " records, subset " << result.subset_ids.size()
      << ", damping " << format_real(result.damping) << ", adaptation loss " << format_real(result.adapt_audit.loss_before)
      << " -> " << format_real(result.adapt_audit.loss_after) << " -> " << out_path << '\n';
  return result;
}

Coreset cmd_select(const PipelineConfig& cfg, const std::string& scores_path, const std::string& out_path,
                   std::ostream& log) {
  cfg.select.validate();
  const auto records = read_scores_file(scores_path);
  if (records.empty()) throw Error(ErrorCode::EmptyCorpus, "'" + scores_path + "' holds no records");
  auto coreset = select(records, cfg.select);
  coreset.score_digest = file_sha256(scores_path);
  const auto sidecar = read_sidecar(scores_path);
  coreset.corpus_digest = lookup(sidecar, "corpus_digest");
  const auto recorded = lookup(sidecar, "scores_sha256");
  if (!recorded.empty() && recorded != coreset.score_digest) {
    throw Error(ErrorCode::ProvenanceMismatch, "'" + scores_path + "' differs from the digest in its .meta file");
  }
  write_coreset_file(out_path, coreset);

  log << "select: " << strategy_name(coreset.config.strategy) << " budget " << coreset.budget << " of "
      << coreset.pool_size;
  if (coreset.config.strategy == Strategy::Cci) {
    log << ", hard cutoff " << coreset.pruned_ids.size() << ", " << coreset.config.k << " strata\n";
    for (const auto& a : coreset.allocations) {
      if (a.stratum_size == 0) continue;
      log << "  stratum " << a.stratum << ": size " << a.stratum_size << ", took " << a.taken << '\n';
    }
  } else {
    log << '\n';
  }
  log << "select: " << coreset.ids.size() << " ids -> " << out_path << '\n';
  return coreset;
}

TrainResult cmd_pretrain(const PipelineConfig& cfg, const std::string& corpus_path, const std::string& coreset_path,
                         const std::string& out_path, std::ostream& log) {
  std::vector<SequenceRecord> records;
  const auto corpus = load_tokens(cfg, corpus_path, &records);
  const auto coreset = read_coreset_file(coreset_path);
  const auto corpus_digest = file_sha256(corpus_path);
  if (!coreset.corpus_digest.empty() && coreset.corpus_digest != corpus_digest) {
    throw Error(ErrorCode::ProvenanceMismatch, "coreset '" + coreset_path + "' was selected from another corpus");
  }
  for (const auto id : coreset.ids) {
    if (id >= corpus.size()) {
      throw Error(ErrorCode::IdNotInCorpus,
                  "coreset id " + std::to_string(id) + " outside corpus of " + std::to_string(corpus.size()));
    }
  }

  const MlmModel model(cfg.model);
  const std::uint64_t seed = cfg.resolve(cfg.train_seed);
  auto result = train_from(model, init_params(cfg.model, seed), corpus, coreset.ids, cfg.train);
  save_checkpoint(out_path, result.params);

  {
    auto loss = open_out(out_path + ".loss.tsv");
    loss << "epoch\tloss\n";
    for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
      loss << e + 1 << '\t' << format_real(result.epoch_losses[e]) << '\n';
    }
  }
  CheckpointMeta meta;
  meta.checkpoint_sha256 = file_sha256(out_path);
  meta.corpus_digest = corpus_digest;
  meta.coreset_digest = file_sha256(coreset_path);
  meta.strategy = std::string(strategy_name(coreset.config.strategy));
  meta.seed = seed;
  meta.model = cfg.model;
  for (const auto id : coreset.ids) meta.train_ids.push_back(records[id].id);
  meta.write(out_path);

  log << "pretrain: " << coreset.ids.size() << " sequences, " << result.epoch_losses.size() << " epochs, "
      << result.steps << " steps";
  if (!result.epoch_losses.empty()) log << ", final loss " << format_real(result.epoch_losses.back());
  log << " -> " << out_path << '\n';
  return result;
}

EvalReport cmd_eval(const PipelineConfig& cfg, const std::vector<std::string>& checkpoints,
                    const std::string& heldout_fasta, const std::string& heldout_labels, const std::string& out_path,
                    std::ostream& log) {
  FastaOptions opts;
  opts.t_to_u = cfg.t_to_u;
  const auto heldout =
      load_labelled(heldout_fasta, heldout_labels, Alphabet::from_name(cfg.alphabet), cfg.max_len, opts);
  auto report = evaluate_checkpoints(checkpoints, heldout, file_sha256(heldout_fasta), cfg.eval);
  auto out = open_out(out_path);
  write_eval_report(out, report, cfg.eval);
  for (const auto& c : report.checkpoints) {
    log << "eval: " << c.path << " [" << c.strategy << " seed " << c.seed << "] loss " << format_real(c.mlm_loss)
        << ", probe accuracy " << format_real(c.probe_accuracy) << '\n';
  }
  for (const auto& s : report.strategies) {
    log << "eval: " << s.strategy << " over " << s.seeds << " seeds: loss " << format_real(s.mlm_loss_mean)
        << " +- " << format_real(s.mlm_loss_sd) << ", accuracy " << format_real(s.probe_accuracy_mean) << " +- "
        << format_real(s.probe_accuracy_sd) << '\n';
  }
  return report;
}

OracleReport cmd_oracle(const PipelineConfig& cfg, const std::string& out_path, std::ostream& log) {
  ProbeInstance inst;
  OracleConfig oc = cfg.oracle.oracle;
  if (cfg.oracle.instance == "default") {
    inst = make_probe_instance(cfg.oracle.probe);
  } else if (cfg.oracle.instance == "orthogonal") {
    inst = make_orthogonal_instance(cfg.oracle.orthogonal_groups, cfg.oracle.orthogonal_group_size,
                                    cfg.oracle.probe.l2_reg);
    oc.scoring.subset_fraction = 1.0;
  } else {
    throw Error(ErrorCode::InvalidConfig, "oracle.instance must be 'default' or 'orthogonal'");
  }
  auto report = run_oracle_report(inst.data, inst.model, oc);
  auto out = open_out(out_path);
  write_oracle_report(out, report);
  log << "oracle: " << report.rows.size() << " samples, spearman(approx, exact) "
      << format_real(report.spearman_approx_vs_exact);
  if (oc.with_loo) log << ", spearman(approx, loo) " << format_real(report.spearman_approx_vs_loo);
  log << " -> " << out_path << '\n';
  return report;
}

}  // namespace prunekit
