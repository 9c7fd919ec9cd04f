#include "prunekit/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "prunekit/digest.hpp"
#include "prunekit/error.hpp"
#include "prunekit/optim.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

void CheckpointMeta::write(const std::string& checkpoint_path) const {
  std::ofstream out(checkpoint_path + ".meta", std::ios::binary);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write '" + checkpoint_path + ".meta'");
  out << "checkpoint_sha256=" << checkpoint_sha256 << '\n'
      << "corpus_digest=" << corpus_digest << '\n'
      << "coreset_digest=" << coreset_digest << '\n'
      << "strategy=" << strategy << '\n'
      << "seed=" << seed << '\n'
      << "vocab_size=" << model.vocab_size << '\n'
      << "embed_dim=" << model.embed_dim << '\n'
      << "hidden_dim=" << model.hidden_dim << '\n'
      << "context_window=" << model.context_window << '\n'
      << "init_scale=" << format_real(model.init_scale) << '\n'
      << "train_ids=" << train_ids.size() << '\n';
  std::ofstream ids(checkpoint_path + ".ids", std::ios::binary);
  if (!ids) throw Error(ErrorCode::FileNotFound, "cannot write '" + checkpoint_path + ".ids'");
  for (const auto& id : train_ids) ids << id << '\n';
}

CheckpointMeta CheckpointMeta::read(const std::string& checkpoint_path) {
  std::ifstream in(checkpoint_path + ".meta", std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open '" + checkpoint_path + ".meta'");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::MalformedFile, "bad checkpoint meta line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto need = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorCode::MalformedFile, std::string("checkpoint meta lacks ") + key);
    return it->second;
  };
  CheckpointMeta meta;
  std::size_t n_ids = 0;
  try {
    meta.checkpoint_sha256 = need("checkpoint_sha256");
    meta.corpus_digest = need("corpus_digest");
    meta.coreset_digest = need("coreset_digest");
    meta.strategy = need("strategy");
    meta.seed = std::stoull(need("seed"));
    meta.model.kind = ModelKind::MlmTiny;
    meta.model.vocab_size = std::stoull(need("vocab_size"));
    meta.model.embed_dim = std::stoull(need("embed_dim"));
    meta.model.hidden_dim = std::stoull(need("hidden_dim"));
    meta.model.context_window = std::stoull(need("context_window"));
    meta.model.init_scale = std::stod(need("init_scale"));
    n_ids = std::stoull(need("train_ids"));
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw Error(ErrorCode::MalformedFile, "unparseable checkpoint meta value");
  }
  std::ifstream ids(checkpoint_path + ".ids", std::ios::binary);
  if (!ids) throw Error(ErrorCode::FileNotFound, "cannot open '" + checkpoint_path + ".ids'");
  while (std::getline(ids, line)) {
    if (!line.empty()) meta.train_ids.push_back(line);
  }
  if (meta.train_ids.size() != n_ids) throw Error(ErrorCode::ProvenanceMismatch, "training id list is truncated");
  return meta;
}

LabelledCorpus load_labelled(const std::string& fasta, const std::string& labels, const Alphabet& alphabet,
                             std::size_t max_len, const FastaOptions& opts) {
  LabelledCorpus out;
  out.records = read_fasta_file(fasta, opts);
  out.tokens = tokenize_all(out.records, alphabet, max_len);
  std::unordered_map<std::string, std::size_t> by_id;
  for (const auto& [id, label] : read_labels_file(labels)) by_id[id] = label;
  for (const auto& r : out.records) {
    const auto it = by_id.find(r.id);
    if (it == by_id.end()) throw Error(ErrorCode::IdNotInCorpus, "no label for record '" + r.id + "'");
    out.labels.push_back(it->second);
    out.n_classes = std::max(out.n_classes, it->second + 1);
  }
  return out;
}

double probe_accuracy(const std::vector<std::vector<double>>& embeddings, const std::vector<std::size_t>& labels,
                      std::size_t n_classes, double train_fraction, double l2, std::uint64_t seed) {
  const std::size_t n = embeddings.size();
  if (n < 2 || labels.size() != n) throw Error(ErrorCode::ShapeError, "probe needs >= 2 labelled embeddings");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "probe_train_fraction must lie in (0, 1)");
  }
  const std::size_t f = embeddings.front().size();
  Rng rng(derive_seed(seed, 0x70726f62u));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const auto n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n))), 1, n - 1);

  std::vector<double> mean(f, 0.0), sd(f, 0.0);
  for (std::size_t r = 0; r < n_train; ++r) {
    for (std::size_t j = 0; j < f; ++j) mean[j] += embeddings[order[r]][j];
  }
  for (auto& m : mean) m /= static_cast<double>(n_train);
  for (std::size_t r = 0; r < n_train; ++r) {
    for (std::size_t j = 0; j < f; ++j) sd[j] += std::pow(embeddings[order[r]][j] - mean[j], 2);
  }
  for (auto& s : sd) s = std::sqrt(s / static_cast<double>(n_train));

  ModelConfig pc;
  pc.kind = ModelKind::ConvexProbe;
  pc.n_features = f;
  pc.n_classes = std::max<std::size_t>(n_classes, 2);
  pc.l2_reg = l2;
  const ConvexProbe probe(pc);
  ProbeDataset train, test;
  train.n_features = test.n_features = f;
  std::vector<double> x(f);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& e = embeddings[order[r]];
    for (std::size_t j = 0; j < f; ++j) x[j] = sd[j] > 0.0 ? (e[j] - mean[j]) / sd[j] : 0.0;
    (r < n_train ? train : test).add(x, labels[order[r]]);
  }
  ProbeFitOptions fit;
  fit.grad_tol = 1e-8;
  const auto params = fit_probe(probe, train, ParamVector(probe.layout()), fit).params;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) correct += probe.predict(params, test.row(i)) == test.labels[i];
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

CheckpointEval evaluate_params(const MlmModel& model, const ParamVector& params, const LabelledCorpus& heldout,
                               const EvalConfig& cfg) {
  if (heldout.tokens.empty()) throw Error(ErrorCode::EmptyCorpus, "held-out set is empty");
  if (cfg.probe_seeds.empty()) throw Error(ErrorCode::InvalidConfig, "eval.probe_seeds is empty");
  CheckpointEval ev;
  ev.mlm_loss = mean_mlm_loss(model, params, heldout.tokens, {}, cfg.mask_rate, cfg.mask_seed);
  if (!std::isfinite(ev.mlm_loss)) throw Error(ErrorCode::NonFiniteGradient, "held-out loss is not finite");
  std::vector<std::vector<double>> emb;
  emb.reserve(heldout.tokens.size());
  for (const auto& t : heldout.tokens) emb.push_back(model.embed(params, t));
  double acc = 0.0;
  for (const auto s : cfg.probe_seeds) {
    acc += probe_accuracy(emb, heldout.labels, heldout.n_classes, cfg.probe_train_fraction, cfg.probe_l2, s);
  }
  ev.probe_accuracy = acc / static_cast<double>(cfg.probe_seeds.size());
  return ev;
}

std::pair<double, double> mean_sd(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (const double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

EvalReport evaluate_checkpoints(const std::vector<std::string>& checkpoints, const LabelledCorpus& heldout,
                                const std::string& heldout_digest, const EvalConfig& cfg) {
  if (checkpoints.empty()) throw Error(ErrorCode::InvalidConfig, "at least one checkpoint is required");
  std::unordered_set<std::string> heldout_ids;
  for (const auto& r : heldout.records) heldout_ids.insert(r.id);

  EvalReport report;
  report.heldout_digest = heldout_digest;
  std::map<std::string, std::vector<const CheckpointEval*>> groups;
  report.checkpoints.reserve(checkpoints.size());
  for (const auto& path : checkpoints) {
    const auto meta = CheckpointMeta::read(path);
    const auto digest = file_sha256(path);
    if (digest != meta.checkpoint_sha256) {
      throw Error(ErrorCode::ProvenanceMismatch, "checkpoint '" + path + "' does not match its recorded digest");
    }
    for (const auto& id : meta.train_ids) {
      if (heldout_ids.count(id) != 0) {
        throw Error(ErrorCode::LeakageError, "training id '" + id + "' of '" + path + "' is in the held-out set");
      }
    }
    const MlmModel model(meta.model);
    const auto params = load_checkpoint(path);
    require_same_layout(params.layout(), model.layout(), "checkpoint");
    auto ev = evaluate_params(model, params, heldout, cfg);
    ev.path = path;
    ev.digest = digest;
    ev.strategy = meta.strategy;
    ev.seed = meta.seed;
    report.checkpoints.push_back(ev);
  }
  for (const auto& ev : report.checkpoints) groups[ev.strategy].push_back(&ev);
  for (const auto& [name, members] : groups) {
    std::set<std::uint64_t> seeds;
    std::vector<double> loss, acc;
    for (const auto* ev : members) {
      seeds.insert(ev->seed);
      loss.push_back(ev->mlm_loss);
      acc.push_back(ev->probe_accuracy);
    }
    if (seeds.size() < 3) continue;
    StrategySummary s;
    s.strategy = name;
    s.seeds = members.size();
    std::tie(s.mlm_loss_mean, s.mlm_loss_sd) = mean_sd(loss);
    std::tie(s.probe_accuracy_mean, s.probe_accuracy_sd) = mean_sd(acc);
    report.strategies.push_back(s);
  }
  return report;
}

void write_eval_report(std::ostream& out, const EvalReport& report, const EvalConfig& cfg) {
  out << "#heldout_digest\t" << report.heldout_digest << '\n';
  out << "#eval_mask_seed\t" << cfg.mask_seed << '\n';
  out << "#eval_mask_rate\t" << format_real(cfg.mask_rate) << '\n';
  out << "#probe_seeds\t";
  for (std::size_t i = 0; i < cfg.probe_seeds.size(); ++i) out << (i ? "," : "") << cfg.probe_seeds[i];
  out << '\n';
  out << "kind\tname\tstrategy\tseed\tn\tmlm_loss\tmlm_loss_sd\tprobe_accuracy\tprobe_accuracy_sd\tdigest\n";
  for (const auto& c : report.checkpoints) {
    out << "checkpoint\t" << c.path << '\t' << c.strategy << '\t' << c.seed << "\t1\t" << format_real(c.mlm_loss) << "\t0\t"
        << format_real(c.probe_accuracy) << "\t0\t" << c.digest << '\n';
  }
  for (const auto& s : report.strategies) {
    out << "strategy\t" << s.strategy << '\t' << s.strategy << "\t-\t" << s.seeds << '\t' << format_real(s.mlm_loss_mean) << '\t'
        << format_real(s.mlm_loss_sd) << '\t' << format_real(s.probe_accuracy_mean) << '\t'
        << format_real(s.probe_accuracy_sd) << "\t-\n";
  }
}

}  // namespace prunekit
