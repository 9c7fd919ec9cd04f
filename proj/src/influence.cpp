#include "prunekit/influence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "prunekit/digest.hpp"
#include "prunekit/error.hpp"
#include "prunekit/parallel.hpp"
#include "prunekit/rng.hpp"
#include "prunekit/simd.hpp"

namespace prunekit {

namespace {
constexpr std::uint64_t kAdaptStream = 0x61647074ULL;
}  // namespace

void ScoringConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidConfig, why); };
  if (!(subset_fraction > 0.0 && subset_fraction <= 1.0)) fail("subset_fraction must lie in (0, 1]");
  if (!(damping_rel > 0.0) || !std::isfinite(damping_rel)) fail("damping_rel must be > 0");
  if (!(mask_rate > 0.0 && mask_rate <= 1.0)) throw Error(ErrorCode::InvalidRate, "mask_rate must lie in (0, 1]");
  if (mask_samples == 0) fail("mask_samples must be >= 1");
  if (adapt_batch_size == 0) fail("adapt_batch_size must be >= 1");
  if (fisher_chunk == 0) fail("fisher_chunk must be >= 1");
  if (!(adapt_lr >= 0.0)) fail("adapt_lr must be >= 0");
}

double FisherDiagonal::mean() const {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double FisherDiagonal::max() const {
  return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

double FisherDiagonal::median() const {
  if (values.empty()) return 0.0;
  std::vector<double> sorted = values;
  const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  if (sorted.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(sorted.begin(), mid);
  return 0.5 * (lower + upper);
}

std::vector<std::size_t> draw_subset(std::size_t n, double fraction, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorCode::EmptyCorpus, "cannot draw a subset of an empty corpus");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error(ErrorCode::InvalidConfig, "subset fraction must lie in (0, 1]");
  const auto m = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))), 1, n);
  // Floyd's sampler: O(m) memory regardless of n.
  Rng rng(seed);
  std::unordered_set<std::size_t> chosen;
  chosen.reserve(m);
  for (std::size_t j = n - m; j < n; ++j) {
    const auto t = static_cast<std::size_t>(rng.below(j + 1));
    chosen.insert(chosen.contains(t) ? j : t);
  }
  std::vector<std::size_t> ids(chosen.begin(), chosen.end());
  std::sort(ids.begin(), ids.end());
  return ids;
}

// ------------------------------------------------------------------ Fisher

FisherAccumulator::FisherAccumulator(LayoutPtr layout, std::size_t chunk)
    : layout_(std::move(layout)), chunk_(std::max<std::size_t>(chunk, 1)), total_(layout_->total_size(), 0.0) {}

void FisherAccumulator::add(const GradVector& grad) {
  require_same_layout(grad.layout(), layout_, "accumulate_fisher");
  if (!all_finite(grad.values())) throw Error(ErrorCode::NonFiniteGradient, "gradient has non-finite entries");
  if (partial_.empty()) partial_.assign(total_.size(), 0.0);
  simd::accumulate_squares(partial_, grad.values());
  ++in_partial_;
  if (in_partial_ == chunk_) flush();
}

void FisherAccumulator::add_partial(std::span<const double> sum_of_squares, std::size_t count) {
  if (sum_of_squares.size() != total_.size()) throw Error(ErrorCode::ShapeError, "Fisher partial has the wrong length");
  flush();
  simd::axpy(1.0, sum_of_squares, total_);
  count_ += count;
}

void FisherAccumulator::flush() {
  if (in_partial_ == 0) return;
  simd::axpy(1.0, partial_, total_);
  std::fill(partial_.begin(), partial_.end(), 0.0);
  count_ += in_partial_;
  in_partial_ = 0;
}

FisherDiagonal FisherAccumulator::finish() {
  flush();
  if (count_ == 0) throw Error(ErrorCode::EmptySubset, "Fisher diagonal needs at least one gradient");
  FisherDiagonal out{layout_, total_, count_};
  const double inv = 1.0 / static_cast<double>(count_);
  for (auto& v : out.values) v *= inv;
  return out;
}

FisherDiagonal accumulate_fisher(std::span<const GradVector> grads, std::size_t chunk) {
  if (grads.empty()) throw Error(ErrorCode::EmptySubset, "Fisher diagonal needs at least one gradient");
  FisherAccumulator acc(grads.front().layout(), chunk);
  for (const auto& g : grads) acc.add(g);
  return acc.finish();
}

PrecisionDiagonal precision_with_damping(const FisherDiagonal& fisher, double damping) {
  if (!(damping > 0.0) || !std::isfinite(damping)) throw Error(ErrorCode::InvalidConfig, "damping must be > 0");
  PrecisionDiagonal p{fisher.layout, std::vector<double>(fisher.values.size()), damping};
  for (std::size_t i = 0; i < p.values.size(); ++i) p.values[i] = 1.0 / (fisher.values[i] + damping);
  return p;
}

PrecisionDiagonal precision_from_fisher(const FisherDiagonal& fisher, double damping_rel) {
  if (!(damping_rel > 0.0)) throw Error(ErrorCode::InvalidConfig, "damping_rel must be > 0");
  const double mean = fisher.mean();
  return precision_with_damping(fisher, mean > 0.0 ? damping_rel * mean : damping_rel);
}

double self_influence_score(const GradVector& grad, const PrecisionDiagonal& precision) {
  require_same_layout(grad.layout(), precision.layout, "self_influence_score");
  return simd::weighted_sum_squares(grad.values(), precision.values);
}

// --------------------------------------------------------- gradient sources

MlmGradientSource::MlmGradientSource(const MlmModel& model, const std::vector<TokenSequence>& corpus,
                                     double mask_rate, std::uint64_t mask_seed, std::size_t mask_samples)
    : model_(model), corpus_(corpus), mask_rate_(mask_rate), mask_seed_(mask_seed),
      mask_samples_(std::max<std::size_t>(mask_samples, 1)) {}

MaskedExample MlmGradientSource::example(std::size_t i, std::size_t variant) const {
  const std::uint64_t seed = variant == 0 ? mask_seed_ : derive_seed(mask_seed_, variant);
  return mask_tokens(corpus_[i], mask_rate_, seed);
}

double MlmGradientSource::loss_and_grad(const ParamVector& params, std::size_t i, std::size_t variant,
                                        GradVector& grad) const {
  return model_.loss_and_grad(params, example(i, variant), grad);
}

double ProbeGradientSource::loss_and_grad(const ParamVector& params, std::size_t i, std::size_t,
                                          GradVector& grad) const {
  return probe_.loss_and_grad(params, data_.row(i), data_.labels[i], grad);
}

// -------------------------------------------------------------- streaming

FisherDiagonal fisher_over(const GradientSource& source, const ParamVector& params,
                           std::span<const std::size_t> ids, std::size_t workers, std::size_t chunk,
                           StreamStats* stats) {
  if (ids.empty()) throw Error(ErrorCode::EmptySubset, "Fisher subset is empty");
  require_same_layout(params.layout(), source.layout(), "fisher_over");
  workers = std::max<std::size_t>(workers, 1);
  chunk = std::max<std::size_t>(chunk, 1);
  const std::size_t variants = source.variants();
  const std::size_t n_items = ids.size() * variants;
  const std::size_t n_chunks = (n_items + chunk - 1) / chunk;
  const std::size_t wave = std::min(workers, n_chunks);

  FisherAccumulator acc(source.layout(), chunk);
  std::vector<GradVector> grads(wave, GradVector(source.layout()));
  std::vector<std::vector<double>> partials(wave, std::vector<double>(source.layout()->total_size()));
  if (stats) {
    stats->buffer_doubles = source.layout()->total_size();
    stats->peak_buffers = std::max(stats->peak_buffers, 2 * wave + 1);
  }

  for (std::size_t first = 0; first < n_chunks; first += wave) {
    const std::size_t count = std::min(wave, n_chunks - first);
    parallel_for(count, workers, [&](std::size_t slot, std::size_t) {
      auto& partial = partials[slot];
      auto& g = grads[slot];
      std::fill(partial.begin(), partial.end(), 0.0);
      const std::size_t begin = (first + slot) * chunk;
      const std::size_t end = std::min(begin + chunk, n_items);
      for (std::size_t item = begin; item < end; ++item) {
        source.loss_and_grad(params, ids[item / variants], item % variants, g);
        if (!all_finite(g.values())) {
          throw Error(ErrorCode::NonFiniteGradient, "non-finite gradient for sample " + std::to_string(ids[item / variants]));
        }
        simd::accumulate_squares(partial, g.values());
      }
    });
    for (std::size_t slot = 0; slot < count; ++slot) {
      const std::size_t begin = (first + slot) * chunk;
      acc.add_partial(partials[slot], std::min(begin + chunk, n_items) - begin);
    }
  }
  return acc.finish();
}

std::vector<InfluenceRecord> score_samples(const GradientSource& source, const ParamVector& params,
                                           const PrecisionDiagonal& precision, std::size_t workers,
                                           StreamStats* stats) {
  require_same_layout(params.layout(), source.layout(), "score_samples");
  require_same_layout(precision.layout, source.layout(), "score_samples precision");
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(source.size(), 1));
  std::vector<GradVector> grads(workers, GradVector(source.layout()));
  if (stats) {
    stats->buffer_doubles = source.layout()->total_size();
    stats->peak_buffers = std::max(stats->peak_buffers, workers + 1);  // + precision
  }
  const std::size_t variants = source.variants();
  std::vector<InfluenceRecord> records(source.size());
  parallel_for(source.size(), workers, [&](std::size_t i, std::size_t w) {
    double score = 0.0;
    double norm = 0.0;
    for (std::size_t r = 0; r < variants; ++r) {
      source.loss_and_grad(params, i, r, grads[w]);
      if (!all_finite(grads[w].values())) {
        throw Error(ErrorCode::NonFiniteGradient, "non-finite gradient for sample " + std::to_string(i));
      }
      score += self_influence_score(grads[w], precision);
      norm += std::sqrt(simd::dot(grads[w].values(), grads[w].values()));
    }
    const double inv = 1.0 / static_cast<double>(variants);
    records[i] = {i, score * inv, norm * inv, source.sample_length(i)};
  });
  return records;
}

double mean_gradient_norm(const GradientSource& source, const ParamVector& params,
                          std::span<const std::size_t> ids) {
  if (ids.empty()) return 0.0;
  GradVector g(source.layout());
  std::vector<double> mean(source.layout()->total_size(), 0.0);
  for (const auto i : ids) {
    source.loss_and_grad(params, i, 0, g);
    simd::axpy(1.0, g.values(), mean);
  }
  return l2_norm(mean) / static_cast<double>(ids.size());
}

// ------------------------------------------------------------- adaptation

AdaptResult adapt_model(const MlmModel& model, ParamVector params, const std::vector<TokenSequence>& corpus,
                        std::span<const std::size_t> subset_ids, const ScoringConfig& cfg) {
  if (subset_ids.empty()) throw Error(ErrorCode::EmptySubset, "adaptation subset is empty");
  const MlmGradientSource source(model, corpus, cfg.mask_rate, cfg.mask_seed, 1);
  AdaptResult out;
  out.loss_before = mean_mlm_loss(model, params, corpus, subset_ids, cfg.mask_rate, cfg.mask_seed);
  if (cfg.adapt_epochs > 0) {
    TrainOptions opts;
    opts.optimizer.lr = cfg.adapt_lr;
    opts.optimizer.weight_decay = cfg.adapt_weight_decay;
    opts.optimizer.warmup_steps = cfg.adapt_warmup;
    opts.epochs = cfg.adapt_epochs;
    opts.batch_size = cfg.adapt_batch_size;
    opts.seed = derive_seed(cfg.subset_seed, kAdaptStream);
    opts.mask_rate = cfg.mask_rate;
    opts.workers = cfg.workers;
    auto trained = train_from(model, std::move(params), corpus, subset_ids, opts);
    params = std::move(trained.params);
    out.epoch_losses = std::move(trained.epoch_losses);
  }
  out.loss_after = mean_mlm_loss(model, params, corpus, subset_ids, cfg.mask_rate, cfg.mask_seed);
  out.grad_norm_after = mean_gradient_norm(source, params, subset_ids);
  out.params = std::move(params);
  return out;
}

AdaptResult adapt_probe(const ConvexProbe& probe, ParamVector params, const ProbeDataset& data,
                        std::span<const std::size_t> subset_ids, const ScoringConfig& cfg) {
  if (subset_ids.empty()) throw Error(ErrorCode::EmptySubset, "adaptation subset is empty");
  const ProbeDataset sub = data.subset(subset_ids);
  AdaptResult out;
  out.loss_before = probe.mean_loss(params, sub);
  if (cfg.adapt_epochs > 0) params = fit_probe(probe, sub, std::move(params)).params;
  out.loss_after = probe.mean_loss(params, sub);
  GradVector g(probe.layout());
  probe.mean_loss_and_grad(params, sub, g);
  out.grad_norm_after = l2_norm(g.values());
  out.params = std::move(params);
  return out;
}

// ---------------------------------------------------------------- pipeline

namespace {

ScoreResult finish_scoring(const GradientSource& source, AdaptResult adapted, std::vector<std::size_t> subset,
                           const ScoringConfig& cfg) {
  ScoreResult out;
  out.subset_ids = std::move(subset);
  out.adapted = std::move(adapted.params);
  out.adapt_audit = std::move(adapted);
  out.fisher = fisher_over(source, out.adapted, out.subset_ids, cfg.workers, cfg.fisher_chunk, &out.stats);
  const auto precision = precision_from_fisher(out.fisher, cfg.damping_rel);
  out.damping = precision.damping;
  out.records = score_samples(source, out.adapted, precision, cfg.workers, &out.stats);
  return out;
}

}  // namespace

ScoreResult score_corpus(const MlmModel& model, ParamVector params, const std::vector<TokenSequence>& corpus,
                         const ScoringConfig& cfg) {
  cfg.validate();
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "scoring corpus is empty");
  auto subset = draw_subset(corpus.size(), cfg.subset_fraction, cfg.subset_seed);
  auto adapted = adapt_model(model, std::move(params), corpus, subset, cfg);
  const MlmGradientSource source(model, corpus, cfg.mask_rate, cfg.mask_seed, cfg.mask_samples);
  return finish_scoring(source, std::move(adapted), std::move(subset), cfg);
}

ScoreResult score_probe(const ConvexProbe& probe, ParamVector params, const ProbeDataset& data,
                        const ScoringConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw Error(ErrorCode::EmptyCorpus, "scoring dataset is empty");
  auto subset = draw_subset(data.size(), cfg.subset_fraction, cfg.subset_seed);
  auto adapted = adapt_probe(probe, std::move(params), data, subset, cfg);
  const ProbeGradientSource source(probe, data);
  return finish_scoring(source, std::move(adapted), std::move(subset), cfg);
}

// ----------------------------------------------------------------- files

void write_scores(std::ostream& out, std::vector<InfluenceRecord> records) {
  std::sort(records.begin(), records.end(),
            [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });
  out << "sample_id\tscore\tgrad_norm\tseq_length\n";
  for (const auto& r : records) {
    out << r.sample_id << '\t' << format_real(r.score) << '\t' << format_real(r.grad_norm) << '\t'
        << r.seq_length << '\n';
  }
}

std::vector<InfluenceRecord> read_scores(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "sample_id\tscore\tgrad_norm\tseq_length") {
    throw Error(ErrorCode::MalformedFile, "scores file lacks the expected header");
  }
  std::vector<InfluenceRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    InfluenceRecord r;
    if (!(ls >> r.sample_id >> r.score >> r.grad_norm >> r.seq_length)) {
      throw Error(ErrorCode::MalformedFile, "scores line " + std::to_string(line_no) + " is malformed");
    }
    if (!std::isfinite(r.score) || r.score < 0.0) {
      throw Error(ErrorCode::MalformedFile, "scores line " + std::to_string(line_no) + " has an invalid score");
    }
    records.push_back(r);
  }
  return records;
}

void write_scores_file(const std::string& path, const std::vector<InfluenceRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write '" + path + "'");
  write_scores(out, records);
}

std::vector<InfluenceRecord> read_scores_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open '" + path + "'");
  return read_scores(in);
}

}  // namespace prunekit
