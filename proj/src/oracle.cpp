#include "prunekit/oracle.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "prunekit/digest.hpp"
#include "prunekit/error.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

namespace {

std::string bytes_digest(std::span<const double> values) {
  return sha256_hex(std::string_view(reinterpret_cast<const char*>(values.data()), values.size_bytes()));
}

std::string probe_data_digest(const ProbeDataset& data) {
  std::string bytes(reinterpret_cast<const char*>(data.features.data()), data.features.size() * sizeof(double));
  bytes.append(reinterpret_cast<const char*>(data.labels.data()), data.labels.size() * sizeof(std::size_t));
  return sha256_hex(bytes);
}

void symmetrize(std::vector<double>& m, std::size_t d) {
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const double avg = 0.5 * (m[i * d + j] + m[j * d + i]);
      m[i * d + j] = avg;
      m[j * d + i] = avg;
    }
  }
}

void require_dense_feasible(std::size_t d) {
  if (d > kMaxDenseDim) {
    throw Error(ErrorCode::TooLarge, "dense Hessian of dimension " + std::to_string(d) + " exceeds " +
                                         std::to_string(kMaxDenseDim));
  }
}

}  // namespace

double DenseHessian::mean_diagonal() const {
  if (dim == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < dim; ++i) s += at(i, i);
  return s / static_cast<double>(dim);
}

double DenseHessian::asymmetry() const {
  double peak = 0.0;
  double skew = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      peak = std::max(peak, std::abs(at(i, j)));
      skew = std::max(skew, std::abs(at(i, j) - at(j, i)));
    }
  }
  return peak > 0.0 ? skew / peak : 0.0;
}

DenseHessian exact_hessian(const ConvexProbe& probe, const ParamVector& params, const ProbeDataset& data) {
  const std::size_t d = probe.layout()->total_size();
  require_dense_feasible(d);
  if (data.size() == 0) throw Error(ErrorCode::EmptySubset, "Hessian over an empty dataset");
  DenseHessian h;
  h.dim = d;
  h.matrix.assign(d * d, 0.0);
  const double inv = 1.0 / static_cast<double>(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) probe.accumulate_hessian(params, data.row(i), inv, h.matrix);
  symmetrize(h.matrix, d);
  h.at_params = bytes_digest(params.values());
  h.dataset_digest = probe_data_digest(data);
  return h;
}

DenseHessian finite_diff_hessian(const std::function<void(std::span<const double>, std::span<double>)>& grad,
                                 std::span<const double> theta, double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidStep, "finite-difference step must be > 0");
  const std::size_t d = theta.size();
  require_dense_feasible(d);
  DenseHessian out;
  out.dim = d;
  out.matrix.assign(d * d, 0.0);
  std::vector<double> point(theta.begin(), theta.end()), up(d), down(d);
  for (std::size_t i = 0; i < d; ++i) {
    point[i] = theta[i] + h;
    grad(point, up);
    point[i] = theta[i] - h;
    grad(point, down);
    point[i] = theta[i];
    for (std::size_t j = 0; j < d; ++j) out.matrix[j * d + i] = (up[j] - down[j]) / (2.0 * h);
  }
  symmetrize(out.matrix, d);
  out.at_params = bytes_digest(theta);
  return out;
}

DenseHessian exact_hessian(const MlmModel& model, const ParamVector& params, std::span<const MaskedExample> examples,
                           double h) {
  require_dense_feasible(params.size());
  if (examples.empty()) throw Error(ErrorCode::EmptySubset, "Hessian over an empty dataset");
  ParamVector point = params;
  GradVector g(model.layout());
  const double inv = 1.0 / static_cast<double>(examples.size());
  auto mean_grad = [&](std::span<const double> theta, std::span<double> out) {
    std::copy(theta.begin(), theta.end(), point.values().begin());
    std::fill(out.begin(), out.end(), 0.0);
    for (const auto& ex : examples) {
      model.loss_and_grad(point, ex, g);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += g[i] * inv;
    }
  };
  auto hess = finite_diff_hessian(mean_grad, params.values(), h);
  std::string tokens;
  for (const auto& ex : examples) tokens.append(ex.input.begin(), ex.input.end());
  hess.dataset_digest = sha256_hex(tokens);
  return hess;
}

SelfInfluenceSolve exact_self_influence_solve(std::span<const double> grad, const DenseHessian& hessian, double ridge) {
  if (grad.size() != hessian.dim) throw Error(ErrorCode::ShapeError, "gradient and Hessian dimensions differ");
  if (ridge < 0.0) {
    const double md = hessian.mean_diagonal();
    ridge = md > 0.0 ? 1e-6 * md : 1e-6;
  }
  const auto d = static_cast<Eigen::Index>(hessian.dim);
  Eigen::Map<const Eigen::MatrixXd> h(hessian.matrix.data(), d, d);
  Eigen::Map<const Eigen::VectorXd> g(grad.data(), d);
  for (int attempt = 1; attempt <= 6; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(h + ridge * Eigen::MatrixXd::Identity(d, d));
    if (llt.info() == Eigen::Success) {
      const Eigen::VectorXd x = llt.solve(g);
      return {g.dot(x), ridge, attempt};
    }
    ridge = ridge > 0.0 ? ridge * 10.0 : 1e-6;
  }
  throw Error(ErrorCode::NotPositiveDefinite, "Hessian not positive definite after 6 ridge increases");
}

double exact_self_influence(std::span<const double> grad, const DenseHessian& hessian, double ridge) {
  return exact_self_influence_solve(grad, hessian, ridge).value;
}

double validation_influence(std::span<const GradVector> validation_grads, std::span<const double> train_grad,
                            const DenseHessian& hessian, double ridge) {
  if (validation_grads.empty()) throw Error(ErrorCode::EmptySubset, "validation set is empty");
  if (train_grad.size() != hessian.dim) throw Error(ErrorCode::ShapeError, "gradient and Hessian dimensions differ");
  if (ridge < 0.0) {
    const double md = hessian.mean_diagonal();
    ridge = md > 0.0 ? 1e-6 * md : 1e-6;
  }
  const auto d = static_cast<Eigen::Index>(hessian.dim);
  Eigen::Map<const Eigen::MatrixXd> h(hessian.matrix.data(), d, d);
  Eigen::LLT<Eigen::MatrixXd> llt(h + ridge * Eigen::MatrixXd::Identity(d, d));
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NotPositiveDefinite, "Hessian not positive definite");
  const Eigen::VectorXd x = llt.solve(Eigen::Map<const Eigen::VectorXd>(train_grad.data(), d));
  double total = 0.0;
  for (const auto& gv : validation_grads) {
    if (gv.size() != hessian.dim) throw Error(ErrorCode::ShapeError, "validation gradient has the wrong length");
    total += Eigen::Map<const Eigen::VectorXd>(gv.values().data(), d).dot(x);
  }
  return total / static_cast<double>(validation_grads.size());
}

// -------------------------------------------------------------------- LOO

namespace {

std::vector<double> per_sample_losses(const ConvexProbe& probe, const ParamVector& params, const ProbeDataset& data) {
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = probe.loss(params, data.row(i), data.labels[i]);
  return out;
}

}  // namespace

LooOracle::LooOracle(const ConvexProbe& probe, const ProbeDataset& data, const LooOptions& opts)
    : probe_(probe), data_(data), opts_(opts) {
  if (data.size() > opts.max_samples) {
    throw Error(ErrorCode::TooLarge, "leave-one-out oracle limited to " + std::to_string(opts.max_samples) + " samples");
  }
  if (data.size() < 2) throw Error(ErrorCode::EmptySubset, "leave-one-out needs at least 2 samples");
  ProbeFitOptions fit{opts.grad_tol, opts.max_iter};
  optimum_ = fit_probe(probe, data, ParamVector(probe.layout()), fit).params;
  base_losses_ = per_sample_losses(probe, optimum_, data);
}

double LooOracle::delta(std::size_t leave_out) const {
  if (leave_out >= data_.size()) throw Error(ErrorCode::IdNotInCorpus, "leave-out id " + std::to_string(leave_out));
  ProbeFitOptions fit{opts_.grad_tol, opts_.max_iter};
  const auto reduced = fit_probe(probe_, data_.without(leave_out), optimum_, fit).params;
  const auto losses = per_sample_losses(probe_, reduced, data_);
  double total = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) total += losses[i] - base_losses_[i];
  return total;
}

double loo_delta(const ConvexProbe& probe, const ProbeDataset& data, std::size_t leave_out, const LooOptions& opts) {
  return LooOracle(probe, data, opts).delta(leave_out);
}

// --------------------------------------------------------------- Spearman

namespace {

std::vector<double> average_ranks(std::span<const double> v, double tie_tolerance) {
  double scale = 0.0;
  for (const double x : v) scale = std::max(scale, std::abs(x));
  const double tol = tie_tolerance * scale;
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] - v[order[j]] <= tol) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b, double tie_tolerance) {
  if (a.size() != b.size()) throw Error(ErrorCode::ShapeError, "spearman inputs differ in length");
  if (a.size() < 2) throw Error(ErrorCode::ShapeError, "spearman needs at least 2 values");
  const auto ra = average_ranks(a, tie_tolerance);
  const auto rb = average_ranks(b, tie_tolerance);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean;
    const double db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw Error(ErrorCode::ConstantInput, "spearman undefined for constant input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

// -------------------------------------------------------------- instances

ProbeInstance make_probe_instance(const ProbeInstanceConfig& cfg) {
  if (cfg.n_samples < 2 || cfg.n_classes < 2 || cfg.n_features == 0) {
    throw Error(ErrorCode::InvalidConfig, "probe instance needs >= 2 samples, >= 2 classes and >= 1 feature");
  }
  if (!(cfg.duplicate_fraction >= 0.0 && cfg.duplicate_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "duplicate_fraction must lie in [0, 1)");
  }
  Rng rng(cfg.seed);
  const std::size_t f = cfg.n_features;
  std::vector<std::vector<double>> centers(cfg.n_classes, std::vector<double>(f));
  for (auto& c : centers) {
    for (auto& v : c) v = 1.5 * rng.normal();
  }

  ProbeInstance inst;
  inst.data.n_features = f;
  inst.model.kind = ModelKind::ConvexProbe;
  inst.model.n_features = f;
  inst.model.n_classes = cfg.n_classes;
  inst.model.l2_reg = cfg.l2_reg;

  const auto n_dup = static_cast<std::size_t>(std::llround(cfg.duplicate_fraction * static_cast<double>(cfg.n_samples)));
  const std::size_t n_unique = cfg.n_samples - n_dup;
  std::vector<double> x(f);
  auto draw_unique = [&](std::size_t& label) {
    label = static_cast<std::size_t>(rng.below(cfg.n_classes));
    for (std::size_t j = 0; j < f; ++j) x[j] = centers[label][j] + rng.normal();
    if (rng.uniform() < cfg.label_noise) label = static_cast<std::size_t>(rng.below(cfg.n_classes));
  };

  std::vector<std::vector<double>> protos;
  std::vector<std::size_t> proto_labels;
  for (std::size_t p = 0; p < std::max<std::size_t>(cfg.n_prototypes, 1); ++p) {
    std::size_t label = p % cfg.n_classes;
    for (std::size_t j = 0; j < f; ++j) x[j] = centers[label][j] + 0.5 * rng.normal();
    protos.push_back(x);
    proto_labels.push_back(label);
  }

  std::vector<std::pair<std::vector<double>, std::pair<std::size_t, bool>>> rows;
  for (std::size_t i = 0; i < n_unique; ++i) {
    std::size_t label = 0;
    draw_unique(label);
    rows.push_back({x, {label, false}});
  }
  for (std::size_t i = 0; i < n_dup; ++i) {
    const std::size_t p = i % protos.size();
    for (std::size_t j = 0; j < f; ++j) x[j] = protos[p][j] + cfg.feature_noise * rng.normal();
    rows.push_back({x, {proto_labels[p], true}});
  }
  rng.shuffle(rows);
  for (const auto& [feat, meta] : rows) {
    inst.data.add(feat, meta.first);
    inst.is_duplicate.push_back(meta.second);
  }
  return inst;
}

ProbeInstance make_orthogonal_instance(std::size_t n_groups, std::size_t group_size, double l2_reg) {
  if (n_groups == 0 || group_size < 2) throw Error(ErrorCode::InvalidConfig, "orthogonal instance needs groups of >= 2");
  ProbeInstance inst;
  inst.data.n_features = n_groups;
  inst.model.kind = ModelKind::ConvexProbe;
  inst.model.n_features = n_groups;
  inst.model.n_classes = 2;
  inst.model.l2_reg = l2_reg;
  inst.model.probe_bias = false;
  std::vector<double> x(n_groups);
  for (std::size_t g = 0; g < n_groups; ++g) {
    for (std::size_t i = 0; i < group_size; ++i) {
      std::fill(x.begin(), x.end(), 0.0);
      // Magnitudes 1.0, 1.25, ...; every third sample carries the minority label.
      x[g] = 1.0 + 0.25 * static_cast<double>(i);
      inst.data.add(x, i % 3 == 2 ? 1 : 0);
      inst.is_duplicate.push_back(false);
    }
  }
  return inst;
}

// ----------------------------------------------------------------- report

OracleReport run_oracle_report(const ProbeDataset& data, const ModelConfig& probe_cfg, const OracleConfig& cfg) {
  if (data.size() > cfg.max_samples) {
    throw Error(ErrorCode::TooLarge, "oracle report limited to " + std::to_string(cfg.max_samples) + " samples");
  }
  const ConvexProbe probe(probe_cfg);
  if (probe.layout()->total_size() > cfg.max_dim) {
    throw Error(ErrorCode::TooLarge, "oracle report limited to " + std::to_string(cfg.max_dim) + " parameters");
  }

  auto scored = score_probe(probe, ParamVector(probe.layout()), data, cfg.scoring);
  const auto hessian = exact_hessian(probe, scored.adapted, data.subset(scored.subset_ids));

  OracleReport report;
  report.damping = scored.damping;
  report.subset_size = scored.subset_ids.size();
  report.subset_grad_norm = scored.adapt_audit.grad_norm_after;
  const double median = scored.fisher.median();
  report.curvature_spread = median > 0.0 ? scored.fisher.max() / median : 0.0;

  std::vector<bool> in_subset(data.size(), false);
  for (const auto id : scored.subset_ids) in_subset[id] = true;

  std::unique_ptr<LooOracle> loo;
  if (cfg.with_loo) loo = std::make_unique<LooOracle>(probe, data, cfg.loo);

  GradVector g(probe.layout());
  for (std::size_t i = 0; i < data.size(); ++i) {
    OracleRow row;
    row.sample_id = i;
    row.approx_score = scored.records[i].score;
    probe.loss_and_grad(scored.adapted, data.row(i), data.labels[i], g);
    const auto solve = exact_self_influence_solve(g.values(), hessian);
    row.exact_score = solve.value;
    report.ridge = solve.ridge;
    row.loo_delta = loo ? loo->delta(i) : 0.0;
    row.in_subset = in_subset[i];
    report.rows.push_back(row);
  }

  std::vector<double> approx, exact, deltas;
  for (const auto& r : report.rows) {
    approx.push_back(r.approx_score);
    exact.push_back(r.exact_score);
    deltas.push_back(r.loo_delta);
  }
  report.spearman_approx_vs_exact = spearman(approx, exact, cfg.tie_tolerance);
  if (loo) {
    report.spearman_approx_vs_loo = spearman(approx, deltas, cfg.tie_tolerance);
    report.spearman_exact_vs_loo = spearman(exact, deltas, cfg.tie_tolerance);
  }
  return report;
}

void write_oracle_report(std::ostream& out, const OracleReport& report) {
  out << "sample_id\tapprox_score\texact_score\tloo_delta\tin_subset\n";
  for (const auto& r : report.rows) {
    out << r.sample_id << '\t' << format_real(r.approx_score) << '\t' << format_real(r.exact_score) << '\t'
        << format_real(r.loo_delta) << '\t' << (r.in_subset ? 1 : 0) << '\n';
  }
  out << "#summary\n";
  out << "#spearman_approx_vs_exact\t" << format_real(report.spearman_approx_vs_exact) << '\n';
  out << "#spearman_approx_vs_loo\t" << format_real(report.spearman_approx_vs_loo) << '\n';
  out << "#spearman_exact_vs_loo\t" << format_real(report.spearman_exact_vs_loo) << '\n';
  out << "#curvature_spread\t" << format_real(report.curvature_spread) << '\n';
  out << "#damping\t" << format_real(report.damping) << '\n';
  out << "#ridge\t" << format_real(report.ridge) << '\n';
  out << "#subset_size\t" << report.subset_size << '\n';
  out << "#subset_grad_norm\t" << format_real(report.subset_grad_norm) << '\n';
}

OracleReport read_oracle_report(std::istream& in) {
  OracleReport report;
  std::string line;
  if (!std::getline(in, line) || line.rfind("sample_id\t", 0) != 0) {
    throw Error(ErrorCode::MalformedFile, "oracle report lacks the expected header");
  }
  bool in_summary = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line == "#summary") {
      in_summary = true;
      continue;
    }
    std::istringstream ls(line);
    if (in_summary) {
      std::string key;
      double value = 0.0;
      if (!(ls >> key >> value)) throw Error(ErrorCode::MalformedFile, "bad summary line '" + line + "'");
      if (key == "#spearman_approx_vs_exact") report.spearman_approx_vs_exact = value;
      else if (key == "#spearman_approx_vs_loo") report.spearman_approx_vs_loo = value;
      else if (key == "#spearman_exact_vs_loo") report.spearman_exact_vs_loo = value;
      else if (key == "#curvature_spread") report.curvature_spread = value;
      else if (key == "#damping") report.damping = value;
      else if (key == "#ridge") report.ridge = value;
      else if (key == "#subset_size") report.subset_size = static_cast<std::size_t>(value);
      else if (key == "#subset_grad_norm") report.subset_grad_norm = value;
      continue;
    }
    OracleRow r;
    int flag = 0;
    if (!(ls >> r.sample_id >> r.approx_score >> r.exact_score >> r.loo_delta >> flag)) {
      throw Error(ErrorCode::MalformedFile, "bad oracle row '" + line + "'");
    }
    r.in_subset = flag != 0;
    report.rows.push_back(r);
  }
  if (!in_summary) throw Error(ErrorCode::MalformedFile, "oracle report lacks a #summary block");
  return report;
}

}  // namespace prunekit
