#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "prunekit/error.hpp"
#include "prunekit/oracle.hpp"
#include "prunekit/rng.hpp"
#include "support.hpp"

using namespace prunekit;
using testsupport::rel_err;

namespace {

ModelConfig probe_cfg(std::size_t features, std::size_t classes, double l2, bool bias = true) {
  ModelConfig c;
  c.kind = ModelKind::ConvexProbe;
  c.n_features = features;
  c.n_classes = classes;
  c.l2_reg = l2;
  c.probe_bias = bias;
  return c;
}

DenseHessian dense(std::size_t d, const std::vector<double>& m) {
  DenseHessian h;
  h.dim = d;
  h.matrix = m;
  return h;
}

// Gauss-Jordan inverse with partial pivoting.
std::vector<double> explicit_inverse(std::vector<double> a, std::size_t n) {
  std::vector<double> inv(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
    }
    for (std::size_t k = 0; k < n; ++k) {
      std::swap(a[c * n + k], a[piv * n + k]);
      std::swap(inv[c * n + k], inv[piv * n + k]);
    }
    const double d = a[c * n + c];
    for (std::size_t k = 0; k < n; ++k) {
      a[c * n + k] /= d;
      inv[c * n + k] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r * n + c];
      for (std::size_t k = 0; k < n; ++k) {
        a[r * n + k] -= f * a[c * n + k];
        inv[r * n + k] -= f * inv[c * n + k];
      }
    }
  }
  return inv;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected a prunekit::Error");
  return ErrorCode::MalformedFile;
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("bias block of the probe Hessian is the softmax covariance") {
  const auto c = probe_cfg(3, 4, 0.0);
  const ConvexProbe probe(c);
  Rng rng(1);
  auto p = init_params(c, 2);
  for (auto& v : p.values()) v = rng.uniform(-1.0, 1.0);
  ProbeDataset data;
  data.n_features = 3;
  const double zero[3] = {0, 0, 0};
  for (std::size_t y = 0; y < 4; ++y) data.add(zero, y);
  const auto h = exact_hessian(probe, p, data);
  const auto prob = probe.probabilities(p, zero);
  const std::size_t off = 4 * 3;  // bias follows the weight matrix
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = 0; b < 4; ++b) {
      const double expect = (a == b ? prob[a] : 0.0) - prob[a] * prob[b];
      CHECK(std::abs(h.at(off + a, off + b) - expect) <= 1e-15);
    }
  }
  for (std::size_t i = 0; i < off; ++i) CHECK(h.at(i, i) == 0.0);
}

TEST_CASE("probe Hessian matches differences of the analytic gradient") {
  const auto c = probe_cfg(4, 3, 0.0);
  const ConvexProbe probe(c);
  Rng rng(3);
  ProbeDataset data;
  data.n_features = 4;
  for (int i = 0; i < 25; ++i) {
    double x[4];
    for (auto& v : x) v = rng.normal();
    data.add(x, rng.below(3));
  }
  auto p = init_params(c, 4);
  for (auto& v : p.values()) v = rng.uniform(-0.5, 0.5);
  const auto h = exact_hessian(probe, p, data);
  const auto fd = finite_diff_hessian(
      [&](std::span<const double> theta, std::span<double> g) {
        ParamVector q(probe.layout(), std::vector<double>(theta.begin(), theta.end()));
        GradVector gv(probe.layout());
        probe.mean_loss_and_grad(q, data, gv);
        std::copy(gv.values().begin(), gv.values().end(), g.begin());
      },
      p.values(), 1e-5);
  for (std::size_t i = 0; i < h.matrix.size(); ++i) CHECK(std::abs(h.matrix[i] - fd.matrix[i]) <= 1e-7);
  CHECK(h.asymmetry() == 0.0);
}

TEST_CASE("finite-difference Hessian of a quadratic") {
  const std::vector<double> a{4, 1, 0, 1, 3, -1, 0, -1, 2};
  const auto h = finite_diff_hessian(
      [&](std::span<const double> t, std::span<double> g) {
        for (std::size_t i = 0; i < 3; ++i) {
          g[i] = 0.0;
          for (std::size_t j = 0; j < 3; ++j) g[i] += a[i * 3 + j] * t[j];
        }
      },
      std::vector<double>{0.3, -1.2, 2.0}, 1e-4);
  for (std::size_t i = 0; i < 9; ++i) CHECK(std::abs(h.matrix[i] - a[i]) <= 1e-6);
}

TEST_CASE("regularizer adds a scaled identity") {
  Rng rng(5);
  ProbeDataset data;
  data.n_features = 3;
  for (int i = 0; i < 12; ++i) {
    double x[3];
    for (auto& v : x) v = rng.normal();
    data.add(x, rng.below(2));
  }
  const auto c0 = probe_cfg(3, 2, 0.0), c1 = probe_cfg(3, 2, 0.25);
  auto p = init_params(c0, 1);
  for (auto& v : p.values()) v = rng.uniform(-1, 1);
  const auto h0 = exact_hessian(ConvexProbe(c0), p, data);
  const auto h1 = exact_hessian(ConvexProbe(c1), p, data);
  for (std::size_t i = 0; i < h0.dim; ++i) {
    for (std::size_t j = 0; j < h0.dim; ++j) {
      CHECK(std::abs(h1.at(i, j) - h0.at(i, j) - (i == j ? 0.25 : 0.0)) <= 1e-15);
    }
  }
}

TEST_CASE("MLM Hessian by differences is symmetric and finite") {
  ModelConfig c;
  c.embed_dim = 3;
  c.hidden_dim = 4;
  c.context_window = 3;
  c.init_scale = 0.3;
  const MlmModel model(c);
  TokenSequence s;
  s.tokens = {3, 4, 5, 6, 3, 4, 5, 6};
  const std::vector<MaskedExample> ex{mask_tokens(s, 0.3, 1), mask_tokens(s, 0.3, 2)};
  const auto h = exact_hessian(model, init_params(c, 7), ex);
  CHECK(h.dim == model.layout()->total_size());
  CHECK(h.asymmetry() == 0.0);
  CHECK(std::all_of(h.matrix.begin(), h.matrix.end(), [](double v) { return std::isfinite(v); }));
}

TEST_CASE("exact self-influence") {
  CHECK(exact_self_influence(std::vector<double>{1, 2}, dense(2, {1, 0, 0, 1}), 0.0) == doctest::Approx(5.0));

  const std::vector<double> f{4, 1, 0.25};
  const double lambda = 0.5;
  const auto h = dense(3, {f[0], 0, 0, 0, f[1], 0, 0, 0, f[2]});
  const std::vector<double> g{2, -1, 3};
  const auto l = Layout::make({{"g", {3}}});
  FisherDiagonal fd{l, f, 1};
  const double engine = self_influence_score(GradVector(l, g), precision_with_damping(fd, lambda));
  CHECK(rel_err(exact_self_influence(g, h, lambda), engine) <= 1e-14);

  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 10;
    std::vector<double> b(d * d), spd(d * d, 0.0), gr(d);
    for (auto& v : b) v = rng.normal();
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < d; ++k) spd[i * d + j] += b[i * d + k] * b[j * d + k];
      }
      spd[i * d + i] += 0.1;
    }
    for (auto& v : gr) v = rng.normal();
    const auto inv = explicit_inverse(spd, d);
    double brute = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) brute += gr[i] * inv[i * d + j] * gr[j];
    }
    CHECK(rel_err(exact_self_influence(gr, dense(d, spd), 0.0), brute) <= 1e-8);
  }
}

TEST_CASE("ridge ladder") {
  // Indefinite: fails at the default ridge, succeeds once the ridge exceeds 1.
  const auto h = dense(2, {1, 0, 0, -0.5});
  const auto s = exact_self_influence_solve(std::vector<double>{1, 1}, h, 0.1);
  CHECK(s.attempts == 2);
  CHECK(s.ridge == doctest::Approx(1.0));
  CHECK(code_of([] { exact_self_influence(std::vector<double>{1, 1}, dense(2, {1, 0, 0, -1e9}), 1e-3); }) ==
        ErrorCode::NotPositiveDefinite);
  const auto d = exact_self_influence_solve(std::vector<double>{1, 1}, dense(2, {2, 0, 0, 4}));
  CHECK(d.ridge == doctest::Approx(3e-6));
  CHECK(d.attempts == 1);
}

TEST_CASE("validation influence reduces to the bilinear form") {
  const auto l = Layout::make({{"g", {2}}});
  const std::vector<GradVector> val{GradVector(l, {1, 0}), GradVector(l, {0, 2})};
  const double v = validation_influence(val, std::vector<double>{3, 4}, dense(2, {2, 0, 0, 4}), 0.0);
  CHECK(v == doctest::Approx(0.5 * (1.5 + 2.0)));
}

TEST_CASE("dense Hessian size limit") {
  const auto c = probe_cfg(kMaxDenseDim, 2, 0.0);
  const ConvexProbe probe(c);
  ProbeDataset data;
  data.n_features = kMaxDenseDim;
  data.add(std::vector<double>(kMaxDenseDim, 0.0), 0);
  CHECK(code_of([&] { exact_hessian(probe, init_params(c, 0), data); }) == ErrorCode::TooLarge);
}

TEST_CASE("leave-one-out: symmetric pair") {
  const auto c = probe_cfg(1, 2, 0.1, false);
  const ConvexProbe probe(c);
  ProbeDataset data;
  data.n_features = 1;
  data.add(std::vector<double>{1.0}, 0);
  data.add(std::vector<double>{-1.0}, 1);
  const LooOracle loo(probe, data);
  CHECK(rel_err(loo.delta(0), loo.delta(1)) <= 1e-9);
}

TEST_CASE("leave-one-out: a sample with zero gradient at the optimum") {
  const auto c = probe_cfg(1, 2, 0.1, false);
  const ConvexProbe probe(c);
  ProbeDataset data;
  data.n_features = 1;
  for (double x : {1.0, -1.0}) {
    data.add(std::vector<double>{x}, 0);
    data.add(std::vector<double>{x}, 1);
  }
  data.add(std::vector<double>{0.0}, 0);
  const LooOracle loo(probe, data);
  CHECK(std::abs(loo.delta(4)) <= 1e-6);
  CHECK(loo.delta(0) > 1e-6);
}

TEST_CASE("leave-one-out: duplicated samples barely matter") {
  // Fifteen copies carry an indicator feature of their own, so the fit
  // absorbs them almost exactly; unique samples come from overlapping classes.
  const auto c = probe_cfg(3, 2, 1e-3);
  const ConvexProbe probe(c);
  Rng rng(12);
  ProbeDataset data;
  data.n_features = 3;
  for (int i = 0; i < 15; ++i) data.add(std::vector<double>{-1.5, 0.0, 1.0}, 0);
  for (int i = 0; i < 45; ++i) {
    const std::size_t y = rng.below(2);
    data.add(std::vector<double>{rng.normal() + (y ? 0.5 : -0.5), rng.normal(), 0.0}, y);
  }
  const LooOracle loo(probe, data);
  std::vector<double> dup, all;
  for (std::size_t i = 0; i < data.size(); ++i) {
    all.push_back(std::abs(loo.delta(i)));
    if (i < 15) dup.push_back(all.back());
  }
  std::vector<double> uniq(all.begin() + 15, all.end());
  std::sort(uniq.begin(), uniq.end());
  MESSAGE("duplicate |delta| " << dup.front() << ", unique min " << uniq.front() << ", median " << uniq[uniq.size() / 2]);
  CHECK(*std::max_element(dup.begin(), dup.end()) <= uniq.front());
  CHECK(code_of([&] { loo.delta(data.size()); }) == ErrorCode::IdNotInCorpus);
}

TEST_CASE("spearman") {
  const std::vector<double> a{1, 2, 3}, b{3, 2, 1};
  CHECK(spearman(a, a) == doctest::Approx(1.0));
  CHECK(spearman(a, b) == doctest::Approx(-1.0));
  CHECK(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4}) == doctest::Approx(0.8));
  CHECK(code_of([] { spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}); }) ==
        ErrorCode::ConstantInput);
  CHECK(code_of([] { spearman(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}); }) == ErrorCode::ShapeError);

  // Ties: Pearson correlation of average ranks.
  const std::vector<double> x{1, 2, 2, 3}, y{1, 2, 3, 4};
  const std::vector<double> rx{1, 2.5, 2.5, 4}, ry{1, 2, 3, 4};
  double mx = 2.5, my = 2.5, sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < 4; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  CHECK(spearman(x, y) == doctest::Approx(sxy / std::sqrt(sxx * syy)).epsilon(1e-14));
  const std::vector<double> noisy{1, 2, 2 + 1e-13, 3};
  CHECK(spearman(noisy, y, 1e-9) == doctest::Approx(spearman(x, y)).epsilon(1e-14));
  CHECK(spearman(noisy, y) == doctest::Approx(1.0));
}

TEST_CASE("orthogonal-support instance ranks identically") {
  const auto inst = make_orthogonal_instance();
  OracleConfig cfg;
  cfg.scoring.subset_fraction = 1.0;
  cfg.with_loo = false;
  const auto r = run_oracle_report(inst.data, inst.model, cfg);
  CHECK(r.spearman_approx_vs_exact == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("report round trip") {
  OracleReport r;
  r.rows = {{0, 1.5, 2.5, -0.25, true}, {1, 1e-20, 3.0, 0.0, false}};
  r.spearman_approx_vs_exact = 0.875;
  r.spearman_approx_vs_loo = 0.5;
  r.damping = 1e-9;
  r.subset_size = 1;
  std::ostringstream out;
  write_oracle_report(out, r);
  std::istringstream in(out.str());
  const auto back = read_oracle_report(in);
  REQUIRE(back.rows.size() == 2);
  CHECK(back.rows[1].approx_score == 1e-20);
  CHECK(back.rows[0].in_subset);
  CHECK(back.spearman_approx_vs_exact == 0.875);
  CHECK(back.damping == 1e-9);
  CHECK(back.subset_size == 1);
}

}
