#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>

#include "prunekit/digest.hpp"
#include "prunekit/error.hpp"
#include "prunekit/model.hpp"

namespace prunekit {

namespace {
constexpr double kStallGradNorm = 1e-6;
}  // namespace

ProbeFitResult fit_probe(const ConvexProbe& probe, const ProbeDataset& data, ParamVector start,
                         const ProbeFitOptions& opts) {
  if (data.size() == 0) throw Error(ErrorCode::EmptySubset, "cannot fit a probe on zero samples");
  require_same_layout(start.layout(), probe.layout(), "fit_probe");
  const std::size_t d = probe.layout()->total_size();
  const double inv_n = 1.0 / static_cast<double>(data.size());

  ParamVector params = std::move(start);
  GradVector grad(probe.layout());
  std::vector<double> hess(d * d);
  double loss = probe.mean_loss_and_grad(params, data, grad);

  for (std::size_t iter = 0; iter <= opts.max_iter; ++iter) {
    const double gnorm = l2_norm(grad.values());
    if (gnorm <= opts.grad_tol) return {std::move(params), gnorm, iter};
    if (iter == opts.max_iter) break;

    std::fill(hess.begin(), hess.end(), 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) probe.accumulate_hessian(params, data.row(i), inv_n, hess);
    Eigen::Map<const Eigen::MatrixXd> h(hess.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    Eigen::Map<const Eigen::VectorXd> g(grad.values().data(), static_cast<Eigen::Index>(d));

    Eigen::VectorXd step;
    double shift = 0.0;
    for (int attempt = 0; attempt < 12; ++attempt) {
      Eigen::LLT<Eigen::MatrixXd> llt(h + shift * Eigen::MatrixXd::Identity(h.rows(), h.cols()));
      if (llt.info() == Eigen::Success) {
        step = -llt.solve(g);
        break;
      }
      shift = shift == 0.0 ? 1e-10 : shift * 10.0;
    }
    if (step.size() == 0) step = -g;

    const double slope = g.dot(step);
    double t = 1.0;
    ParamVector trial = params;
    double trial_loss = loss;
    bool accepted = false;
    for (int ls = 0; ls < 50 && !accepted; ++ls) {
      for (std::size_t i = 0; i < d; ++i) trial[i] = params[i] + t * step[static_cast<Eigen::Index>(i)];
      trial_loss = probe.mean_loss(trial, data);
      accepted = trial_loss <= loss + 1e-4 * t * slope;
      t *= 0.5;
    }
    // No decrease is representable: the iterate sits at the rounding floor of the objective.
    if ((!accepted || !(trial_loss < loss)) && gnorm <= kStallGradNorm) return {std::move(params), gnorm, iter};
    params = std::move(trial);
    loss = probe.mean_loss_and_grad(params, data, grad);
  }
  throw Error(ErrorCode::DidNotConverge,
              "probe gradient norm " + format_real(l2_norm(grad.values())) + " above tolerance after " +
                  std::to_string(opts.max_iter) + " Newton steps");
}

}  // namespace prunekit
