#include "mesch/ergodic.hpp"

#include <cmath>
#include <numbers>

#include "mesch/linearize.hpp"

namespace mesch {

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<Eigen::VectorXi> make_indices(int s, int K) {
  std::vector<Eigen::VectorXi> out;
  Eigen::VectorXi k = Eigen::VectorXi::Zero(s);
  while (true) {
    out.push_back(k);
    int d = 0;
    while (d < s) {
      if (++k(d) <= K) break;
      k(d) = 0;
      ++d;
    }
    if (d == s) break;
  }
  return out;
}

void init_basis(SpectralDensity& sd, const CoverageDomain& domain, int K) {
  domain.validate();
  const int s = domain.dim();
  sd.indices = make_indices(s, K);
  const int M = sd.num_coeffs();
  sd.h.resize(M);
  sd.lambda.resize(M);
  for (int j = 0; j < M; ++j) {
    double h = 1.0;
    double ksq = 0.0;
    for (int i = 0; i < s; ++i) {
      if (sd.indices[j](i) != 0) h *= std::sqrt(0.5);
      ksq += double(sd.indices[j](i)) * double(sd.indices[j](i));
    }
    sd.h(j) = h;
    sd.lambda(j) = std::pow(1.0 + ksq, -0.5 * (s + 1));
  }
}

/// Empirical basis coefficients of a trajectory's spatial components.
Vec empirical_coeffs(const DiscreteTrajectory& traj,
                     const SpectralDensity& sd, const CoverageDomain& domain) {
  const int M = sd.num_coeffs();
  const int s = domain.dim();
  Vec c = Vec::Zero(M);
  for (const auto& x : traj.states) {
    const Vec p = x.head(s);
    for (int j = 0; j < M; ++j) c(j) += sd.basis(domain, j, p);
  }
  return c / double(traj.horizon());
}

}  // namespace

double SpectralDensity::basis(const CoverageDomain& domain, int k,
                              const Vec& p) const {
  double f = 1.0;
  for (int i = 0; i < domain.dim(); ++i)
    f *= std::cos(indices[k](i) * kPi * p(i) / domain.lengths[i]);
  return f / h(k);
}

Vec SpectralDensity::basis_grad(const CoverageDomain& domain, int k,
                                const Vec& p) const {
  const int s = domain.dim();
  Vec g(s);
  for (int i = 0; i < s; ++i) {
    const double wi = indices[k](i) * kPi / domain.lengths[i];
    double gi = -wi * std::sin(wi * p(i));
    for (int j = 0; j < s; ++j) {
      if (j == i) continue;
      gi *= std::cos(indices[k](j) * kPi * p(j) / domain.lengths[j]);
    }
    g(i) = gi;
  }
  return g / h(k);
}

SpectralDensity SpectralDensity::uniform(const CoverageDomain& domain, int K) {
  SpectralDensity sd;
  init_basis(sd, domain, K);
  sd.phi = Vec::Zero(sd.num_coeffs());
  sd.phi(0) = 1.0;  // indices[0] is the all-zero multi-index
  return sd;
}

SpectralDensity SpectralDensity::gaussian_mixture(
    const CoverageDomain& domain, const std::vector<Vec>& means,
    const std::vector<Mat>& covs, const std::vector<double>& weights,
    int K, int grid) {
  if (means.empty() || means.size() != covs.size() ||
      means.size() != weights.size())
    throw std::invalid_argument("gaussian_mixture: inconsistent component lists");
  SpectralDensity sd;
  init_basis(sd, domain, K);
  const int s = domain.dim();
  const int pts_per_dim = s <= 2 ? grid : 50;

  // Midpoint-rule grid over the domain.
  std::vector<Vec> pts;
  std::vector<int> idx(s, 0);
  while (true) {
    Vec p(s);
    for (int i = 0; i < s; ++i)
      p(i) = (idx[i] + 0.5) * domain.lengths[i] / pts_per_dim;
    pts.push_back(p);
    int d = 0;
    while (d < s) {
      if (++idx[d] < pts_per_dim) break;
      idx[d] = 0;
      ++d;
    }
    if (d == s) break;
  }
  double cell = 1.0;
  for (int i = 0; i < s; ++i) cell *= domain.lengths[i] / pts_per_dim;

  std::vector<Eigen::LDLT<Mat>> ldlts;
  std::vector<double> norms;
  for (size_t m = 0; m < means.size(); ++m) {
    ldlts.emplace_back(covs[m]);
    if (ldlts.back().info() != Eigen::Success)
      throw std::invalid_argument("gaussian_mixture: covariance not PD");
    norms.push_back(std::pow(2.0 * kPi, -0.5 * s) /
                    std::sqrt(ldlts.back().vectorD().prod()));
  }
  Vec density(pts.size());
  for (size_t n = 0; n < pts.size(); ++n) {
    double val = 0.0;
    for (size_t m = 0; m < means.size(); ++m) {
      const Vec d = pts[n] - means[m];
      val += weights[m] * norms[m] *
             std::exp(-0.5 * d.dot(ldlts[m].solve(d)));
    }
    density(n) = val;
  }
  density /= density.sum() * cell;  // renormalize truncated mass

  sd.phi = Vec::Zero(sd.num_coeffs());
  for (size_t n = 0; n < pts.size(); ++n)
    for (int j = 0; j < sd.num_coeffs(); ++j)
      sd.phi(j) += density(n) * sd.basis(domain, j, pts[n]) * cell;
  return sd;
}

SpectralDensity SpectralDensity::from_points(const CoverageDomain& domain,
                                             const std::vector<Vec>& points,
                                             int K) {
  SpectralDensity sd;
  init_basis(sd, domain, K);
  sd.phi = Vec::Zero(sd.num_coeffs());
  for (const auto& p : points)
    for (int j = 0; j < sd.num_coeffs(); ++j)
      sd.phi(j) += sd.basis(domain, j, p);
  sd.phi /= double(points.size());
  return sd;
}

double DiscreteTrajectory::dynamics_residual(const Model& model) const {
  double r = 0.0;
  for (size_t k = 0; k + 1 < states.size(); ++k) {
    const Vec pred = states[k] + model_deriv(model, states[k], controls[k]) * dt;
    r = std::max(r, (states[k + 1] - pred).cwiseAbs().maxCoeff());
  }
  return r;
}

void perturbation_matrices(const DiscreteTrajectory& traj, const Model& model,
                           std::vector<Mat>& At, std::vector<Mat>& Bt) {
  const int N = traj.horizon();
  if (N < 2) throw std::invalid_argument("perturbation_matrices: empty trajectory");
  const int n = model.state_dim();
  At.resize(N - 1);
  Bt.resize(N - 1);
  for (int k = 0; k < N - 1; ++k) {
    const LinearizedModel lin =
        linearize(model, traj.states[k], traj.controls[k]);
    At[k] = Mat::Identity(n, n) + traj.dt * lin.A;
    Bt[k] = traj.dt * lin.B;
  }
}

double ergodic_metric(const DiscreteTrajectory& traj,
                      const SpectralDensity& density,
                      const CoverageDomain& domain) {
  const Vec c = empirical_coeffs(traj, density, domain);
  return density.lambda.dot((c - density.phi).cwiseAbs2());
}

double boundary_penalty(const DiscreteTrajectory& traj,
                        const CoverageDomain& domain, double c_b,
                        std::vector<Vec>* grads) {
  if (c_b <= 0.0) throw std::invalid_argument("boundary_penalty: c_b must be positive");
  const int s = domain.dim();
  double J = 0.0;
  if (grads) grads->assign(traj.horizon(), Vec());
  for (int k = 0; k < traj.horizon(); ++k) {
    Vec g = Vec::Zero(traj.states[k].size());
    for (int i = 0; i < s; ++i) {
      const double xi = traj.states[k](i);
      const double over = std::max(xi - domain.lengths[i], 0.0);
      const double under = std::min(xi, 0.0);
      J += c_b * (over * over + under * under);
      g(i) = 2.0 * c_b * (over + under);
    }
    if (grads) (*grads)[k] = g;
  }
  return J;
}

double objective(const DiscreteTrajectory& traj, const SpectralDensity& density,
                 const CoverageDomain& domain, const PtoParams& params) {
  double ctrl = 0.0;
  for (const auto& u : traj.controls) ctrl += u.dot(params.R * u);
  return params.q * ergodic_metric(traj, density, domain) +
         boundary_penalty(traj, domain, params.c_b) +
         0.5 * traj.dt * ctrl;
}

void objective_gradients(const DiscreteTrajectory& traj,
                         const SpectralDensity& density,
                         const CoverageDomain& domain, const PtoParams& params,
                         std::vector<Vec>& a, std::vector<Vec>& b) {
  const int N = traj.horizon();
  const int s = domain.dim();
  const Vec c = empirical_coeffs(traj, density, domain);
  const Vec resid = c - density.phi;

  std::vector<Vec> jb_grads;
  boundary_penalty(traj, domain, params.c_b, &jb_grads);

  a.assign(N, Vec());
  for (int n = 0; n < N; ++n) {
    const Vec p = traj.states[n].head(s);
    Vec gphi = Vec::Zero(s);
    for (int j = 0; j < density.num_coeffs(); ++j)
      gphi += 2.0 * density.lambda(j) * resid(j) / double(N) *
              density.basis_grad(domain, j, p);
    a[n] = jb_grads[n];
    a[n].head(s) += params.q * gphi;
  }
  b.assign(N - 1, Vec());
  for (int n = 0; n < N - 1; ++n)
    b[n] = traj.dt * params.R * traj.controls[n];
}

DescentDirection descent_direction(const std::vector<Vec>& a,
                                   const std::vector<Vec>& b,
                                   const std::vector<Mat>& At,
                                   const std::vector<Mat>& Bt, const Mat& Q_D,
                                   const Mat& R_D) {
  AffineLqProblem prob{At, Bt, Q_D, R_D, Q_D, a, b};
  const AffinePolicy pol = solve_affine_lq(prob);
  DescentDirection dir;
  rollout_affine(prob, pol, Vec::Zero(a[0].size()), dir.z, dir.v);
  return dir;
}

DiscreteTrajectory project(const std::vector<Vec>& alpha,
                           const std::vector<Vec>& mu, const Vec& x_ic,
                           const Model& model, const std::vector<Mat>& gains,
                           double dt) {
  const int N = static_cast<int>(alpha.size());
  DiscreteTrajectory traj;
  traj.dt = dt;
  traj.states.resize(N);
  traj.controls.resize(N - 1);
  traj.states[0] = x_ic;
  for (int n = 0; n < N - 1; ++n) {
    traj.controls[n] = mu[n] + gains[n] * (alpha[n] - traj.states[n]);
    traj.states[n + 1] =
        traj.states[n] + model_deriv(model, traj.states[n], traj.controls[n]) * dt;
  }
  return traj;
}

PtoResult pto_optimize(const Vec& x_ic, const SpectralDensity& density,
                       const CoverageDomain& domain, const Model& model,
                       const PtoParams& params_in) {
  PtoParams params = params_in;
  const int n_dim = model.state_dim();
  const int m = model.control_dim();
  if (params.R.size() == 0) params.R = 0.01 * Mat::Identity(m, m);
  // Identity regularization makes the LQ direction a tiny fraction of the
  // gradient scale here; 0.01 I gives usefully sized steps with Armijo still
  // guarding descent.
  if (params.Q_D.size() == 0) params.Q_D = 0.01 * Mat::Identity(n_dim, n_dim);
  if (params.R_D.size() == 0) params.R_D = 0.01 * Mat::Identity(m, m);
  const int N = static_cast<int>(std::lround(params.T_H / params.dt)) + 1;

  // Initial iterate: open-loop Euler rollout of zero controls.
  DiscreteTrajectory traj;
  traj.dt = params.dt;
  traj.states.resize(N);
  traj.controls.assign(N - 1, Vec::Zero(m));
  traj.states[0] = x_ic;
  for (int n = 0; n < N - 1; ++n)
    traj.states[n + 1] =
        traj.states[n] + model_deriv(model, traj.states[n], traj.controls[n]) * params.dt;

  PtoResult result;
  double J = objective(traj, density, domain, params);
  result.objective_history.push_back(J);

  std::vector<Mat> At, Bt;
  std::vector<Vec> a, b;
  for (int iter = 0; iter < params.max_iters; ++iter) {
    perturbation_matrices(traj, model, At, Bt);
    objective_gradients(traj, density, domain, params, a, b);
    const DescentDirection dir =
        descent_direction(a, b, At, Bt, params.Q_D, params.R_D);

    double DJ = 0.0;
    for (int n = 0; n < N; ++n) DJ += a[n].dot(dir.z[n]);
    for (int n = 0; n < N - 1; ++n) DJ += b[n].dot(dir.v[n]);
    if (DJ >= 0.0) {
      result.status = PtoStatus::Converged;
      break;
    }

    const std::vector<Mat> gains =
        tvlqr_gains(At, Bt, params.Q_D, params.R_D, params.Q_D);

    double gamma = 1.0;
    bool accepted = false;
    DiscreteTrajectory candidate;
    double J_new = J;
    for (int bt = 0; bt < params.armijo_max_backtracks; ++bt) {
      std::vector<Vec> alpha(N), mu(N - 1);
      for (int n = 0; n < N; ++n) alpha[n] = traj.states[n] + gamma * dir.z[n];
      for (int n = 0; n < N - 1; ++n) mu[n] = traj.controls[n] + gamma * dir.v[n];
      candidate = project(alpha, mu, x_ic, model, gains, params.dt);
      J_new = objective(candidate, density, domain, params);
      if (J_new <= J + params.armijo_c * gamma * DJ) {
        accepted = true;
        break;
      }
      gamma *= params.armijo_shrink;
    }
    if (!accepted) {
      result.status = PtoStatus::Stalled;
      break;
    }
    traj = candidate;
    result.objective_history.push_back(J_new);
    if (std::abs(J - J_new) < params.tol) {
      J = J_new;
      result.status = PtoStatus::Converged;
      break;
    }
    J = J_new;
  }
  result.trajectory = traj;
  return result;
}

}  // namespace mesch
