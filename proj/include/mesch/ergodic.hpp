#pragma once

#include <vector>

#include "mesch/lqr.hpp"
#include "mesch/models.hpp"

namespace mesch {

struct CoverageDomain {
  std::vector<double> lengths;  // [0, L_1] x ... x [0, L_s]

  int dim() const { return static_cast<int>(lengths.size()); }
  void validate() const {
    if (lengths.empty()) throw std::invalid_argument("coverage domain needs >= 1 dimension");
    for (double L : lengths)
      if (L <= 0.0) throw std::invalid_argument("domain lengths must be positive");
  }
};

/// Target density in a truncated cosine basis. Basis functions are
/// normalized against the uniform probability measure on the domain, so a
/// normalized density has phi_0 = 1.
struct SpectralDensity {
  std::vector<Eigen::VectorXi> indices;  // multi-indices k, |k_i| <= K
  Vec phi;                               // density coefficients phi_k
  Vec h;                                 // basis normalization constants
  Vec lambda;                            // Sobolev weights (1+|k|^2)^-((s+1)/2)

  int num_coeffs() const { return static_cast<int>(indices.size()); }

  /// Uniform density on the domain.
  static SpectralDensity uniform(const CoverageDomain& domain, int K = 10);

  /// Gaussian mixture, normalized over the (truncated) domain; coefficients
  /// by midpoint-rule quadrature on a grid.
  static SpectralDensity gaussian_mixture(
      const CoverageDomain& domain, const std::vector<Vec>& means,
      const std::vector<Mat>& covs, const std::vector<double>& weights,
      int K = 10, int grid = 200);

  /// Density whose coefficients equal the empirical coefficients of the
  /// given spatial points (makes the metric vanish on that trajectory).
  static SpectralDensity from_points(const CoverageDomain& domain,
                                     const std::vector<Vec>& points,
                                     int K = 10);

  double basis(const CoverageDomain& domain, int k, const Vec& p) const;
  Vec basis_grad(const CoverageDomain& domain, int k, const Vec& p) const;
};

/// Uniformly sampled trajectory under forward-Euler dynamics.
struct DiscreteTrajectory {
  std::vector<Vec> states;    // N entries
  std::vector<Vec> controls;  // N-1 entries
  double dt = 0.0;

  int horizon() const { return static_cast<int>(states.size()); }

  /// Max residual of x_{k+1} = x_k + f(x_k, u_k) dt.
  double dynamics_residual(const Model& model) const;
  bool feasible(const Model& model, double tol = 1e-8) const {
    return dynamics_residual(model) <= tol;
  }
};

struct DescentDirection {
  std::vector<Vec> z;  // state directions, z[0] = 0
  std::vector<Vec> v;  // control directions
};

struct PtoParams {
  double T_H = 30.0;
  double dt = 0.2;
  double q = 10.0;     // ergodic metric weight
  double c_b = 100.0;  // boundary penalty weight
  Mat R;               // control cost (dt/2 * u'Ru per step)
  Mat Q_D, R_D;        // descent regularization, default 0.01 I
  int max_iters = 100;
  double tol = 1e-6;
  // Armijo line search
  double armijo_c = 1e-4;
  double armijo_shrink = 0.5;
  int armijo_max_backtracks = 40;
};

enum class PtoStatus { Converged, MaxIters, Stalled };

struct PtoResult {
  DiscreteTrajectory trajectory;
  std::vector<double> objective_history;  // accepted iterates, incl. initial
  PtoStatus status = PtoStatus::MaxIters;
};

/// A_tilde_n = I + dt A_n, B_tilde_n = dt B_n along the trajectory.
void perturbation_matrices(const DiscreteTrajectory& traj, const Model& model,
                           std::vector<Mat>& At, std::vector<Mat>& Bt);

/// Spectral ergodic metric Phi = sum_k lambda_k (c_k - phi_k)^2 >= 0.
double ergodic_metric(const DiscreteTrajectory& traj,
                      const SpectralDensity& density,
                      const CoverageDomain& domain);

/// Boundary penalty J_b and its per-state gradients (spatial components).
double boundary_penalty(const DiscreteTrajectory& traj,
                        const CoverageDomain& domain, double c_b,
                        std::vector<Vec>* grads = nullptr);

/// q * Phi + J_b + (dt/2) sum u'Ru.
double objective(const DiscreteTrajectory& traj, const SpectralDensity& density,
                 const CoverageDomain& domain, const PtoParams& params);

/// Exact gradients of the objective: a_n per state, b_n per control.
void objective_gradients(const DiscreteTrajectory& traj,
                         const SpectralDensity& density,
                         const CoverageDomain& domain, const PtoParams& params,
                         std::vector<Vec>& a, std::vector<Vec>& b);

/// LQ descent direction via backward affine Riccati recursion; z[0] = 0.
DescentDirection descent_direction(const std::vector<Vec>& a,
                                   const std::vector<Vec>& b,
                                   const std::vector<Mat>& At,
                                   const std::vector<Mat>& Bt, const Mat& Q_D,
                                   const Mat& R_D);

/// Feedback projection onto feasible trajectories:
/// u_n = mu_n + K_n (alpha_n - x_n), x_{n+1} = x_n + f(x_n, u_n) dt.
DiscreteTrajectory project(const std::vector<Vec>& alpha,
                           const std::vector<Vec>& mu, const Vec& x_ic,
                           const Model& model, const std::vector<Mat>& gains,
                           double dt);

/// Projection-based trajectory optimization of the ergodic objective.
PtoResult pto_optimize(const Vec& x_ic, const SpectralDensity& density,
                       const CoverageDomain& domain, const Model& model,
                       const PtoParams& params);

}  // namespace mesch
