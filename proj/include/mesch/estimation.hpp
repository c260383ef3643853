#pragma once

#include <functional>

#include "mesch/lqr.hpp"
#include "mesch/models.hpp"

namespace mesch {

// ---------------------------------------------------------------------------
// Charging-station models. States carry a z coordinate at index 2 so the
// rendezvous offset always applies; planar models are zero-padded at load.

enum class ChargerKind { Static, Unicycle };

/// Static: x = [x, y, z], f = 0.
/// Unicycle: x = [x, y, z, theta], u = [V, wz], zdot = 0.
struct ChargerModel {
  ChargerKind kind = ChargerKind::Static;

  int state_dim() const { return kind == ChargerKind::Static ? 3 : 4; }
  int control_dim() const { return kind == ChargerKind::Static ? 0 : 2; }

  Vec deriv(const Vec& x, const Vec& u) const {
    if (kind == ChargerKind::Static) return Vec::Zero(3);
    Vec dx(4);
    dx << u(0) * std::cos(x(3)), u(0) * std::sin(x(3)), 0.0, u(1);
    return dx;
  }

  Mat jacobian(const Vec& x, const Vec& u) const {
    const int c = state_dim();
    Mat A = Mat::Zero(c, c);
    if (kind == ChargerKind::Unicycle) {
      A(0, 3) = -u(0) * std::sin(x(3));
      A(1, 3) = u(0) * std::cos(x(3));
    }
    return A;
  }
};

// ---------------------------------------------------------------------------

struct GaussianBelief {
  Vec mean;
  Mat cov;
  double stamp = 0.0;

  void check(double tol = 1e-10) const {
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > tol)
      throw NumericalError("belief covariance lost symmetry");
    Eigen::SelfAdjointEigenSolver<Mat> es(cov, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -tol)
      throw NumericalError("belief covariance lost positive semidefiniteness");
  }
};

struct NoiseModel {
  std::function<Mat(double)> W;  // process-noise covariance
  std::function<Mat(double)> V;  // measurement-noise covariance

  static NoiseModel constant(const Mat& W, const Mat& V) {
    return {[W](double) { return W; }, [V](double) { return V; }};
  }
};

/// Linear observation y = Hx + v. Identity or position-only selection.
struct ObservationModel {
  Mat H;
  static ObservationModel identity(int c) { return {Mat::Identity(c, c)}; }
  static ObservationModel position_only(int c) {
    Mat H = Mat::Zero(3, c);
    H.leftCols(3).setIdentity();
    return {H};
  }
};

struct RendezvousPoint {
  Vec x_rp;          // charger state with +d on z
  double d = 0.0;    // altitude offset, m
  double valid_at = 0.0;
};

/// EKF prediction: mean by RK4 through the charger dynamics, covariance by
/// Sigma <- F Sigma F' + W dt with F = I + dt * Jacobian. Output symmetrized.
GaussianBelief ekf_predict(const GaussianBelief& b, const ChargerModel& model,
                           const Vec& u, const NoiseModel& noise, double dt);

/// Joseph-form EKF correction for a linear observation model.
GaussianBelief ekf_update(const GaussianBelief& b, const Vec& y,
                          const ObservationModel& obs, const Mat& V);

/// Chained ekf_predict over ceil(T_R/dt) steps. Controls come from the
/// charger's known nominal trajectory, queried at the step start time.
GaussianBelief propagate_horizon(const GaussianBelief& b,
                                 const ChargerModel& model,
                                 const std::function<Vec(double)>& nominal_u,
                                 const NoiseModel& noise, double T_R,
                                 double dt);

/// Per-axis 95% worst case: mean + 1.96 * sqrt(diag(Sigma)).
Vec worst_case_state(const GaussianBelief& b);

/// Rendezvous point: belief mean with +d on the z coordinate (index 2).
RendezvousPoint rendezvous_point(const GaussianBelief& b_at_tjR, double d);

}  // namespace mesch
