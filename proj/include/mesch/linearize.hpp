#pragma once

#include "mesch/integrate.hpp"
#include "mesch/models.hpp"

namespace mesch {

struct LinearizedModel {
  Mat A;    // continuous-time state Jacobian
  Mat B;    // continuous-time control Jacobian
  Vec x_bar;
  Vec u_bar;
  double dt = 0.0;  // sample time attached by discretization users
};

/// Central finite-difference Jacobians of an arbitrary derivative function.
inline LinearizedModel linearize_fd(const DerivFn& deriv, const Vec& x_bar,
                                    const Vec& u_bar, double step = 1e-6) {
  const int n = static_cast<int>(x_bar.size());
  const int m = static_cast<int>(u_bar.size());
  LinearizedModel lin;
  lin.A.resize(n, n);
  lin.B.resize(n, m);
  lin.x_bar = x_bar;
  lin.u_bar = u_bar;
  for (int i = 0; i < n; ++i) {
    Vec xp = x_bar, xm = x_bar;
    xp(i) += step;
    xm(i) -= step;
    lin.A.col(i) = (deriv(xp, u_bar) - deriv(xm, u_bar)) / (2.0 * step);
  }
  for (int i = 0; i < m; ++i) {
    Vec up = u_bar, um = u_bar;
    up(i) += step;
    um(i) -= step;
    lin.B.col(i) = (deriv(x_bar, up) - deriv(x_bar, um)) / (2.0 * step);
  }
  return lin;
}

/// Jacobians of a vehicle model. Double integrator and unicycle use the
/// analytic expressions; the quadrotor uses central differences.
inline LinearizedModel linearize(const Model& model, const Vec& x_bar,
                                 const Vec& u_bar, double fd_step = 1e-6) {
  switch (model.kind) {
    case ModelKind::DoubleIntegrator: {
      const int s = model.axes;
      LinearizedModel lin;
      lin.A = Mat::Zero(2 * s, 2 * s);
      lin.A.topRightCorner(s, s).setIdentity();
      lin.B = Mat::Zero(2 * s, s);
      lin.B.bottomRows(s).setIdentity();
      lin.x_bar = x_bar;
      lin.u_bar = u_bar;
      return lin;
    }
    case ModelKind::Unicycle: {
      LinearizedModel lin;
      lin.A = Mat::Zero(3, 3);
      lin.A(0, 2) = -u_bar(0) * std::sin(x_bar(2));
      lin.A(1, 2) = u_bar(0) * std::cos(x_bar(2));
      lin.B = Mat::Zero(3, 2);
      lin.B(0, 0) = std::cos(x_bar(2));
      lin.B(1, 0) = std::sin(x_bar(2));
      lin.B(2, 1) = 1.0;
      lin.x_bar = x_bar;
      lin.u_bar = u_bar;
      return lin;
    }
    case ModelKind::Quadrotor:
      return linearize_fd(
          [&](const Vec& x, const Vec& u) { return model_deriv(model, x, u); },
          x_bar, u_bar, fd_step);
  }
  throw std::logic_error("unreachable");
}

/// Block-diagonal reduction map E(q): identity on r, v, omega and the
/// quaternion tangent map on q. 13x12.
inline Mat reduction_map(const Eigen::Vector4d& q_bar) {
  Mat E = Mat::Zero(13, 12);
  E.block<3, 3>(0, 0).setIdentity();
  E.block<4, 3>(3, 3) = attitude_jacobian(q_bar);
  E.block<3, 3>(7, 6).setIdentity();
  E.block<3, 3>(10, 9).setIdentity();
  return E;
}

/// Error-state reduction of a 13-state quadrotor linearization to the
/// controllable 12-state system: A_red = E^T A E, B_red = E^T B.
inline LinearizedModel reduce_attitude(const LinearizedModel& lin,
                                       const Eigen::Vector4d& q_bar) {
  if (lin.A.rows() != 13 || lin.A.cols() != 13)
    throw std::invalid_argument("reduce_attitude expects a 13-state linearization");
  if (std::abs(q_bar.norm() - 1.0) > 1e-6)
    throw std::invalid_argument("reduce_attitude: q_bar must be a unit quaternion");
  const Mat E = reduction_map(q_bar);
  LinearizedModel red;
  red.A = E.transpose() * lin.A * E;
  red.B = E.transpose() * lin.B;
  red.x_bar = lin.x_bar;
  red.u_bar = lin.u_bar;
  red.dt = lin.dt;
  return red;
}

/// Discrete-time (Ad, Bd) for sample time dt. The double integrator gets the
/// exact zero-order-hold matrices; other models use first-order Euler.
inline void discretize(const Model& model, const LinearizedModel& lin,
                       double dt, Mat& Ad, Mat& Bd) {
  if (model.kind == ModelKind::DoubleIntegrator) {
    const int s = model.axes;
    Ad = Mat::Identity(2 * s, 2 * s);
    Ad.topRightCorner(s, s) = dt * Mat::Identity(s, s);
    Bd = Mat::Zero(2 * s, s);
    Bd.topRows(s) = 0.5 * dt * dt * Mat::Identity(s, s);
    Bd.bottomRows(s) = dt * Mat::Identity(s, s);
    return;
  }
  const int n = static_cast<int>(lin.A.rows());
  Ad = Mat::Identity(n, n) + dt * lin.A;
  Bd = dt * lin.B;
}

/// Rank of the controllability matrix [B, AB, ..., A^(n-1)B].
inline int controllability_rank(const Mat& A, const Mat& B,
                                double rel_tol = 1e-8) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  Mat C(n, n * m);
  Mat AkB = B;
  for (int k = 0; k < n; ++k) {
    C.middleCols(k * m, m) = AkB;
    AkB = A * AkB;
  }
  Eigen::JacobiSVD<Mat> svd(C);
  const auto& sv = svd.singularValues();
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > rel_tol * sv(0)) ++rank;
  return rank;
}

}  // namespace mesch
