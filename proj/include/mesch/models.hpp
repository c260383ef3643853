#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <variant>

#include "mesch/quat.hpp"

namespace mesch {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Quadrotor

struct QuadrotorState {
  Eigen::Vector3d r;   // position, m
  Eigen::Vector4d q;   // attitude, scalar-first unit quaternion
  Eigen::Vector3d v;   // linear velocity, m/s
  Eigen::Vector3d w;   // body angular velocity, rad/s

  static constexpr int kDim = 13;

  Vec vec() const {
    Vec x(kDim);
    x << r, q, v, w;
    return x;
  }
  static QuadrotorState from_vec(const Vec& x) {
    if (x.size() != kDim) throw std::invalid_argument("quadrotor state must be 13-dim");
    return {x.segment<3>(0), x.segment<4>(3), x.segment<3>(7), x.segment<3>(10)};
  }
};

/// Plus-configuration mixer: rotors on the +x, +y, -x, -y arms, thrust along
/// body z. u holds the four rotor thrusts in newtons.
struct QuadrotorParams {
  double m = 0.5;                      // kg
  Eigen::Matrix3d J =                  // kg m^2
      (Eigen::Vector3d(2.3e-3, 2.3e-3, 4.0e-3)).asDiagonal();
  double arm = 0.175;                  // m
  double drag_coeff = 0.0245;          // rotor torque / thrust
  double g = 9.81;                     // m/s^2

  void validate() const {
    if (m <= 0.0) throw std::invalid_argument("quadrotor mass must be positive");
    if ((J - J.transpose()).cwiseAbs().maxCoeff() > 1e-12 ||
        J.ldlt().info() != Eigen::Success || J.determinant() <= 0.0)
      throw std::invalid_argument("inertia matrix must be symmetric positive definite");
  }

  double hover_thrust_total() const { return m * g; }
  Eigen::Vector4d hover_control() const {
    return Eigen::Vector4d::Constant(m * g / 4.0);
  }

  Eigen::Vector3d world_force(const Eigen::Vector4d& q,
                              const Eigen::Vector4d& u) const {
    const Eigen::Vector3d thrust_body(0.0, 0.0, u.sum());
    return quat_rotm(q) * thrust_body + Eigen::Vector3d(0.0, 0.0, -m * g);
  }
  Eigen::Vector3d body_torque(const Eigen::Vector4d& u) const {
    return Eigen::Vector3d(arm * (u(1) - u(3)),
                           arm * (u(2) - u(0)),
                           drag_coeff * (u(0) - u(1) + u(2) - u(3)));
  }
};

inline Vec quadrotor_deriv(const QuadrotorState& s, const Eigen::Vector4d& u,
                           const QuadrotorParams& p) {
  Vec dx(QuadrotorState::kDim);
  dx.segment<3>(0) = s.v;
  dx.segment<4>(3) = 0.5 * quat_left(s.q) * quat_embed() * s.w;
  dx.segment<3>(7) = p.world_force(s.q, u) / p.m;
  dx.segment<3>(10) =
      p.J.ldlt().solve(p.body_torque(u) - hat(s.w) * p.J * s.w);
  return dx;
}

// ---------------------------------------------------------------------------
// Battery

struct ConstantRate {
  double k_d = 0.667;  // %/s
};

/// edot = -eta / C * alpha(|u|^2) with linear class-K alpha(s) = alpha_gain * s.
struct ControlDependent {
  double eta = 1.0;
  double capacity = 100.0;
  double alpha_gain = 1.0;
  double u_norm_sq_max = 100.0;  // bound on |u|^2, for worst-case rate
};

struct BatteryModel {
  std::variant<ConstantRate, ControlDependent> variant = ConstantRate{};
  double e_min = 0.0;
  double e_max = 100.0;

  void validate() const {
    if (e_min >= e_max) throw std::invalid_argument("battery requires e_min < e_max");
    if (const auto* c = std::get_if<ConstantRate>(&variant)) {
      if (c->k_d <= 0.0) throw std::invalid_argument("k_d must be positive");
    } else {
      const auto& cd = std::get<ControlDependent>(variant);
      if (cd.eta <= 0.0 || cd.capacity <= 0.0 || cd.alpha_gain <= 0.0)
        throw std::invalid_argument("battery parameters must be positive");
    }
  }

  /// Discharge rate (%/s, non-positive) for control u.
  double deriv(const Vec& u) const {
    if (const auto* c = std::get_if<ConstantRate>(&variant)) return -c->k_d;
    const auto& c = std::get<ControlDependent>(variant);
    return -c.eta / c.capacity * (c.alpha_gain * u.squaredNorm());
  }

  /// Worst-case discharge rate magnitude (%/s).
  double max_rate() const {
    if (const auto* c = std::get_if<ConstantRate>(&variant)) return c->k_d;
    const auto& c = std::get<ControlDependent>(variant);
    return c.eta / c.capacity * (c.alpha_gain * c.u_norm_sq_max);
  }
};

inline double battery_deriv(const BatteryModel& model, const Vec& u) {
  return model.deriv(u);
}

// ---------------------------------------------------------------------------
// System state: robot state + state of charge

struct SystemState {
  Vec x;           // robot model state
  double e = 0.0;  // SoC, %
};

// ---------------------------------------------------------------------------
// Vehicle models with uniform dispatch

enum class ModelKind { Quadrotor, DoubleIntegrator, Unicycle };

/// Vehicle model descriptor. DoubleIntegrator state is [p; v] with `axes`
/// spatial dimensions; Unicycle state is [x, y, theta] with controls [V, wz].
struct Model {
  ModelKind kind = ModelKind::DoubleIntegrator;
  int axes = 2;                 // double integrator only
  QuadrotorParams quad{};       // quadrotor only

  int state_dim() const {
    switch (kind) {
      case ModelKind::Quadrotor: return 13;
      case ModelKind::DoubleIntegrator: return 2 * axes;
      case ModelKind::Unicycle: return 3;
    }
    return 0;
  }
  int control_dim() const {
    switch (kind) {
      case ModelKind::Quadrotor: return 4;
      case ModelKind::DoubleIntegrator: return axes;
      case ModelKind::Unicycle: return 2;
    }
    return 0;
  }
};

inline Vec model_deriv(const Model& model, const Vec& x, const Vec& u) {
  if (x.size() != model.state_dim() || u.size() != model.control_dim())
    throw std::invalid_argument("model_deriv: dimension mismatch");
  switch (model.kind) {
    case ModelKind::Quadrotor:
      return quadrotor_deriv(QuadrotorState::from_vec(x), u, model.quad);
    case ModelKind::DoubleIntegrator: {
      Vec dx(x.size());
      dx.head(model.axes) = x.tail(model.axes);
      dx.tail(model.axes) = u;
      return dx;
    }
    case ModelKind::Unicycle: {
      Vec dx(3);
      dx << u(0) * std::cos(x(2)), u(0) * std::sin(x(2)), u(1);
      return dx;
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace mesch
