#pragma once

#include <functional>
#include <stdexcept>
#include <string>

#include "mesch/models.hpp"

namespace mesch {

struct IntegrationError : std::runtime_error {
  double t;
  explicit IntegrationError(double time)
      : std::runtime_error("non-finite derivative at t = " + std::to_string(time)),
        t(time) {}
};

using DerivFn = std::function<Vec(const Vec&, const Vec&)>;

/// Classic RK4 with zero-order-hold control.
inline Vec rk4_step(const DerivFn& deriv, const Vec& x, const Vec& u, double dt,
                    double t = 0.0) {
  if (dt <= 0.0) throw std::invalid_argument("rk4_step: dt must be positive");
  const Vec k1 = deriv(x, u);
  const Vec k2 = deriv(x + 0.5 * dt * k1, u);
  const Vec k3 = deriv(x + 0.5 * dt * k2, u);
  const Vec k4 = deriv(x + dt * k3, u);
  Vec next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw IntegrationError(t);
  return next;
}

/// RK4 step of a vehicle model; quadrotor quaternions are renormalized
/// after the step.
inline Vec model_step(const Model& model, const Vec& x, const Vec& u,
                      double dt, double t = 0.0) {
  Vec next = rk4_step(
      [&](const Vec& xs, const Vec& us) { return model_deriv(model, xs, us); },
      x, u, dt, t);
  if (model.kind == ModelKind::Quadrotor)
    next.segment<4>(3).normalize();
  return next;
}

}  // namespace mesch
