#include "mesch/estimation.hpp"

#include <cmath>

#include "mesch/integrate.hpp"

namespace mesch {

GaussianBelief ekf_predict(const GaussianBelief& b, const ChargerModel& model,
                           const Vec& u, const NoiseModel& noise, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("ekf_predict: dt must be positive");
  GaussianBelief out;
  out.mean = rk4_step(
      [&](const Vec& x, const Vec& uc) { return model.deriv(x, uc); }, b.mean,
      u, dt, b.stamp);
  const int c = model.state_dim();
  const Mat F = Mat::Identity(c, c) + dt * model.jacobian(b.mean, u);
  Mat S = F * b.cov * F.transpose() + noise.W(b.stamp) * dt;
  out.cov = 0.5 * (S + S.transpose());
  out.stamp = b.stamp + dt;
  out.check(1e-8);
  return out;
}

GaussianBelief ekf_update(const GaussianBelief& b, const Vec& y,
                          const ObservationModel& obs, const Mat& V) {
  if ((V - V.transpose()).cwiseAbs().maxCoeff() > 1e-10 ||
      V.ldlt().info() != Eigen::Success)
    throw std::invalid_argument("ekf_update: V must be symmetric positive definite");
  const Mat& H = obs.H;
  const Mat S = H * b.cov * H.transpose() + V;
  Eigen::LDLT<Mat> ldlt(S);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw NumericalError("ekf_update: singular innovation covariance");
  const Mat K = ldlt.solve(H * b.cov).transpose();
  GaussianBelief out;
  out.mean = b.mean + K * (y - H * b.mean);
  const int c = static_cast<int>(b.mean.size());
  const Mat IKH = Mat::Identity(c, c) - K * H;
  Mat P = IKH * b.cov * IKH.transpose() + K * V * K.transpose();
  out.cov = 0.5 * (P + P.transpose());
  out.stamp = b.stamp;
  out.check(1e-8);
  return out;
}

GaussianBelief propagate_horizon(const GaussianBelief& b,
                                 const ChargerModel& model,
                                 const std::function<Vec(double)>& nominal_u,
                                 const NoiseModel& noise, double T_R,
                                 double dt) {
  if (T_R <= 0.0) throw std::invalid_argument("propagate_horizon: T_R must be positive");
  const int steps = static_cast<int>(std::ceil(T_R / dt - 1e-9));
  GaussianBelief cur = b;
  for (int k = 0; k < steps; ++k)
    cur = ekf_predict(cur, model, nominal_u(cur.stamp), noise, dt);
  return cur;
}

Vec worst_case_state(const GaussianBelief& b) {
  Vec d = b.cov.diagonal();
  for (int i = 0; i < d.size(); ++i) {
    if (d(i) < -1e-10)
      throw NumericalError("worst_case_state: negative covariance diagonal");
    d(i) = std::max(d(i), 0.0);
  }
  return b.mean + 1.96 * d.cwiseSqrt();
}

RendezvousPoint rendezvous_point(const GaussianBelief& b_at_tjR, double d) {
  if (d <= 0.0) throw std::invalid_argument("rendezvous_point: d must be positive");
  if (b_at_tjR.mean.size() < 3)
    throw std::invalid_argument("rendezvous_point: charger state needs a z coordinate");
  RendezvousPoint rp;
  rp.x_rp = b_at_tjR.mean;
  rp.x_rp(2) += d;
  rp.d = d;
  rp.valid_at = b_at_tjR.stamp;
  return rp;
}

}  // namespace mesch
