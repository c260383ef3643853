#pragma once

// Independent oracles used to cross-check the library's fast paths with
// slow, obviously-correct implementations.

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "mesch/models.hpp"

namespace oracles {

using mesch::Mat;
using mesch::Vec;

/// Brute-force Hamilton product of scalar-first quaternions, component by
/// component from the multiplication table (no matrix machinery).
inline Eigen::Vector4d hamilton(const Eigen::Vector4d& q,
                                const Eigen::Vector4d& p) {
  const double qs = q(0), qx = q(1), qy = q(2), qz = q(3);
  const double ps = p(0), px = p(1), py = p(2), pz = p(3);
  return {qs * ps - qx * px - qy * py - qz * pz,
          qs * px + qx * ps + qy * pz - qz * py,
          qs * py - qx * pz + qy * ps + qz * px,
          qs * pz + qx * py - qy * px + qz * ps};
}

/// Conjugate Gaussian measurement update: prior N(m, P), likelihood
/// y = Hx + v with v ~ N(0, V), posterior by the information form.
inline void conjugate_gaussian_update(const Vec& m, const Mat& P, const Vec& y,
                                      const Mat& H, const Mat& V, Vec& m_post,
                                      Mat& P_post) {
  const Mat P_inv = P.inverse();
  const Mat V_inv = V.inverse();
  const Mat info = P_inv + H.transpose() * V_inv * H;
  P_post = info.inverse();
  m_post = P_post * (P_inv * m + H.transpose() * V_inv * y);
}

/// Solution of the equality-constrained QP
///   min sum_{n=1}^{N-1} z_n'Q z_n + a_n'z_n + v_n'R v_n + b_n'v_n
///       + z_N'Qf z_N + a_N'z_N
///   s.t. z_{n+1} = A_n z_n + B_n v_n,  z_1 = z1,
/// by assembling and solving the dense KKT system over the stacked
/// variables [z_1..z_N, v_1..v_{N-1}].
struct LqOracleSolution {
  std::vector<Vec> z;
  std::vector<Vec> v;
};

inline LqOracleSolution solve_lq_kkt(const std::vector<Mat>& A,
                                     const std::vector<Mat>& B, const Mat& Q,
                                     const Mat& R, const Mat& Qf,
                                     const std::vector<Vec>& a,
                                     const std::vector<Vec>& b, const Vec& z1) {
  const int N = static_cast<int>(a.size());
  const int n = static_cast<int>(Q.rows());
  const int m = static_cast<int>(R.rows());
  const int nz = N * n + (N - 1) * m;   // primal variables
  const int nc = N * n;                 // z_1 pin + N-1 dynamics rows
  auto zi = [&](int k) { return k * n; };
  auto vi = [&](int k) { return N * n + k * m; };

  Mat Hc = Mat::Zero(nz, nz);
  Vec g = Vec::Zero(nz);
  for (int k = 0; k < N; ++k) {
    Hc.block(zi(k), zi(k), n, n) = 2.0 * (k == N - 1 ? Qf : Q);
    g.segment(zi(k), n) = a[k];
  }
  for (int k = 0; k < N - 1; ++k) {
    Hc.block(vi(k), vi(k), m, m) = 2.0 * R;
    g.segment(vi(k), m) = b[k];
  }

  Mat C = Mat::Zero(nc, nz);
  Vec d = Vec::Zero(nc);
  C.block(0, zi(0), n, n).setIdentity();
  d.head(n) = z1;
  for (int k = 0; k < N - 1; ++k) {
    C.block((k + 1) * n, zi(k + 1), n, n) = Mat::Identity(n, n);
    C.block((k + 1) * n, zi(k), n, n) = -A[k];
    C.block((k + 1) * n, vi(k), n, m) = -B[k];
  }

  Mat KKT = Mat::Zero(nz + nc, nz + nc);
  KKT.topLeftCorner(nz, nz) = Hc;
  KKT.topRightCorner(nz, nc) = C.transpose();
  KKT.bottomLeftCorner(nc, nz) = C;
  Vec rhs(nz + nc);
  rhs.head(nz) = -g;
  rhs.tail(nc) = d;
  const Vec sol = KKT.fullPivLu().solve(rhs);

  LqOracleSolution out;
  for (int k = 0; k < N; ++k) out.z.push_back(sol.segment(zi(k), n));
  for (int k = 0; k < N - 1; ++k) out.v.push_back(sol.segment(vi(k), m));
  return out;
}

/// Central finite-difference gradient of a scalar function of a vector.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                       double step = 1e-6) {
  Vec g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp(i) += step;
    xm(i) -= step;
    g(i) = (f(xp) - f(xm)) / (2.0 * step);
  }
  return g;
}

}  // namespace oracles
