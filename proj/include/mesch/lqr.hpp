#pragma once

#include <vector>

#include "mesch/models.hpp"

namespace mesch {

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Affine feedback policy u_n = -K_n z_n - k_n for n = 1..N-1 (0-indexed
/// storage), the minimizer of
///   sum_{n=1}^{N-1} [ z_n'Q z_n + a_n'z_n + v_n'R v_n + b_n'v_n ]
///     + z_N'Qf z_N + a_N'z_N
/// subject to z_{n+1} = A_n z_n + B_n v_n.
struct AffinePolicy {
  std::vector<Mat> K;
  std::vector<Vec> k;
};

struct AffineLqProblem {
  std::vector<Mat> A;  // N-1 entries
  std::vector<Mat> B;  // N-1 entries
  Mat Q, R, Qf;
  std::vector<Vec> a;  // N entries (a[N-1] is the terminal linear term)
  std::vector<Vec> b;  // N-1 entries
};

/// Backward affine Riccati sweep. Value function V_n(z) = z'P_n z + p_n'z.
inline AffinePolicy solve_affine_lq(const AffineLqProblem& prob) {
  const int N = static_cast<int>(prob.a.size());
  if (N < 2 || static_cast<int>(prob.A.size()) != N - 1 ||
      static_cast<int>(prob.B.size()) != N - 1 ||
      static_cast<int>(prob.b.size()) != N - 1)
    throw std::invalid_argument("solve_affine_lq: inconsistent horizon lengths");

  AffinePolicy pol;
  pol.K.resize(N - 1);
  pol.k.resize(N - 1);

  Mat P = prob.Qf;
  Vec p = prob.a[N - 1];
  for (int n = N - 2; n >= 0; --n) {
    const Mat& A = prob.A[n];
    const Mat& B = prob.B[n];
    const Mat M = prob.R + B.transpose() * P * B;
    Eigen::LDLT<Mat> ldlt(M);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw NumericalError("solve_affine_lq: R + B'PB not positive definite");
    pol.K[n] = ldlt.solve(B.transpose() * P * A);
    pol.k[n] = ldlt.solve(0.5 * (prob.b[n] + B.transpose() * p));
    const Mat Acl = A - B * pol.K[n];
    const Vec beta = -B * pol.k[n];
    Mat Pn = prob.Q + pol.K[n].transpose() * prob.R * pol.K[n] +
             Acl.transpose() * P * Acl;
    Vec pn = prob.a[n] - pol.K[n].transpose() * prob.b[n] +
             2.0 * pol.K[n].transpose() * prob.R * pol.k[n] +
             2.0 * Acl.transpose() * P * beta + Acl.transpose() * p;
    P = 0.5 * (Pn + Pn.transpose());
    p = pn;
    if (!P.allFinite() || !p.allFinite())
      throw NumericalError("solve_affine_lq: Riccati recursion diverged");
  }
  return pol;
}

/// Roll the affine policy through the linear dynamics from z1.
inline void rollout_affine(const AffineLqProblem& prob, const AffinePolicy& pol,
                           const Vec& z1, std::vector<Vec>& z,
                           std::vector<Vec>& v) {
  const int N = static_cast<int>(prob.a.size());
  z.assign(N, Vec());
  v.assign(N - 1, Vec());
  z[0] = z1;
  for (int n = 0; n < N - 1; ++n) {
    v[n] = -pol.K[n] * z[n] - pol.k[n];
    z[n + 1] = prob.A[n] * z[n] + prob.B[n] * v[n];
  }
}

/// Time-varying LQR regulator gains (no linear terms): u = -K_n z.
inline std::vector<Mat> tvlqr_gains(const std::vector<Mat>& A,
                                    const std::vector<Mat>& B, const Mat& Q,
                                    const Mat& R, const Mat& Qf) {
  const int H = static_cast<int>(A.size());
  std::vector<Mat> K(H);
  Mat P = Qf;
  for (int n = H - 1; n >= 0; --n) {
    const Mat M = R + B[n].transpose() * P * B[n];
    Eigen::LDLT<Mat> ldlt(M);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw NumericalError("tvlqr_gains: R + B'PB not positive definite");
    K[n] = ldlt.solve(B[n].transpose() * P * A[n]);
    const Mat Acl = A[n] - B[n] * K[n];
    Mat Pn = Q + K[n].transpose() * R * K[n] + Acl.transpose() * P * Acl;
    P = 0.5 * (Pn + Pn.transpose());
  }
  return K;
}

/// Stationary discrete LQR gain, iterated to convergence.
inline Mat dlqr_gain(const Mat& Ad, const Mat& Bd, const Mat& Q, const Mat& R,
                     int max_iters = 2000, double tol = 1e-10) {
  Mat P = Q;
  Mat K;
  for (int it = 0; it < max_iters; ++it) {
    const Mat M = R + Bd.transpose() * P * Bd;
    K = M.ldlt().solve(Bd.transpose() * P * Ad);
    const Mat Acl = Ad - Bd * K;
    Mat Pn = Q + K.transpose() * R * K + Acl.transpose() * P * Acl;
    Pn = 0.5 * (Pn + Pn.transpose());
    if ((Pn - P).cwiseAbs().maxCoeff() < tol) return K;
    P = Pn;
  }
  return K;
}

}  // namespace mesch
