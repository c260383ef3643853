#include <random>

#include "doctest.h"
#include "mesch/ergodic.hpp"
#include "mesch/linearize.hpp"
#include "oracles.hpp"

using namespace mesch;

namespace {

Model di2() {
  Model m;
  m.kind = ModelKind::DoubleIntegrator;
  m.axes = 2;
  return m;
}

/// Feasible random interior trajectory under forward-Euler dynamics.
DiscreteTrajectory random_trajectory(int N, double dt, std::mt19937& gen) {
  std::uniform_real_distribution<double> pos(2.0, 8.0);
  std::normal_distribution<double> nd(0.0, 0.3);
  DiscreteTrajectory traj;
  traj.dt = dt;
  traj.states.resize(N);
  traj.controls.resize(N - 1);
  Vec x(4);
  x << pos(gen), pos(gen), nd(gen), nd(gen);
  traj.states[0] = x;
  const Model m = di2();
  for (int k = 0; k < N - 1; ++k) {
    Vec u(2);
    u << nd(gen), nd(gen);
    traj.controls[k] = u;
    traj.states[k + 1] = traj.states[k] + model_deriv(m, traj.states[k], u) * dt;
  }
  return traj;
}

}  // namespace

TEST_CASE("perturbation matrices") {
  std::mt19937 gen(31);
  SUBCASE("double integrator blocks") {
    DiscreteTrajectory traj = random_trajectory(6, 0.2, gen);
    std::vector<Mat> At, Bt;
    perturbation_matrices(traj, di2(), At, Bt);
    REQUIRE(At.size() == 5);
    Mat Ae = Mat::Identity(4, 4);
    Ae.topRightCorner(2, 2) = 0.2 * Mat::Identity(2, 2);
    Mat Be = Mat::Zero(4, 2);
    Be.bottomRows(2) = 0.2 * Mat::Identity(2, 2);
    for (size_t k = 0; k < At.size(); ++k) {
      CHECK((At[k] - Ae).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((Bt[k] - Be).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("small dt limit") {
    DiscreteTrajectory traj = random_trajectory(3, 1e-9, gen);
    std::vector<Mat> At, Bt;
    perturbation_matrices(traj, di2(), At, Bt);
    CHECK((At[0] - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(Bt[0].cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("unicycle matches finite differences") {
    Model uni;
    uni.kind = ModelKind::Unicycle;
    DiscreteTrajectory traj;
    traj.dt = 0.1;
    traj.states = {(Vec(3) << 1, 2, 0.3).finished(), (Vec(3) << 1.1, 2.0, 0.35).finished()};
    traj.controls = {(Vec(2) << 1.0, 0.5).finished()};
    std::vector<Mat> At, Bt;
    perturbation_matrices(traj, uni, At, Bt);
    const LinearizedModel fd = linearize_fd(
        [&](const Vec& x, const Vec& u) { return model_deriv(uni, x, u); },
        traj.states[0], traj.controls[0]);
    CHECK((At[0] - (Mat::Identity(3, 3) + 0.1 * fd.A)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((Bt[0] - 0.1 * fd.B).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("coverage mismatch metric") {
  CoverageDomain dom{{10.0, 10.0}};
  std::mt19937 gen(37);
  SUBCASE("vanishes when the target equals the trajectory's own spectrum") {
    DiscreteTrajectory traj = random_trajectory(80, 0.2, gen);
    std::vector<Vec> pts;
    for (const auto& x : traj.states) pts.push_back(x.head(2));
    const SpectralDensity own = SpectralDensity::from_points(dom, pts);
    CHECK(ergodic_metric(traj, own, dom) < 1e-18);
    CHECK(own.phi(0) == doctest::Approx(1.0));
  }
  SUBCASE("a sweeping path beats a stationary point against uniform") {
    const SpectralDensity uni = SpectralDensity::uniform(dom);
    DiscreteTrajectory still;
    still.dt = 0.2;
    still.states.assign(100, (Vec(4) << 5, 5, 0, 0).finished());
    still.controls.assign(99, Vec::Zero(2));
    DiscreteTrajectory sweep;
    sweep.dt = 0.2;
    for (int k = 0; k < 100; ++k) {
      const int row = k / 10;
      const int col = k % 10;
      const double x = 0.5 + (row % 2 == 0 ? col : 9 - col);
      const double y = 0.5 + row;
      sweep.states.push_back((Vec(4) << x, y, 0, 0).finished());
    }
    sweep.controls.assign(99, Vec::Zero(2));
    CHECK(ergodic_metric(still, uni, dom) > ergodic_metric(sweep, uni, dom));
    CHECK(ergodic_metric(sweep, uni, dom) >= 0.0);
  }
  SUBCASE("invariant under time reversal") {
    DiscreteTrajectory traj = random_trajectory(60, 0.2, gen);
    const SpectralDensity uni = SpectralDensity::uniform(dom);
    DiscreteTrajectory rev = traj;
    std::reverse(rev.states.begin(), rev.states.end());
    CHECK(ergodic_metric(traj, uni, dom) ==
          doctest::Approx(ergodic_metric(rev, uni, dom)).epsilon(1e-12));
  }
}

TEST_CASE("domain boundary penalty") {
  CoverageDomain dom{{10.0, 10.0}};
  SUBCASE("interior trajectory costs nothing") {
    std::mt19937 gen(41);
    DiscreteTrajectory traj = random_trajectory(20, 0.2, gen);
    std::vector<Vec> grads;
    CHECK(boundary_penalty(traj, dom, 10.0, &grads) == 0.0);
    for (const auto& g : grads) CHECK(g.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("overshoot and undershoot formulas") {
    DiscreteTrajectory traj;
    traj.dt = 0.2;
    traj.states = {(Vec(4) << 10.5, 5, 0, 0).finished()};
    CHECK(boundary_penalty(traj, dom, 10.0) == doctest::Approx(10.0 * 0.25));
    traj.states = {(Vec(4) << 5, -0.3, 0, 0).finished()};
    CHECK(boundary_penalty(traj, dom, 10.0) == doctest::Approx(10.0 * 0.09));
  }
}

TEST_CASE("coverage objective") {
  CoverageDomain dom{{10.0, 10.0}};
  const SpectralDensity uni = SpectralDensity::uniform(dom);
  std::mt19937 gen(43);
  DiscreteTrajectory traj = random_trajectory(30, 0.2, gen);
  PtoParams params;
  params.R = 0.01 * Mat::Identity(2, 2);

  SUBCASE("zero controls leave only the coverage term") {
    DiscreteTrajectory still = traj;
    for (auto& u : still.controls) u.setZero();
    CHECK(objective(still, uni, dom, params) ==
          doctest::Approx(params.q * ergodic_metric(still, uni, dom)));
  }
  SUBCASE("control term is linear in R") {
    PtoParams doubled = params;
    doubled.R = 2.0 * params.R;
    const double base = objective(traj, uni, dom, params);
    const double more = objective(traj, uni, dom, doubled);
    const double ctrl = base - params.q * ergodic_metric(traj, uni, dom) -
                        boundary_penalty(traj, dom, params.c_b);
    CHECK(more - base == doctest::Approx(ctrl).epsilon(1e-9));
  }
  SUBCASE("compositional") {
    double ctrl = 0.0;
    for (const auto& u : traj.controls) ctrl += u.dot(params.R * u);
    CHECK(objective(traj, uni, dom, params) ==
          doctest::Approx(params.q * ergodic_metric(traj, uni, dom) +
                          boundary_penalty(traj, dom, params.c_b) +
                          0.5 * traj.dt * ctrl));
  }
}

TEST_CASE("objective gradients vs finite differences") {
  CoverageDomain dom{{10.0, 10.0}};
  const SpectralDensity uni = SpectralDensity::uniform(dom);
  PtoParams params;
  params.R = 0.01 * Mat::Identity(2, 2);
  std::mt19937 gen(47);

  for (int trial = 0; trial < 20; ++trial) {
    DiscreteTrajectory traj = random_trajectory(15, 0.2, gen);
    std::vector<Vec> a, b;
    objective_gradients(traj, uni, dom, params, a, b);

    // The gradient treats states and controls as independent variables.
    auto eval = [&](const std::vector<Vec>& xs, const std::vector<Vec>& us) {
      DiscreteTrajectory t = traj;
      t.states = xs;
      t.controls = us;
      return objective(t, uni, dom, params);
    };
    double max_rel = 0.0;
    for (int n = 0; n < traj.horizon(); n += 3) {
      const Vec g_fd = oracles::fd_gradient(
          [&](const Vec& x) {
            std::vector<Vec> xs = traj.states;
            xs[static_cast<size_t>(n)] = x;
            return eval(xs, traj.controls);
          },
          traj.states[static_cast<size_t>(n)]);
      const double scale = std::max(1e-8, g_fd.cwiseAbs().maxCoeff());
      max_rel = std::max(max_rel,
                         (a[static_cast<size_t>(n)] - g_fd).cwiseAbs().maxCoeff() / scale);
    }
    for (int n = 0; n < traj.horizon() - 1; n += 4) {
      const Vec g_fd = oracles::fd_gradient(
          [&](const Vec& u) {
            std::vector<Vec> us = traj.controls;
            us[static_cast<size_t>(n)] = u;
            return eval(traj.states, us);
          },
          traj.controls[static_cast<size_t>(n)]);
      const double scale = std::max(1e-8, g_fd.cwiseAbs().maxCoeff());
      max_rel = std::max(max_rel,
                         (b[static_cast<size_t>(n)] - g_fd).cwiseAbs().maxCoeff() / scale);
    }
    CHECK(max_rel < 1e-4);
  }

  SUBCASE("zero controls zero the control gradient") {
    DiscreteTrajectory traj = random_trajectory(10, 0.2, gen);
    for (auto& u : traj.controls) u.setZero();
    std::vector<Vec> a, b;
    objective_gradients(traj, uni, dom, params, a, b);
    for (const auto& bn : b) CHECK(bn.cwiseAbs().maxCoeff() == 0.0);
    // Velocity components never enter the coverage terms.
    for (const auto& an : a) CHECK(an.tail(2).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("LQ descent direction") {
  std::mt19937 gen(53);
  const Mat Q_D = Mat::Identity(4, 4);
  const Mat R_D = Mat::Identity(2, 2);

  SUBCASE("zero gradients give the zero direction") {
    DiscreteTrajectory traj = random_trajectory(8, 0.2, gen);
    std::vector<Mat> At, Bt;
    perturbation_matrices(traj, di2(), At, Bt);
    std::vector<Vec> a(8, Vec::Zero(4)), b(7, Vec::Zero(2));
    const DescentDirection dir = descent_direction(a, b, At, Bt, Q_D, R_D);
    for (const auto& z : dir.z) CHECK(z.cwiseAbs().maxCoeff() == 0.0);
    for (const auto& v : dir.v) CHECK(v.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("matches the dense KKT oracle and starts at zero") {
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 20; ++trial) {
      const int N = 5;
      DiscreteTrajectory traj = random_trajectory(N, 0.2, gen);
      std::vector<Mat> At, Bt;
      perturbation_matrices(traj, di2(), At, Bt);
      std::vector<Vec> a(N), b(N - 1);
      for (int k = 0; k < N; ++k) {
        a[k] = Vec(4);
        for (int i = 0; i < 4; ++i) a[k](i) = nd(gen);
      }
      for (int k = 0; k < N - 1; ++k) {
        b[k] = Vec(2);
        for (int i = 0; i < 2; ++i) b[k](i) = nd(gen);
      }
      const DescentDirection dir = descent_direction(a, b, At, Bt, Q_D, R_D);
      CHECK(dir.z[0].cwiseAbs().maxCoeff() == 0.0);
      const auto ref = oracles::solve_lq_kkt(At, Bt, Q_D, R_D, Q_D, a, b, Vec::Zero(4));
      for (int k = 0; k < N; ++k)
        CHECK((dir.z[k] - ref.z[k]).cwiseAbs().maxCoeff() < 1e-8);
      for (int k = 0; k < N - 1; ++k)
        CHECK((dir.v[k] - ref.v[k]).cwiseAbs().maxCoeff() < 1e-8);
      // Dynamics constraint and descent property.
      for (int k = 0; k < N - 1; ++k)
        CHECK((dir.z[k + 1] - At[k] * dir.z[k] - Bt[k] * dir.v[k]).cwiseAbs().maxCoeff() < 1e-9);
      double DJ = 0.0;
      for (int k = 0; k < N; ++k) DJ += a[k].dot(dir.z[k]);
      for (int k = 0; k < N - 1; ++k) DJ += b[k].dot(dir.v[k]);
      CHECK(DJ <= 1e-12);
    }
  }
}

TEST_CASE("feedback projection") {
  std::mt19937 gen(59);
  const Model m = di2();
  DiscreteTrajectory traj = random_trajectory(12, 0.2, gen);
  std::vector<Mat> At, Bt;
  perturbation_matrices(traj, m, At, Bt);
  const std::vector<Mat> gains =
      tvlqr_gains(At, Bt, Mat::Identity(4, 4), Mat::Identity(2, 2), Mat::Identity(4, 4));

  SUBCASE("fixed point on feasible candidates") {
    const DiscreteTrajectory out =
        project(traj.states, traj.controls, traj.states[0], m, gains, traj.dt);
    for (int k = 0; k < traj.horizon(); ++k)
      CHECK((out.states[static_cast<size_t>(k)] - traj.states[static_cast<size_t>(k)])
                .cwiseAbs()
                .maxCoeff() < 1e-10);
  }
  SUBCASE("output satisfies the discrete dynamics") {
    std::normal_distribution<double> nd(0.0, 0.5);
    std::vector<Vec> alpha = traj.states, mu = traj.controls;
    for (auto& x : alpha)
      for (int i = 0; i < 4; ++i) x(i) += nd(gen);
    const DiscreteTrajectory out = project(alpha, mu, traj.states[0], m, gains, traj.dt);
    CHECK(out.dynamics_residual(m) < 1e-12);
    CHECK(out.feasible(m));
  }
  SUBCASE("zero gains reduce to the open-loop rollout") {
    const std::vector<Mat> zeros(gains.size(), Mat::Zero(2, 4));
    const DiscreteTrajectory out =
        project(traj.states, traj.controls, traj.states[0], m, zeros, traj.dt);
    for (int k = 0; k + 1 < traj.horizon(); ++k)
      CHECK((out.controls[static_cast<size_t>(k)] - traj.controls[static_cast<size_t>(k)])
                .cwiseAbs()
                .maxCoeff() == 0.0);
  }
}

TEST_CASE("trajectory optimization") {
  CoverageDomain dom{{10.0, 10.0}};
  const SpectralDensity uni = SpectralDensity::uniform(dom);
  const Model m = di2();
  Vec x_ic(4);
  x_ic << 3, 4, 0, 0;

  SUBCASE("horizon bookkeeping and monotone descent") {
    PtoParams params;
    params.max_iters = 12;
    const PtoResult res = pto_optimize(x_ic, uni, dom, m, params);
    CHECK(res.trajectory.horizon() == 151);
    for (size_t k = 1; k < res.objective_history.size(); ++k)
      CHECK(res.objective_history[k] <= res.objective_history[k - 1] + 1e-12);
    CHECK(res.trajectory.dynamics_residual(m) < 1e-8);
  }
  SUBCASE("zero iterations return the initial rollout") {
    PtoParams params;
    params.max_iters = 0;
    const PtoResult res = pto_optimize(x_ic, uni, dom, m, params);
    CHECK(res.trajectory.horizon() == 151);
    for (const auto& u : res.trajectory.controls)
      CHECK(u.cwiseAbs().maxCoeff() == 0.0);
  }
}
