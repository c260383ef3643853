#include <random>

#include "doctest.h"
#include "mesch/integrate.hpp"
#include "mesch/linearize.hpp"
#include "mesch/models.hpp"
#include "oracles.hpp"

using namespace mesch;

namespace {
Eigen::Vector4d random_unit_quat(std::mt19937& gen) {
  std::normal_distribution<double> nd;
  Eigen::Vector4d q(nd(gen), nd(gen), nd(gen), nd(gen));
  return q.normalized();
}
}  // namespace

TEST_CASE("skew operator") {
  const Eigen::Matrix3d H = hat(Eigen::Vector3d(1, 2, 3));
  Eigen::Matrix3d expect;
  expect << 0, -3, 2, 3, 0, -1, -2, 1, 0;
  CHECK((H - expect).cwiseAbs().maxCoeff() == 0.0);

  CHECK(hat(Eigen::Vector3d::Zero()).isZero(0.0));

  const Eigen::Vector3d r = hat(Eigen::Vector3d(1, 0, 0)) * Eigen::Vector3d(0, 1, 0);
  CHECK((r - Eigen::Vector3d(0, 0, 1)).norm() == 0.0);

  std::mt19937 gen(7);
  std::normal_distribution<double> nd;
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector3d v(nd(gen), nd(gen), nd(gen));
    const Eigen::Vector3d w(nd(gen), nd(gen), nd(gen));
    CHECK((hat(v) * w - v.cross(w)).norm() < 1e-14);
    CHECK((hat(v) + hat(v).transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("left-multiplication matrix") {
  CHECK(quat_left(Eigen::Vector4d(1, 0, 0, 0)).isIdentity(1e-15));

  std::mt19937 gen(11);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector4d q = random_unit_quat(gen);
    const Eigen::Vector4d p = random_unit_quat(gen);
    // Block structure [[qs, -qv'], [qv, qs I + hat(qv)]].
    const Eigen::Matrix4d L = quat_left(q);
    CHECK(L(0, 0) == q(0));
    CHECK((L.block<1, 3>(0, 1).transpose() + q.tail<3>()).norm() < 1e-15);
    CHECK((L.block<3, 1>(1, 0) - q.tail<3>()).norm() < 1e-15);
    CHECK((L.block<3, 3>(1, 1) -
           (q(0) * Eigen::Matrix3d::Identity() + hat(q.tail<3>())))
              .cwiseAbs()
              .maxCoeff() < 1e-15);
    // Against the brute-force Hamilton product.
    CHECK((L * p - oracles::hamilton(q, p)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("quaternion embedding matrix") {
  const Eigen::Matrix<double, 4, 3> H = quat_embed();
  CHECK(H.row(0).isZero(0.0));
  CHECK(H.bottomRows<3>().isIdentity(0.0));
}

TEST_CASE("quadrotor derivative") {
  QuadrotorParams p;
  QuadrotorState s;
  s.r.setZero();
  s.q = Eigen::Vector4d(1, 0, 0, 0);
  s.v.setZero();
  s.w.setZero();

  SUBCASE("hover equilibrium") {
    // Total thrust m*g split across rotors balances gravity exactly.
    const Vec dx = quadrotor_deriv(s, p.hover_control(), p);
    CHECK(dx.cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("zero angular velocity freezes the attitude") {
    std::mt19937 gen(3);
    for (int i = 0; i < 20; ++i) {
      s.q = random_unit_quat(gen);
      const Vec dx = quadrotor_deriv(s, Eigen::Vector4d(1, 2, 3, 4), p);
      CHECK(dx.segment<4>(3).cwiseAbs().maxCoeff() == 0.0);
    }
  }
  SUBCASE("dispatch identity") {
    Model m;
    m.kind = ModelKind::Quadrotor;
    m.quad = p;
    s.q = Eigen::Vector4d(1, 0, 0, 0);
    s.v = Eigen::Vector3d(0.1, -0.2, 0.3);
    s.w = Eigen::Vector3d(0.05, 0.02, -0.01);
    const Vec via_model = model_deriv(m, s.vec(), Eigen::Vector4d(1.2, 1.3, 1.1, 1.25));
    const Vec direct = quadrotor_deriv(s, Eigen::Vector4d(1.2, 1.3, 1.1, 1.25), p);
    CHECK((via_model - direct).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("singular inertia rejected at validation") {
    QuadrotorParams bad;
    bad.J.setZero();
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  }
}

TEST_CASE("battery discharge rates") {
  SUBCASE("constant rate ignores the control") {
    BatteryModel b;
    b.variant = ConstantRate{0.667};
    CHECK(b.deriv(Vec::Zero(4)) == doctest::Approx(-0.667));
    CHECK(b.deriv(Vec::Ones(4) * 9.0) == doctest::Approx(-0.667));
  }
  SUBCASE("control dependent vanishes at zero control") {
    BatteryModel b;
    b.variant = ControlDependent{1.0, 100.0, 1.0, 100.0};
    CHECK(b.deriv(Vec::Zero(4)) == 0.0);
  }
  SUBCASE("control dependent with linear class-K") {
    BatteryModel b;
    const double eta = 0.9, C = 50.0, c = 2.0;
    b.variant = ControlDependent{eta, C, c, 100.0};
    const Vec u = Vec::Ones(4);
    CHECK(b.deriv(u) == doctest::Approx(-eta / C * c * 4.0));
  }
  SUBCASE("SoC non-increasing under any control") {
    std::mt19937 gen(5);
    std::normal_distribution<double> nd;
    for (const BatteryModel& b :
         {BatteryModel{ConstantRate{0.5}, 0.0, 100.0},
          BatteryModel{ControlDependent{1.0, 100.0, 1.0, 100.0}, 0.0, 100.0}}) {
      for (int i = 0; i < 200; ++i) {
        Vec u(4);
        for (int k = 0; k < 4; ++k) u(k) = nd(gen);
        CHECK(battery_deriv(b, u) <= 0.0);
      }
    }
  }
}

TEST_CASE("model derivatives") {
  Model di;
  di.kind = ModelKind::DoubleIntegrator;
  di.axes = 2;
  Vec x(4), u(2);
  x << 0, 0, 1, 1;
  u << 0, 0;
  Vec dx = model_deriv(di, x, u);
  CHECK((dx - (Vec(4) << 1, 1, 0, 0).finished()).norm() == 0.0);

  Model uni;
  uni.kind = ModelKind::Unicycle;
  Vec xu(3), uu(2);
  xu << 0, 0, 0;
  uu << 1, 0;
  dx = model_deriv(uni, xu, uu);
  CHECK((dx - (Vec(3) << 1, 0, 0).finished()).norm() == 0.0);

  CHECK_THROWS_AS(model_deriv(di, xu, u), std::invalid_argument);
}

TEST_CASE("RK4 integration") {
  SUBCASE("constant solution") {
    const Vec x0 = (Vec(3) << 1, 2, 3).finished();
    const Vec x1 = rk4_step([](const Vec& x, const Vec&) { return Vec(Vec::Zero(x.size())); },
                            x0, Vec::Zero(1), 0.1);
    CHECK((x1 - x0).norm() == 0.0);
  }
  SUBCASE("exponential decay") {
    Vec x0(1);
    x0 << 1.0;
    const Vec x1 = rk4_step([](const Vec& x, const Vec&) { return Vec(-x); },
                            x0, Vec::Zero(1), 0.1);
    CHECK(std::abs(x1(0) - std::exp(-0.1)) < 1e-7);
  }
  SUBCASE("polynomial exactness on the double integrator") {
    Model di;
    di.kind = ModelKind::DoubleIntegrator;
    di.axes = 2;
    Vec x(4), u(2);
    x << 1, -1, 0.5, 0.25;
    u << 0.3, -0.7;
    const double dt = 0.2;
    const Vec x1 = model_step(di, x, u, dt);
    Vec expect(4);
    expect.head(2) = x.head(2) + x.tail(2) * dt + 0.5 * u * dt * dt;
    expect.tail(2) = x.tail(2) + u * dt;
    CHECK((x1 - expect).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("rejects nonpositive dt and non-finite derivatives") {
    Vec x0(1);
    x0 << 1.0;
    CHECK_THROWS_AS(
        rk4_step([](const Vec& x, const Vec&) { return Vec(-x); }, x0, Vec::Zero(1), 0.0),
        std::invalid_argument);
    CHECK_THROWS_AS(rk4_step(
                        [](const Vec& x, const Vec&) {
                          return Vec(Vec::Constant(x.size(),
                                                   std::numeric_limits<double>::quiet_NaN()));
                        },
                        x0, Vec::Zero(1), 0.1),
                    IntegrationError);
  }
  SUBCASE("determinism") {
    Model m;
    m.kind = ModelKind::Quadrotor;
    Vec x = Vec::Zero(13);
    x(3) = 1.0;
    x(7) = 0.3;
    const Vec u = Eigen::Vector4d(1.2, 1.3, 1.15, 1.25);
    const Vec a = model_step(m, x, u, 0.05);
    const Vec b = model_step(m, x, u, 0.05);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("quaternion norm preserved over a long rollout") {
    Model m;
    m.kind = ModelKind::Quadrotor;
    Vec x = Vec::Zero(13);
    x(3) = 1.0;
    Vec u = m.quad.hover_control();
    u(0) += 0.02;  // slight asymmetry keeps the attitude moving
    for (int k = 0; k < 2000; ++k) {
      x = model_step(m, x, u, 0.01);
      CHECK(std::abs(x.segment<4>(3).norm() - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("linearization") {
  SUBCASE("double integrator is exactly linear") {
    Model di;
    di.kind = ModelKind::DoubleIntegrator;
    di.axes = 2;
    const LinearizedModel lin = linearize(di, Vec::Zero(4), Vec::Zero(2));
    Mat A = Mat::Zero(4, 4);
    A.topRightCorner(2, 2).setIdentity();
    Mat B = Mat::Zero(4, 2);
    B.bottomRows(2).setIdentity();
    CHECK((lin.A - A).cwiseAbs().maxCoeff() == 0.0);
    CHECK((lin.B - B).cwiseAbs().maxCoeff() == 0.0);
    // Finite differences agree on the LTI model.
    const LinearizedModel fd = linearize_fd(
        [&](const Vec& x, const Vec& u) { return model_deriv(di, x, u); },
        Vec::Zero(4), Vec::Zero(2));
    CHECK((fd.A - A).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((fd.B - B).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("analytic vs finite differences on random points") {
    std::mt19937 gen(17);
    std::normal_distribution<double> nd;
    Model uni;
    uni.kind = ModelKind::Unicycle;
    Model di;
    di.kind = ModelKind::DoubleIntegrator;
    di.axes = 3;
    for (int i = 0; i < 1000; ++i) {
      {
        Vec x(3), u(2);
        for (int k = 0; k < 3; ++k) x(k) = nd(gen);
        for (int k = 0; k < 2; ++k) u(k) = nd(gen);
        const LinearizedModel an = linearize(uni, x, u);
        const LinearizedModel fd = linearize_fd(
            [&](const Vec& xs, const Vec& us) { return model_deriv(uni, xs, us); }, x, u);
        CHECK((an.A - fd.A).cwiseAbs().maxCoeff() < 1e-5);
        CHECK((an.B - fd.B).cwiseAbs().maxCoeff() < 1e-5);
      }
      {
        Vec x(6), u(3);
        for (int k = 0; k < 6; ++k) x(k) = nd(gen);
        for (int k = 0; k < 3; ++k) u(k) = nd(gen);
        const LinearizedModel an = linearize(di, x, u);
        const LinearizedModel fd = linearize_fd(
            [&](const Vec& xs, const Vec& us) { return model_deriv(di, xs, us); }, x, u);
        CHECK((an.A - fd.A).cwiseAbs().maxCoeff() < 1e-5);
        CHECK((an.B - fd.B).cwiseAbs().maxCoeff() < 1e-5);
      }
    }
  }
  SUBCASE("quadrotor hover Jacobian structure") {
    Model m;
    m.kind = ModelKind::Quadrotor;
    Vec x = Vec::Zero(13);
    x(3) = 1.0;
    const LinearizedModel lin = linearize(m, x, m.quad.hover_control());
    CHECK((lin.A.block<3, 3>(0, 7) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(lin.A.block<3, 3>(7, 0).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("attitude-error reduction") {
  Model m;
  m.kind = ModelKind::Quadrotor;
  Vec x = Vec::Zero(13);
  x(3) = 1.0;
  const LinearizedModel full = linearize(m, x, m.quad.hover_control());
  const LinearizedModel red = reduce_attitude(full, Eigen::Vector4d(1, 0, 0, 0));

  CHECK(red.A.rows() == 12);
  CHECK(red.A.cols() == 12);
  CHECK(red.B.rows() == 12);
  CHECK(red.B.cols() == 4);

  // The reduced hover system is controllable with rank exactly 12, while the
  // raw 13-state quaternion system is rank deficient.
  CHECK(controllability_rank(red.A, red.B) == 12);
  CHECK(controllability_rank(full.A, full.B) < 13);

  const Mat E = reduction_map(Eigen::Vector4d(1, 0, 0, 0));
  CHECK((E.block<4, 3>(3, 3) - quat_embed()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((E.transpose() * E - Mat::Identity(12, 12)).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(reduce_attitude(full, Eigen::Vector4d(1, 1, 0, 0)),
                  std::invalid_argument);
}
