#include "mesch/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

#include "json.hpp"
#include "mesch/integrate.hpp"
#include "mesch/rng.hpp"

namespace mesch {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Validation

namespace {

long steps_of(double T, double dt, const char* what) {
  const double q = T / dt;
  const long n = std::lround(q);
  if (std::abs(q - static_cast<double>(n)) > 1e-6)
    throw ScenarioError(std::string(what) + " must be an integer multiple of dt");
  return n;
}

}  // namespace

void Horizons::validate() const {
  if (dt <= 0.0) throw ScenarioError("horizons.dt must be positive");
  for (double T : {T_N, T_B, T_C, T_R, T_L, T_E})
    if (T <= 0.0) throw ScenarioError("horizons must be positive");
  if (T_ch < 0.0 || T_delta < 0.0)
    throw ScenarioError("horizons.T_ch and horizons.T_delta must be nonnegative");
  if (std::abs(T_C - (T_N + T_B)) > 1e-9)
    throw ScenarioError("horizons: consistency error, T_C must equal T_N + T_B");
  if (std::abs(T_R - (T_C + T_L)) > 1e-9)
    throw ScenarioError("horizons: consistency error, T_R must equal T_C + T_L");
  if (T_E > T_N + 1e-12)
    throw ScenarioError("horizons: T_E must not exceed T_N");
  steps_of(T_N, dt, "horizons.T_N");
  steps_of(T_B, dt, "horizons.T_B");
  steps_of(T_L, dt, "horizons.T_L");
  steps_of(T_E, dt, "horizons.T_E");
}

void Scenario::validate() const {
  horizons.validate();
  if (robots.empty()) throw ScenarioError("robots: list must not be empty");
  for (size_t i = 0; i < robots.size(); ++i) {
    try {
      robots[i].battery.validate();
      if (robots[i].model.kind == ModelKind::Quadrotor) robots[i].model.quad.validate();
      if (robots[i].initial_soc < robots[i].battery.e_min ||
          robots[i].initial_soc > robots[i].battery.e_max)
        throw ScenarioError("initial_soc outside [e_min, e_max]");
    } catch (const std::exception& e) {
      throw ScenarioError("robots[" + std::to_string(i) + "]: " + e.what());
    }
  }
  const int c = charger.model.state_dim();
  if (charger.initial_state.size() != c)
    throw ScenarioError("charger.initial_state: wrong dimension after z-padding");
  if (charger.model.kind != ChargerKind::Static &&
      charger.nominal_control.size() != charger.model.control_dim())
    throw ScenarioError("charger.nominal_control: wrong dimension");
  if (charger.W.rows() != c || charger.W.cols() != c)
    throw ScenarioError("charger.process_noise: must be state_dim x state_dim");
  if (charger.d <= 0.0) throw ScenarioError("charger.d must be positive");
  if (planner.kind == PlannerSpec::Kind::Ergodic) planner.domain.validate();
  if (planner.kind == PlannerSpec::Kind::Waypoint && planner.waypoints.size() < 2)
    throw ScenarioError("planner.waypoints: need at least two waypoints");
  if (station_radius <= 0.0) throw ScenarioError("station_radius must be positive");
  if (duration <= 0.0) throw ScenarioError("duration must be positive");
}

// ---------------------------------------------------------------------------
// Scenario loading

namespace {

const json& require(const json& j, const char* field, const std::string& ctx) {
  auto it = j.find(field);
  if (it == j.end())
    throw ScenarioError("scenario load error: missing field '" + ctx + field + "'");
  return *it;
}

Vec to_vec(const json& j, const std::string& ctx) {
  if (!j.is_array())
    throw ScenarioError("scenario load error: field '" + ctx + "' must be an array");
  Vec v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = j[i].get<double>();
  return v;
}

Mat diag_or_full(const json& j, int n, const std::string& ctx) {
  if (j.is_array() && !j.empty() && j[0].is_array()) {
    Mat M(j.size(), j[0].size());
    for (size_t r = 0; r < j.size(); ++r)
      for (size_t c = 0; c < j[r].size(); ++c)
        M(static_cast<int>(r), static_cast<int>(c)) = j[r][c].get<double>();
    if (M.rows() != n || M.cols() != n)
      throw ScenarioError("scenario load error: field '" + ctx + "' must be " +
                          std::to_string(n) + "x" + std::to_string(n));
    return M;
  }
  const Vec d = to_vec(j, ctx);
  if (d.size() != n)
    throw ScenarioError("scenario load error: field '" + ctx + "' diagonal must have " +
                        std::to_string(n) + " entries");
  return Mat(d.asDiagonal());
}

BatteryModel parse_battery(const json& j, const std::string& ctx) {
  BatteryModel b;
  const std::string type = require(j, "type", ctx).get<std::string>();
  if (type == "constant_rate") {
    ConstantRate c;
    c.k_d = require(j, "k_d", ctx).get<double>();
    b.variant = c;
  } else if (type == "control_dependent") {
    ControlDependent c;
    c.eta = j.value("eta", 1.0);
    c.capacity = j.value("capacity", 100.0);
    c.alpha_gain = j.value("alpha_gain", 1.0);
    c.u_norm_sq_max = j.value("u_norm_sq_max", 100.0);
    b.variant = c;
  } else {
    throw ScenarioError("scenario load error: unknown battery type '" + type + "'");
  }
  b.e_min = j.value("e_min", 0.0);
  b.e_max = j.value("e_max", 100.0);
  return b;
}

Model parse_model(const json& j, const std::string& ctx) {
  Model m;
  const std::string kind = require(j, "model", ctx).get<std::string>();
  if (kind == "quadrotor") {
    m.kind = ModelKind::Quadrotor;
    if (j.contains("mass")) m.quad.m = j["mass"].get<double>();
    if (j.contains("arm")) m.quad.arm = j["arm"].get<double>();
    if (j.contains("drag_coeff")) m.quad.drag_coeff = j["drag_coeff"].get<double>();
    if (j.contains("inertia")) {
      const Vec d = to_vec(j["inertia"], ctx + "inertia");
      if (d.size() != 3)
        throw ScenarioError("scenario load error: '" + ctx + "inertia' needs 3 entries");
      m.quad.J = Eigen::Vector3d(d(0), d(1), d(2)).asDiagonal();
    }
  } else if (kind == "double_integrator") {
    m.kind = ModelKind::DoubleIntegrator;
    m.axes = j.value("axes", 2);
    if (m.axes < 1 || m.axes > 3)
      throw ScenarioError("scenario load error: '" + ctx + "axes' must be 1..3");
  } else if (kind == "unicycle") {
    m.kind = ModelKind::Unicycle;
  } else {
    throw ScenarioError("scenario load error: unknown robot model '" + kind + "'");
  }
  return m;
}

}  // namespace

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ScenarioError("scenario parse error in " + path + ": " + e.what());
  }

  Scenario sc;
  sc.duration = j.value("duration", 600.0);
  sc.seed = j.value("seed", 0ull);
  sc.station_radius = j.value("station_radius", 0.3);
  sc.deterministic_charger = j.value("deterministic_charger", false);
  sc.threads = j.value("threads", 1);
  sc.allow_violations = j.value("allow_violations", false);
  const std::string abl = j.value("ablate", std::string("none"));
  if (abl == "none") sc.ablate = Ablation::None;
  else if (abl == "gware") sc.ablate = Ablation::Gware;
  else if (abl == "eware") sc.ablate = Ablation::Eware;
  else throw ScenarioError("scenario load error: field 'ablate' must be none|gware|eware");

  if (j.contains("horizons")) {
    const json& h = j["horizons"];
    Horizons& hz = sc.horizons;
    hz.T_N = h.value("T_N", hz.T_N);
    hz.T_B = h.value("T_B", hz.T_B);
    hz.T_C = h.value("T_C", hz.T_N + hz.T_B);
    hz.T_L = h.value("T_L", hz.T_L);
    hz.T_R = h.value("T_R", hz.T_C + hz.T_L);
    hz.T_E = h.value("T_E", hz.T_E);
    hz.T_ch = h.value("T_ch", hz.T_ch);
    hz.T_delta = h.value("T_delta", hz.T_delta);
    hz.dt = h.value("dt", hz.dt);
  }

  // Charger
  {
    const json& c = require(j, "charger", "");
    const std::string kind = require(c, "type", "charger.").get<std::string>();
    if (kind == "static") sc.charger.model.kind = ChargerKind::Static;
    else if (kind == "unicycle") sc.charger.model.kind = ChargerKind::Unicycle;
    else throw ScenarioError("scenario load error: charger.type must be static|unicycle");

    Vec x0 = to_vec(require(c, "initial_state", "charger."), "charger.initial_state");
    const int n = sc.charger.model.state_dim();
    // Planar states are zero-padded with z at index 2.
    if (sc.charger.model.kind == ChargerKind::Static && x0.size() == 2) {
      Vec p(3);
      p << x0(0), x0(1), 0.0;
      x0 = p;
    } else if (sc.charger.model.kind == ChargerKind::Unicycle && x0.size() == 3) {
      Vec p(4);
      p << x0(0), x0(1), 0.0, x0(2);
      x0 = p;
    }
    if (x0.size() != n)
      throw ScenarioError("scenario load error: charger.initial_state has wrong size");
    sc.charger.initial_state = x0;

    if (sc.charger.model.kind == ChargerKind::Unicycle)
      sc.charger.nominal_control =
          to_vec(require(c, "nominal_control", "charger."), "charger.nominal_control");
    else
      sc.charger.nominal_control = Vec(0);

    sc.charger.W = c.contains("process_noise")
                       ? diag_or_full(c["process_noise"], n, "charger.process_noise")
                       : Mat::Zero(n, n);
    sc.charger.position_only_obs = c.value("position_only_obs", false);
    const int obs_dim = sc.charger.position_only_obs ? 3 : n;
    sc.charger.V = c.contains("measurement_noise")
                       ? diag_or_full(c["measurement_noise"], obs_dim,
                                      "charger.measurement_noise")
                       : Mat(1e-4 * Mat::Identity(obs_dim, obs_dim));
    sc.charger.d = c.value("d", 1.0);
    sc.charger.initial_cov = c.contains("initial_cov")
                                 ? diag_or_full(c["initial_cov"], n, "charger.initial_cov")
                                 : Mat::Zero(n, n);
  }

  // Planner
  if (j.contains("planner")) {
    const json& p = j["planner"];
    const std::string kind = p.value("type", std::string("ergodic"));
    if (kind == "ergodic") sc.planner.kind = PlannerSpec::Kind::Ergodic;
    else if (kind == "circle") sc.planner.kind = PlannerSpec::Kind::Circle;
    else if (kind == "waypoint") sc.planner.kind = PlannerSpec::Kind::Waypoint;
    else throw ScenarioError("scenario load error: planner.type must be ergodic|circle|waypoint");
    sc.planner.altitude = p.value("altitude", 2.0);
    if (p.contains("domain")) {
      const Vec d = to_vec(p["domain"], "planner.domain");
      sc.planner.domain.lengths.assign(d.data(), d.data() + d.size());
    }
    if (p.contains("density")) {
      const json& dj = p["density"];
      const std::string dk = dj.value("type", std::string("uniform"));
      if (dk == "uniform") {
        sc.planner.density.kind = DensitySpec::Kind::Uniform;
      } else if (dk == "gaussian_mixture") {
        sc.planner.density.kind = DensitySpec::Kind::GaussianMixture;
        for (const auto& m : require(dj, "means", "planner.density."))
          sc.planner.density.means.push_back(to_vec(m, "planner.density.means"));
        const int s = sc.planner.domain.dim();
        for (const auto& c : require(dj, "covs", "planner.density."))
          sc.planner.density.covs.push_back(diag_or_full(c, s, "planner.density.covs"));
        if (dj.contains("weights"))
          for (const auto& w : dj["weights"])
            sc.planner.density.weights.push_back(w.get<double>());
        else
          sc.planner.density.weights.assign(sc.planner.density.means.size(),
                                            1.0 / sc.planner.density.means.size());
      } else {
        throw ScenarioError("scenario load error: planner.density.type unknown");
      }
    }
    if (p.contains("pto")) {
      const json& q = p["pto"];
      sc.planner.pto.T_H = q.value("T_H", sc.planner.pto.T_H);
      sc.planner.pto.dt = q.value("dt", sc.planner.pto.dt);
      sc.planner.pto.q = q.value("q", sc.planner.pto.q);
      sc.planner.pto.c_b = q.value("c_b", sc.planner.pto.c_b);
      sc.planner.pto.max_iters = q.value("max_iters", sc.planner.pto.max_iters);
      sc.planner.pto.tol = q.value("tol", sc.planner.pto.tol);
      if (q.contains("R")) {
        const Vec r = to_vec(q["R"], "planner.pto.R");
        sc.planner.pto.R = Mat(r.asDiagonal());
      }
    }
    sc.planner.circle_radius = p.value("circle_radius", sc.planner.circle_radius);
    sc.planner.circle_period = p.value("circle_period", sc.planner.circle_period);
    if (p.contains("circle_center")) {
      const Vec c = to_vec(p["circle_center"], "planner.circle_center");
      sc.planner.circle_center = Eigen::Vector2d(c(0), c(1));
    }
    if (p.contains("waypoints"))
      for (const auto& w : p["waypoints"]) {
        const Vec q = to_vec(w, "planner.waypoints");
        sc.planner.waypoints.emplace_back(q(0), q(1));
      }
    sc.planner.waypoint_speed = p.value("waypoint_speed", sc.planner.waypoint_speed);
  }

  if (j.contains("reserve")) {
    const json& r = j["reserve"];
    const std::string mode = r.value("mode", std::string("duration_extended"));
    if (mode == "duration_extended")
      sc.reserve.mode = ReserveConfig::Mode::DurationExtended;
    else if (mode == "control_energy")
      sc.reserve.mode = ReserveConfig::Mode::ControlEnergy;
    else
      throw ScenarioError("scenario load error: reserve.mode unknown");
    sc.reserve.descent_speed = r.value("descent_speed", sc.reserve.descent_speed);
  }

  // Robots
  const json& robots = require(j, "robots", "");
  if (!robots.is_array() || robots.empty())
    throw ScenarioError("scenario load error: field 'robots' must be a non-empty array");
  for (size_t i = 0; i < robots.size(); ++i) {
    const std::string ctx = "robots[" + std::to_string(i) + "].";
    const json& r = robots[i];
    RobotSpec spec;
    spec.model = parse_model(r, ctx);
    spec.battery = parse_battery(require(r, "battery", ctx), ctx + "battery.");
    const Vec p = to_vec(require(r, "initial_position", ctx), ctx + "initial_position");
    spec.initial_position.setZero();
    spec.initial_position.head(std::min<int>(3, p.size())) = p.head(std::min<int>(3, p.size()));
    spec.initial_soc = r.value("initial_soc", 100.0);
    if (r.contains("q_diag")) spec.q_diag = to_vec(r["q_diag"], ctx + "q_diag");
    if (r.contains("r_diag")) spec.r_diag = to_vec(r["r_diag"], ctx + "r_diag");
    sc.robots.push_back(std::move(spec));
  }

  sc.validate();
  return sc;
}

// ---------------------------------------------------------------------------
// Run

namespace {

Eigen::Vector3d position3(const Model& model, const Vec& x) {
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  switch (model.kind) {
    case ModelKind::Quadrotor: return x.head<3>();
    case ModelKind::DoubleIntegrator:
      p.head(std::min(model.axes, 3)) = x.head(std::min(model.axes, 3));
      return p;
    case ModelKind::Unicycle:
      p.head<2>() = x.head<2>();
      return p;
  }
  return p;
}

TrackingWeights default_weights(const RobotModel& rm, const Vec& q_diag,
                                const Vec& r_diag) {
  TrackingWeights w;
  if (q_diag.size()) {
    if (q_diag.size() != rm.n_red())
      throw ScenarioError("q_diag has wrong dimension for the reduced state");
    w.Q = Mat(q_diag.asDiagonal());
  } else if (rm.model.kind == ModelKind::Quadrotor) {
    Vec d(12);
    d << 10, 10, 10, 2, 2, 2, 3, 3, 3, 0.3, 0.3, 0.3;
    w.Q = Mat(d.asDiagonal());
  } else {
    Vec d = Vec::Ones(rm.n_red());
    d.head(rm.n_red() / 2).setConstant(10.0);
    w.Q = Mat(d.asDiagonal());
  }
  if (r_diag.size()) {
    if (r_diag.size() != rm.m())
      throw ScenarioError("r_diag has wrong dimension for the control");
    w.R = Mat(r_diag.asDiagonal());
  } else {
    w.R = (rm.model.kind == ModelKind::Quadrotor ? 2.0 : 1.0) *
          Mat::Identity(rm.m(), rm.m());
  }
  return w;
}

/// Symmetric PSD square root (for Euler-Maruyama sampling of W).
Mat psd_sqrt(const Mat& W) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (W + W.transpose()));
  Vec d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

struct RobotRuntime {
  RobotModel rm;
  BatteryModel battery;
  TrackingWeights weights;
  SystemState chi;
  RobotStatus status = RobotStatus::Active;
  std::shared_ptr<const CandidateTrajectory> committed;
  double logged_reserve = 0.0;
  double landing_start_t = -1.0;
  double landing_start_z = 0.0;
  double recharge_done_t = -1.0;
  Mat K_land;
  // Nominal path sampled on the tick grid; ping-pong playback unless closed.
  std::vector<Eigen::Vector3d> path_pos;
  std::vector<Eigen::Vector3d> path_vel;
  bool path_closed = false;
};

struct PerRobotPlan {
  std::shared_ptr<CandidateTrajectory> candidate;
  ReserveEnergy reserve;
  bool reserve_ok = false;
};

class Simulator {
 public:
  explicit Simulator(const Scenario& sc) : sc_(sc) { setup(); }

  SimLog run();

 private:
  void setup();
  void build_paths();
  void reference(const RobotRuntime& r, double t, Eigen::Vector3d& p,
                 Eigen::Vector3d& v) const;
  Vec ref_state(const RobotRuntime& r, const Eigen::Vector3d& p,
                const Eigen::Vector3d& v) const;
  PlanSegment nominal_segment(const RobotRuntime& r, double t_j) const;
  PerRobotPlan plan_robot(int i, double t_j, int j, const GaussianBelief& b_R,
                          const RendezvousPoint& rp, const Vec& worst) const;
  void iteration(int j, double t_j, SimLog& log);
  void step_world(double t);
  void step_robot(RobotRuntime& r, double t);
  void step_landing(RobotRuntime& r, double t);
  void record_ticks(double t, SimLog& log);
  void monitor(double t, SimLog& log);
  void note_violation(SimLog& log, const std::string& msg);

  const Scenario& sc_;
  double dt_ = 0.05;
  std::vector<RobotRuntime> robots_;
  Vec charger_truth_;
  GaussianBelief belief_;
  NoiseModel noise_;
  ObservationModel obs_{Mat()};
  Mat sqrtW_, sqrtV_;
  CounterRng rng_charger_{0, 0}, rng_meas_{0, 0};
  std::deque<std::pair<long, GaussianBelief>> calib_queue_;
  long tick_ = 0;
  double last_return_ = -std::numeric_limits<double>::infinity();
  SimLog* log_ = nullptr;
};

void Simulator::setup() {
  sc_.validate();
  dt_ = sc_.horizons.dt;
  rng_charger_ = CounterRng(sc_.seed, 1);
  rng_meas_ = CounterRng(sc_.seed, 2);

  for (const RobotSpec& spec : sc_.robots) {
    RobotRuntime r;
    r.rm = RobotModel::make(spec.model);
    r.battery = spec.battery;
    r.weights = default_weights(r.rm, spec.q_diag, spec.r_diag);
    r.chi.x = r.rm.rest_state(spec.initial_position);
    r.chi.e = spec.initial_soc;
    Mat Ad, Bd;
    r.rm.discrete(dt_, Ad, Bd);
    r.K_land = dlqr_gain(Ad, Bd, r.weights.Q, r.weights.R);
    robots_.push_back(std::move(r));
  }

  charger_truth_ = sc_.charger.initial_state;
  const int c = sc_.charger.model.state_dim();
  belief_.mean = charger_truth_;
  belief_.cov = sc_.deterministic_charger ? Mat::Zero(c, c) : sc_.charger.initial_cov;
  const Mat W = sc_.deterministic_charger ? Mat::Zero(c, c) : sc_.charger.W;
  noise_ = NoiseModel::constant(W, sc_.charger.V);
  obs_ = sc_.charger.position_only_obs ? ObservationModel::position_only(c)
                                       : ObservationModel::identity(c);
  sqrtW_ = psd_sqrt(W);
  sqrtV_ = psd_sqrt(sc_.charger.V);

  build_paths();
}

void Simulator::build_paths() {
  const PlannerSpec& p = sc_.planner;
  for (size_t i = 0; i < robots_.size(); ++i) {
    RobotRuntime& r = robots_[i];
    const Eigen::Vector3d p0 = position3(r.rm.model, r.chi.x);
    switch (p.kind) {
      case PlannerSpec::Kind::Ergodic: {
        SpectralDensity density =
            p.density.kind == DensitySpec::Kind::Uniform
                ? SpectralDensity::uniform(p.domain)
                : SpectralDensity::gaussian_mixture(p.domain, p.density.means,
                                                    p.density.covs,
                                                    p.density.weights);
        Model di;
        di.kind = ModelKind::DoubleIntegrator;
        di.axes = p.domain.dim();
        Vec x_ic = Vec::Zero(2 * di.axes);
        x_ic.head(di.axes) = p0.head(di.axes);
        const PtoResult res = pto_optimize(x_ic, density, p.domain, di, p.pto);
        // Upsample linearly from the planner grid to the tick grid.
        const int M = res.trajectory.horizon();
        const double pdt = res.trajectory.dt;
        const long steps = std::lround((M - 1) * pdt / dt_);
        r.path_pos.resize(steps + 1);
        r.path_vel.resize(steps + 1);
        for (long k = 0; k <= steps; ++k) {
          const double tau = k * dt_ / pdt;
          const int lo = std::min<int>(static_cast<int>(tau), M - 2);
          const double a = tau - lo;
          const Vec x = (1.0 - a) * res.trajectory.states[lo] +
                        a * res.trajectory.states[lo + 1];
          Eigen::Vector3d pos(0, 0, p.altitude), vel(0, 0, 0);
          pos.head(di.axes) = x.head(di.axes);
          vel.head(di.axes) = x.tail(di.axes);
          if (r.rm.model.kind != ModelKind::Quadrotor) pos(2) = 0.0;
          r.path_pos[k] = pos;
          r.path_vel[k] = vel;
        }
        r.path_closed = false;
        break;
      }
      case PlannerSpec::Kind::Circle: {
        const double phase =
            2.0 * std::numbers::pi * static_cast<double>(i) / robots_.size();
        const long steps = std::lround(p.circle_period / dt_);
        const double w = 2.0 * std::numbers::pi / p.circle_period;
        r.path_pos.resize(steps + 1);
        r.path_vel.resize(steps + 1);
        for (long k = 0; k <= steps; ++k) {
          const double a = w * k * dt_ + phase;
          const double z =
              r.rm.model.kind == ModelKind::Quadrotor ? p.altitude : 0.0;
          r.path_pos[k] = Eigen::Vector3d(
              p.circle_center.x() + p.circle_radius * std::cos(a),
              p.circle_center.y() + p.circle_radius * std::sin(a), z);
          r.path_vel[k] =
              Eigen::Vector3d(-p.circle_radius * w * std::sin(a),
                              p.circle_radius * w * std::cos(a), 0.0);
        }
        r.path_closed = true;
        break;
      }
      case PlannerSpec::Kind::Waypoint: {
        // Closed loop through the waypoints at constant speed.
        std::vector<Eigen::Vector2d> wp = p.waypoints;
        wp.push_back(wp.front());
        std::vector<Eigen::Vector3d> pos, vel;
        const double z =
            r.rm.model.kind == ModelKind::Quadrotor ? p.altitude : 0.0;
        for (size_t s = 0; s + 1 < wp.size(); ++s) {
          const Eigen::Vector2d seg = wp[s + 1] - wp[s];
          const double len = seg.norm();
          const long steps = std::max<long>(1, std::lround(len / (p.waypoint_speed * dt_)));
          const Eigen::Vector2d v2 = seg / (steps * dt_);
          for (long k = 0; k < steps; ++k) {
            const Eigen::Vector2d q = wp[s] + seg * (static_cast<double>(k) / steps);
            pos.emplace_back(q.x(), q.y(), z);
            vel.emplace_back(v2.x(), v2.y(), 0.0);
          }
        }
        pos.emplace_back(wp.back().x(), wp.back().y(), z);
        vel.emplace_back(vel.front());
        // Stagger robots around the loop.
        const size_t shift = (i * pos.size()) / robots_.size();
        std::rotate(pos.begin(), pos.begin() + shift, pos.end());
        std::rotate(vel.begin(), vel.begin() + shift, vel.end());
        r.path_pos = std::move(pos);
        r.path_vel = std::move(vel);
        r.path_closed = true;
        break;
      }
    }
  }
}

void Simulator::reference(const RobotRuntime& r, double t, Eigen::Vector3d& p,
                          Eigen::Vector3d& v) const {
  const long M = static_cast<long>(r.path_pos.size());
  if (M <= 1) {
    p = M ? r.path_pos[0] : Eigen::Vector3d::Zero();
    v.setZero();
    return;
  }
  const long L = M - 1;
  long k = std::lround(t / dt_);
  if (r.path_closed) {
    k %= L;
    p = r.path_pos[k];
    v = r.path_vel[k];
  } else {
    // Ping-pong playback keeps the reference position continuous.
    k %= 2 * L;
    if (k <= L) {
      p = r.path_pos[k];
      v = r.path_vel[k];
    } else {
      p = r.path_pos[2 * L - k];
      v = -r.path_vel[2 * L - k];
    }
  }
}

Vec Simulator::ref_state(const RobotRuntime& r, const Eigen::Vector3d& p,
                         const Eigen::Vector3d& v) const {
  switch (r.rm.model.kind) {
    case ModelKind::Quadrotor: {
      Vec x = Vec::Zero(13);
      x.head<3>() = p;
      x(3) = 1.0;
      x.segment<3>(7) = v;
      return x;
    }
    case ModelKind::DoubleIntegrator: {
      const int a = r.rm.model.axes;
      Vec x = Vec::Zero(2 * a);
      x.head(a) = p.head(a);
      x.tail(a) = v.head(a);
      return x;
    }
    case ModelKind::Unicycle: {
      Vec x(3);
      x << p.x(), p.y(), std::atan2(v.y(), v.x());
      return x;
    }
  }
  throw std::logic_error("unreachable");
}

PlanSegment Simulator::nominal_segment(const RobotRuntime& r, double t_j) const {
  const int Nn = static_cast<int>(std::lround(sc_.horizons.T_N / dt_));
  const Eigen::Vector3d p0 = position3(r.rm.model, r.chi.x);
  std::vector<Eigen::Vector3d> pos(Nn + 1);
  for (int k = 0; k <= Nn; ++k) {
    Eigen::Vector3d pr, vr;
    reference(r, t_j + k * dt_, pr, vr);
    const double s = static_cast<double>(k) / Nn;
    // Blend from the robot's current position onto the planner path so the
    // tracking error stays small even right after a relaunch.
    pos[k] = (1.0 - s) * p0 + s * pr;
  }
  PlanSegment seg;
  seg.dt = dt_;
  seg.t0 = t_j;
  seg.states.resize(Nn + 1);
  for (int k = 0; k <= Nn; ++k) {
    Eigen::Vector3d vel;
    if (k == 0) vel = (pos[1] - pos[0]) / dt_;
    else if (k == Nn) vel = (pos[Nn] - pos[Nn - 1]) / dt_;
    else vel = (pos[k + 1] - pos[k - 1]) / (2.0 * dt_);
    seg.states[k] = ref_state(r, pos[k], vel);
  }
  return seg;
}

PerRobotPlan Simulator::plan_robot(int i, double t_j, int j,
                                   const GaussianBelief& b_R,
                                   const RendezvousPoint& rp,
                                   const Vec& worst) const {
  const RobotRuntime& r = robots_[static_cast<size_t>(i)];
  PerRobotPlan out;
  const PlanSegment nominal = nominal_segment(r, t_j);
  out.candidate = std::make_shared<CandidateTrajectory>(candidate_trajectory(
      r.rm, r.chi, nominal, rp, r.weights, r.battery, sc_.horizons.T_N,
      sc_.horizons.T_B, dt_, t_j));
  if (out.candidate->valid) {
    try {
      const SystemState chi_C{out.candidate->states.back(),
                              out.candidate->soc.back()};
      out.reserve = compute_reserve(r.rm, chi_C, b_R.mean, worst, r.weights,
                                    r.battery, sc_.horizons.T_L, dt_,
                                    sc_.reserve, j);
      out.reserve_ok = true;
    } catch (const InfeasibleTrajectory&) {
      out.candidate->valid = false;
    } catch (const NumericalError&) {
      out.candidate->valid = false;
    }
  }
  return out;
}

void Simulator::iteration(int j, double t_j, SimLog& log) {
  // Relaunch robots whose recharge has completed.
  for (RobotRuntime& r : robots_) {
    if (r.status == RobotStatus::Charging && t_j >= r.recharge_done_t - 1e-9) {
      r.chi.e = r.battery.e_max;
      r.status = RobotStatus::Active;
      r.committed.reset();
      r.landing_start_t = -1.0;
    }
  }

  // Predict the charger to the rendezvous time and place the rendezvous point.
  const GaussianBelief b_R = propagate_horizon(
      belief_, sc_.charger.model,
      [this](double) { return sc_.charger.nominal_control; }, noise_,
      sc_.horizons.T_R, dt_);
  const RendezvousPoint rp = rendezvous_point(b_R, sc_.charger.d);
  const Vec worst = worst_case_state(b_R);
  calib_queue_.emplace_back(tick_ + std::lround(sc_.horizons.T_R / dt_), b_R);

  // Candidate + reserve fan-out across active robots; merged in id order.
  std::vector<int> active;
  for (int i = 0; i < static_cast<int>(robots_.size()); ++i)
    if (robots_[static_cast<size_t>(i)].status == RobotStatus::Active)
      active.push_back(i);

  std::vector<PerRobotPlan> plans(active.size());
  if (sc_.threads > 1 && active.size() > 1) {
    std::vector<std::future<PerRobotPlan>> futs;
    futs.reserve(active.size());
    for (int i : active)
      futs.push_back(std::async(std::launch::async, [this, i, t_j, j, &b_R, &rp,
                                                     &worst] {
        return plan_robot(i, t_j, j, b_R, rp, worst);
      }));
    for (size_t k = 0; k < futs.size(); ++k) plans[k] = futs[k].get();
  } else {
    for (size_t k = 0; k < active.size(); ++k)
      plans[k] = plan_robot(active[k], t_j, j, b_R, rp, worst);
  }

  std::vector<RobotSlot> slots;
  for (size_t k = 0; k < active.size(); ++k) {
    const RobotRuntime& r = robots_[static_cast<size_t>(active[k])];
    RobotSlot slot;
    slot.id = active[k];
    slot.state = r.chi;
    slot.committed = r.committed;
    slot.candidate = plans[k].candidate;
    // eware budget: stochastic reserve plus the nominal landing consumption,
    // so the worst-case landing is covered down to e_min + e_res.
    slot.reserve = plans[k].reserve.e_res + plans[k].reserve.mean_landing_cost;
    slot.e_min = r.battery.e_min;
    slot.T_F = remaining_battery_time(r.chi, r.battery);
    slot.status = r.status;
    slots.push_back(std::move(slot));
  }

  const GapParams gp = sc_.horizons.gap_params();
  const auto clk0 = std::chrono::steady_clock::now();
  std::vector<ScheduleDecision> decisions;
  switch (sc_.ablate) {
    case Ablation::None:
      decisions = schedule(slots, gp);
      break;
    case Ablation::Gware:
      decisions = eware(slots);
      break;
    case Ablation::Eware: {
      const GwareResult g = gware(slots, gp);
      if (g.violation) {
        decisions = g.decisions;
      } else {
        for (const RobotSlot& s : slots) {
          ScheduleDecision d;
          d.robot_id = s.id;
          d.action = (s.candidate && s.candidate->valid)
                         ? ScheduleAction::CommitCandidate
                         : ScheduleAction::KeepPrevious;
          decisions.push_back(d);
        }
      }
      break;
    }
  }
  const double sched_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - clk0)
          .count();
  log.scheduler_seconds_total += sched_s;

  IterationRecord rec;
  rec.j = j;
  rec.t = t_j;
  rec.scheduler_seconds = sched_s;
  rec.gap_violation =
      sc_.ablate == Ablation::Gware ? false : gware(slots, gp).violation;

  for (size_t k = 0; k < decisions.size(); ++k) {
    const ScheduleDecision& d = decisions[k];
    // Decisions come back sorted by robot id, matching the slot/plan order.
    const size_t idx = static_cast<size_t>(
        std::lower_bound(active.begin(), active.end(), d.robot_id) -
        active.begin());
    RobotRuntime& r = robots_[static_cast<size_t>(d.robot_id)];

    IterationRobotRecord rr;
    rr.robot_id = d.robot_id;
    rr.T_F = slots[idx].T_F;
    rr.reserve = plans[idx].reserve.e_res;
    rr.landing_budget = plans[idx].reserve.mean_landing_cost;
    rr.action = d.action == ScheduleAction::CommitCandidate ? 0 : 1;
    rr.initiate_landing = d.initiate_landing;
    rr.trigger = static_cast<int>(d.trigger);
    rec.robots.push_back(rr);

    if (d.action == ScheduleAction::CommitCandidate &&
        plans[idx].candidate->valid) {
      r.committed = plans[idx].candidate;
      r.logged_reserve = plans[idx].reserve.e_res;
    } else if (d.initiate_landing && r.committed) {
      r.status = RobotStatus::Returning;
    }
    // A robot with neither a valid candidate nor a committed trajectory
    // simply holds position until the next iteration.
  }
  log.iterations.push_back(std::move(rec));
}

void Simulator::step_landing(RobotRuntime& r, double t) {
  const double tau = t - r.landing_start_t;
  const Eigen::Vector3d cp = belief_.mean.head<3>();
  const double s = std::min(tau / sc_.horizons.T_L, 1.0);
  const double z_ref = r.landing_start_z + s * (cp.z() - r.landing_start_z);
  Eigen::Vector3d target(cp.x(), cp.y(), z_ref);
  const Vec x_ref = r.rm.rest_state(target);
  const Vec u =
      r.rm.u_bar - r.K_land * (r.rm.to_reduced(r.chi.x) - r.rm.to_reduced(x_ref));
  r.chi.x = model_step(r.rm.model, r.chi.x, u, dt_, t);
  r.chi.e = std::max(r.chi.e + r.battery.deriv(u) * dt_, 0.0);

  const Eigen::Vector3d p = position3(r.rm.model, r.chi.x);
  const Eigen::Vector3d cpos = [&] {
    Eigen::Vector3d c = charger_truth_.head<3>();
    if (r.rm.model.kind == ModelKind::DoubleIntegrator && r.rm.model.axes == 2)
      c.z() = 0.0;
    return c;
  }();
  if ((p - cpos).norm() <= sc_.station_radius) {
    // Touchdown: recharge after T_ch, relaunch at the next iteration after.
    r.status = RobotStatus::Charging;
    r.recharge_done_t = t + dt_ + sc_.horizons.T_ch;
    r.landing_start_t = -1.0;
    r.committed.reset();
    const double t_ret = t + dt_;
    const double gap = t_ret - last_return_;
    log_->returns.push_back({t_ret, static_cast<int>(&r - robots_.data())});
    if (std::isfinite(last_return_) &&
        gap <= sc_.horizons.T_ch + sc_.horizons.T_delta)
      note_violation(*log_, "inter-return gap " + std::to_string(gap) +
                                " s at t=" + std::to_string(t_ret));
    last_return_ = t_ret;
    if (sc_.horizons.T_ch <= 0.0) r.chi.e = r.battery.e_max;
  }
}

void Simulator::step_robot(RobotRuntime& r, double t) {
  auto hold = [&] {
    const Vec u = r.rm.u_bar;
    r.chi.e = std::max(r.chi.e + r.battery.deriv(u) * dt_, 0.0);
  };
  auto replay = [&]() -> bool {
    if (!r.committed) return false;
    const long idx = std::lround((t - r.committed->t0) / dt_);
    if (idx < 0 || idx + 1 >= r.committed->horizon()) return false;
    r.chi.x = r.committed->states[static_cast<size_t>(idx + 1)];
    r.chi.e = r.committed->soc[static_cast<size_t>(idx + 1)];
    return true;
  };

  switch (r.status) {
    case RobotStatus::Active:
      if (!replay()) hold();
      break;
    case RobotStatus::Returning:
      if (r.landing_start_t < 0.0) {
        if (replay()) break;
        r.landing_start_t = t;
        r.landing_start_z = position3(r.rm.model, r.chi.x).z();
      }
      step_landing(r, t);
      break;
    case RobotStatus::Charging: {
      // Ride the station; recharge completes at recharge_done_t.
      Eigen::Vector3d c = charger_truth_.head<3>();
      if (r.rm.model.kind == ModelKind::DoubleIntegrator && r.rm.model.axes == 2)
        c.z() = 0.0;
      r.chi.x = r.rm.rest_state(c);
      if (t + dt_ >= r.recharge_done_t - 1e-9) r.chi.e = r.battery.e_max;
      break;
    }
  }
}

void Simulator::step_world(double t) {
  // Charger truth: Euler-Maruyama with the configured process noise.
  const Vec& u = sc_.charger.nominal_control;
  Vec drift = sc_.charger.model.deriv(charger_truth_, u);
  if (sc_.deterministic_charger) {
    charger_truth_ = rk4_step(
        [&](const Vec& x, const Vec& uu) { return sc_.charger.model.deriv(x, uu); },
        charger_truth_, u, dt_, t);
  } else {
    Vec xi(charger_truth_.size());
    for (int i = 0; i < xi.size(); ++i) xi(i) = rng_charger_.gaussian();
    charger_truth_ += drift * dt_ + std::sqrt(dt_) * (sqrtW_ * xi);
  }

  // EKF: predict every tick; measurement update unless deterministic.
  belief_ = ekf_predict(belief_, sc_.charger.model, u, noise_, dt_);
  if (!sc_.deterministic_charger) {
    Vec nu(obs_.H.rows());
    for (int i = 0; i < nu.size(); ++i) nu(i) = rng_meas_.gaussian();
    const Vec y = obs_.H * charger_truth_ + sqrtV_ * nu;
    belief_ = ekf_update(belief_, y, obs_, sc_.charger.V);
  }

  for (RobotRuntime& r : robots_) step_robot(r, t);
}

void Simulator::record_ticks(double t, SimLog& log) {
  for (size_t i = 0; i < robots_.size(); ++i) {
    const RobotRuntime& r = robots_[i];
    TickRecord rec;
    rec.t = t;
    rec.robot_id = static_cast<int>(i);
    rec.soc = r.chi.e;
    rec.status = static_cast<int>(r.status);
    rec.pos = position3(r.rm.model, r.chi.x);
    Eigen::Vector3d c = charger_truth_.head<3>();
    if (r.rm.model.kind == ModelKind::DoubleIntegrator && r.rm.model.axes == 2)
      c.z() = 0.0;
    rec.dist_to_charger = (rec.pos - c).norm();
    rec.reserve = r.logged_reserve;
    rec.e_min = r.battery.e_min;
    rec.belief_trace = belief_.cov.trace();
    rec.charger_pos = charger_truth_.head<3>();
    log.ticks.push_back(rec);
  }
}

void Simulator::note_violation(SimLog& log, const std::string& msg) {
  if (log.violations.size() < 10000) log.violations.push_back(msg);
  if (!sc_.allow_violations)
    throw MonitorViolation("runtime monitor violation: " + msg);
}

void Simulator::monitor(double t, SimLog& log) {
  int at_station = 0;
  for (const RobotRuntime& r : robots_) {
    if (r.chi.e < r.battery.e_min - 1e-9)
      note_violation(log, "SoC " + std::to_string(r.chi.e) + " below floor " +
                              std::to_string(r.battery.e_min) + " at t=" +
                              std::to_string(t));
    Eigen::Vector3d c = charger_truth_.head<3>();
    if (r.rm.model.kind == ModelKind::DoubleIntegrator && r.rm.model.axes == 2)
      c.z() = 0.0;
    if ((position3(r.rm.model, r.chi.x) - c).norm() <= sc_.station_radius)
      ++at_station;
  }
  if (at_station >= 2)
    note_violation(log, std::to_string(at_station) +
                            " robots at the station at t=" + std::to_string(t));
}

SimLog Simulator::run() {
  SimLog log;
  log_ = &log;
  log.duration = sc_.duration;
  const long steps_per_iter = std::lround(sc_.horizons.T_E / dt_);
  const long total = std::lround(sc_.duration / dt_);
  int j = 0;

  for (tick_ = 0; tick_ <= total; ++tick_) {
    const double t = tick_ * dt_;
    if (tick_ % steps_per_iter == 0 && tick_ < total) iteration(j++, t, log);
    record_ticks(t, log);

    while (!calib_queue_.empty() && calib_queue_.front().first <= tick_) {
      if (calib_queue_.front().first == tick_) {
        const GaussianBelief& b = calib_queue_.front().second;
        for (int a = 0; a < 3; ++a) {
          const double sigma = std::sqrt(std::max(b.cov(a, a), 0.0));
          ++log.calib_checks;
          if (std::abs(charger_truth_(a) - b.mean(a)) <= 1.96 * sigma + 1e-12)
            ++log.calib_hits;
        }
      }
      calib_queue_.pop_front();
    }

    monitor(t, log);
    if (tick_ == total) break;
    step_world(t);
  }
  log_ = nullptr;
  return log;
}

}  // namespace

SimLog run(const Scenario& scenario) {
  Simulator sim(scenario);
  return sim.run();
}

// ---------------------------------------------------------------------------
// Metrics

MetricsReport metrics(const SimLog& log, const Scenario* scenario,
                      double station_radius) {
  MetricsReport rep;
  const double radius = scenario ? scenario->station_radius : station_radius;

  for (size_t k = 1; k < log.returns.size(); ++k)
    rep.min_inter_return_gap_s =
        std::min(rep.min_inter_return_gap_s,
                 log.returns[k].t - log.returns[k - 1].t);
  for (const ReturnEvent& r : log.returns) ++rep.per_robot_returns[r.robot_id];

  double cur_t = -1.0;
  int at_station = 0;
  auto flush = [&] {
    if (at_station >= 2) ++rep.co_occupancy_events;
    at_station = 0;
  };
  for (const TickRecord& tk : log.ticks) {
    rep.min_soc_margin =
        std::min(rep.min_soc_margin, tk.soc - (tk.e_min + tk.reserve));
    rep.min_soc_above_floor =
        std::min(rep.min_soc_above_floor, tk.soc - tk.e_min);
    if (tk.t != cur_t) {
      flush();
      cur_t = tk.t;
    }
    if (tk.dist_to_charger <= radius) ++at_station;
  }
  flush();

  rep.scheduler_seconds_total = log.scheduler_seconds_total;
  rep.scheduler_seconds_per_iteration =
      log.iterations.empty()
          ? 0.0
          : log.scheduler_seconds_total / static_cast<double>(log.iterations.size());
  rep.violations = static_cast<int>(log.violations.size());
  if (log.calib_checks > 0)
    rep.calibration_fraction =
        static_cast<double>(log.calib_hits) / static_cast<double>(log.calib_checks);

  if (scenario && scenario->planner.kind == PlannerSpec::Kind::Ergodic &&
      !log.ticks.empty()) {
    // Ergodic metric of the executed team paths against the target density.
    const CoverageDomain& dom = scenario->planner.domain;
    const DensitySpec& ds = scenario->planner.density;
    const SpectralDensity density =
        ds.kind == DensitySpec::Kind::Uniform
            ? SpectralDensity::uniform(dom)
            : SpectralDensity::gaussian_mixture(dom, ds.means, ds.covs,
                                                ds.weights);
    DiscreteTrajectory traj;
    traj.dt = scenario->horizons.dt;
    for (const TickRecord& tk : log.ticks) {
      Vec p(dom.dim());
      for (int a = 0; a < dom.dim(); ++a) p(a) = tk.pos(a);
      traj.states.push_back(p);
    }
    rep.ergodic_metric_executed = ergodic_metric(traj, density, dom);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Export / import

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json metrics_json(const MetricsReport& rep) {
  json m;
  m["min_inter_return_gap_s"] =
      std::isfinite(rep.min_inter_return_gap_s)
          ? json(rep.min_inter_return_gap_s)
          : json("inf");
  m["min_soc_margin"] = rep.min_soc_margin;
  m["min_soc_above_floor"] = rep.min_soc_above_floor;
  m["co_occupancy_events"] = rep.co_occupancy_events;
  json pr = json::object();
  for (const auto& [id, n] : rep.per_robot_returns) pr[std::to_string(id)] = n;
  m["per_robot_returns"] = pr;
  m["scheduler_seconds_total"] = rep.scheduler_seconds_total;
  m["scheduler_seconds_per_iteration"] = rep.scheduler_seconds_per_iteration;
  m["ergodic_metric_executed"] = rep.ergodic_metric_executed;
  m["calibration_fraction"] = rep.calibration_fraction;
  m["violations"] = rep.violations;
  return m;
}

}  // namespace

void export_log(const SimLog& log, const Scenario& scenario,
                const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + out_dir);

  // ticks.csv — doubles at full precision so the round trip is exact.
  {
    const std::string path = out_dir + "/ticks.csv";
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "t,robot_id,soc,status,dist_to_charger,x,y,z,reserve,e_min,"
         "belief_trace,charger_x,charger_y,charger_z\n";
    for (const TickRecord& tk : log.ticks) {
      f << fmt(tk.t) << ',' << tk.robot_id << ',' << fmt(tk.soc) << ','
        << tk.status << ',' << fmt(tk.dist_to_charger) << ',' << fmt(tk.pos.x())
        << ',' << fmt(tk.pos.y()) << ',' << fmt(tk.pos.z()) << ','
        << fmt(tk.reserve) << ',' << fmt(tk.e_min) << ','
        << fmt(tk.belief_trace) << ',' << fmt(tk.charger_pos.x()) << ','
        << fmt(tk.charger_pos.y()) << ',' << fmt(tk.charger_pos.z()) << '\n';
    }
    if (!f.good()) throw std::runtime_error("write failure on " + path);
  }

  // decisions.json
  {
    json d;
    d["station_radius"] = scenario.station_radius;
    d["duration"] = log.duration;
    d["calib_checks"] = log.calib_checks;
    d["calib_hits"] = log.calib_hits;
    d["violations"] = log.violations;
    json its = json::array();
    for (const IterationRecord& it : log.iterations) {
      json ji;
      ji["j"] = it.j;
      ji["t"] = it.t;
      ji["gap_violation"] = it.gap_violation;
      ji["scheduler_seconds"] = it.scheduler_seconds;
      json jr = json::array();
      for (const IterationRobotRecord& rr : it.robots) {
        jr.push_back({{"robot_id", rr.robot_id},
                      {"T_F", rr.T_F},
                      {"reserve", rr.reserve},
                      {"landing_budget", rr.landing_budget},
                      {"action", rr.action},
                      {"initiate_landing", rr.initiate_landing},
                      {"trigger", rr.trigger}});
      }
      ji["robots"] = jr;
      its.push_back(ji);
    }
    d["iterations"] = its;
    json rets = json::array();
    for (const ReturnEvent& r : log.returns)
      rets.push_back({{"t", r.t}, {"robot_id", r.robot_id}});
    d["returns"] = rets;
    const std::string path = out_dir + "/decisions.json";
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << d.dump(2) << '\n';
  }

  // metrics.json
  {
    const MetricsReport rep = metrics(log, &scenario);
    const std::string path = out_dir + "/metrics.json";
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << metrics_json(rep).dump(2) << '\n';
  }

  // plot.gp — SoC with floor, distance to station, XY paths.
  {
    const int n = static_cast<int>(scenario.robots.size());
    const std::string path = out_dir + "/plot.gp";
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "# gnuplot script; run from this directory: gnuplot plot.gp\n"
         "set datafile separator ','\n"
         "set terminal pngcairo size 1400,1000\n"
         "set output 'overview.png'\n"
         "set multiplot layout 3,1\n"
         "set key outside\n"
         "set xlabel 't [s]'\n"
         "set ylabel 'SoC [%]'\n"
         "N = " << n << "\n"
         "plot for [i=0:N-1] 'ticks.csv' skip 1 using 1:($2==i?$3:1/0) with lines "
         "title sprintf('robot %d', i), \\\n"
         "     'ticks.csv' skip 1 using 1:($2==0?$10+$9:1/0) with lines dt 2 lc rgb 'black' "
         "title 'e_{min}+e_{res}'\n"
         "set ylabel 'distance to station [m]'\n"
         "plot for [i=0:N-1] 'ticks.csv' skip 1 using 1:($2==i?$5:1/0) with lines "
         "title sprintf('robot %d', i)\n"
         "set xlabel 'x [m]'\nset ylabel 'y [m]'\nset size ratio -1\n"
         "plot for [i=0:N-1] 'ticks.csv' skip 1 using ($2==i?$6:1/0):7 with lines "
         "title sprintf('robot %d', i), \\\n"
         "     'ticks.csv' skip 1 using ($2==0?$12:1/0):13 with lines lc rgb 'black' "
         "title 'station'\n"
         "unset multiplot\n";
  }
}

std::vector<TickRecord> parse_ticks_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("empty CSV " + path);
  std::vector<TickRecord> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::array<double, 14> v{};
    const char* p = line.c_str();
    for (int i = 0; i < 14; ++i) {
      char* end = nullptr;
      v[static_cast<size_t>(i)] = std::strtod(p, &end);
      if (end == p) throw std::runtime_error("malformed CSV row in " + path);
      p = (*end == ',') ? end + 1 : end;
    }
    TickRecord tk;
    tk.t = v[0];
    tk.robot_id = static_cast<int>(v[1]);
    tk.soc = v[2];
    tk.status = static_cast<int>(v[3]);
    tk.dist_to_charger = v[4];
    tk.pos = Eigen::Vector3d(v[5], v[6], v[7]);
    tk.reserve = v[8];
    tk.e_min = v[9];
    tk.belief_trace = v[10];
    tk.charger_pos = Eigen::Vector3d(v[11], v[12], v[13]);
    out.push_back(tk);
  }
  return out;
}

MetricsReport metrics_from_dir(const std::string& log_dir) {
  SimLog log;
  log.ticks = parse_ticks_csv(log_dir + "/ticks.csv");

  std::ifstream f(log_dir + "/decisions.json");
  if (!f) throw std::runtime_error("cannot open " + log_dir + "/decisions.json");
  json d;
  f >> d;
  double radius = d.value("station_radius", 0.3);
  log.duration = d.value("duration", 0.0);
  log.calib_checks = d.value("calib_checks", 0l);
  log.calib_hits = d.value("calib_hits", 0l);
  if (d.contains("violations"))
    for (const auto& v : d["violations"]) log.violations.push_back(v.get<std::string>());
  if (d.contains("iterations"))
    for (const auto& ji : d["iterations"]) {
      IterationRecord it;
      it.j = ji.value("j", 0);
      it.t = ji.value("t", 0.0);
      it.gap_violation = ji.value("gap_violation", false);
      it.scheduler_seconds = ji.value("scheduler_seconds", 0.0);
      log.iterations.push_back(it);
      log.scheduler_seconds_total += it.scheduler_seconds;
    }
  if (d.contains("returns"))
    for (const auto& jr : d["returns"])
      log.returns.push_back({jr.value("t", 0.0), jr.value("robot_id", 0)});

  return metrics(log, nullptr, radius);
}

}  // namespace mesch
