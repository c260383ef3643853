#include "mesch/trajgen.hpp"

#include <cmath>
#include <limits>

#include "mesch/integrate.hpp"

namespace mesch {

namespace {

constexpr double kTerminalWeight = 1e6;
constexpr double kPlanStateWeight = 1e-4;
constexpr double kTerminalResidual = 1e-3;  // m

int position_dim(const Model& model) {
  switch (model.kind) {
    case ModelKind::Quadrotor: return 3;
    case ModelKind::DoubleIntegrator: return model.axes;
    case ModelKind::Unicycle: return 2;
  }
  return 0;
}

/// Affine tracking problem in reduced deviation coordinates:
/// cost sum (z - dref)'Q(z - dref) + (v - dvref)'R(v - dvref).
struct TrackingPolicy {
  AffineLqProblem prob;
  AffinePolicy pol;
};

TrackingPolicy build_tracking(const RobotModel& rm,
                              const std::vector<Vec>& ref_states,
                              const std::vector<Vec>& ref_controls,
                              const TrackingWeights& weights, double dt,
                              const Mat* Qf_override = nullptr) {
  weights.validate();
  const int N = static_cast<int>(ref_states.size());
  if (N < 2) throw std::invalid_argument("tracking reference needs >= 2 states");
  Mat Ad, Bd;
  rm.discrete(dt, Ad, Bd);

  TrackingPolicy tp;
  tp.prob.A.assign(N - 1, Ad);
  tp.prob.B.assign(N - 1, Bd);
  tp.prob.Q = weights.Q;
  tp.prob.R = weights.R;
  tp.prob.Qf = Qf_override ? *Qf_override : weights.terminal();
  tp.prob.a.resize(N);
  tp.prob.b.resize(N - 1);
  for (int k = 0; k < N; ++k) {
    const Vec dref = rm.to_reduced(ref_states[k]);
    tp.prob.a[k] = (k == N - 1) ? Vec(-2.0 * tp.prob.Qf * dref)
                                : Vec(-2.0 * weights.Q * dref);
  }
  for (int k = 0; k < N - 1; ++k) {
    if (!ref_controls.empty()) {
      const Vec duref = ref_controls[k] - rm.u_bar;
      tp.prob.b[k] = -2.0 * weights.R * duref;
    } else {
      tp.prob.b[k] = Vec::Zero(rm.m());
    }
  }
  tp.pol = solve_affine_lq(tp.prob);
  return tp;
}

Vec policy_control(const RobotModel& rm, const TrackingPolicy& tp, int k,
                   const Vec& x_full) {
  const Vec z = rm.to_reduced(x_full);
  return rm.u_bar - tp.pol.K[k] * z - tp.pol.k[k];
}

}  // namespace

RobotModel RobotModel::make(const Model& model) {
  RobotModel rm;
  rm.model = model;
  switch (model.kind) {
    case ModelKind::Quadrotor: {
      model.quad.validate();
      Vec x_bar = Vec::Zero(13);
      x_bar(3) = 1.0;  // identity quaternion
      const Vec u_bar = model.quad.hover_control();
      const LinearizedModel full = linearize(model, x_bar, u_bar);
      const LinearizedModel red =
          reduce_attitude(full, Eigen::Vector4d(1, 0, 0, 0));
      rm.x_bar = x_bar;
      rm.u_bar = u_bar;
      rm.E = reduction_map(Eigen::Vector4d(1, 0, 0, 0));
      rm.A = red.A;
      rm.B = red.B;
      return rm;
    }
    default: {
      const int n = model.state_dim();
      rm.x_bar = Vec::Zero(n);
      rm.u_bar = Vec::Zero(model.control_dim());
      const LinearizedModel lin = linearize(model, rm.x_bar, rm.u_bar);
      rm.E = Mat::Identity(n, n);
      rm.A = lin.A;
      rm.B = lin.B;
      return rm;
    }
  }
}

Vec RobotModel::lift(const Vec& dx_red) const {
  Vec x = x_bar + E * dx_red;
  if (model.kind == ModelKind::Quadrotor) x.segment<4>(3).normalize();
  return x;
}

void RobotModel::discrete(double dt, Mat& Ad, Mat& Bd) const {
  if (model.kind == ModelKind::DoubleIntegrator) {
    LinearizedModel lin;
    lin.A = A;
    lin.B = B;
    discretize(model, lin, dt, Ad, Bd);
    return;
  }
  Ad = Mat::Identity(n_red(), n_red()) + dt * A;
  Bd = dt * B;
}

Vec RobotModel::rest_state(const Eigen::Vector3d& position) const {
  switch (model.kind) {
    case ModelKind::Quadrotor: {
      Vec x = Vec::Zero(13);
      x.head<3>() = position;
      x(3) = 1.0;
      return x;
    }
    case ModelKind::DoubleIntegrator: {
      Vec x = Vec::Zero(2 * model.axes);
      x.head(model.axes) = position.head(model.axes);
      return x;
    }
    case ModelKind::Unicycle: {
      Vec x = Vec::Zero(3);
      x.head<2>() = position.head<2>();
      return x;
    }
  }
  throw std::logic_error("unreachable");
}

double CandidateTrajectory::min_soc() const {
  double m = std::numeric_limits<double>::infinity();
  for (double e : soc) m = std::min(m, e);
  return m;
}

PlanSegment lq_track(const RobotModel& rm, const Vec& x_start,
                     const std::vector<Vec>& ref_states,
                     const std::vector<Vec>& ref_controls,
                     const TrackingWeights& weights, double dt) {
  const TrackingPolicy tp =
      build_tracking(rm, ref_states, ref_controls, weights, dt);
  const int N = static_cast<int>(ref_states.size());
  PlanSegment out;
  out.dt = dt;
  out.states.resize(N);
  out.controls.resize(N - 1);
  out.states[0] = x_start;
  for (int k = 0; k < N - 1; ++k) {
    out.controls[k] = policy_control(rm, tp, k, out.states[k]);
    out.states[k + 1] = model_step(rm.model, out.states[k], out.controls[k], dt);
  }
  return out;
}

PlanSegment b2b_trajectory(const RobotModel& rm, const Vec& x_start,
                           const RendezvousPoint& x_rp,
                           const TrackingWeights& weights, double T_B,
                           double dt) {
  const int Nb = static_cast<int>(std::lround(T_B / dt)) + 1;
  const Vec target = rm.rest_state(x_rp.x_rp.head<3>());
  const std::vector<Vec> refs(Nb, target);
  // Near-minimum-energy transfer: the terminal weight pins the endpoint while
  // a tiny running weight leaves the plan smooth over the whole horizon, so
  // the nonlinear closed loop can follow it without large-angle transients.
  TrackingWeights plan_w;
  plan_w.Q = kPlanStateWeight * Mat::Identity(rm.n_red(), rm.n_red());
  plan_w.R = weights.R;
  const Mat Qf = kTerminalWeight * Mat::Identity(rm.n_red(), rm.n_red());
  const TrackingPolicy tp = build_tracking(rm, refs, {}, plan_w, dt, &Qf);

  // Linear-model plan in reduced coordinates, lifted back to full state.
  PlanSegment out;
  out.dt = dt;
  out.states.resize(Nb);
  out.controls.resize(Nb - 1);
  Mat Ad, Bd;
  rm.discrete(dt, Ad, Bd);
  Vec z = rm.to_reduced(x_start);
  out.states[0] = x_start;
  for (int k = 0; k < Nb - 1; ++k) {
    const Vec du = -tp.pol.K[k] * z - tp.pol.k[k];
    out.controls[k] = rm.u_bar + du;
    z = Ad * z + Bd * du;
    out.states[k + 1] = rm.lift(z);
  }
  const int pd = position_dim(rm.model);
  const double resid =
      (out.states.back().head(pd) - target.head(pd)).norm();
  if (resid > kTerminalResidual)
    throw InfeasibleTrajectory("b2b terminal residual " + std::to_string(resid) +
                               " m exceeds tolerance");
  return out;
}

CandidateTrajectory candidate_trajectory(const RobotModel& rm,
                                         const SystemState& chi_j,
                                         const PlanSegment& nominal,
                                         const RendezvousPoint& x_rp,
                                         const TrackingWeights& weights,
                                         const BatteryModel& battery,
                                         double T_N, double T_B, double dt,
                                         double t_j) {
  const int Nn = static_cast<int>(std::lround(T_N / dt));
  const int Nb = static_cast<int>(std::lround(T_B / dt));
  if (nominal.horizon() < Nn + 1)
    throw std::invalid_argument("candidate_trajectory: nominal segment too short");

  CandidateTrajectory cand;
  cand.dt = dt;
  cand.t0 = t_j;
  cand.seg_boundary = Nn;
  try {
    const std::vector<Vec> nom_refs(nominal.states.begin(),
                                    nominal.states.begin() + Nn + 1);
    const std::vector<Vec> nom_ctrls =
        nominal.controls.empty()
            ? std::vector<Vec>{}
            : std::vector<Vec>(nominal.controls.begin(),
                               nominal.controls.begin() + Nn);
    const PlanSegment b2b =
        b2b_trajectory(rm, nom_refs.back(), x_rp, weights, T_B, dt);
    cand.x_rp = b2b.states.back();

    const TrackingPolicy tp_nom =
        build_tracking(rm, nom_refs, nom_ctrls, weights, dt);
    const TrackingPolicy tp_b2b =
        build_tracking(rm, b2b.states, b2b.controls, weights, dt);

    const int N = Nn + Nb;
    cand.states.resize(N + 1);
    cand.controls.resize(N);
    cand.soc.resize(N + 1);
    cand.states[0] = chi_j.x;
    cand.soc[0] = chi_j.e;
    for (int k = 0; k < N; ++k) {
      const Vec u = k < Nn ? policy_control(rm, tp_nom, k, cand.states[k])
                           : policy_control(rm, tp_b2b, k - Nn, cand.states[k]);
      cand.controls[k] = u;
      cand.states[k + 1] =
          model_step(rm.model, cand.states[k], u, dt, t_j + k * dt);
      cand.soc[k + 1] = std::max(cand.soc[k] + battery.deriv(u) * dt, 0.0);
    }
  } catch (const InfeasibleTrajectory&) {
    cand.valid = false;
  } catch (const NumericalError&) {
    cand.valid = false;
  } catch (const IntegrationError&) {
    cand.valid = false;
  }
  return cand;
}

LandingTrajectory landing_trajectory(const RobotModel& rm,
                                     const SystemState& chi_at_tjC,
                                     const Vec& target_charger_state,
                                     const TrackingWeights& weights,
                                     const BatteryModel& battery, double T_L,
                                     double dt) {
  if (T_L <= 0.0)
    throw std::invalid_argument("landing_trajectory: T_L must be positive");
  LandingTrajectory out;
  // Same terminally-weighted machinery as b2b, descending onto the target.
  {
    const int Nl = static_cast<int>(std::lround(T_L / dt)) + 1;
    const Vec goal = rm.rest_state(target_charger_state.head<3>());
    const std::vector<Vec> refs(Nl, goal);
    TrackingWeights plan_w;
    plan_w.Q = kPlanStateWeight * Mat::Identity(rm.n_red(), rm.n_red());
    plan_w.R = weights.R;
    const Mat Qf = kTerminalWeight * Mat::Identity(rm.n_red(), rm.n_red());
    const TrackingPolicy tp = build_tracking(rm, refs, {}, plan_w, dt, &Qf);
    out.plan.dt = dt;
    out.plan.states.resize(Nl);
    out.plan.controls.resize(Nl - 1);
    out.soc.resize(Nl);
    Mat Ad, Bd;
    rm.discrete(dt, Ad, Bd);
    Vec z = rm.to_reduced(chi_at_tjC.x);
    out.plan.states[0] = chi_at_tjC.x;
    out.soc[0] = chi_at_tjC.e;
    for (int k = 0; k < Nl - 1; ++k) {
      const Vec du = -tp.pol.K[k] * z - tp.pol.k[k];
      out.plan.controls[k] = rm.u_bar + du;
      z = Ad * z + Bd * du;
      out.plan.states[k + 1] = rm.lift(z);
      out.soc[k + 1] =
          std::max(out.soc[k] + battery.deriv(out.plan.controls[k]) * dt, 0.0);
    }
    const int pd = position_dim(rm.model);
    const double resid = (out.plan.states.back().head(pd) - goal.head(pd)).norm();
    if (resid > kTerminalResidual)
      throw InfeasibleTrajectory("landing terminal residual " +
                                 std::to_string(resid) + " m exceeds tolerance");
  }
  return out;
}

ReserveEnergy reserve_energy(const LandingTrajectory& worst,
                             const LandingTrajectory& mean) {
  ReserveEnergy res;
  res.e_res = std::max(0.0, worst.consumed() - mean.consumed());
  res.mean_landing_cost = mean.consumed();
  res.worst_target = worst.plan.states.back();
  return res;
}

ReserveEnergy compute_reserve(const RobotModel& rm,
                              const SystemState& chi_at_tjC,
                              const Vec& charger_mean, const Vec& charger_worst,
                              const TrackingWeights& weights,
                              const BatteryModel& battery, double T_L,
                              double dt, const ReserveConfig& cfg,
                              int iteration) {
  const LandingTrajectory mean =
      landing_trajectory(rm, chi_at_tjC, charger_mean, weights, battery, T_L, dt);
  double T_L_worst = T_L;
  if (cfg.mode == ReserveConfig::Mode::DurationExtended &&
      std::holds_alternative<ConstantRate>(battery.variant)) {
    const double extra =
        (charger_worst.head<3>() - charger_mean.head<3>()).norm();
    T_L_worst += extra / cfg.descent_speed;
    // Snap to the sample grid so horizons stay integer step counts.
    T_L_worst = std::ceil(T_L_worst / dt - 1e-9) * dt;
  }
  const LandingTrajectory worst = landing_trajectory(
      rm, chi_at_tjC, charger_worst, weights, battery, T_L_worst, dt);
  ReserveEnergy res = reserve_energy(worst, mean);
  res.computed_at = iteration;
  return res;
}

}  // namespace mesch
