#pragma once

#include <optional>
#include <vector>

#include "mesch/estimation.hpp"
#include "mesch/linearize.hpp"
#include "mesch/lqr.hpp"
#include "mesch/models.hpp"

namespace mesch {

struct InfeasibleTrajectory : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrackingWeights {
  Mat Q;
  Mat R;
  Mat Qf;  // defaults to Q when empty

  const Mat& terminal() const { return Qf.size() ? Qf : Q; }
  void validate() const {
    if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-10 ||
        (R - R.transpose()).cwiseAbs().maxCoeff() > 1e-10)
      throw std::invalid_argument("tracking weights must be symmetric");
    Eigen::LDLT<Mat> r(R);
    if (r.info() != Eigen::Success || !r.isPositive() ||
        R.diagonal().minCoeff() <= 0.0)
      throw std::invalid_argument("R must be positive definite");
  }
};

/// Robot model prepared for LQ synthesis: equilibrium, reduction map, and
/// the reduced continuous linearization. Quadrotors reduce to the 12-state
/// error system about hover; other models keep their full state.
struct RobotModel {
  Model model;
  Vec x_bar, u_bar;
  Mat E;     // n_full x n_red lift, E'E = I
  Mat A, B;  // continuous reduced Jacobians at the equilibrium

  int n_full() const { return model.state_dim(); }
  int n_red() const { return static_cast<int>(A.rows()); }
  int m() const { return model.control_dim(); }

  static RobotModel make(const Model& model);

  Vec to_reduced(const Vec& x_full) const {
    return E.transpose() * (x_full - x_bar);
  }
  Vec lift(const Vec& dx_red) const;

  /// Discrete (Ad, Bd): exact ZOH for the double integrator, Euler otherwise.
  void discrete(double dt, Mat& Ad, Mat& Bd) const;

  /// Full-dimension state with the given position, at rest (identity
  /// attitude and hover posture for quadrotors).
  Vec rest_state(const Eigen::Vector3d& position) const;
};

/// Time-stamped sampled trajectory in full state coordinates.
struct PlanSegment {
  std::vector<Vec> states;
  std::vector<Vec> controls;
  double dt = 0.0;
  double t0 = 0.0;

  int horizon() const { return static_cast<int>(states.size()); }
  double t_end() const { return t0 + (horizon() - 1) * dt; }
};

/// Candidate trajectory: closed-loop rollout tracking the nominal segment
/// followed by the b2b segment, with SoC integrated alongside.
struct CandidateTrajectory {
  std::vector<Vec> states;
  std::vector<Vec> controls;
  std::vector<double> soc;
  double dt = 0.0;
  double t0 = 0.0;
  int seg_boundary = 0;  // first index of the b2b portion
  Vec x_rp;              // terminal rendezvous state target
  bool valid = true;

  int horizon() const { return static_cast<int>(states.size()); }
  double t_end() const { return t0 + (horizon() - 1) * dt; }
  double min_soc() const;
};

struct ReserveEnergy {
  double e_res = 0.0;            // nonnegative worst-over-mean excess, SoC %
  double mean_landing_cost = 0.0;  // SoC consumed by the mean landing
  Vec worst_target;
  int computed_at = 0;  // meSch iteration index
};

struct ReserveConfig {
  enum class Mode { DurationExtended, ControlEnergy };
  Mode mode = Mode::DurationExtended;
  double descent_speed = 0.5;  // m/s, duration-extension conversion
};

/// Finite-horizon time-varying LQ tracking of a full-state reference on the
/// reduced linear model, rolled through the nonlinear dynamics with RK4.
/// ref_controls (optional) supplies reference inputs; otherwise the
/// equilibrium input is the reference.
PlanSegment lq_track(const RobotModel& rm, const Vec& x_start,
                     const std::vector<Vec>& ref_states,
                     const std::vector<Vec>& ref_controls,
                     const TrackingWeights& weights, double dt);

/// Terminally-weighted LQ regulation from x_start to the rendezvous state.
/// Returns the linear-model plan; throws InfeasibleTrajectory when the
/// terminal position residual exceeds 1e-3 m.
PlanSegment b2b_trajectory(const RobotModel& rm, const Vec& x_start,
                           const RendezvousPoint& x_rp,
                           const TrackingWeights& weights, double T_B,
                           double dt);

/// Closed-loop candidate over [t_j, t_j + T_N + T_B]: track the nominal
/// reference for T_N, then the b2b plan, integrating SoC along the way.
CandidateTrajectory candidate_trajectory(const RobotModel& rm,
                                         const SystemState& chi_j,
                                         const PlanSegment& nominal,
                                         const RendezvousPoint& x_rp,
                                         const TrackingWeights& weights,
                                         const BatteryModel& battery,
                                         double T_N, double T_B, double dt,
                                         double t_j);

/// Worst-case landing: terminally-weighted LQ descent from the system state
/// at t_{j,C} to the target charger state, SoC co-integrated.
struct LandingTrajectory {
  PlanSegment plan;
  std::vector<double> soc;
  double consumed() const { return soc.empty() ? 0.0 : soc.front() - soc.back(); }
};

LandingTrajectory landing_trajectory(const RobotModel& rm,
                                     const SystemState& chi_at_tjC,
                                     const Vec& target_charger_state,
                                     const TrackingWeights& weights,
                                     const BatteryModel& battery, double T_L,
                                     double dt);

/// e_res = max(0, consumed(worst) - consumed(mean)).
ReserveEnergy reserve_energy(const LandingTrajectory& worst,
                             const LandingTrajectory& mean);

/// Reserve for one robot at one iteration: builds the mean and worst-case
/// landings (duration-extended for constant-rate batteries when configured)
/// and differences their consumption.
ReserveEnergy compute_reserve(const RobotModel& rm,
                              const SystemState& chi_at_tjC,
                              const Vec& charger_mean, const Vec& charger_worst,
                              const TrackingWeights& weights,
                              const BatteryModel& battery, double T_L,
                              double dt, const ReserveConfig& cfg,
                              int iteration);

}  // namespace mesch
