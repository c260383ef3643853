#pragma once

#include <map>
#include <string>
#include <vector>

#include "mesch/ergodic.hpp"
#include "mesch/estimation.hpp"
#include "mesch/scheduler.hpp"
#include "mesch/trajgen.hpp"

namespace mesch {

struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MonitorViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RobotSpec {
  Model model;
  BatteryModel battery;
  Eigen::Vector3d initial_position = Eigen::Vector3d::Zero();
  double initial_soc = 100.0;
  // Tracking weights as diagonals over the reduced state / control dims;
  // empty means model defaults.
  Vec q_diag, r_diag;
};

struct ChargerSpec {
  ChargerModel model;
  Vec initial_state;     // z-padded, z at index 2
  Vec nominal_control;   // constant nominal input (empty for static)
  Mat W, V;              // process / measurement noise covariances
  bool position_only_obs = false;
  double d = 1.0;        // rendezvous altitude offset, m
  Mat initial_cov;
};

struct Horizons {
  double T_N = 2.0, T_B = 10.0, T_C = 12.0, T_R = 18.0, T_L = 6.0;
  double T_E = 2.0, T_ch = 0.0, T_delta = 15.0;
  double dt = 0.05;  // tracking sample time (20 Hz)

  void validate() const;
  GapParams gap_params() const { return {T_ch, T_delta, T_L, T_C}; }
};

struct DensitySpec {
  enum class Kind { Uniform, GaussianMixture } kind = Kind::Uniform;
  std::vector<Vec> means;
  std::vector<Mat> covs;
  std::vector<double> weights;
};

struct PlannerSpec {
  enum class Kind { Ergodic, Circle, Waypoint } kind = Kind::Ergodic;
  // ergodic
  CoverageDomain domain{{10.0, 10.0}};
  DensitySpec density;
  PtoParams pto;
  // circle
  double circle_radius = 3.0;
  double circle_period = 60.0;
  Eigen::Vector2d circle_center = Eigen::Vector2d(5.0, 5.0);
  // waypoint
  std::vector<Eigen::Vector2d> waypoints;
  double waypoint_speed = 0.5;

  double altitude = 2.0;  // flight altitude of the nominal reference, m
};

enum class Ablation { None, Gware, Eware };

struct Scenario {
  std::vector<RobotSpec> robots;
  ChargerSpec charger;
  Horizons horizons;
  PlannerSpec planner;
  ReserveConfig reserve;
  double station_radius = 0.3;
  uint64_t seed = 0;
  double duration = 600.0;
  bool deterministic_charger = false;
  Ablation ablate = Ablation::None;
  bool allow_violations = false;
  int threads = 1;

  void validate() const;
};

struct TickRecord {
  double t = 0.0;
  int robot_id = 0;
  double soc = 0.0;
  int status = 0;  // 0 active, 1 returning, 2 charging
  double dist_to_charger = 0.0;
  Eigen::Vector3d pos = Eigen::Vector3d::Zero();
  double reserve = 0.0;  // logged e_res of the latest iteration
  double e_min = 0.0;
  double belief_trace = 0.0;
  Eigen::Vector3d charger_pos = Eigen::Vector3d::Zero();
};

struct IterationRobotRecord {
  int robot_id = 0;
  double T_F = 0.0;
  double reserve = 0.0;       // e_res
  double landing_budget = 0.0;  // mean-landing consumption stacked in eware
  int action = 0;             // 0 commit, 1 keep-previous
  bool initiate_landing = false;
  int trigger = 0;  // 0 none, 1 gap, 2 reserve
};

struct IterationRecord {
  int j = 0;
  double t = 0.0;
  bool gap_violation = false;
  std::vector<IterationRobotRecord> robots;
  double scheduler_seconds = 0.0;
};

struct ReturnEvent {
  double t = 0.0;
  int robot_id = 0;
};

struct SimLog {
  std::vector<TickRecord> ticks;
  std::vector<IterationRecord> iterations;
  std::vector<ReturnEvent> returns;
  std::vector<std::string> violations;
  double duration = 0.0;
  double scheduler_seconds_total = 0.0;
  // Assumption-2 calibration: per-axis 95%-interval containment of the true
  // charger state at the predicted rendezvous times.
  long calib_checks = 0;
  long calib_hits = 0;
};

struct MetricsReport {
  double min_inter_return_gap_s = std::numeric_limits<double>::infinity();
  double min_soc_margin = std::numeric_limits<double>::infinity();  // min over ticks of soc - (e_min + e_res)
  double min_soc_above_floor = std::numeric_limits<double>::infinity();  // min over ticks of soc - e_min
  long co_occupancy_events = 0;  // ticks with >= 2 robots at the station
  std::map<int, int> per_robot_returns;
  double scheduler_seconds_total = 0.0;
  double scheduler_seconds_per_iteration = 0.0;
  double ergodic_metric_executed = -1.0;  // -1 when no ergodic planner
  double calibration_fraction = -1.0;
  int violations = 0;
};

Scenario load_scenario(const std::string& path);

/// Closed-loop meSch simulation; deterministic given (scenario, seed).
SimLog run(const Scenario& scenario);

MetricsReport metrics(const SimLog& log, const Scenario* scenario = nullptr,
                      double station_radius = 0.3);

/// Writes ticks.csv, decisions.json, metrics.json, and plot.gp.
void export_log(const SimLog& log, const Scenario& scenario,
                const std::string& out_dir);

/// Parse-back of an exported ticks.csv (round-trip exact).
std::vector<TickRecord> parse_ticks_csv(const std::string& path);

/// Recompute a metrics report from an exported log directory.
MetricsReport metrics_from_dir(const std::string& log_dir);

}  // namespace mesch
