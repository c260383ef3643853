#pragma once

#include <memory>
#include <vector>

#include "mesch/trajgen.hpp"

namespace mesch {

enum class RobotStatus { Active, Returning, Charging };

struct GapParams {
  double T_ch = 0.0;     // charging duration, s
  double T_delta = 15.0; // buffer, s
  double T_L = 6.0;
  double T_C = 12.0;

  void validate() const {
    if (T_ch < 0.0 || T_delta < 0.0 || T_L < 0.0 || T_C < 0.0)
      throw std::invalid_argument("gap parameters must be nonnegative");
  }
};

/// Per-robot scheduling inputs for one meSch iteration.
struct RobotSlot {
  int id = 0;
  SystemState state;
  std::shared_ptr<const CandidateTrajectory> committed;  // previous iteration
  std::shared_ptr<const CandidateTrajectory> candidate;  // fresh this iteration
  double reserve = 0.0;  // SoC margin stacked above e_min for eware
  double e_min = 0.0;    // hard SoC floor of this robot's battery
  double T_F = 0.0;      // remaining battery time, s
  RobotStatus status = RobotStatus::Active;
};

enum class ScheduleAction { CommitCandidate, KeepPrevious };
enum class ScheduleTrigger { None, GapViolation, ReserveViolation };

struct ScheduleDecision {
  int robot_id = 0;
  ScheduleAction action = ScheduleAction::CommitCandidate;
  bool initiate_landing = false;
  ScheduleTrigger trigger = ScheduleTrigger::None;
};

/// Time until SoC reaches e_min under the worst-case discharge rate.
/// Returns 0 when already at or below e_min.
double remaining_battery_time(const SystemState& chi, const BatteryModel& battery);

/// Gap flag for the k-th robot in the sorted list (k >= 1), strict inequality:
/// (T_F - T_L - T_C) > k (T_ch + T_delta).
bool gap_flag(double T_F_k, int k, const GapParams& params);

struct GwareResult {
  bool violation = false;
  std::vector<ScheduleDecision> decisions;
};

/// Gap-aware sub-routine. Sorts by T_F (ties by id), checks gap flags against
/// the first robot; on the first failed flag the first robot keeps its
/// previous committed trajectory and lands, all others commit candidates.
GwareResult gware(const std::vector<RobotSlot>& slots, const GapParams& params);

/// Energy-aware sub-routine. Per robot: commit the candidate iff its SoC stays
/// >= e_min + reserve throughout; otherwise keep previous and land.
std::vector<ScheduleDecision> eware(const std::vector<RobotSlot>& slots);

/// One meSch scheduling step: gware first; on violation its decisions are
/// final, otherwise eware decides.
std::vector<ScheduleDecision> schedule(const std::vector<RobotSlot>& slots,
                                       const GapParams& params);

}  // namespace mesch
