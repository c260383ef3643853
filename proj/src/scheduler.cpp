#include "mesch/scheduler.hpp"

#include <algorithm>

namespace mesch {

double remaining_battery_time(const SystemState& chi,
                              const BatteryModel& battery) {
  if (chi.e <= battery.e_min) return 0.0;
  return (chi.e - battery.e_min) / battery.max_rate();
}

bool gap_flag(double T_F_k, int k, const GapParams& params) {
  if (k < 1) throw std::invalid_argument("gap_flag: k must be >= 1");
  return (T_F_k - params.T_L - params.T_C) > k * (params.T_ch + params.T_delta);
}

namespace {

std::vector<int> sorted_order(const std::vector<RobotSlot>& slots) {
  std::vector<int> order(slots.size());
  for (size_t i = 0; i < slots.size(); ++i) order[i] = static_cast<int>(i);
  // Tie-break on the unique id makes the order total, so plain sort is
  // deterministic here.
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (slots[a].T_F != slots[b].T_F) return slots[a].T_F < slots[b].T_F;
    return slots[a].id < slots[b].id;
  });
  return order;
}

}  // namespace

GwareResult gware(const std::vector<RobotSlot>& slots,
                  const GapParams& params) {
  params.validate();
  GwareResult result;
  const std::vector<int> order = sorted_order(slots);
  for (size_t k = 1; k < order.size(); ++k) {
    if (gap_flag(slots[order[k]].T_F, static_cast<int>(k), params)) continue;
    // Flag failed: the first robot returns, everyone else commits.
    result.violation = true;
    result.decisions.reserve(order.size());
    for (size_t j = 0; j < order.size(); ++j) {
      ScheduleDecision d;
      d.robot_id = slots[order[j]].id;
      if (j == 0) {
        d.action = ScheduleAction::KeepPrevious;
        d.initiate_landing = true;
        d.trigger = ScheduleTrigger::GapViolation;
      } else {
        d.action = ScheduleAction::CommitCandidate;
      }
      result.decisions.push_back(d);
    }
    std::sort(result.decisions.begin(), result.decisions.end(),
              [](const auto& a, const auto& b) { return a.robot_id < b.robot_id; });
    return result;
  }
  return result;
}

std::vector<ScheduleDecision> eware(const std::vector<RobotSlot>& slots) {
  std::vector<ScheduleDecision> decisions;
  decisions.reserve(slots.size());
  for (const auto& slot : slots) {
    ScheduleDecision d;
    d.robot_id = slot.id;
    const bool ok = slot.candidate && slot.candidate->valid &&
                    slot.candidate->min_soc() >= slot.e_min + slot.reserve;
    if (ok) {
      d.action = ScheduleAction::CommitCandidate;
    } else {
      d.action = ScheduleAction::KeepPrevious;
      d.initiate_landing = true;
      d.trigger = ScheduleTrigger::ReserveViolation;
    }
    decisions.push_back(d);
  }
  return decisions;
}

std::vector<ScheduleDecision> schedule(const std::vector<RobotSlot>& slots,
                                       const GapParams& params) {
  const GwareResult gap = gware(slots, params);
  if (gap.violation) return gap.decisions;
  return eware(slots);
}

}  // namespace mesch
