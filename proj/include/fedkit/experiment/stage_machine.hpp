#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedkit/experiment/types.hpp"

namespace fedkit::experiment {

/// Latest observed numeric value per canonical topic.
using Observations = std::map<std::string, double, std::less<>>;

/// Runtime stage machine. Owned by one runner; advanced at macro-step
/// boundaries with non-decreasing `now`.
class StageMachine {
 public:
  struct StepResult {
    std::vector<Command> actions;
    bool transitioned{false};
  };

  /// `warmup`: before this time a guard whose topic is not yet observed is
  /// simply false instead of an UnknownTopic error.
  StageMachine(std::vector<Stage> stages, const std::string& initial, SimTime warmup = SimTime{0})
      : stages_(std::move(stages)), warmup_(warmup) {
    current_ = index_of(initial);
    if (!current_) fail(ErrorCode::InvalidArgument, "initial stage '" + initial + "' not declared");
  }

  static StageMachine for_experiment(const ExperimentDescription& exp) {
    return StageMachine(exp.stages, exp.initial_stage, exp.macro_step);
  }

  const std::string& current() const { return stages_[*current_].id; }
  SimTime entered_at() const { return entered_at_; }

  StepResult step(const Observations& obs, SimTime now) {
    if (last_now_ && now < *last_now_) fail(ErrorCode::InvalidArgument, "stage_step: time went backwards");
    last_now_ = now;

    StepResult out;
    if (!started_) {
      started_ = true;
      entered_at_ = now;
      hold_since_.assign(stages_[*current_].transitions.size(), std::nullopt);
      out.actions = stages_[*current_].entry_actions;
    }

    const Stage& stage = stages_[*current_];
    std::optional<std::size_t> fired;
    for (std::size_t i = 0; i < stage.transitions.size(); ++i) {
      // Hold counters of every guard are updated even after one fires so
      // that evaluation does not depend on document order side effects.
      if (evaluate(stage.transitions[i].guard, i, obs, now) && !fired) fired = i;
    }
    if (fired) {
      const auto target = index_of(stage.transitions[*fired].target);
      if (!target) fail(ErrorCode::InvalidArgument, "transition to undeclared stage '" + stage.transitions[*fired].target + "'");
      current_ = target;
      entered_at_ = now;
      hold_since_.assign(stages_[*current_].transitions.size(), std::nullopt);
      const auto& entry = stages_[*current_].entry_actions;
      out.actions.insert(out.actions.end(), entry.begin(), entry.end());
      out.transitioned = true;
    }
    return out;
  }

 private:
  std::optional<std::size_t> index_of(const std::string& id) const {
    for (std::size_t i = 0; i < stages_.size(); ++i)
      if (stages_[i].id == id) return i;
    return std::nullopt;
  }

  bool evaluate(const Guard& g, std::size_t idx, const Observations& obs, SimTime now) {
    if (const auto* e = std::get_if<ElapsedGuard>(&g)) return now - entered_at_ >= e->at_least;
    const auto& tg = std::get<ThresholdGuard>(g);
    auto it = obs.find(tg.topic);
    if (it == obs.end()) {
      if (now >= warmup_) fail(ErrorCode::UnknownTopic, "guard topic '" + tg.topic + "' not observed");
      hold_since_[idx].reset();
      return false;
    }
    if (!compare(it->second, tg.cmp, tg.threshold)) {
      hold_since_[idx].reset();
      return false;
    }
    if (!hold_since_[idx]) hold_since_[idx] = now;
    return now - *hold_since_[idx] >= tg.hold;
  }

  std::vector<Stage> stages_;
  SimTime warmup_;
  std::optional<std::size_t> current_;
  SimTime entered_at_{0};
  std::vector<std::optional<SimTime>> hold_since_;
  std::optional<SimTime> last_now_;
  bool started_{false};
};

}  // namespace fedkit::experiment
