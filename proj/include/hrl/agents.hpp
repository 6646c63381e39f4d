#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "hrl/approx.hpp"
#include "hrl/discovery.hpp"
#include "hrl/env.hpp"
#include "hrl/grid.hpp"
#include "hrl/memory.hpp"
#include "hrl/rng.hpp"

namespace hrl {

// --- Exploration -----------------------------------------------------------------

/// Linear decay from start to end over decay_steps, constant afterwards.
class EpsilonSchedule {
 public:
  EpsilonSchedule() = default;
  EpsilonSchedule(double start, double end, long decay_steps)
      : start_(start), end_(end), decay_steps_(decay_steps) {
    if (start < 0.0 || start > 1.0 || end < 0.0 || end > 1.0)
      throw std::invalid_argument("EpsilonSchedule: values must lie in [0,1]");
    if (end > start)
      throw std::invalid_argument("EpsilonSchedule: end must not exceed start");
    if (decay_steps < 0)
      throw std::invalid_argument("EpsilonSchedule: decay_steps must be >= 0");
  }

  double value() const { return value_at(step_); }
  double value_at(long step) const {
    if (decay_steps_ <= 0 || step >= decay_steps_) return end_;
    const double frac = static_cast<double>(step) / static_cast<double>(decay_steps_);
    return start_ + (end_ - start_) * frac;
  }
  void advance() { ++step_; }
  long step() const { return step_; }
  double start() const { return start_; }
  double end() const { return end_; }
  long decay_steps() const { return decay_steps_; }

 private:
  double start_ = 0.2;
  double end_ = 0.2;
  long decay_steps_ = 0;
  long step_ = 0;
};

/// Argmax with probability 1-eps (ties to the lowest index), uniform over all
/// indices otherwise. eps = 0 consumes no randomness.
inline int epsilon_greedy(std::span<const double> values, double epsilon, Rng& rng) {
  if (values.empty()) throw std::invalid_argument("epsilon_greedy: empty value list");
  if (epsilon < 0.0 || epsilon > 1.0)
    throw std::invalid_argument("epsilon_greedy: epsilon outside [0,1]");
  if (epsilon > 0.0 && uniform_unit(rng) < epsilon)
    return static_cast<int>(uniform_index(rng, values.size()));
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = static_cast<int>(i);
  return best;
}

// --- Intrinsic critic -------------------------------------------------------------

/// +1 on subgoal attainment, otherwise min(r, -1): regular steps cost -1 and
/// penalties pass through.
inline double intrinsic_reward(bool attained, double external_reward) {
  return attained ? 1.0 : std::min(external_reward, -1.0);
}

// --- Goal tables -------------------------------------------------------------------

/// Prepared goal entries (position + gate rows) for the controller network.
/// Used both by intrinsic pretraining (arbitrary cells) and by the unified
/// loop (the discovered subgoal set). Entries are indexed by the goal ids
/// stored in IntrinsicTransition.
class GoalTable {
 public:
  explicit GoalTable(const StateGoalNet* net) : net_(net) {}

  int add(Point2 p) {
    points_.push_back(p);
    gates_.push_back(net_->gate_for(p));
    return static_cast<int>(points_.size()) - 1;
  }

  void set(int idx, Point2 p) {
    points_.at(idx) = p;
    gates_.at(idx) = net_->gate_for(p);
  }

  /// Mirrors a subgoal set (same indices).
  void sync(const SubgoalSet& gset) {
    for (int i = 0; i < gset.size(); ++i) {
      if (i < static_cast<int>(points_.size()))
        set(i, gset[i].point);
      else
        add(gset[i].point);
    }
  }

  int size() const { return static_cast<int>(points_.size()); }
  Point2 point(int idx) const { return points_.at(idx); }
  const GoalGate& gate(int idx) const { return gates_.at(idx); }

 private:
  const StateGoalNet* net_;
  std::vector<Point2> points_;
  std::vector<GoalGate> gates_;
};

/// Per-cell sparse state codes, filled lazily. Valid for one (coder, grid)
/// pair; the trainer owns one per run.
class StateCodeCache {
 public:
  StateCodeCache(const StateGoalNet* net, int width, int height)
      : net_(net), width_(width), height_(height),
        codes_(static_cast<std::size_t>(width) * height), filled_(codes_.size(), 0) {}

  const SparseCode& at(GridPos p) {
    const std::size_t i = static_cast<std::size_t>(p.y) * width_ + p.x;
    if (!filled_[i]) {
      codes_[i] = net_->encode_state(normalized(p, width_, height_));
      filled_[i] = 1;
    }
    return codes_[i];
  }

 private:
  const StateGoalNet* net_;
  int width_;
  int height_;
  std::vector<SparseCode> codes_;
  std::vector<std::uint8_t> filled_;
};

// --- Agents -----------------------------------------------------------------------

struct ControllerAgent {
  StateGoalNet net;
  EpsilonSchedule eps1;
  double alpha1 = 0.001;
  double gamma = 0.99;
};

/// Q-learning step over a minibatch of controller experiences, applied
/// sequentially. Attained or terminal samples use the bare intrinsic reward
/// as target.
inline void controller_td_update(ControllerAgent& agent,
                                 std::span<const IntrinsicTransition> batch,
                                 const GoalTable& goals, StateCodeCache& codes) {
  for (const auto& t : batch) {
    const GoalGate& gate = goals.gate(t.goal);
    const SparseCode& s_code = codes.at(t.s);
    double target = t.r_intrinsic;
    if (!t.attained && !t.terminal) {
      const auto q_next = agent.net.q_values(codes.at(t.s_next), gate);
      target += agent.gamma * *std::max_element(q_next.begin(), q_next.end());
    }
    const auto f = agent.net.forward(s_code, gate);
    const double delta = target - f.q[static_cast<int>(t.a)];
    agent.net.backprop_update(f, s_code, static_cast<int>(t.a), delta, agent.alpha1);
  }
}

struct MetaControllerAgent {
  MetaQTable table;
  EpsilonSchedule eps2;
  double alpha2 = 0.001;
  double gamma = 0.99;
  MetaDiscountMode discount_mode = MetaDiscountMode::GammaPowT;
};

/// Epsilon-greedy subgoal choice from the table row of the state's index.
inline int meta_select_subgoal(MetaControllerAgent& agent, GridPos s,
                               const SubgoalSet& gset, const KMeansState& kstate,
                               int width, int height, Rng& rng) {
  if (gset.empty())
    throw std::logic_error("meta_select_subgoal: subgoal set is empty");
  const int row = state_index(gset, kstate, s, width, height);
  const auto values = agent.table.row(row);
  return epsilon_greedy(values, agent.eps2.value(), rng);
}

/// Flat SARSA agent with the controller's network shape; the goal input is
/// pinned to a constant token (grid center), so capacity matches the
/// controller's per-goal slice.
struct SarsaBaseline {
  StateGoalNet net;
  GoalGate gate;       // fixed gate of the constant goal token
  Point2 goal_token{0.5, 0.5};
  EpsilonSchedule eps;
  double alpha = 0.001;
  double gamma = 0.99;

  SarsaBaseline() : SarsaBaseline(StateGoalNet{}) {}
  explicit SarsaBaseline(StateGoalNet n) : net(std::move(n)) {
    gate = net.gate_for(goal_token);
  }
};

/// On-policy TD step: target r + gamma * q(s',a'), bootstrap dropped on
/// terminal transitions.
inline void sarsa_update(SarsaBaseline& agent, const SparseCode& s_code, Action a,
                         double r, const SparseCode& s_next_code, Action a_next,
                         bool terminal) {
  double target = r;
  if (!terminal) {
    const auto q_next = agent.net.q_values(s_next_code, agent.gate);
    target += agent.gamma * q_next[static_cast<int>(a_next)];
  }
  const auto f = agent.net.forward(s_code, agent.gate);
  const double delta = target - f.q[static_cast<int>(a)];
  agent.net.backprop_update(f, s_code, static_cast<int>(a), delta, agent.alpha);
}

}  // namespace hrl
