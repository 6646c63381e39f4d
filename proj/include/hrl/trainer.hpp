#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hrl/agents.hpp"
#include "hrl/approx.hpp"
#include "hrl/discovery.hpp"
#include "hrl/env.hpp"
#include "hrl/grid.hpp"
#include "hrl/memory.hpp"
#include "hrl/rng.hpp"
#include "hrl/train_config.hpp"

namespace hrl {

// --- Run records -------------------------------------------------------------

struct EpisodeRecord {
  int episode = 0;
  double ret = 0.0;  // plain (undiscounted) external return
  int steps = 0;
  bool success = false;      // task solved before the step cap
  bool key_reached = false;  // key picked up at some point
  double eps1 = 0.0;
  double eps2 = 0.0;
  int n_subgoals = 0;
  std::vector<std::uint8_t> subgoal_attained;  // per-subgoal flags, this episode
};

struct EvalPoint {
  int episode = 0;  // training episode at which the evaluation ran
  double success_rate = 0.0;
  double mean_return = 0.0;
  double max_return = 0.0;
};

struct RunMetrics {
  std::vector<EpisodeRecord> episodes;
  std::vector<EvalPoint> evals;
};

struct RunArtifacts {
  TrainConfig config;
  Layout layout;
  StateGoalNet controller;
  MetaQTable meta;
  SubgoalSet subgoals;
  KMeansState kmeans;
  RunMetrics metrics;
  bool baseline = false;
};

struct StepEvent {
  int episode = 0;
  Transition transition;
  int goal = -1;
  bool attained = false;
  double intrinsic = 0.0;
};

struct TrainHooks {
  std::function<void(const StepEvent&)> on_step;
  std::function<void(const MetaTransition&)> on_meta_push;
  std::function<void(const EpisodeRecord&)> on_episode;
};

// --- Rollout policies ----------------------------------------------------------

/// Episode-scoped action source used by evaluation and diagnostics.
class RolloutPolicy {
 public:
  virtual ~RolloutPolicy() = default;
  virtual void begin_episode(const EnvState&) {}
  virtual Action act(const EnvState& state) = 0;
};

/// Greedy two-level policy: the meta table picks subgoals, the controller
/// network picks actions, re-selecting on attainment or segment cutoff.
class GreedyHierarchicalPolicy : public RolloutPolicy {
 public:
  GreedyHierarchicalPolicy(const StateGoalNet& net, const MetaQTable& meta,
                           const SubgoalSet& gset, const KMeansState& kstate,
                           int width, int height, int controller_max_steps)
      : net_(net),
        meta_(meta),
        gset_(gset),
        kstate_(kstate),
        width_(width),
        height_(height),
        max_segment_(controller_max_steps),
        codes_(&net, width, height),
        goals_(&net) {
    goals_.sync(gset_);
  }

  // Observer for subgoal selections (state at selection, chosen index).
  std::function<void(const EnvState&, int)> on_select;

  void begin_episode(const EnvState& state) override {
    select(state);
  }

  Action act(const EnvState& state) override {
    if (segment_steps_ > 0 &&
        (subgoal_attained(gset_, goal_, kstate_, state.agent, width_, height_) ||
         segment_steps_ >= max_segment_))
      select(state);
    const auto q = net_.q_values(codes_.at(state.agent), goals_.gate(goal_));
    ++segment_steps_;
    int best = 0;
    for (int a = 1; a < kActionCount; ++a)
      if (q[a] > q[best]) best = a;
    return static_cast<Action>(best);
  }

  int current_goal() const { return goal_; }

 private:
  void select(const EnvState& state) {
    const int row = state_index(gset_, kstate_, state.agent, width_, height_);
    const auto values = meta_.row(row);
    goal_ = 0;
    for (int g = 1; g < static_cast<int>(values.size()); ++g)
      if (values[g] > values[goal_]) goal_ = g;
    segment_steps_ = 0;
    if (on_select) on_select(state, goal_);
  }

  const StateGoalNet& net_;
  const MetaQTable& meta_;
  const SubgoalSet& gset_;
  const KMeansState& kstate_;
  int width_, height_, max_segment_;
  StateCodeCache codes_;
  GoalTable goals_;
  int goal_ = 0;
  int segment_steps_ = 0;
};

/// Greedy flat policy over a fixed-gate network (the SARSA baseline).
class GreedyFlatPolicy : public RolloutPolicy {
 public:
  GreedyFlatPolicy(const StateGoalNet& net, const GoalGate& gate, int width, int height)
      : net_(net), gate_(gate), codes_(&net, width, height) {}

  Action act(const EnvState& state) override {
    const auto q = net_.q_values(codes_.at(state.agent), gate_);
    int best = 0;
    for (int a = 1; a < kActionCount; ++a)
      if (q[a] > q[best]) best = a;
    return static_cast<Action>(best);
  }

 private:
  const StateGoalNet& net_;
  GoalGate gate_;
  StateCodeCache codes_;
};

// --- Evaluation ------------------------------------------------------------------

struct EvalResult {
  double success_rate = 0.0;
  double mean_return = 0.0;
  double max_return = 0.0;
  int episodes = 0;
};

/// Greedy rollouts (no exploration) from uniformly random starts.
inline EvalResult evaluate(RolloutPolicy& policy, const Layout& layout, int episodes,
                           std::uint64_t seed) {
  Rng rng(split_seed(seed, 0xe7a1u));
  EvalResult res;
  res.episodes = episodes;
  res.max_return = -std::numeric_limits<double>::infinity();
  for (int ep = 0; ep < episodes; ++ep) {
    EnvState state = reset(layout, rng);
    policy.begin_episode(state);
    double ret = 0.0;
    while (!is_terminal(state)) {
      const Action a = policy.act(state);
      auto [next, out] = step(state, a);
      ret += out.reward;
      state = next;
      if (out.terminal) break;
    }
    res.success_rate += task_solved(state) ? 1.0 : 0.0;
    res.mean_return += ret;
    res.max_return = std::max(res.max_return, ret);
  }
  if (episodes > 0) {
    res.success_rate /= episodes;
    res.mean_return /= episodes;
  }
  return res;
}

/// Runs the controller greedily toward one goal cell. Returns the number of
/// steps used, or -1 if the goal is not reached within the cap.
inline int greedy_goal_rollout(const StateGoalNet& net, const Layout& layout,
                               GridPos start, GridPos goal, int step_cap) {
  StateCodeCache codes(&net, layout.width, layout.height);
  const GoalGate gate = net.gate_for(normalized(goal, layout.width, layout.height));
  EnvState state;
  state.layout = &layout;
  state.agent = start;
  if (start == goal) return 0;
  for (int t = 1; t <= step_cap; ++t) {
    const auto q = net.q_values(codes.at(state.agent), gate);
    int best = 0;
    for (int a = 1; a < kActionCount; ++a)
      if (q[a] > q[best]) best = a;
    auto [next, out] = step(state, static_cast<Action>(best));
    state = next;
    if (state.agent == goal) return t;
    if (out.terminal) return -1;
  }
  return -1;
}

// --- Cluster value diagnostic -------------------------------------------------------

struct ClusterValueStats {
  int cluster = 0;
  double mean_value = 0.0;
  double stddev = 0.0;
  int samples = 0;
};

/// Discounted return of one greedy rollout; the k-th step's reward is
/// weighted gamma^k.
inline double discounted_rollout(RolloutPolicy& policy, const Layout& layout,
                                 EnvState start, double gamma, int max_steps) {
  EnvState state = start;
  policy.begin_episode(state);
  double value = 0.0;
  double discount = gamma;
  for (int t = 0; t < max_steps && !is_terminal(state); ++t) {
    const Action a = policy.act(state);
    auto [next, out] = step(state, a);
    value += discount * out.reward;
    discount *= gamma;
    state = next;
    if (out.terminal) break;
  }
  return value;
}

/// Monte-Carlo state-value estimates per cluster under the given policy.
inline std::vector<ClusterValueStats> cluster_value_diagnostic(
    RolloutPolicy& policy, const Layout& layout, const KMeansState& kstate,
    double gamma, int samples_per_cluster, std::uint64_t seed) {
  if (!kstate.ready)
    throw std::logic_error("cluster_value_diagnostic: K-means state not ready");
  Rng rng(split_seed(seed, 0xd1a6u));
  // Bucket free cells by cluster.
  std::vector<std::vector<GridPos>> cells(kstate.k);
  for (int y = 0; y < layout.height; ++y)
    for (int x = 0; x < layout.width; ++x) {
      const GridPos p{x, y};
      if (layout.blocked(p)) continue;
      cells[assign_cluster(kstate, normalized(p, layout.width, layout.height))].push_back(p);
    }
  std::vector<ClusterValueStats> stats;
  for (int c = 0; c < kstate.k; ++c) {
    ClusterValueStats st;
    st.cluster = c;
    if (cells[c].empty()) {
      stats.push_back(st);
      continue;
    }
    std::vector<double> values;
    values.reserve(samples_per_cluster);
    for (int i = 0; i < samples_per_cluster; ++i) {
      EnvState state;
      state.layout = &layout;
      state.agent = cells[c][uniform_index(rng, cells[c].size())];
      values.push_back(discounted_rollout(policy, layout, state, gamma,
                                          layout.max_steps));
    }
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) /
                        static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    st.mean_value = mean;
    st.stddev = std::sqrt(var);
    st.samples = static_cast<int>(values.size());
    stats.push_back(st);
  }
  return stats;
}

// --- Trainer -----------------------------------------------------------------------

inline StateGoalNet make_state_goal_net(const TrainConfig& cfg) {
  return StateGoalNet(GaussianCoder(cfg.coder_rows, cfg.coder_cols), cfg.hidden_per_row,
                      cfg.kwta_winners, cfg.gate_threshold);
}

inline double merge_radius_normalized(const TrainConfig& cfg) {
  const double cell = std::max(cfg.width > 1 ? 1.0 / (cfg.width - 1) : 1.0,
                               cfg.height > 1 ? 1.0 / (cfg.height - 1) : 1.0);
  return cfg.merge_radius_cells * cell;
}

/// Owns one full training run: environment, agents, memories and discovery
/// state. Phases follow the unified algorithm: intrinsic pretraining, random
/// walk, initial discovery, then interleaved two-level learning.
class UnifiedTrainer {
 public:
  explicit UnifiedTrainer(TrainConfig cfg, TrainHooks hooks = {})
      : cfg_(validated(std::move(cfg))),
        hooks_(std::move(hooks)),
        rng_(cfg_.seed),
        layout_(generate_layout(cfg_.variant, cfg_.layout_seed,
                                {cfg_.width, cfg_.height, cfg_.episode_max_steps,
                                 cfg_.easy_placement})),
        controller_{make_state_goal_net(cfg_),
                    EpsilonSchedule(cfg_.eps1_start, cfg_.eps1_end, cfg_.eps1_decay_steps),
                    cfg_.alpha1, cfg_.gamma},
        meta_{MetaQTable{},
              EpsilonSchedule(cfg_.eps2_start, cfg_.eps2_end, cfg_.eps2_decay_steps),
              cfg_.alpha2, cfg_.gamma, cfg_.meta_discount_mode},
        agent_memory_(cfg_.agent_memory_capacity),
        controller_memory_(cfg_.controller_memory_capacity),
        meta_memory_(cfg_.meta_memory_capacity),
        detector_(cfg_.anomaly_threshold, cfg_.width, cfg_.height,
                  merge_radius_normalized(cfg_),
                  cfg_.feature_distance_threshold > 0.0
                      ? std::optional<double>(cfg_.feature_distance_threshold)
                      : std::nullopt),
        codes_(&controller_.net, cfg_.width, cfg_.height),
        goals_(&controller_.net) {
    gset_.merge_radius = merge_radius_normalized(cfg_);
    kstate_.k = cfg_.clusters;
    controller_.net.init_weights(rng_, cfg_.weight_init_range);
  }

  // Internal caches point at the owned network; the trainer stays put.
  UnifiedTrainer(const UnifiedTrainer&) = delete;
  UnifiedTrainer& operator=(const UnifiedTrainer&) = delete;

  const Layout& layout() const { return layout_; }
  const TrainConfig& config() const { return cfg_; }
  ControllerAgent& controller() { return controller_; }
  MetaControllerAgent& meta() { return meta_; }
  ReplayBuffer<Transition>& agent_memory() { return agent_memory_; }
  ReplayBuffer<IntrinsicTransition>& controller_memory() { return controller_memory_; }
  ReplayBuffer<MetaTransition>& meta_memory() { return meta_memory_; }
  const SubgoalSet& subgoals() const { return gset_; }
  const KMeansState& kmeans() const { return kstate_; }
  RunMetrics& metrics() { return metrics_; }

  /// Intrinsic motivation pretraining: one random cell goal per episode.
  /// Fills the agent and controller memories and trains the controller.
  void pretrain(int episodes) {
    const int cap = std::min(cfg_.controller_max_steps, layout_.max_steps);
    for (int ep = 0; ep < episodes; ++ep) {
      EnvState state = reset(layout_, rng_);
      const GridPos goal_cell =
          sample_goal(layout_, rng_, cfg_.easy_placement &&
                      cfg_.variant == Variant::SingleRoomDynamicGoal, state.agent);
      const int goal = intern_cell_goal(goal_cell);
      bool attained = goal_cell == state.agent;
      int steps = 0;
      double ret = 0.0;
      while (!attained && steps < cap) {
        const auto q = controller_.net.q_values(codes_.at(state.agent), goals_.gate(goal));
        const Action a = static_cast<Action>(
            epsilon_greedy(q, controller_.eps1.value(), rng_));
        auto [next, out] = step(state, a);
        attained = next.agent == goal_cell;
        const double rt = intrinsic_reward(attained, out.reward);
        controller_memory_.push(
            {state.agent, goal, a, rt, next.agent, attained, out.terminal});
        agent_memory_.push({state.agent, a, out.reward, next.agent, out.terminal});
        train_controller();
        controller_.eps1.advance();
        ret += out.reward;
        ++steps;
        state = next;
        if (out.terminal) break;
      }
      EpisodeRecord rec;
      rec.episode = static_cast<int>(pretrain_log_.size());
      rec.ret = ret;
      rec.steps = steps;
      rec.success = attained;
      rec.eps1 = controller_.eps1.value();
      pretrain_log_.push_back(rec);
    }
  }

  /// Purposeful random walk: the (pretrained) controller chases random cell
  /// goals while every external transition is recorded. No learning.
  void random_walk(int episodes) {
    for (int ep = 0; ep < episodes; ++ep) {
      EnvState state = reset(layout_, rng_);
      GridPos goal_cell = sample_goal(layout_, rng_);
      int goal = intern_cell_goal(goal_cell);
      int segment = 0;
      while (true) {
        const auto q = controller_.net.q_values(codes_.at(state.agent), goals_.gate(goal));
        const Action a = static_cast<Action>(
            epsilon_greedy(q, controller_.eps1.value(), rng_));
        auto [next, out] = step(state, a);
        agent_memory_.push({state.agent, a, out.reward, next.agent, out.terminal});
        ++segment;
        state = next;
        if (out.terminal) break;
        if (next.agent == goal_cell || segment >= cfg_.controller_max_steps) {
          goal_cell = sample_goal(layout_, rng_);
          goal = intern_cell_goal(goal_cell);
          segment = 0;
        }
      }
    }
  }

  void clear_memories() {
    agent_memory_.clear();
    controller_memory_.clear();
    meta_memory_.clear();
  }

  /// Replaces the controller network (e.g., with a loaded checkpoint) and
  /// rebuilds the caches that key off it.
  void load_controller(StateGoalNet net) {
    controller_.net = std::move(net);
    codes_ = StateCodeCache(&controller_.net, cfg_.width, cfg_.height);
    goals_ = GoalTable(&controller_.net);
    cell_goal_index_.clear();
    goals_.sync(gset_);
  }

  /// One unsupervised subgoal discovery pass over the agent memory.
  DiscoveryResult run_discovery() {
    auto res = discover(agent_memory_, detector_, kstate_, gset_, cfg_.width,
                        cfg_.height, rng_);
    after_subgoal_change();
    return res;
  }

  /// The main two-level learning loop (episodes M), assuming the subgoal set
  /// has been seeded.
  void train_episodes(int episodes) {
    if (gset_.empty())
      throw std::logic_error("train_episodes: subgoal set is empty; run discovery first");
    for (int ep = 0; ep < episodes; ++ep) {
      run_training_episode();
      maybe_eval();
      if (steps_since_fit_ >= cfg_.discovery_interval) {
        run_discovery();
        steps_since_fit_ = 0;
      }
    }
  }

  /// Full unified run: pretrain, walk, initial discovery, then training.
  RunArtifacts run_unified() {
    pretrain(cfg_.pretrain_episodes);
    clear_memories();
    random_walk(cfg_.walk_episodes);
    run_discovery();
    steps_since_fit_ = 0;
    train_episodes(cfg_.episodes);
    return collect_artifacts(false);
  }

  RunArtifacts collect_artifacts(bool baseline) const {
    RunArtifacts art;
    art.config = cfg_;
    art.layout = layout_;
    art.controller = controller_.net;
    art.meta = meta_.table;
    art.subgoals = gset_;
    art.kmeans = kstate_;
    art.metrics = metrics_;
    art.baseline = baseline;
    return art;
  }

  const std::vector<EpisodeRecord>& pretrain_log() const { return pretrain_log_; }
  long total_env_steps() const { return total_env_steps_; }

 private:
  static TrainConfig validated(TrainConfig cfg) {
    validate_config(cfg);
    return cfg;
  }

  int intern_cell_goal(GridPos cell) {
    const int key = cell.y * cfg_.width + cell.x;
    const auto it = cell_goal_index_.find(key);
    if (it != cell_goal_index_.end()) return it->second;
    const int idx = goals_.add(normalized(cell, cfg_.width, cfg_.height));
    cell_goal_index_.emplace(key, idx);
    return idx;
  }

  // Subgoal indices live in the same goal table as pretraining cell goals
  // would; the unified loop starts from a fresh table mirroring the set.
  void after_subgoal_change() {
    if (!cell_goal_index_.empty()) {
      // Leaving the pretraining regime: restart the goal table on subgoals.
      cell_goal_index_.clear();
      goals_ = GoalTable(&controller_.net);
    }
    goals_.sync(gset_);
    meta_.table.resize(gset_.size(), gset_.size());
  }

  void train_controller() {
    const auto batch =
        controller_memory_.sample_minibatch(cfg_.minibatch_controller, rng_);
    if (batch.empty()) return;
    controller_td_update(controller_, batch, goals_, codes_);
  }

  void train_meta() {
    if (meta_memory_.empty()) return;  // skip updates until experience exists
    const auto batch = meta_memory_.sample_minibatch(cfg_.minibatch_meta, rng_);
    const auto indexer = [&](GridPos p) {
      return state_index(gset_, kstate_, p, cfg_.width, cfg_.height);
    };
    for (const auto& mt : batch)
      meta_.table.update(mt, meta_.alpha2, meta_.gamma, indexer, meta_.discount_mode);
  }

  void run_training_episode() {
    EnvState state = reset(layout_, rng_);
    EpisodeRecord rec;
    rec.episode = static_cast<int>(metrics_.episodes.size());
    rec.subgoal_attained.assign(gset_.size(), 0);

    GridPos segment_start = state.agent;
    int goal = meta_select_subgoal(meta_, state.agent, gset_, kstate_, cfg_.width,
                                   cfg_.height, rng_);
    double segment_return = 0.0;
    int segment_steps = 0;

    bool episode_done = false;
    while (!episode_done) {
      const auto q = controller_.net.q_values(codes_.at(state.agent), goals_.gate(goal));
      const Action a = static_cast<Action>(
          epsilon_greedy(q, controller_.eps1.value(), rng_));
      auto [next, out] = step(state, a);
      const bool attained =
          subgoal_attained(gset_, goal, kstate_, next.agent, cfg_.width, cfg_.height);
      const double rt = intrinsic_reward(attained, out.reward);
      controller_memory_.push(
          {state.agent, goal, a, rt, next.agent, attained, out.terminal});

      const Transition ext{state.agent, a, out.reward, next.agent, out.terminal};
      if (detector_.is_anomalous(ext)) {
        // Anomalous experiences become subgoals instead of memory entries.
        if (detector_.detect(ext)) {
          const int idx =
              gset_.add_anomaly(normalized(ext.s_next, cfg_.width, cfg_.height));
          if (idx >= 0) after_subgoal_change();
          if (static_cast<int>(rec.subgoal_attained.size()) < gset_.size())
            rec.subgoal_attained.resize(gset_.size(), 0);
        }
      } else {
        agent_memory_.push(ext);
      }

      train_controller();
      train_meta();

      segment_return += std::pow(cfg_.gamma, segment_steps) * out.reward;
      ++segment_steps;
      rec.ret += out.reward;
      ++rec.steps;
      ++total_env_steps_;
      ++steps_since_fit_;
      if (next.has_key) rec.key_reached = true;
      controller_.eps1.advance();

      if (hooks_.on_step)
        hooks_.on_step({rec.episode, ext, goal, attained, rt});

      state = next;
      const bool segment_done =
          out.terminal || attained || segment_steps >= cfg_.controller_max_steps;
      if (segment_done) {
        const MetaTransition mt{segment_start, goal, segment_return, state.agent,
                                out.terminal, segment_steps};
        meta_memory_.push(mt);
        if (hooks_.on_meta_push) hooks_.on_meta_push(mt);
        if (attained && goal < static_cast<int>(rec.subgoal_attained.size()))
          rec.subgoal_attained[goal] = 1;
        if (out.terminal) {
          episode_done = true;
        } else {
          segment_start = state.agent;
          goal = meta_select_subgoal(meta_, state.agent, gset_, kstate_, cfg_.width,
                                     cfg_.height, rng_);
          segment_return = 0.0;
          segment_steps = 0;
        }
      }
    }
    meta_.eps2.advance();

    rec.success = task_solved(state);
    rec.eps1 = controller_.eps1.value();
    rec.eps2 = meta_.eps2.value();
    rec.n_subgoals = gset_.size();
    metrics_.episodes.push_back(rec);
    if (hooks_.on_episode) hooks_.on_episode(rec);
  }

  void maybe_eval() {
    const int ep = static_cast<int>(metrics_.episodes.size());
    if (ep % cfg_.eval_interval != 0 && ep != cfg_.episodes) return;
    GreedyHierarchicalPolicy policy(controller_.net, meta_.table, gset_, kstate_,
                                    cfg_.width, cfg_.height, cfg_.controller_max_steps);
    const auto res = evaluate(policy, layout_, cfg_.eval_episodes,
                              split_seed(cfg_.seed, 0xe0a0u + ep));
    metrics_.evals.push_back({ep, res.success_rate, res.mean_return, res.max_return});
  }

  TrainConfig cfg_;
  TrainHooks hooks_;
  Rng rng_;
  Layout layout_;
  ControllerAgent controller_;
  MetaControllerAgent meta_;
  ReplayBuffer<Transition> agent_memory_;
  ReplayBuffer<IntrinsicTransition> controller_memory_;
  ReplayBuffer<MetaTransition> meta_memory_;
  AnomalyDetector detector_;
  SubgoalSet gset_;
  KMeansState kstate_;
  StateCodeCache codes_;
  GoalTable goals_;
  std::unordered_map<int, int> cell_goal_index_;
  RunMetrics metrics_;
  std::vector<EpisodeRecord> pretrain_log_;
  long steps_since_fit_ = 0;
  long total_env_steps_ = 0;
};

// --- Spec-level entry points ----------------------------------------------------

struct PretrainResult {
  StateGoalNet controller;
  std::vector<EpisodeRecord> log;
  std::size_t agent_memory_size = 0;
  std::size_t controller_memory_size = 0;
};

inline PretrainResult run_intrinsic_pretraining(const TrainConfig& cfg) {
  UnifiedTrainer trainer(cfg);
  trainer.pretrain(cfg.pretrain_episodes);
  PretrainResult res{trainer.controller().net, trainer.pretrain_log(),
                     trainer.agent_memory().size(), trainer.controller_memory().size()};
  return res;
}

struct RandomWalkResult {
  StateGoalNet controller;
  ReplayBuffer<Transition> memory;
};

/// Pretrains (per config) and walks M' episodes, collecting the agent memory.
inline RandomWalkResult run_random_walk(const TrainConfig& cfg) {
  UnifiedTrainer trainer(cfg);
  trainer.pretrain(cfg.pretrain_episodes);
  trainer.clear_memories();
  trainer.random_walk(cfg.walk_episodes);
  return {trainer.controller().net, trainer.agent_memory()};
}

inline RunArtifacts run_unified(const TrainConfig& cfg, TrainHooks hooks = {}) {
  UnifiedTrainer trainer(cfg, std::move(hooks));
  return trainer.run_unified();
}

/// Flat SARSA run with matched capacity and budget on the same environment.
inline RunArtifacts run_baseline(const TrainConfig& cfg, TrainHooks hooks = {}) {
  validate_config(cfg);
  Rng rng(cfg.seed);
  const Layout layout = generate_layout(
      cfg.variant, cfg.layout_seed,
      {cfg.width, cfg.height, cfg.episode_max_steps, cfg.easy_placement});
  StateGoalNet net = make_state_goal_net(cfg);
  net.init_weights(rng, cfg.weight_init_range);
  SarsaBaseline agent(std::move(net));
  agent.eps = EpsilonSchedule(cfg.eps1_start, cfg.eps1_end, cfg.eps1_decay_steps);
  agent.alpha = cfg.alpha1;
  agent.gamma = cfg.gamma;
  StateCodeCache codes(&agent.net, cfg.width, cfg.height);

  RunMetrics metrics;
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    EnvState state = reset(layout, rng);
    EpisodeRecord rec;
    rec.episode = ep;
    auto q = agent.net.q_values(codes.at(state.agent), agent.gate);
    Action a = static_cast<Action>(epsilon_greedy(q, agent.eps.value(), rng));
    while (true) {
      auto [next, out] = step(state, a);
      Action a_next = a;
      if (!out.terminal) {
        const auto q_next = agent.net.q_values(codes.at(next.agent), agent.gate);
        a_next = static_cast<Action>(epsilon_greedy(q_next, agent.eps.value(), rng));
      }
      sarsa_update(agent, codes.at(state.agent), a, out.reward, codes.at(next.agent),
                   a_next, out.terminal);
      rec.ret += out.reward;
      ++rec.steps;
      agent.eps.advance();
      if (hooks.on_step)
        hooks.on_step({ep, {state.agent, a, out.reward, next.agent, out.terminal},
                       -1, false, 0.0});
      state = next;
      a = a_next;
      if (out.terminal) break;
    }
    rec.success = task_solved(state);
    rec.key_reached = state.has_key;
    rec.eps1 = agent.eps.value();
    metrics.episodes.push_back(rec);
    if (hooks.on_episode) hooks.on_episode(rec);
    if ((ep + 1) % cfg.eval_interval == 0 || ep + 1 == cfg.episodes) {
      GreedyFlatPolicy policy(agent.net, agent.gate, cfg.width, cfg.height);
      const auto res = evaluate(policy, layout, cfg.eval_episodes,
                                split_seed(cfg.seed, 0xe0a0u + ep + 1));
      metrics.evals.push_back({ep + 1, res.success_rate, res.mean_return, res.max_return});
    }
  }

  RunArtifacts art;
  art.config = cfg;
  art.layout = layout;
  art.controller = agent.net;
  art.metrics = std::move(metrics);
  art.baseline = true;
  return art;
}

// --- Metrics CSV -----------------------------------------------------------------

inline void write_metrics_csv(const RunMetrics& metrics, std::ostream& os) {
  os << "# format: hrl-metrics-v1\n";
  os << "episode,return,steps,success,key,eps1,eps2,n_subgoals\n";
  for (const auto& e : metrics.episodes) {
    os << e.episode << ',' << e.ret << ',' << e.steps << ',' << (e.success ? 1 : 0)
       << ',' << (e.key_reached ? 1 : 0) << ',' << e.eps1 << ',' << e.eps2 << ','
       << e.n_subgoals << '\n';
  }
}

inline void write_eval_csv(const RunMetrics& metrics, std::ostream& os) {
  os << "# format: hrl-eval-v1\n";
  os << "episode,success_rate,mean_return,max_return\n";
  for (const auto& e : metrics.evals)
    os << e.episode << ',' << e.success_rate << ',' << e.mean_return << ','
       << e.max_return << '\n';
}

}  // namespace hrl
