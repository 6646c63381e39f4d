#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hrl/grid.hpp"
#include "hrl/memory.hpp"
#include "hrl/rng.hpp"

namespace hrl {

// --- Gaussian population coding ----------------------------------------------

/// Radial basis layer: a rows x cols grid of Gaussian centers spanning
/// [0,1]^2. Activation of center i for input p is exp(-|p - c_i|^2 / 2*sigma^2),
/// so an input sitting on a center always activates it at exactly 1.
struct GaussianCoder {
  int rows = 5;
  int cols = 5;
  double sigma = 0.125;
  std::vector<Point2> centers;

  GaussianCoder() { rebuild(); }
  GaussianCoder(int rows_, int cols_, double sigma_ = 0.0)
      : rows(rows_), cols(cols_), sigma(sigma_) {
    if (rows < 2 || cols < 2)
      throw std::invalid_argument("GaussianCoder: needs at least a 2x2 center grid");
    if (sigma <= 0.0) sigma = default_sigma(rows, cols);
    rebuild();
  }

  // Half the spacing between adjacent centers.
  static double default_sigma(int rows_, int cols_) {
    const double spacing =
        std::min(1.0 / (cols_ - 1), 1.0 / (rows_ - 1));
    return spacing / 2.0;
  }

  void rebuild() {
    centers.clear();
    centers.reserve(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        centers.push_back({static_cast<double>(c) / (cols - 1),
                           static_cast<double>(r) / (rows - 1)});
  }

  int size() const { return rows * cols; }

  std::vector<double> encode(Point2 p) const {
    std::vector<double> act(centers.size());
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (std::size_t i = 0; i < centers.size(); ++i)
      act[i] = std::exp(-squared_distance(p, centers[i]) * inv);
    return act;
  }
};

inline std::vector<double> gaussian_encode(const GaussianCoder& coder, Point2 p) {
  if (p.x < -1e-9 || p.x > 1.0 + 1e-9 || p.y < -1e-9 || p.y > 1.0 + 1e-9)
    throw std::invalid_argument("gaussian_encode: point outside the unit square");
  return coder.encode(p);
}

/// Dense input code; contiguous so the hidden-layer mat-vec vectorizes.
struct StateCode {
  std::vector<double> value;
};

// --- kWTA ---------------------------------------------------------------------

// Net inputs of losing units are pinned here; sigmoid(-30) ~ 9.4e-14, so the
// unit is effectively silent and its upstream gradient is cut.
inline constexpr double kKwtaSuppression = -30.0;

/// Keeps the k largest entries and pins the rest to the suppression value.
/// Ties go to the lower index.
inline std::vector<double> kwta(const std::vector<double>& net_input, int k) {
  if (k <= 0) throw std::invalid_argument("kwta: k must be positive");
  if (static_cast<std::size_t>(k) > net_input.size())
    throw std::invalid_argument("kwta: k exceeds vector length");
  const std::size_t n = net_input.size();
  if (static_cast<std::size_t>(k) == n) return net_input;

  // Selection over (value, index) with lower index winning ties.
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  std::nth_element(order.begin(), order.begin() + (k - 1), order.end(),
                   [&](int a, int b) {
                     if (net_input[a] != net_input[b]) return net_input[a] > net_input[b];
                     return a < b;
                   });
  std::vector<double> out(n, kKwtaSuppression);
  for (int i = 0; i < k; ++i) out[order[i]] = net_input[order[i]];
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// --- State-goal value network ---------------------------------------------------

/// Active gate rows for one goal: the coder centers whose goal activation
/// exceeds the gate threshold.
struct GoalGate {
  std::vector<int> rows;
};

/// Goal-gated value network q(s, g, a; w). The state code feeds every gate
/// row's private hidden block (w1, kWTA, sigmoid); the goal code only selects
/// which rows contribute. Output is the sum of the active rows' linear reads
/// (w2) per action.
class StateGoalNet {
 public:
  StateGoalNet() : StateGoalNet(GaussianCoder{}, 50, 5) {}
  StateGoalNet(GaussianCoder coder, int hidden_per_row, int winners,
               double gate_threshold = 0.1)
      : coder_(std::move(coder)),
        hidden_(hidden_per_row),
        winners_(winners),
        gate_threshold_(gate_threshold) {
    if (winners_ <= 0 || winners_ > hidden_)
      throw std::invalid_argument("StateGoalNet: winners must be in [1, hidden_per_row]");
    const std::size_t rows = static_cast<std::size_t>(coder_.size());
    w1_.assign(rows * hidden_ * coder_.size(), 0.0);
    w2_.assign(rows * kActionCount * hidden_, 0.0);
  }

  void init_weights(Rng& rng, double range = 0.05) {
    for (auto& w : w1_) w = uniform_real(rng, -range, range);
    for (auto& w : w2_) w = uniform_real(rng, -range, range);
  }

  const GaussianCoder& coder() const { return coder_; }
  int gate_rows() const { return coder_.size(); }
  int hidden_per_row() const { return hidden_; }
  int winners() const { return winners_; }
  double gate_threshold() const { return gate_threshold_; }
  std::vector<double>& w1() { return w1_; }
  std::vector<double>& w2() { return w2_; }
  const std::vector<double>& w1() const { return w1_; }
  const std::vector<double>& w2() const { return w2_; }

  GoalGate gate_for(Point2 goal) const {
    GoalGate g;
    const auto act = coder_.encode(goal);
    for (std::size_t i = 0; i < act.size(); ++i)
      if (act[i] > gate_threshold_) g.rows.push_back(static_cast<int>(i));
    if (g.rows.empty())
      throw std::invalid_argument("StateGoalNet: goal activates no gate row");
    return g;
  }

  SparseCode encode_state(Point2 s) const {
    return SparseCode::from_dense(coder_.encode(s));
  }

  /// Forward pass record, kept for the matching backprop call.
  struct Forward {
    std::array<double, kActionCount> q{};
    std::vector<int> rows;        // active gate rows
    std::vector<int> winner_idx;  // rows.size() * k hidden indices
    std::vector<double> hidden;   // rows.size() * hidden activations (post kWTA+sigmoid)
  };

  Forward forward(const SparseCode& s_code, const GoalGate& gate) const {
    Forward f;
    f.rows = gate.rows;
    f.winner_idx.reserve(gate.rows.size() * winners_);
    f.hidden.reserve(gate.rows.size() * hidden_);
    const double h_loser = sigmoid(kKwtaSuppression);
    std::vector<double> net(hidden_);
    for (int row : gate.rows) {
      row_net_input(row, s_code, net);
      select_winners(net, f.winner_idx);
      const std::size_t base = f.hidden.size();
      f.hidden.insert(f.hidden.end(), hidden_, h_loser);
      const double* w2r = w2_row(row);
      for (int w = 0; w < winners_; ++w) {
        const int j = f.winner_idx[f.winner_idx.size() - winners_ + w];
        f.hidden[base + j] = sigmoid(net[j]);
      }
      for (int a = 0; a < kActionCount; ++a) {
        double acc = 0.0;
        const double* wa = w2r + static_cast<std::size_t>(a) * hidden_;
        for (int j = 0; j < hidden_; ++j) acc += wa[j] * f.hidden[base + j];
        f.q[a] += acc;
      }
    }
    return f;
  }

  /// Fast path when only the action values are needed.
  std::array<double, kActionCount> q_values(const SparseCode& s_code,
                                            const GoalGate& gate) const {
    std::array<double, kActionCount> q{};
    const double h_loser = sigmoid(kKwtaSuppression);
    std::vector<double> net(hidden_);
    std::vector<int> win;
    win.reserve(winners_);
    for (int row : gate.rows) {
      row_net_input(row, s_code, net);
      win.clear();
      select_winners(net, win);
      const double* w2r = w2_row(row);
      for (int a = 0; a < kActionCount; ++a) {
        double acc = 0.0;
        const double* wa = w2r + static_cast<std::size_t>(a) * hidden_;
        // Losers contribute a constant plateau; add it in closed form.
        double wsum = 0.0;
        for (int j = 0; j < hidden_; ++j) wsum += wa[j];
        double winner_part = 0.0;
        for (int w = 0; w < winners_; ++w) {
          const int j = win[w];
          winner_part += wa[j] * (sigmoid(net[j]) - h_loser);
        }
        acc = wsum * h_loser + winner_part;
        q[a] += acc;
      }
    }
    return q;
  }

  std::array<double, kActionCount> q_values(Point2 s, Point2 goal) const {
    return q_values(encode_state(s), gate_for(goal));
  }

  /// TD step for one sample: w2's action-a row moves along the hidden
  /// activity, w1 gets the error propagated through the surviving winners
  /// only. Rows outside the gate never change.
  void backprop_update(const Forward& f, const SparseCode& s_code, int action,
                       double delta, double alpha) {
    if (action < 0 || action >= kActionCount)
      throw std::invalid_argument("backprop_update: bad action index");
    if (delta == 0.0) return;
    for (std::size_t ri = 0; ri < f.rows.size(); ++ri) {
      const int row = f.rows[ri];
      const double* h = f.hidden.data() + ri * hidden_;
      double* wa = w2_row_mut(row) + static_cast<std::size_t>(action) * hidden_;
      const double* w2_before = wa;
      // Hidden error for winners, computed against the pre-update w2.
      const int* win = f.winner_idx.data() + ri * winners_;
      std::array<double, 64> dh{};  // winners_ <= hidden_ <= 64 in practice
      std::vector<double> dh_big;
      double* dhp = dh.data();
      if (winners_ > 64) {
        dh_big.resize(winners_);
        dhp = dh_big.data();
      }
      for (int w = 0; w < winners_; ++w) {
        const int j = win[w];
        dhp[w] = delta * w2_before[j] * h[j] * (1.0 - h[j]);
      }
      for (int j = 0; j < hidden_; ++j) wa[j] += alpha * delta * h[j];
      double* w1r = w1_row_mut(row);
      for (int w = 0; w < winners_; ++w) {
        const int j = win[w];
        double* w1j = w1r + static_cast<std::size_t>(j) * coder_.size();
        const double scaled = alpha * dhp[w];
        for (std::size_t t = 0; t < s_code.index.size(); ++t)
          w1j[s_code.index[t]] += scaled * s_code.value[t];
      }
    }
  }

  // Spec-facing convenience overloads on raw positions.
  std::array<double, kActionCount> forward_q(Point2 s, Point2 goal) const {
    return q_values(s, goal);
  }
  void td_update(Point2 s, Point2 goal, int action, double delta, double alpha) {
    const SparseCode code = encode_state(s);
    const GoalGate gate = gate_for(goal);
    const Forward f = forward(code, gate);
    backprop_update(f, code, action, delta, alpha);
  }

 private:
  void row_net_input(int row, const SparseCode& s_code, std::vector<double>& net) const {
    const double* w1r = w1_.data() +
                        static_cast<std::size_t>(row) * hidden_ * coder_.size();
    const int input_dim = coder_.size();
    for (int j = 0; j < hidden_; ++j) {
      const double* wj = w1r + static_cast<std::size_t>(j) * input_dim;
      double acc = 0.0;
      for (std::size_t t = 0; t < s_code.index.size(); ++t)
        acc += wj[s_code.index[t]] * s_code.value[t];
      net[j] = acc;
    }
  }

  // Appends the k winner indices of `net` (ties to lower index).
  void select_winners(const std::vector<double>& net, std::vector<int>& out) const {
    for (int w = 0; w < winners_; ++w) {
      int best = -1;
      for (int j = 0; j < hidden_; ++j) {
        bool taken = false;
        for (int p = 0; p < w; ++p)
          if (out[out.size() - w + p] == j) { taken = true; break; }
        if (taken) continue;
        if (best < 0 || net[j] > net[best]) best = j;
      }
      out.push_back(best);
    }
    // Keep winners in ascending index order for reproducible traces.
    std::sort(out.end() - winners_, out.end());
  }

  const double* w2_row(int row) const {
    return w2_.data() + static_cast<std::size_t>(row) * kActionCount * hidden_;
  }
  double* w2_row_mut(int row) {
    return w2_.data() + static_cast<std::size_t>(row) * kActionCount * hidden_;
  }
  double* w1_row_mut(int row) {
    return w1_.data() + static_cast<std::size_t>(row) * hidden_ * coder_.size();
  }

  GaussianCoder coder_;
  int hidden_;
  int winners_;
  double gate_threshold_;
  std::vector<double> w1_;  // rows * hidden * input, row-major
  std::vector<double> w2_;  // rows * actions * hidden, row-major
};

// --- Tabular meta-controller Q ---------------------------------------------------

enum class MetaDiscountMode { GammaPowT, Gamma };

/// Dense Q(state-index, subgoal-index) table. Both axes track the subgoal
/// set; new subgoals widen the table with zero-initialized entries.
class MetaQTable {
 public:
  MetaQTable() = default;
  MetaQTable(int n_states, int n_goals) { resize(n_states, n_goals); }

  void resize(int n_states, int n_goals) {
    if (n_states < 0 || n_goals < 0)
      throw std::invalid_argument("MetaQTable: negative dimension");
    std::vector<double> next(static_cast<std::size_t>(n_states) * n_goals, 0.0);
    for (int i = 0; i < std::min(n_states, n_states_); ++i)
      for (int j = 0; j < std::min(n_goals, n_goals_); ++j)
        next[static_cast<std::size_t>(i) * n_goals + j] = q_[index(i, j)];
    q_ = std::move(next);
    n_states_ = n_states;
    n_goals_ = n_goals;
  }

  int states() const { return n_states_; }
  int goals() const { return n_goals_; }

  double get(int state, int goal) const {
    check(state, goal);
    return q_[index(state, goal)];
  }
  void set(int state, int goal, double v) {
    check(state, goal);
    q_[index(state, goal)] = v;
  }

  double row_max(int state) const {
    check(state, 0);
    double best = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n_goals_; ++j) best = std::max(best, q_[index(state, j)]);
    return best;
  }

  std::vector<double> row(int state) const {
    check(state, 0);
    return {q_.begin() + index(state, 0), q_.begin() + index(state, 0) + n_goals_};
  }

  /// Tabular TD(0) step toward Y = G + gamma^T * max_g' Q(s', g'), with the
  /// bootstrap dropped on terminal segments.
  template <class StateIndexer>
  void update(const MetaTransition& mt, double alpha2, double gamma,
              const StateIndexer& state_index, MetaDiscountMode mode) {
    const int i = state_index(mt.s0);
    double target = mt.return_g;
    if (!mt.end_terminal) {
      const int i2 = state_index(mt.s_end);
      const double discount =
          mode == MetaDiscountMode::GammaPowT ? std::pow(gamma, mt.steps) : gamma;
      target += discount * row_max(i2);
    }
    const double old = get(i, mt.goal);
    set(i, mt.goal, old + alpha2 * (target - old));
  }

 private:
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(i) * n_goals_ + j;
  }
  void check(int state, int goal) const {
    if (state < 0 || state >= n_states_ || goal < 0 || goal >= n_goals_)
      throw std::out_of_range("MetaQTable: index (" + std::to_string(state) + "," +
                              std::to_string(goal) + ") outside " +
                              std::to_string(n_states_) + "x" + std::to_string(n_goals_));
  }

  int n_states_ = 0;
  int n_goals_ = 0;
  std::vector<double> q_;
};

inline double meta_q_get(const MetaQTable& t, int state, int goal) {
  return t.get(state, goal);
}

template <class StateIndexer>
void meta_q_update(MetaQTable& t, const MetaTransition& mt, double alpha2, double gamma,
                   const StateIndexer& state_index,
                   MetaDiscountMode mode = MetaDiscountMode::GammaPowT) {
  t.update(mt, alpha2, gamma, state_index, mode);
}

// --- Checkpoints -------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'H', 'R', 'L', 'W', 'N', 'E', 'T', '1'};

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline void write_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace detail

/// Binary weight checkpoint: magic, version, dims, k, sigma/threshold, then
/// w1 and w2 as little-endian 64-bit floats in row-major order.
inline void save_checkpoint(const StateGoalNet& net, std::ostream& os) {
  os.write(kCheckpointMagic, 8);
  detail::write_u32(os, kCheckpointVersion);
  detail::write_u32(os, static_cast<std::uint32_t>(net.coder().rows));
  detail::write_u32(os, static_cast<std::uint32_t>(net.coder().cols));
  detail::write_u32(os, static_cast<std::uint32_t>(net.hidden_per_row()));
  detail::write_u32(os, static_cast<std::uint32_t>(kActionCount));
  detail::write_u32(os, static_cast<std::uint32_t>(net.winners()));
  detail::write_f64(os, net.coder().sigma);
  detail::write_f64(os, net.gate_threshold());
  for (double w : net.w1()) detail::write_f64(os, w);
  for (double w : net.w2()) detail::write_f64(os, w);
}

inline StateGoalNet load_checkpoint(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  const auto version = detail::read_u32(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const int rows = static_cast<int>(detail::read_u32(is));
  const int cols = static_cast<int>(detail::read_u32(is));
  const int hidden = static_cast<int>(detail::read_u32(is));
  const int actions = static_cast<int>(detail::read_u32(is));
  const int k = static_cast<int>(detail::read_u32(is));
  const double sigma = detail::read_f64(is);
  const double gate_threshold = detail::read_f64(is);
  if (actions != kActionCount)
    throw std::runtime_error("checkpoint: action count mismatch");
  StateGoalNet net(GaussianCoder(rows, cols, sigma), hidden, k, gate_threshold);
  for (auto& w : net.w1()) w = detail::read_f64(is);
  for (auto& w : net.w2()) w = detail::read_f64(is);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return net;
}

/// Sidecar manifest describing a checkpoint file.
inline nlohmann::json checkpoint_sidecar(const StateGoalNet& net,
                                         const std::string& bin_file) {
  return {{"format", "hrl-checkpoint"},
          {"format_version", static_cast<int>(kCheckpointVersion)},
          {"file", bin_file},
          {"coder_rows", net.coder().rows},
          {"coder_cols", net.coder().cols},
          {"hidden_per_row", net.hidden_per_row()},
          {"actions", kActionCount},
          {"winners", net.winners()},
          {"sigma", net.coder().sigma},
          {"gate_threshold", net.gate_threshold()},
          {"endianness", "little"}};
}

inline nlohmann::json to_json(const MetaQTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < t.states(); ++i) rows.push_back(t.row(i));
  return {{"format", "hrl-meta-q"},
          {"format_version", 1},
          {"states", t.states()},
          {"goals", t.goals()},
          {"q", rows}};
}

inline MetaQTable meta_q_from_json(const nlohmann::json& j) {
  MetaQTable t(j.at("states").get<int>(), j.at("goals").get<int>());
  const auto& rows = j.at("q");
  for (int i = 0; i < t.states(); ++i)
    for (int g = 0; g < t.goals(); ++g) t.set(i, g, rows.at(i).at(g).get<double>());
  return t;
}

}  // namespace hrl
