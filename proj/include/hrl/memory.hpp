#pragma once

#include <algorithm>
#include <deque>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hrl/env.hpp"
#include "hrl/grid.hpp"
#include "hrl/rng.hpp"

namespace hrl {

/// Agent experience e = (s, a, r, s').
struct Transition {
  GridPos s{};
  Action a = Action::North;
  double r = 0.0;
  GridPos s_next{};
  bool terminal = false;

  friend bool operator==(const Transition& x, const Transition& y) {
    return x.s == y.s && x.a == y.a && x.r == y.r && x.s_next == y.s_next &&
           x.terminal == y.terminal;
  }
};

/// Controller experience: goal-conditioned step with intrinsic reward.
/// `terminal` records environment termination so TD targets can drop the
/// bootstrap term on either event.
struct IntrinsicTransition {
  GridPos s{};
  int goal = 0;  // index into the active goal table / subgoal set
  Action a = Action::North;
  double r_intrinsic = 0.0;
  GridPos s_next{};
  bool attained = false;
  bool terminal = false;

  friend bool operator==(const IntrinsicTransition& x, const IntrinsicTransition& y) {
    return x.s == y.s && x.goal == y.goal && x.a == y.a &&
           x.r_intrinsic == y.r_intrinsic && x.s_next == y.s_next &&
           x.attained == y.attained && x.terminal == y.terminal;
  }
};

/// Meta-controller experience spanning one controller episode. `return_g` is
/// the discounted external return of the segment; `steps` its length, used by
/// the gamma^T discount mode.
struct MetaTransition {
  GridPos s0{};
  int goal = 0;
  double return_g = 0.0;
  GridPos s_end{};
  bool end_terminal = false;
  int steps = 0;

  friend bool operator==(const MetaTransition& x, const MetaTransition& y) {
    return x.s0 == y.s0 && x.goal == y.goal && x.return_g == y.return_g &&
           x.s_end == y.s_end && x.end_terminal == y.end_terminal && x.steps == y.steps;
  }
};

/// Bounded FIFO experience memory with uniform with-replacement sampling.
template <class E>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be > 0");
  }

  void push(E entry) {
    entries_.push_back(std::move(entry));
    if (entries_.size() > capacity_) entries_.pop_front();
  }

  /// Uniform sample with replacement. An empty buffer yields an empty batch,
  /// which callers treat as "skip this update".
  std::vector<E> sample_minibatch(std::size_t count, Rng& rng) const {
    std::vector<E> batch;
    if (entries_.empty()) return batch;
    batch.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
      batch.push_back(entries_[uniform_index(rng, entries_.size())]);
    return batch;
  }

  template <class Pred>
  std::size_t remove_if(Pred pred) {
    const std::size_t before = entries_.size();
    entries_.erase(std::remove_if(entries_.begin(), entries_.end(), pred), entries_.end());
    return before - entries_.size();
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }

  const E& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::size_t capacity_;
  std::deque<E> entries_;
};

// --- JSON Lines -------------------------------------------------------------

inline constexpr int kMemoryFormatVersion = 1;

inline nlohmann::json to_json(const Transition& t) {
  return {{"s", to_json(t.s)},   {"a", static_cast<int>(t.a)}, {"r", t.r},
          {"s2", to_json(t.s_next)}, {"term", t.terminal}};
}

inline Transition transition_from_json(const nlohmann::json& j) {
  Transition t;
  t.s = gridpos_from_json(j.at("s"));
  t.a = action_from_index(j.at("a").get<int>());
  t.r = j.at("r").get<double>();
  t.s_next = gridpos_from_json(j.at("s2"));
  t.terminal = j.at("term").get<bool>();
  return t;
}

inline nlohmann::json to_json(const IntrinsicTransition& t) {
  return {{"s", to_json(t.s)},   {"g", t.goal},  {"a", static_cast<int>(t.a)},
          {"rt", t.r_intrinsic}, {"s2", to_json(t.s_next)}, {"att", t.attained},
          {"term", t.terminal}};
}

inline IntrinsicTransition intrinsic_transition_from_json(const nlohmann::json& j) {
  IntrinsicTransition t;
  t.s = gridpos_from_json(j.at("s"));
  t.goal = j.at("g").get<int>();
  t.a = action_from_index(j.at("a").get<int>());
  t.r_intrinsic = j.at("rt").get<double>();
  t.s_next = gridpos_from_json(j.at("s2"));
  t.attained = j.at("att").get<bool>();
  t.terminal = j.at("term").get<bool>();
  return t;
}

inline nlohmann::json to_json(const MetaTransition& t) {
  return {{"s0", to_json(t.s0)},      {"g", t.goal},
          {"G", t.return_g},          {"s2", to_json(t.s_end)},
          {"term", t.end_terminal},   {"steps", t.steps}};
}

inline MetaTransition meta_transition_from_json(const nlohmann::json& j) {
  MetaTransition t;
  t.s0 = gridpos_from_json(j.at("s0"));
  t.goal = j.at("g").get<int>();
  t.return_g = j.at("G").get<double>();
  t.s_end = gridpos_from_json(j.at("s2"));
  t.end_terminal = j.at("term").get<bool>();
  t.steps = j.at("steps").get<int>();
  return t;
}

// Dumps start with a header line carrying the format tag and, optionally,
// the grid dimensions so downstream tools can normalize positions without
// the layout file.
struct MemoryDumpHeader {
  std::string kind;  // "transition" | "intrinsic" | "meta"
  int width = 0;     // 0 when unknown
  int height = 0;
};

inline void write_dump_header(std::ostream& os, const MemoryDumpHeader& h) {
  nlohmann::json j{{"format", "hrl-memory"},
                   {"format_version", kMemoryFormatVersion},
                   {"kind", h.kind}};
  if (h.width > 0) {
    j["width"] = h.width;
    j["height"] = h.height;
  }
  os << j.dump() << '\n';
}

inline MemoryDumpHeader read_dump_header(std::istream& is, const std::string& expect_kind) {
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("memory dump: empty file");
  const auto j = nlohmann::json::parse(line);
  if (j.value("format", "") != "hrl-memory")
    throw std::runtime_error("memory dump: missing hrl-memory header");
  MemoryDumpHeader h;
  h.kind = j.at("kind").get<std::string>();
  if (!expect_kind.empty() && h.kind != expect_kind)
    throw std::runtime_error("memory dump: kind \"" + h.kind + "\", expected \"" +
                             expect_kind + "\"");
  h.width = j.value("width", 0);
  h.height = j.value("height", 0);
  return h;
}

inline void dump_jsonl(const ReplayBuffer<Transition>& buf, std::ostream& os,
                       int width = 0, int height = 0) {
  write_dump_header(os, {"transition", width, height});
  for (const auto& t : buf) os << to_json(t).dump() << '\n';
}

inline MemoryDumpHeader load_jsonl(std::istream& is, ReplayBuffer<Transition>& buf) {
  const auto h = read_dump_header(is, "transition");
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    buf.push(transition_from_json(nlohmann::json::parse(line)));
  }
  return h;
}

}  // namespace hrl
