#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hrl/grid.hpp"
#include "hrl/rng.hpp"

namespace hrl {

enum class Variant { SingleRoomDynamicGoal, FourRoomKeyCar, FourRoomKeyLock };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::SingleRoomDynamicGoal: return "single_room_dynamic_goal";
    case Variant::FourRoomKeyCar: return "four_room_key_car";
    case Variant::FourRoomKeyLock: return "four_room_key_lock";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "single_room_dynamic_goal") return Variant::SingleRoomDynamicGoal;
  if (s == "four_room_key_car") return Variant::FourRoomKeyCar;
  if (s == "four_room_key_lock") return Variant::FourRoomKeyLock;
  throw std::invalid_argument(
      "variant: got \"" + s +
      "\", expected one of single_room_dynamic_goal|four_room_key_car|four_room_key_lock");
}

/// Static description of one environment instance: geometry, special cells
/// and episode cap. Value type; episodes reference it without owning it.
struct Layout {
  int width = 20;
  int height = 20;
  std::vector<GridPos> walls;     // interior wall cells (outer boundary is implicit)
  std::vector<GridPos> doorways;  // gap cells in the interior walls
  GridPos key_pos{};
  GridPos reward_pos{};  // car or lock depending on variant
  Variant variant = Variant::FourRoomKeyLock;
  int max_steps = 200;

  bool in_bounds(GridPos p) const {
    return p.x >= 0 && p.x < width && p.y >= 0 && p.y < height;
  }
  bool is_wall(GridPos p) const {
    return std::find(walls.begin(), walls.end(), p) != walls.end();
  }
  bool blocked(GridPos p) const { return !in_bounds(p) || wall_mask_at(p); }

  double terminal_reward() const {
    return variant == Variant::FourRoomKeyCar ? 100.0 : 40.0;
  }

  // Cached wall lookup; rebuilt on demand after deserialization or edits.
  bool wall_mask_at(GridPos p) const {
    if (wall_mask_.size() != static_cast<std::size_t>(width) * height) rebuild_mask();
    return wall_mask_[static_cast<std::size_t>(p.y) * width + p.x] != 0;
  }
  void rebuild_mask() const {
    wall_mask_.assign(static_cast<std::size_t>(width) * height, 0);
    for (const auto& w : walls)
      wall_mask_[static_cast<std::size_t>(w.y) * width + w.x] = 1;
  }

 private:
  mutable std::vector<std::uint8_t> wall_mask_;
};

struct LayoutOptions {
  int width = 20;
  int height = 20;
  int max_steps = 200;
  // Easy placement pins the key and car/lock to opposite corners; for the
  // dynamic-goal task it instead places each episode's goal next to the start.
  bool easy_placement = false;
};

namespace detail {

inline std::vector<GridPos> free_cells(const Layout& l, bool exclude_doorways) {
  std::vector<GridPos> cells;
  cells.reserve(static_cast<std::size_t>(l.width) * l.height);
  for (int y = 0; y < l.height; ++y)
    for (int x = 0; x < l.width; ++x) {
      GridPos p{x, y};
      if (l.is_wall(p)) continue;
      if (exclude_doorways &&
          std::find(l.doorways.begin(), l.doorways.end(), p) != l.doorways.end())
        continue;
      cells.push_back(p);
    }
  return cells;
}

}  // namespace detail

/// Builds a layout deterministically from (variant, seed). Four-room variants
/// place one doorway per interior wall segment and draw key/reward uniformly
/// over plain floor cells.
inline Layout generate_layout(Variant variant, std::uint64_t seed,
                              LayoutOptions opts = {}) {
  if (opts.width < 3 || opts.height < 3)
    throw std::invalid_argument("generate_layout: width/height must be >= 3");
  Rng rng(split_seed(seed, 0x1a70u));
  Layout l;
  l.width = opts.width;
  l.height = opts.height;
  l.max_steps = opts.max_steps;
  l.variant = variant;

  if (variant != Variant::SingleRoomDynamicGoal) {
    if (opts.width < 7 || opts.height < 7)
      throw std::invalid_argument("generate_layout: four-room variants need >= 7x7");
    const int wx = opts.width / 2;
    const int wy = opts.height / 2;
    // One doorway per wall segment, uniformly placed inside the segment.
    const GridPos door_top{wx, uniform_int(rng, 0, wy - 1)};
    const GridPos door_bottom{wx, uniform_int(rng, wy + 1, opts.height - 1)};
    const GridPos door_left{uniform_int(rng, 0, wx - 1), wy};
    const GridPos door_right{uniform_int(rng, wx + 1, opts.width - 1), wy};
    l.doorways = {door_top, door_bottom, door_left, door_right};
    for (int y = 0; y < opts.height; ++y) {
      GridPos p{wx, y};
      if (p != door_top && p != door_bottom) l.walls.push_back(p);
    }
    for (int x = 0; x < opts.width; ++x) {
      GridPos p{x, wy};
      if (p == GridPos{wx, wy}) continue;  // already added with the column
      if (p != door_left && p != door_right) l.walls.push_back(p);
    }
  }

  if (opts.easy_placement && variant != Variant::SingleRoomDynamicGoal) {
    l.key_pos = {0, 0};
    l.reward_pos = {opts.width - 1, opts.height - 1};
  } else {
    const auto cells = detail::free_cells(l, /*exclude_doorways=*/true);
    l.key_pos = cells[uniform_index(rng, cells.size())];
    do {
      l.reward_pos = cells[uniform_index(rng, cells.size())];
    } while (l.reward_pos == l.key_pos);
  }
  l.rebuild_mask();
  return l;
}

/// One episode's mutable state. Holds a non-owning pointer to its layout.
struct EnvState {
  GridPos agent{};
  bool has_key = false;
  int step_count = 0;
  const Layout* layout = nullptr;
};

struct StepOutcome {
  GridPos next_obs{};
  double reward = 0.0;
  bool terminal = false;
};

inline bool task_solved(const EnvState& s) {
  return s.layout->variant != Variant::SingleRoomDynamicGoal && s.has_key &&
         s.agent == s.layout->reward_pos;
}

inline bool is_terminal(const EnvState& s) {
  return task_solved(s) || s.step_count >= s.layout->max_steps;
}

/// Starts an episode at a uniformly random non-wall cell, key not held.
inline EnvState reset(const Layout& layout, Rng& rng) {
  const auto cells = detail::free_cells(layout, /*exclude_doorways=*/false);
  EnvState s;
  s.layout = &layout;
  s.agent = cells[uniform_index(rng, cells.size())];
  return s;
}

/// Applies one action. Blocked moves leave the position unchanged and cost
/// -2. Entering the key cell (first time) pays +10; entering the reward cell
/// while holding the key pays +40 (lock) or +100 (car) and ends the episode.
/// Stepping a terminal state is a contract violation.
inline std::pair<EnvState, StepOutcome> step(const EnvState& state, Action action) {
  if (is_terminal(state))
    throw std::logic_error("step: called on a terminal state");
  const Layout& l = *state.layout;
  EnvState next = state;
  StepOutcome out;
  const GridPos target = moved(state.agent, action);
  if (l.blocked(target)) {
    out.reward = -2.0;
  } else {
    next.agent = target;
    if (l.variant != Variant::SingleRoomDynamicGoal) {
      if (!next.has_key && target == l.key_pos) {
        next.has_key = true;
        out.reward = 10.0;
      } else if (next.has_key && target == l.reward_pos) {
        out.reward = l.terminal_reward();
        out.terminal = true;
      }
    }
  }
  next.step_count = state.step_count + 1;
  if (next.step_count >= l.max_steps) out.terminal = true;
  out.next_obs = next.agent;
  return {next, out};
}

/// The observable part of the state: position only. Key possession is hidden.
inline GridPos observation(const EnvState& s) { return s.agent; }

// --- Single-room dynamic-goal task -----------------------------------------

/// Draws a fresh goal cell for a dynamic-goal episode. With easy placement
/// the goal lands on a free cell adjacent to the start.
inline GridPos sample_goal(const Layout& layout, Rng& rng, bool easy = false,
                           GridPos start = {}) {
  if (easy) {
    std::vector<GridPos> nbrs;
    for (Action a : kAllActions) {
      GridPos p = moved(start, a);
      if (!layout.blocked(p)) nbrs.push_back(p);
    }
    if (!nbrs.empty()) return nbrs[uniform_index(rng, nbrs.size())];
  }
  const auto cells = detail::free_cells(layout, /*exclude_doorways=*/false);
  return cells[uniform_index(rng, cells.size())];
}

/// Single-room layout plus an initial goal, as used by the intrinsic
/// motivation experiments. Later episodes draw new goals via sample_goal.
inline std::pair<Layout, GridPos> dynamic_goal_env(std::uint64_t seed,
                                                   LayoutOptions opts = {}) {
  Layout l = generate_layout(Variant::SingleRoomDynamicGoal, seed, opts);
  Rng rng(split_seed(seed, 0x60a1u));
  GridPos goal = sample_goal(l, rng);
  return {std::move(l), goal};
}

// --- JSON -------------------------------------------------------------------

inline constexpr int kLayoutFormatVersion = 1;

inline nlohmann::json to_json(const GridPos& p) { return nlohmann::json{p.x, p.y}; }

inline GridPos gridpos_from_json(const nlohmann::json& j) {
  return GridPos{j.at(0).get<int>(), j.at(1).get<int>()};
}

inline nlohmann::json to_json(const Layout& l) {
  nlohmann::json walls = nlohmann::json::array();
  for (const auto& w : l.walls) walls.push_back(to_json(w));
  nlohmann::json doors = nlohmann::json::array();
  for (const auto& d : l.doorways) doors.push_back(to_json(d));
  return nlohmann::json{{"format_version", kLayoutFormatVersion},
                        {"width", l.width},
                        {"height", l.height},
                        {"walls", walls},
                        {"doorways", doors},
                        {"key_pos", to_json(l.key_pos)},
                        {"reward_pos", to_json(l.reward_pos)},
                        {"variant", to_string(l.variant)},
                        {"max_steps", l.max_steps}};
}

inline Layout layout_from_json(const nlohmann::json& j) {
  Layout l;
  l.width = j.at("width").get<int>();
  l.height = j.at("height").get<int>();
  for (const auto& w : j.at("walls")) l.walls.push_back(gridpos_from_json(w));
  for (const auto& d : j.at("doorways")) l.doorways.push_back(gridpos_from_json(d));
  l.key_pos = gridpos_from_json(j.at("key_pos"));
  l.reward_pos = gridpos_from_json(j.at("reward_pos"));
  l.variant = variant_from_string(j.at("variant").get<std::string>());
  l.max_steps = j.value("max_steps", 200);
  l.rebuild_mask();
  return l;
}

}  // namespace hrl
