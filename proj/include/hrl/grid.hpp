#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace hrl {

struct GridPos {
  int x = 0;  // column, 0-based
  int y = 0;  // row, 0-based

  friend bool operator==(const GridPos& a, const GridPos& b) {
    return a.x == b.x && a.y == b.y;
  }
  friend bool operator!=(const GridPos& a, const GridPos& b) { return !(a == b); }
  friend bool operator<(const GridPos& a, const GridPos& b) {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  }
};

enum class Action : int { North = 0, South = 1, East = 2, West = 3 };

inline constexpr int kActionCount = 4;
inline constexpr std::array<Action, 4> kAllActions = {Action::North, Action::South,
                                                      Action::East, Action::West};

// North decreases the row index, South increases it.
inline GridPos moved(GridPos p, Action a) {
  switch (a) {
    case Action::North: return {p.x, p.y - 1};
    case Action::South: return {p.x, p.y + 1};
    case Action::East: return {p.x + 1, p.y};
    case Action::West: return {p.x - 1, p.y};
  }
  throw std::invalid_argument("moved: bad action value");
}

inline const char* to_string(Action a) {
  switch (a) {
    case Action::North: return "north";
    case Action::South: return "south";
    case Action::East: return "east";
    case Action::West: return "west";
  }
  return "?";
}

inline Action action_from_index(int i) {
  if (i < 0 || i >= kActionCount)
    throw std::invalid_argument("action_from_index: index " + std::to_string(i) +
                                " outside [0,3]");
  return static_cast<Action>(i);
}

// Continuous point, used for normalized grid coordinates in [0,1]^2.
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2& a, const Point2& b) {
    return a.x == b.x && a.y == b.y;
  }
};

inline double squared_distance(const Point2& a, const Point2& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

inline double distance(const Point2& a, const Point2& b) {
  return std::sqrt(squared_distance(a, b));
}

// Maps a cell to [0,1]^2 so that the grid corners land exactly on the unit
// square corners. Width/height 1 collapses to the midpoint.
inline Point2 normalized(GridPos p, int width, int height) {
  const double nx = width > 1 ? static_cast<double>(p.x) / (width - 1) : 0.5;
  const double ny = height > 1 ? static_cast<double>(p.y) / (height - 1) : 0.5;
  return {nx, ny};
}

// Inverse of normalized() for points that came from cells.
inline GridPos cell_from_normalized(const Point2& p, int width, int height) {
  const int cx = width > 1 ? static_cast<int>(std::lround(p.x * (width - 1))) : 0;
  const int cy = height > 1 ? static_cast<int>(std::lround(p.y * (height - 1))) : 0;
  return {cx, cy};
}

}  // namespace hrl
