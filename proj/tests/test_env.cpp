#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "hrl/env.hpp"

using namespace hrl;

namespace {

// Upper-tail chi-square critical value via the Wilson-Hilferty cube
// approximation; z is the standard normal quantile of the same tail.
double chi_square_critical(int dof, double z) {
  const double a = 2.0 / (9.0 * dof);
  const double c = 1.0 - a + z * std::sqrt(a);
  return dof * c * c * c;
}

constexpr double kZ99 = 2.3263478740;  // N(0,1) quantile at 0.99

double chi_square_statistic(const std::map<std::pair<int, int>, int>& counts,
                            const std::vector<GridPos>& support, double total) {
  const double expected = total / static_cast<double>(support.size());
  double stat = 0.0;
  for (const auto& cell : support) {
    const auto it = counts.find({cell.x, cell.y});
    const double obs = it == counts.end() ? 0.0 : it->second;
    stat += (obs - expected) * (obs - expected) / expected;
  }
  return stat;
}

Layout tiny_key_lock() {
  Layout l;
  l.width = 5;
  l.height = 5;
  l.variant = Variant::FourRoomKeyLock;
  l.key_pos = {1, 1};
  l.reward_pos = {3, 3};
  l.max_steps = 200;
  l.rebuild_mask();
  return l;
}

EnvState at(const Layout& l, GridPos p, bool key = false, int steps = 0) {
  EnvState s;
  s.layout = &l;
  s.agent = p;
  s.has_key = key;
  s.step_count = steps;
  return s;
}

}  // namespace

TEST_CASE("layout generation is deterministic per seed") {
  const Layout a = generate_layout(Variant::FourRoomKeyLock, 7);
  const Layout b = generate_layout(Variant::FourRoomKeyLock, 7);
  CHECK(to_json(a) == to_json(b));
  const Layout c = generate_layout(Variant::FourRoomKeyLock, 8);
  CHECK(to_json(a) != to_json(c));
}

TEST_CASE("four-room layouts satisfy the structural invariants") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Layout l = generate_layout(Variant::FourRoomKeyLock, seed);
    REQUIRE(l.doorways.size() == 4);
    CHECK(l.key_pos != l.reward_pos);
    CHECK_FALSE(l.is_wall(l.key_pos));
    CHECK_FALSE(l.is_wall(l.reward_pos));
    for (const auto& d : l.doorways) {
      CHECK_FALSE(l.is_wall(d));
      CHECK(l.in_bounds(d));
    }
    // Doorways sit on the two wall lines, one per segment.
    const int wx = l.width / 2, wy = l.height / 2;
    int top = 0, bottom = 0, left = 0, right = 0;
    for (const auto& d : l.doorways) {
      if (d.x == wx && d.y < wy) ++top;
      if (d.x == wx && d.y > wy) ++bottom;
      if (d.y == wy && d.x < wx) ++left;
      if (d.y == wy && d.x > wx) ++right;
    }
    CHECK(top == 1);
    CHECK(bottom == 1);
    CHECK(left == 1);
    CHECK(right == 1);
  }
}

TEST_CASE("key placement is uniform over eligible cells") {
  // Eligible cells never lie on the interior wall lines, which are fixed
  // across seeds; only the doorway gaps move.
  const int n_seeds = 5000;
  std::map<std::pair<int, int>, int> counts;
  Layout probe = generate_layout(Variant::FourRoomKeyLock, 0);
  const int wx = probe.width / 2, wy = probe.height / 2;
  std::vector<GridPos> support;
  for (int y = 0; y < probe.height; ++y)
    for (int x = 0; x < probe.width; ++x)
      if (x != wx && y != wy) support.push_back({x, y});

  for (std::uint64_t seed = 0; seed < n_seeds; ++seed) {
    const Layout l = generate_layout(Variant::FourRoomKeyLock, seed);
    CHECK(l.key_pos.x != wx);
    CHECK(l.key_pos.y != wy);
    counts[{l.key_pos.x, l.key_pos.y}]++;
  }
  const double stat = chi_square_statistic(counts, support, n_seeds);
  const double critical = chi_square_critical(static_cast<int>(support.size()) - 1, kZ99);
  INFO("chi2 " << stat << " critical " << critical);
  CHECK(stat < critical);  // p > 0.01
}

TEST_CASE("reset starts uniformly over non-wall cells with no key") {
  const Layout l = generate_layout(Variant::FourRoomKeyLock, 3);
  std::vector<GridPos> support;
  for (int y = 0; y < l.height; ++y)
    for (int x = 0; x < l.width; ++x)
      if (!l.is_wall({x, y})) support.push_back({x, y});

  Rng rng(11);
  std::map<std::pair<int, int>, int> counts;
  const int n = 5000;
  for (int i = 0; i < n; ++i) {
    const EnvState s = reset(l, rng);
    CHECK_FALSE(s.has_key);
    CHECK(s.step_count == 0);
    counts[{s.agent.x, s.agent.y}]++;
  }
  const double stat = chi_square_statistic(counts, support, n);
  CHECK(stat < chi_square_critical(static_cast<int>(support.size()) - 1, kZ99));

  Rng r1(42), r2(42);
  CHECK(reset(l, r1).agent == reset(l, r2).agent);
}

TEST_CASE("step implements the reward structure") {
  const Layout l = tiny_key_lock();

  SECTION("moving onto the key pays +10 and sets the key bit") {
    auto [next, out] = step(at(l, {1, 2}), Action::North);
    CHECK(out.reward == 10.0);
    CHECK(next.has_key);
    CHECK_FALSE(out.terminal);
  }
  SECTION("bumping the boundary costs -2 and stays put") {
    auto [next, out] = step(at(l, {0, 0}), Action::West);
    CHECK(out.reward == -2.0);
    CHECK(next.agent == GridPos{0, 0});
    CHECK(next.step_count == 1);  // a bump still consumes the step
  }
  SECTION("bumping an interior wall behaves the same") {
    Layout walled = tiny_key_lock();
    walled.walls.push_back({2, 2});
    walled.rebuild_mask();
    auto [next, out] = step(at(walled, {1, 2}), Action::East);
    CHECK(out.reward == -2.0);
    CHECK(next.agent == GridPos{1, 2});
  }
  SECTION("the lock without the key is an ordinary cell") {
    auto [next, out] = step(at(l, {3, 2}), Action::South);
    CHECK(out.reward == 0.0);
    CHECK_FALSE(out.terminal);
    CHECK(next.agent == l.reward_pos);
  }
  SECTION("the lock with the key ends the episode at +40") {
    auto [next, out] = step(at(l, {3, 2}, true), Action::South);
    CHECK(out.reward == 40.0);
    CHECK(out.terminal);
    CHECK(task_solved(next));
  }
  SECTION("the car variant pays +100") {
    Layout car = tiny_key_lock();
    car.variant = Variant::FourRoomKeyCar;
    auto [next, out] = step(at(car, {3, 2}, true), Action::South);
    CHECK(out.reward == 100.0);
    CHECK(out.terminal);
  }
  SECTION("re-entering the key cell after pickup pays nothing") {
    auto [mid, _] = step(at(l, {1, 1}, true), Action::East);
    auto [back, out2] = step(mid, Action::West);
    CHECK(back.agent == l.key_pos);
    CHECK(out2.reward == 0.0);
  }
  SECTION("the step cap terminates the episode") {
    Layout capped = tiny_key_lock();
    capped.max_steps = 2;
    auto s = at(capped, {0, 0});
    auto [s1, o1] = step(s, Action::East);
    CHECK_FALSE(o1.terminal);
    auto [s2, o2] = step(s1, Action::East);
    CHECK(o2.terminal);
    CHECK(is_terminal(s2));
  }
  SECTION("stepping a terminal state is a contract violation") {
    Layout capped = tiny_key_lock();
    capped.max_steps = 1;
    auto [s1, o1] = step(at(capped, {0, 0}), Action::East);
    REQUIRE(o1.terminal);
    CHECK_THROWS_AS(step(s1, Action::East), std::logic_error);
  }
}

TEST_CASE("observation exposes the position and hides the key bit") {
  const Layout l = tiny_key_lock();
  CHECK(observation(at(l, {3, 4}, false)) == GridPos{3, 4});
  CHECK(observation(at(l, {3, 4}, true)) == GridPos{3, 4});
  // Invariant under key flips at any position.
  for (int y = 0; y < l.height; ++y)
    for (int x = 0; x < l.width; ++x)
      CHECK(observation(at(l, {x, y}, false)) == observation(at(l, {x, y}, true)));
}

TEST_CASE("movement is reversible off special cells") {
  const Layout l = generate_layout(Variant::FourRoomKeyLock, 5);
  Rng rng(99);
  int checked = 0;
  while (checked < 200) {
    EnvState s = reset(l, rng);
    const GridPos east = moved(s.agent, Action::East);
    if (l.blocked(east) || east == l.key_pos) continue;
    auto [s1, o1] = step(s, Action::East);
    auto [s2, o2] = step(s1, Action::West);
    CHECK(s2.agent == s.agent);
    ++checked;
  }
}

TEST_CASE("key/lock episodes never exceed +50 total reward and key bit is monotone") {
  const Layout l = generate_layout(Variant::FourRoomKeyLock, 12);
  Rng rng(7);
  for (int ep = 0; ep < 200; ++ep) {
    EnvState s = reset(l, rng);
    double total = 0.0;
    bool had_key = s.has_key;
    while (!is_terminal(s)) {
      const Action a = static_cast<Action>(uniform_index(rng, 4));
      auto [next, out] = step(s, a);
      total += out.reward;
      CHECK(next.has_key >= had_key);  // monotone within the episode
      had_key = next.has_key;
      s = next;
      if (out.terminal) break;
    }
    // Bumps only subtract; the cap is key + lock.
    CHECK(total <= 50.0);
    if (task_solved(s)) CHECK(total <= 10.0 + 40.0);
  }
}

TEST_CASE("identical seeds and action sequences give bit-identical trajectories") {
  const Layout l = generate_layout(Variant::FourRoomKeyLock, 21);
  std::vector<Action> actions;
  Rng arng(5);
  for (int i = 0; i < 300; ++i) actions.push_back(static_cast<Action>(uniform_index(arng, 4)));

  const auto run = [&](std::uint64_t seed) {
    Rng rng(seed);
    EnvState s = reset(l, rng);
    std::vector<double> rewards;
    for (const Action a : actions) {
      if (is_terminal(s)) break;
      auto [next, out] = step(s, a);
      rewards.push_back(out.reward);
      s = next;
      if (out.terminal) break;
    }
    return rewards;
  };
  CHECK(run(4) == run(4));
}

TEST_CASE("dynamic goal environment draws uniform goals") {
  const auto [layout, first_goal] = dynamic_goal_env(3, {8, 8, 200, false});
  CHECK(layout.variant == Variant::SingleRoomDynamicGoal);
  CHECK(layout.in_bounds(first_goal));

  std::vector<GridPos> support;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) support.push_back({x, y});
  Rng rng(17);
  std::map<std::pair<int, int>, int> counts;
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    const GridPos g = sample_goal(layout, rng);
    counts[{g.x, g.y}]++;
  }
  CHECK(chi_square_statistic(counts, support, n) <
        chi_square_critical(static_cast<int>(support.size()) - 1, kZ99));
}

TEST_CASE("easy placement pins corners / picks adjacent goals") {
  const Layout l = generate_layout(Variant::FourRoomKeyCar, 9, {20, 20, 200, true});
  CHECK(l.key_pos == GridPos{0, 0});
  CHECK(l.reward_pos == GridPos{19, 19});

  const auto [room, g0] = dynamic_goal_env(4, {8, 8, 200, true});
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    const GridPos start{3, 3};
    const GridPos g = sample_goal(room, rng, true, start);
    const int dist = std::abs(g.x - start.x) + std::abs(g.y - start.y);
    CHECK(dist == 1);
  }
}

TEST_CASE("single-room variant has no key or reward semantics") {
  Layout l = generate_layout(Variant::SingleRoomDynamicGoal, 2, {8, 8, 200, false});
  auto s = at(l, {l.key_pos.x, l.key_pos.y});
  // Walk onto the key cell from a neighbor: nothing special happens.
  const GridPos nb{l.key_pos.x > 0 ? l.key_pos.x - 1 : l.key_pos.x + 1, l.key_pos.y};
  auto [next, out] = step(at(l, nb), l.key_pos.x > 0 ? Action::East : Action::West);
  CHECK(out.reward == 0.0);
  CHECK_FALSE(next.has_key);
}

TEST_CASE("layout serializes to JSON and back") {
  const Layout l = generate_layout(Variant::FourRoomKeyLock, 31);
  const Layout round = layout_from_json(to_json(l));
  CHECK(to_json(round) == to_json(l));
  CHECK(to_json(l).at("format_version").get<int>() == kLayoutFormatVersion);
}
