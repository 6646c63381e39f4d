#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "hrl/agents.hpp"

using namespace hrl;

TEST_CASE("intrinsic reward matches its case definition exhaustively") {
  const std::array<double, 5> rewards{-2.0, -1.0, 0.0, 10.0, 40.0};
  for (const double r : rewards) {
    CHECK(intrinsic_reward(true, r) == 1.0);
    CHECK(intrinsic_reward(false, r) == std::min(r, -1.0));
  }
  CHECK(intrinsic_reward(false, -2.0) == -2.0);
  CHECK(intrinsic_reward(false, 0.0) == -1.0);
  // Range property: {+1} or <= -1, never 0.
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const double r = uniform_real(rng, -50.0, 50.0);
    const double v = intrinsic_reward(uniform_unit(rng) < 0.5, r);
    CHECK((v == 1.0 || v <= -1.0));
  }
}

TEST_CASE("epsilon-greedy selection") {
  SECTION("pure greedy picks the argmax") {
    Rng rng(1);
    const std::vector<double> v{1.0, 5.0, 2.0};
    CHECK(epsilon_greedy(v, 0.0, rng) == 1);
  }
  SECTION("ties break toward the lowest index") {
    Rng rng(1);
    const std::vector<double> v{7.0, 7.0, 3.0};
    CHECK(epsilon_greedy(v, 0.0, rng) == 0);
  }
  SECTION("greedy is a pure function of the values (seed independent)") {
    const std::vector<double> v{0.5, -0.25, 0.75, 0.1};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      CHECK(epsilon_greedy(v, 0.0, rng) == 2);
    }
  }
  SECTION("epsilon 1 explores uniformly: each of 4 actions near 25%") {
    Rng rng(99);
    const std::vector<double> v{0.0, 9.0, 1.0, 2.0};
    std::map<int, int> counts;
    const int n = 100000;
    for (int i = 0; i < n; ++i) counts[epsilon_greedy(v, 1.0, rng)]++;
    for (int a = 0; a < 4; ++a)
      CHECK(counts[a] / static_cast<double>(n) == Catch::Approx(0.25).margin(0.01));
  }
  SECTION("positive scaling leaves the greedy choice unchanged") {
    Rng value_rng(5);
    for (int rep = 0; rep < 100; ++rep) {
      std::vector<double> v(4);
      for (auto& x : v) x = uniform_real(value_rng, -3.0, 3.0);
      const double scale = uniform_real(value_rng, 0.1, 10.0);
      std::vector<double> scaled = v;
      for (auto& x : scaled) x *= scale;
      Rng r1(1), r2(1);
      CHECK(epsilon_greedy(v, 0.0, r1) == epsilon_greedy(scaled, 0.0, r2));
    }
  }
  SECTION("bad inputs are contract violations") {
    Rng rng(1);
    CHECK_THROWS_AS(epsilon_greedy(std::vector<double>{}, 0.0, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(epsilon_greedy(std::vector<double>{1.0}, 1.5, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("epsilon schedule decays monotonically and flattens at the end") {
  EpsilonSchedule sched(1.0, 0.1, 100);
  double prev = sched.value();
  CHECK(prev == 1.0);
  for (int i = 0; i < 150; ++i) {
    sched.advance();
    const double cur = sched.value();
    CHECK(cur <= prev);
    prev = cur;
  }
  CHECK(sched.value() == 0.1);
  CHECK(sched.value_at(100) == 0.1);
  CHECK(sched.value_at(1000000) == 0.1);

  EpsilonSchedule constant(0.2, 0.2, 0);
  constant.advance();
  CHECK(constant.value() == 0.2);

  CHECK_THROWS_AS(EpsilonSchedule(0.1, 0.5, 10), std::invalid_argument);
  CHECK_THROWS_AS(EpsilonSchedule(1.5, 0.1, 10), std::invalid_argument);
}

namespace {

struct ControllerFixture {
  ControllerAgent agent;
  GoalTable goals;
  StateCodeCache codes;

  ControllerFixture(int width, int height, Rng& rng)
      : agent{StateGoalNet(GaussianCoder(5, 5), 20, 2), EpsilonSchedule(0.2, 0.2, 0),
              0.01, 0.99},
        goals(&agent.net),
        codes(&agent.net, width, height) {
    agent.net.init_weights(rng, 0.05);
  }
};

}  // namespace

TEST_CASE("controller TD update") {
  Rng rng(11);
  const int W = 8, H = 8;

  SECTION("an attained sample pulls q(s,g,a) toward +1") {
    ControllerFixture fx(W, H, rng);
    const GridPos s{2, 2}, s2{3, 2};
    const int goal = fx.goals.add(normalized({3, 2}, W, H));
    const IntrinsicTransition t{s, goal, Action::East, 1.0, s2, true, false};
    const auto q0 = fx.agent.net.q_values(fx.codes.at(s), fx.goals.gate(goal));
    std::vector<IntrinsicTransition> batch(1, t);
    for (int i = 0; i < 400; ++i) controller_td_update(fx.agent, batch, fx.goals, fx.codes);
    const auto q1 = fx.agent.net.q_values(fx.codes.at(s), fx.goals.gate(goal));
    CHECK(q1[2] > q0[2]);
    CHECK(q1[2] == Catch::Approx(1.0).margin(0.05));
  }

  SECTION("the TD error equals hand arithmetic on a fixed net") {
    ControllerFixture fx(W, H, rng);
    const GridPos s{1, 1}, s2{2, 1};
    const int goal = fx.goals.add(normalized({5, 5}, W, H));

    // Non-terminal, not attained: target bootstraps from s'.
    const IntrinsicTransition t{s, goal, Action::South, -1.0, s2, false, false};
    StateGoalNet manual = fx.agent.net;
    {
      const auto q_next = manual.q_values(fx.codes.at(s2), fx.goals.gate(goal));
      const double target =
          t.r_intrinsic + fx.agent.gamma * *std::max_element(q_next.begin(), q_next.end());
      const auto code = fx.agent.net.encode_state(normalized(s, W, H));
      const auto f = manual.forward(code, fx.goals.gate(goal));
      manual.backprop_update(f, code, static_cast<int>(t.a),
                             target - f.q[static_cast<int>(t.a)], fx.agent.alpha1);
    }
    std::vector<IntrinsicTransition> batch(1, t);
    controller_td_update(fx.agent, batch, fx.goals, fx.codes);
    CHECK(fx.agent.net.w1() == manual.w1());
    CHECK(fx.agent.net.w2() == manual.w2());
  }

  SECTION("attained and terminal samples drop the bootstrap term") {
    ControllerFixture fx(W, H, rng);
    const GridPos s{1, 1}, s2{2, 1};
    const int goal = fx.goals.add(normalized({2, 1}, W, H));
    for (const bool attained : {true, false}) {
      const IntrinsicTransition t{s, goal, Action::East, attained ? 1.0 : -1.0, s2,
                                  attained, !attained};
      StateGoalNet manual = fx.agent.net;
      {
        const auto code = fx.agent.net.encode_state(normalized(s, W, H));
        const auto f = manual.forward(code, fx.goals.gate(goal));
        manual.backprop_update(f, code, static_cast<int>(t.a),
                               t.r_intrinsic - f.q[static_cast<int>(t.a)],
                               fx.agent.alpha1);
      }
      std::vector<IntrinsicTransition> batch(1, t);
      controller_td_update(fx.agent, batch, fx.goals, fx.codes);
      CHECK(fx.agent.net.w2() == manual.w2());
    }
  }

  SECTION("a batch of duplicates equals repeated single updates") {
    ControllerFixture a(W, H, rng);
    Rng rng2(11);  // identical weights
    ControllerFixture b(W, H, rng2);
    const int ga = a.goals.add(normalized({4, 4}, W, H));
    const int gb = b.goals.add(normalized({4, 4}, W, H));
    const IntrinsicTransition t{{1, 2}, ga, Action::North, -1.0, {1, 1}, false, false};
    IntrinsicTransition tb = t;
    tb.goal = gb;
    std::vector<IntrinsicTransition> batch(3, t);
    controller_td_update(a.agent, batch, a.goals, a.codes);
    std::vector<IntrinsicTransition> single(1, tb);
    for (int i = 0; i < 3; ++i) controller_td_update(b.agent, single, b.goals, b.codes);
    CHECK(a.agent.net.w1() == b.agent.net.w1());
    CHECK(a.agent.net.w2() == b.agent.net.w2());
  }
}

TEST_CASE("meta subgoal selection is greedy over the state's table row") {
  SubgoalSet gset;
  gset.merge_radius = 0.05;
  KMeansState kstate;
  kstate.k = 2;
  kstate.centroids = {{0.25, 0.5}, {0.75, 0.5}};
  kstate.ready = true;
  gset.set_centroids(kstate.centroids);
  gset.add_anomaly({0.5, 0.0});

  MetaControllerAgent meta{MetaQTable(3, 3), EpsilonSchedule(0.0, 0.0, 0), 0.1, 0.99,
                           MetaDiscountMode::GammaPowT};
  meta.table.set(0, 1, 3.0);
  meta.table.set(0, 2, 1.0);
  Rng rng(5);
  // State in the left cluster -> row 0 -> argmax is subgoal 1.
  CHECK(meta_select_subgoal(meta, {2, 10}, gset, kstate, 20, 20, rng) == 1);

  SECTION("an empty subgoal set is a contract violation") {
    SubgoalSet empty;
    CHECK_THROWS_AS(meta_select_subgoal(meta, {2, 10}, empty, kstate, 20, 20, rng),
                    std::logic_error);
  }
  SECTION("full exploration is uniform over subgoals") {
    MetaControllerAgent explorer{MetaQTable(3, 3), EpsilonSchedule(1.0, 1.0, 0), 0.1,
                                 0.99, MetaDiscountMode::GammaPowT};
    std::map<int, int> counts;
    const int n = 30000;
    for (int i = 0; i < n; ++i)
      counts[meta_select_subgoal(explorer, {2, 10}, gset, kstate, 20, 20, rng)]++;
    for (int g = 0; g < 3; ++g)
      CHECK(counts[g] / static_cast<double>(n) == Catch::Approx(1.0 / 3).margin(0.01));
  }
}

namespace {

// Tiny deterministic gridworld shared by the SARSA test and its value
// iteration oracle: 3x3 room, terminal +10 at (2,2), -2 bumps.
struct TinyWorld {
  static constexpr int N = 3;
  static bool terminal(GridPos p) { return p.x == 2 && p.y == 2; }
  static std::pair<GridPos, double> apply(GridPos p, Action a) {
    const GridPos t = moved(p, a);
    if (t.x < 0 || t.x >= N || t.y < 0 || t.y >= N) return {p, -2.0};
    if (terminal(t)) return {t, 10.0};
    return {t, 0.0};
  }
};

}  // namespace

TEST_CASE("SARSA learns the value-iteration greedy policy on a 3x3 world") {
  const double gamma = 0.99;
  // Value iteration oracle over the 9-state MDP.
  double q_star[3][3][4] = {};
  for (int sweep = 0; sweep < 5000; ++sweep) {
    double next[3][3][4];
    double diff = 0.0;
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x)
        for (int a = 0; a < 4; ++a) {
          const auto [p2, r] = TinyWorld::apply({x, y}, static_cast<Action>(a));
          double tgt = r;
          if (!TinyWorld::terminal(p2)) {
            double best = q_star[p2.y][p2.x][0];
            for (int b = 1; b < 4; ++b) best = std::max(best, q_star[p2.y][p2.x][b]);
            tgt += gamma * best;
          }
          next[y][x][a] = tgt;
          diff = std::max(diff, std::abs(tgt - q_star[y][x][a]));
        }
    std::memcpy(q_star, next, sizeof q_star);
    if (diff < 1e-13) break;
  }

  // SARSA with the matched function approximator, on-policy epsilon-greedy.
  Rng rng(8);
  StateGoalNet net(GaussianCoder(5, 5), 20, 2);
  net.init_weights(rng, 0.05);
  SarsaBaseline agent(std::move(net));
  agent.alpha = 0.005;
  agent.gamma = gamma;
  agent.eps = EpsilonSchedule(0.3, 0.3, 0);
  StateCodeCache codes(&agent.net, 3, 3);

  for (int ep = 0; ep < 5000; ++ep) {
    GridPos p{static_cast<int>(uniform_index(rng, 3)), static_cast<int>(uniform_index(rng, 3))};
    if (TinyWorld::terminal(p)) continue;
    auto q = agent.net.q_values(codes.at(p), agent.gate);
    Action a = static_cast<Action>(epsilon_greedy(q, agent.eps.value(), rng));
    for (int t = 0; t < 30; ++t) {
      const auto [p2, r] = TinyWorld::apply(p, a);
      const bool terminal = TinyWorld::terminal(p2);
      Action a2 = a;
      if (!terminal) {
        const auto q2 = agent.net.q_values(codes.at(p2), agent.gate);
        a2 = static_cast<Action>(epsilon_greedy(q2, agent.eps.value(), rng));
      }
      sarsa_update(agent, codes.at(p), a, r, codes.at(p2), a2, terminal);
      p = p2;
      a = a2;
      if (terminal) break;
    }
  }

  int agree = 0, states = 0;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      if (TinyWorld::terminal({x, y})) continue;
      ++states;
      const auto q = agent.net.q_values(codes.at({x, y}), agent.gate);
      int greedy = 0;
      for (int a = 1; a < 4; ++a)
        if (q[a] > q[greedy]) greedy = a;
      double best = q_star[y][x][0];
      for (int a = 1; a < 4; ++a) best = std::max(best, q_star[y][x][a]);
      if (q_star[y][x][greedy] >= best - 1e-9) ++agree;  // ties count as optimal
    }
  INFO("agreement " << agree << "/" << states);
  CHECK(agree >= static_cast<int>(std::ceil(0.95 * states)));
}

TEST_CASE("sarsa_update handles terminal targets and zero error") {
  Rng rng(10);
  StateGoalNet net(GaussianCoder(5, 5), 20, 2);
  SarsaBaseline agent(std::move(net));  // all-zero weights
  agent.alpha = 0.05;
  StateCodeCache codes(&agent.net, 5, 5);

  SECTION("zero TD error leaves weights unchanged") {
    const auto w1 = agent.net.w1();
    // Zero net, r = 0, non-terminal: target 0, q 0, delta 0.
    sarsa_update(agent, codes.at({1, 1}), Action::East, 0.0, codes.at({2, 1}),
                 Action::East, false);
    CHECK(agent.net.w1() == w1);
  }
  SECTION("a terminal +10 moves q(s,a) toward 10") {
    for (int i = 0; i < 500; ++i)
      sarsa_update(agent, codes.at({1, 1}), Action::East, 10.0, codes.at({2, 1}),
                   Action::East, true);
    const auto q = agent.net.q_values(codes.at({1, 1}), agent.gate);
    CHECK(q[2] == Catch::Approx(10.0).margin(0.5));
  }
}

TEST_CASE("goal tables mirror a subgoal set and follow centroid moves") {
  StateGoalNet net(GaussianCoder(5, 5), 10, 1);
  GoalTable table(&net);
  SubgoalSet gset;
  gset.merge_radius = 0.02;
  gset.add_anomaly({0.2, 0.8});
  gset.set_centroids({{0.25, 0.25}, {0.75, 0.75}});
  table.sync(gset);
  REQUIRE(table.size() == 3);
  CHECK(table.point(0) == Point2{0.2, 0.8});
  gset.set_centroids({{0.3, 0.3}, {0.7, 0.7}});
  table.sync(gset);
  CHECK(table.point(1) == Point2{0.3, 0.3});
  CHECK(table.size() == 3);
}
