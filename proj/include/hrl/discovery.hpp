#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hrl/grid.hpp"
#include "hrl/memory.hpp"
#include "hrl/rng.hpp"

namespace hrl {

// --- Anomaly detection --------------------------------------------------------

/// Flags experiences whose reward stands out from the regular stream (and,
/// when the feature-distance check is enabled, whose state jump is large).
/// A registry keeps each distinct state from being promoted twice.
struct AnomalyDetector {
  double positive_threshold = 1.0;
  std::optional<double> feature_distance_threshold;  // normalized units
  double merge_radius = 0.0;  // registry dedup radius, normalized units
  int width = 0;              // grid dims used to normalize positions
  int height = 0;

  AnomalyDetector() = default;
  AnomalyDetector(double threshold, int width_, int height_, double merge_radius_,
                  std::optional<double> feature_threshold = std::nullopt)
      : positive_threshold(threshold),
        feature_distance_threshold(feature_threshold),
        merge_radius(merge_radius_),
        width(width_),
        height(height_) {}

  /// Raw anomaly predicate, no dedup. Used for memory removal.
  bool is_anomalous(const Transition& t) const {
    if (t.r < positive_threshold) return false;
    if (feature_distance_threshold) {
      const double jump = distance(normalized(t.s, width, height),
                                   normalized(t.s_next, width, height));
      if (jump < *feature_distance_threshold) return false;
    }
    return true;
  }

  /// Dedup-gated detection: true only the first time a state (within the
  /// merge radius) shows up as anomalous. Registers the state on success.
  bool detect(const Transition& t) {
    if (!is_anomalous(t)) return false;
    const Point2 p = normalized(t.s_next, width, height);
    for (const auto& seen : registry_)
      if (distance(seen, p) <= merge_radius + 1e-12) return false;
    registry_.push_back(p);
    return true;
  }

  const std::vector<Point2>& registry() const { return registry_; }

 private:
  std::vector<Point2> registry_;
};

inline bool detect_anomaly(AnomalyDetector& d, const Transition& t) {
  return d.detect(t);
}

// --- Subgoals -------------------------------------------------------------------

enum class SubgoalKind { Anomaly, Centroid };

inline const char* to_string(SubgoalKind k) {
  return k == SubgoalKind::Anomaly ? "anomaly" : "centroid";
}

struct Subgoal {
  SubgoalKind kind = SubgoalKind::Anomaly;
  Point2 point{};    // anomaly: the state's location; centroid: cluster mean
  int id = 0;        // stable across discovery re-runs; equals list position
  int cluster = -1;  // centroid only: index into the K-means state
};

/// Ordered subgoal list. Indices are stable: anomalies append, centroids are
/// created once and updated in place.
struct SubgoalSet {
  std::vector<Subgoal> goals;
  double merge_radius = 0.0;

  int size() const { return static_cast<int>(goals.size()); }
  bool empty() const { return goals.empty(); }
  const Subgoal& operator[](int i) const { return goals.at(i); }

  int anomaly_count() const {
    int n = 0;
    for (const auto& g : goals) n += g.kind == SubgoalKind::Anomaly;
    return n;
  }
  int centroid_count() const { return size() - anomaly_count(); }

  /// Appends an anomaly subgoal unless one already sits within the merge
  /// radius; returns the new index or -1 when merged away.
  int add_anomaly(Point2 p) {
    for (const auto& g : goals)
      if (g.kind == SubgoalKind::Anomaly && distance(g.point, p) <= merge_radius + 1e-12)
        return -1;
    const int id = size();
    goals.push_back({SubgoalKind::Anomaly, p, id, -1});
    return id;
  }

  /// First call appends one centroid subgoal per cluster; later calls move
  /// the existing ones, preserving ids by cluster index.
  void set_centroids(const std::vector<Point2>& centroids) {
    std::vector<int> slot(centroids.size(), -1);
    for (int i = 0; i < size(); ++i)
      if (goals[i].kind == SubgoalKind::Centroid &&
          goals[i].cluster < static_cast<int>(centroids.size()))
        slot[goals[i].cluster] = i;
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      if (slot[c] >= 0) {
        goals[slot[c]].point = centroids[c];
      } else {
        const int id = size();
        goals.push_back({SubgoalKind::Centroid, centroids[c], id, static_cast<int>(c)});
      }
    }
  }

  /// Subgoal index for a cluster index, -1 if that centroid was never added.
  int subgoal_of_cluster(int cluster) const {
    for (int i = 0; i < size(); ++i)
      if (goals[i].kind == SubgoalKind::Centroid && goals[i].cluster == cluster) return i;
    return -1;
  }
};

// --- K-means --------------------------------------------------------------------

struct KMeansState {
  int k = 0;
  std::vector<Point2> centroids;
  std::vector<int> counts;  // assignment counts from the last fit
  bool ready = false;
  // Within-cluster sum of squares after each Lloyd iteration of the last
  // fit; reseed iterations are flagged since they may bump the objective.
  std::vector<double> objective_trace;
  std::vector<int> reseed_iterations;
};

inline int assign_cluster(const KMeansState& st, Point2 p) {
  if (!st.ready || st.centroids.empty())
    throw std::logic_error("assign_cluster: centroids not initialized");
  int best = 0;
  double best_d = squared_distance(p, st.centroids[0]);
  for (int c = 1; c < static_cast<int>(st.centroids.size()); ++c) {
    const double d = squared_distance(p, st.centroids[c]);
    if (d < best_d) {  // strict: ties keep the lower index
      best_d = d;
      best = c;
    }
  }
  return best;
}

namespace detail {

inline double wcss(const std::vector<Point2>& pts, const std::vector<Point2>& centroids,
                   const std::vector<int>& assign) {
  double total = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    total += squared_distance(pts[i], centroids[assign[i]]);
  return total;
}

inline std::vector<Point2> kmeans_pp_seed(const std::vector<Point2>& pts, int k, Rng& rng) {
  std::vector<Point2> centers;
  centers.push_back(pts[uniform_index(rng, pts.size())]);
  std::vector<double> d2(pts.size());
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, squared_distance(pts[i], c));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      // All points coincide with existing centers; fall back to uniform.
      centers.push_back(pts[uniform_index(rng, pts.size())]);
      continue;
    }
    double target = uniform_unit(rng) * total;
    std::size_t pick = pts.size() - 1;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      target -= d2[i];
      if (target <= 0.0) {
        pick = i;
        break;
      }
    }
    centers.push_back(pts[pick]);
  }
  return centers;
}

}  // namespace detail

/// Lloyd iterations with warm start. Cold start (state not ready) uses
/// K-means++ seeding and requires at least K points; otherwise the state is
/// returned unchanged with ready=false so callers can defer.
inline KMeansState kmeans_fit(const std::vector<Point2>& points, KMeansState state,
                              int max_iters, double tol, Rng& rng) {
  if (state.k <= 0) throw std::invalid_argument("kmeans_fit: k must be positive");
  state.objective_trace.clear();
  state.reseed_iterations.clear();
  if (!state.ready) {
    if (points.size() < static_cast<std::size_t>(state.k)) return state;  // defer
    state.centroids = detail::kmeans_pp_seed(points, state.k, rng);
    state.ready = true;
  }
  if (points.empty()) return state;

  std::vector<int> assign(points.size(), 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    // Assignment step.
    for (std::size_t i = 0; i < points.size(); ++i) {
      int best = 0;
      double best_d = squared_distance(points[i], state.centroids[0]);
      for (int c = 1; c < state.k; ++c) {
        const double d = squared_distance(points[i], state.centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      assign[i] = best;
    }
    // Update step.
    std::vector<Point2> sums(state.k, Point2{0.0, 0.0});
    std::vector<int> counts(state.k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      sums[assign[i]].x += points[i].x;
      sums[assign[i]].y += points[i].y;
      ++counts[assign[i]];
    }
    bool reseeded = false;
    std::vector<Point2> next(state.k);
    for (int c = 0; c < state.k; ++c) {
      if (counts[c] > 0) {
        next[c] = {sums[c].x / counts[c], sums[c].y / counts[c]};
      } else {
        // Reseed an empty cluster at the point farthest from its centroid.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
          const double d = squared_distance(points[i], state.centroids[assign[i]]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        next[c] = points[far];
        reseeded = true;
      }
    }
    double shift = 0.0;
    for (int c = 0; c < state.k; ++c)
      shift = std::max(shift, distance(next[c], state.centroids[c]));
    state.centroids = std::move(next);
    state.counts = counts;
    state.objective_trace.push_back(detail::wcss(points, state.centroids, assign));
    if (reseeded) state.reseed_iterations.push_back(iter);
    if (shift < tol && !reseeded) break;
  }
  // Final counts under the converged centroids.
  state.counts.assign(state.k, 0);
  for (const auto& p : points) ++state.counts[assign_cluster(state, p)];
  return state;
}

// --- Discovery ------------------------------------------------------------------

struct DiscoveryParams {
  int kmeans_max_iters = 100;
  double kmeans_tol = 1e-8;
};

struct DiscoveryResult {
  std::vector<int> new_anomaly_indices;
  std::size_t removed_from_memory = 0;
  bool kmeans_ready = false;
};

/// One pass of the unsupervised subgoal discovery loop: promote anomalous
/// next-states to subgoals, purge those experiences from memory, then refit
/// K-means on the remaining next-state locations (warm started) and refresh
/// the centroid subgoals.
inline DiscoveryResult discover(ReplayBuffer<Transition>& memory, AnomalyDetector& detector,
                                KMeansState& kstate, SubgoalSet& gset, int width,
                                int height, Rng& rng, DiscoveryParams params = {}) {
  DiscoveryResult res;
  for (const auto& t : memory) {
    if (detector.detect(t)) {
      const int idx = gset.add_anomaly(normalized(t.s_next, width, height));
      if (idx >= 0) res.new_anomaly_indices.push_back(idx);
    }
  }
  res.removed_from_memory =
      memory.remove_if([&](const Transition& t) { return detector.is_anomalous(t); });

  std::vector<Point2> points;
  points.reserve(memory.size());
  for (const auto& t : memory) points.push_back(normalized(t.s_next, width, height));
  kstate = kmeans_fit(points, std::move(kstate), params.kmeans_max_iters,
                      params.kmeans_tol, rng);
  if (kstate.ready) gset.set_centroids(kstate.centroids);
  res.kmeans_ready = kstate.ready;
  return res;
}

/// Attainment test: anomaly subgoals need an exact cell match, centroid
/// subgoals accept any state inside the cluster.
inline bool subgoal_attained(const SubgoalSet& gset, int goal_index,
                             const KMeansState& kstate, GridPos s_next, int width,
                             int height) {
  if (goal_index < 0 || goal_index >= gset.size())
    throw std::out_of_range("subgoal_attained: goal index out of range");
  const Subgoal& g = gset[goal_index];
  if (g.kind == SubgoalKind::Anomaly)
    return cell_from_normalized(g.point, width, height) == s_next;
  return assign_cluster(kstate, normalized(s_next, width, height)) == g.cluster;
}

/// Meta-controller state index: states sitting exactly on an anomaly subgoal
/// map to that subgoal's index, everything else to its cluster's centroid
/// subgoal. Falls back to the nearest subgoal while K-means is not ready.
inline int state_index(const SubgoalSet& gset, const KMeansState& kstate, GridPos pos,
                       int width, int height) {
  if (gset.empty()) throw std::logic_error("state_index: empty subgoal set");
  for (int i = 0; i < gset.size(); ++i)
    if (gset[i].kind == SubgoalKind::Anomaly &&
        cell_from_normalized(gset[i].point, width, height) == pos)
      return i;
  const Point2 p = normalized(pos, width, height);
  if (kstate.ready) {
    const int sub = gset.subgoal_of_cluster(assign_cluster(kstate, p));
    if (sub >= 0) return sub;
  }
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < gset.size(); ++i) {
    const double d = squared_distance(gset[i].point, p);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

// --- JSON -------------------------------------------------------------------------

inline constexpr int kSubgoalFormatVersion = 1;

inline nlohmann::json to_json(const SubgoalSet& gset) {
  nlohmann::json goals = nlohmann::json::array();
  for (const auto& g : gset.goals) {
    nlohmann::json jg{{"kind", to_string(g.kind)},
                      {"point", {g.point.x, g.point.y}},
                      {"id", g.id}};
    if (g.kind == SubgoalKind::Centroid) jg["cluster"] = g.cluster;
    goals.push_back(jg);
  }
  return {{"format", "hrl-subgoals"},
          {"format_version", kSubgoalFormatVersion},
          {"merge_radius", gset.merge_radius},
          {"subgoals", goals}};
}

inline SubgoalSet subgoals_from_json(const nlohmann::json& j) {
  SubgoalSet gset;
  gset.merge_radius = j.value("merge_radius", 0.0);
  for (const auto& jg : j.at("subgoals")) {
    Subgoal g;
    const std::string kind = jg.at("kind").get<std::string>();
    g.kind = kind == "anomaly" ? SubgoalKind::Anomaly : SubgoalKind::Centroid;
    g.point = {jg.at("point").at(0).get<double>(), jg.at("point").at(1).get<double>()};
    g.id = jg.at("id").get<int>();
    g.cluster = jg.value("cluster", -1);
    gset.goals.push_back(g);
  }
  return gset;
}

/// Rebuilds the K-means state implied by a subgoal set's centroids (e.g.,
/// after loading artifacts from disk).
inline KMeansState kmeans_from_subgoals(const SubgoalSet& gset) {
  KMeansState st;
  st.k = gset.centroid_count();
  st.centroids.resize(st.k);
  for (const auto& g : gset.goals)
    if (g.kind == SubgoalKind::Centroid && g.cluster >= 0 && g.cluster < st.k)
      st.centroids[g.cluster] = g.point;
  st.counts.assign(st.k, 0);
  st.ready = st.k > 0;
  return st;
}

}  // namespace hrl
