#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hrl/approx.hpp"
#include "hrl/env.hpp"

namespace hrl {

/// Everything a run needs. Defaults reproduce the 4-room key/lock setup.
struct TrainConfig {
  // Environment
  Variant variant = Variant::FourRoomKeyLock;
  int width = 20;
  int height = 20;
  bool easy_placement = false;
  int episode_max_steps = 200;
  std::uint64_t layout_seed = 7;

  // Run
  std::uint64_t seed = 1;
  int episodes = 50000;
  int controller_max_steps = 50;  // per-subgoal step budget T

  // Learning
  double alpha1 = 0.001;
  double alpha2 = 0.001;
  double gamma = 0.99;
  double eps1_start = 0.2, eps1_end = 0.2;
  long eps1_decay_steps = 0;
  double eps2_start = 0.2, eps2_end = 0.2;
  long eps2_decay_steps = 0;
  MetaDiscountMode meta_discount_mode = MetaDiscountMode::GammaPowT;

  // Memories
  std::size_t agent_memory_capacity = 1000000;
  std::size_t controller_memory_capacity = 1000000;
  std::size_t meta_memory_capacity = 50000;
  int minibatch_controller = 32;  // J1
  int minibatch_meta = 32;        // J2

  // Phases
  int pretrain_episodes = 2000;
  int walk_episodes = 100;  // M'

  // Discovery
  int clusters = 4;               // K
  long discovery_interval = 10000;  // environment steps between K-means refits
  double anomaly_threshold = 1.0;
  double feature_distance_threshold = 0.0;  // 0 disables the check
  double merge_radius_cells = 1.0;

  // Network
  int coder_rows = 5;
  int coder_cols = 5;
  int hidden_per_row = 50;
  int kwta_winners = 5;
  double gate_threshold = 0.1;
  double weight_init_range = 0.05;

  // Evaluation during training
  int eval_interval = 1000;
  int eval_episodes = 100;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

namespace config_detail {

struct Field {
  std::string help;
  std::string (*get)(const TrainConfig&);
  void (*set)(TrainConfig&, const std::string& key, const std::string& value);
};

inline void fail(const std::string& key, const std::string& value,
                 const std::string& allowed) {
  throw std::invalid_argument("config: key \"" + key + "\" got \"" + value +
                              "\", allowed: " + allowed);
}

inline long long parse_int(const std::string& key, const std::string& v, long long lo,
                           long long hi) {
  long long out = 0;
  std::size_t used = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || out < lo || out > hi)
    fail(key, v, "integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return out;
}

inline double parse_real(const std::string& key, const std::string& v, double lo,
                         double hi) {
  double out = 0;
  std::size_t used = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || !(out >= lo) || !(out <= hi)) {
    std::ostringstream os;
    os << "real in [" << lo << ", " << hi << "]";
    fail(key, v, os.str());
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(key, v, "true|false");
  return false;
}

inline std::string fmt_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// One macro per scalar kind keeps the registry table readable.
#define HRL_CFG_INT(NAME, MEMBER, LO, HI, HELP)                                      \
  {NAME,                                                                             \
   {HELP, [](const TrainConfig& c) { return std::to_string(c.MEMBER); },             \
    [](TrainConfig& c, const std::string& k, const std::string& v) {                 \
      c.MEMBER = static_cast<decltype(c.MEMBER)>(parse_int(k, v, LO, HI));           \
    }}}

#define HRL_CFG_REAL(NAME, MEMBER, LO, HI, HELP)                                     \
  {NAME,                                                                             \
   {HELP, [](const TrainConfig& c) { return fmt_real(c.MEMBER); },                   \
    [](TrainConfig& c, const std::string& k, const std::string& v) {                 \
      c.MEMBER = parse_real(k, v, LO, HI);                                           \
    }}}

#define HRL_CFG_BOOL(NAME, MEMBER, HELP)                                             \
  {NAME,                                                                             \
   {HELP, [](const TrainConfig& c) { return std::string(c.MEMBER ? "true" : "false"); }, \
    [](TrainConfig& c, const std::string& k, const std::string& v) {                 \
      c.MEMBER = parse_bool(k, v);                                                   \
    }}}

inline const std::map<std::string, Field>& registry() {
  static const std::map<std::string, Field> fields = {
      {"variant",
       {"single_room_dynamic_goal|four_room_key_car|four_room_key_lock",
        [](const TrainConfig& c) { return std::string(to_string(c.variant)); },
        [](TrainConfig& c, const std::string& k, const std::string& v) {
          try {
            c.variant = variant_from_string(v);
          } catch (const std::exception&) {
            fail(k, v, "single_room_dynamic_goal|four_room_key_car|four_room_key_lock");
          }
        }}},
      HRL_CFG_INT("width", width, 3, 1000, "grid width in cells"),
      HRL_CFG_INT("height", height, 3, 1000, "grid height in cells"),
      HRL_CFG_BOOL("easy_placement", easy_placement,
                   "pin key/reward to corners (goal next to start for dynamic goal)"),
      HRL_CFG_INT("episode_max_steps", episode_max_steps, 1, 1000000,
                  "environment episode step cap"),
      HRL_CFG_INT("layout_seed", layout_seed, 0, INT64_MAX, "layout generation seed"),
      HRL_CFG_INT("seed", seed, 0, INT64_MAX, "run seed; all randomness derives from it"),
      HRL_CFG_INT("episodes", episodes, 0, 100000000, "training episodes M"),
      HRL_CFG_INT("controller_max_steps", controller_max_steps, 1, 1000000,
                  "steps per subgoal attempt T"),
      HRL_CFG_REAL("alpha1", alpha1, 1e-12, 1.0, "controller learning rate"),
      HRL_CFG_REAL("alpha2", alpha2, 1e-12, 1.0, "meta-controller learning rate"),
      HRL_CFG_REAL("gamma", gamma, 0.0, 1.0, "discount factor"),
      HRL_CFG_REAL("eps1_start", eps1_start, 0.0, 1.0, "controller exploration start"),
      HRL_CFG_REAL("eps1_end", eps1_end, 0.0, 1.0, "controller exploration end"),
      HRL_CFG_INT("eps1_decay_steps", eps1_decay_steps, 0, INT64_MAX,
                  "steps to decay eps1 (0 = constant end value)"),
      HRL_CFG_REAL("eps2_start", eps2_start, 0.0, 1.0, "meta exploration start"),
      HRL_CFG_REAL("eps2_end", eps2_end, 0.0, 1.0, "meta exploration end"),
      HRL_CFG_INT("eps2_decay_steps", eps2_decay_steps, 0, INT64_MAX,
                  "episodes to decay eps2 (0 = constant end value)"),
      {"meta_discount_mode",
       {"gamma_pow_t|gamma",
        [](const TrainConfig& c) {
          return std::string(c.meta_discount_mode == MetaDiscountMode::GammaPowT
                                 ? "gamma_pow_t"
                                 : "gamma");
        },
        [](TrainConfig& c, const std::string& k, const std::string& v) {
          if (v == "gamma_pow_t")
            c.meta_discount_mode = MetaDiscountMode::GammaPowT;
          else if (v == "gamma")
            c.meta_discount_mode = MetaDiscountMode::Gamma;
          else
            fail(k, v, "gamma_pow_t|gamma");
        }}},
      HRL_CFG_INT("agent_memory_capacity", agent_memory_capacity, 1, INT64_MAX,
                  "capacity of the agent experience memory"),
      HRL_CFG_INT("controller_memory_capacity", controller_memory_capacity, 1, INT64_MAX,
                  "capacity of the controller experience memory"),
      HRL_CFG_INT("meta_memory_capacity", meta_memory_capacity, 1, INT64_MAX,
                  "capacity of the meta-controller experience memory"),
      HRL_CFG_INT("minibatch_controller", minibatch_controller, 1, 100000,
                  "controller minibatch size J1"),
      HRL_CFG_INT("minibatch_meta", minibatch_meta, 1, 100000,
                  "meta-controller minibatch size J2"),
      HRL_CFG_INT("pretrain_episodes", pretrain_episodes, 0, 100000000,
                  "intrinsic pretraining episodes"),
      HRL_CFG_INT("walk_episodes", walk_episodes, 0, 100000000,
                  "random-walk episodes M'"),
      HRL_CFG_INT("clusters", clusters, 1, 1000, "number of K-means clusters K"),
      HRL_CFG_INT("discovery_interval", discovery_interval, 1, INT64_MAX,
                  "environment steps between K-means refits N"),
      HRL_CFG_REAL("anomaly_threshold", anomaly_threshold, 0.0, 1e18,
                   "rewards at or above this are anomalous"),
      HRL_CFG_REAL("feature_distance_threshold", feature_distance_threshold, 0.0, 10.0,
                   "state-jump threshold, normalized units (0 disables)"),
      HRL_CFG_REAL("merge_radius_cells", merge_radius_cells, 0.0, 1000.0,
                   "anomaly dedup radius in cells"),
      HRL_CFG_INT("coder_rows", coder_rows, 2, 100, "Gaussian coder rows"),
      HRL_CFG_INT("coder_cols", coder_cols, 2, 100, "Gaussian coder columns"),
      HRL_CFG_INT("hidden_per_row", hidden_per_row, 1, 10000,
                  "hidden units per gate row"),
      HRL_CFG_INT("kwta_winners", kwta_winners, 1, 10000, "kWTA winners per row"),
      HRL_CFG_REAL("gate_threshold", gate_threshold, 0.0, 1.0,
                   "goal activation needed to open a gate row"),
      HRL_CFG_REAL("weight_init_range", weight_init_range, 0.0, 10.0,
                   "uniform weight init half-range"),
      HRL_CFG_INT("eval_interval", eval_interval, 1, 100000000,
                  "episodes between greedy evaluations"),
      HRL_CFG_INT("eval_episodes", eval_episodes, 1, 1000000,
                  "episodes per greedy evaluation"),
  };
  return fields;
}

#undef HRL_CFG_INT
#undef HRL_CFG_REAL
#undef HRL_CFG_BOOL

}  // namespace config_detail

inline void apply_config_key(TrainConfig& cfg, const std::string& key,
                             const std::string& value) {
  const auto& reg = config_detail::registry();
  const auto it = reg.find(key);
  if (it == reg.end())
    throw std::invalid_argument("config: unknown key \"" + key + "\"");
  it->second.set(cfg, key, value);
}

/// Cross-field checks that single-key validation cannot express.
inline void validate_config(const TrainConfig& cfg) {
  if (cfg.eps1_end > cfg.eps1_start)
    throw std::invalid_argument("config: eps1_end must not exceed eps1_start");
  if (cfg.eps2_end > cfg.eps2_start)
    throw std::invalid_argument("config: eps2_end must not exceed eps2_start");
  if (cfg.kwta_winners > cfg.hidden_per_row)
    throw std::invalid_argument("config: kwta_winners must not exceed hidden_per_row");
  if (cfg.variant != Variant::SingleRoomDynamicGoal && (cfg.width < 7 || cfg.height < 7))
    throw std::invalid_argument("config: four-room variants need width/height >= 7");
}

/// Parses flat `key = value` lines (# comments) or a JSON object.
inline TrainConfig parse_config(std::istream& is, TrainConfig base = {}) {
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    const auto j = nlohmann::json::parse(text);
    for (const auto& [key, val] : j.items()) {
      std::string v;
      if (val.is_string())
        v = val.get<std::string>();
      else
        v = val.dump();
      apply_config_key(base, key, v);
    }
    validate_config(base);
    return base;
  }
  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = strip(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not `key = value`");
    apply_config_key(base, strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
  }
  validate_config(base);
  return base;
}

/// Emits the full effective configuration; parse_config on the output
/// reproduces the struct exactly.
inline std::string emit_config(const TrainConfig& cfg) {
  std::ostringstream os;
  for (const auto& [key, field] : config_detail::registry())
    os << key << " = " << field.get(cfg) << '\n';
  return os.str();
}

inline std::string config_help() {
  TrainConfig d;
  std::ostringstream os;
  for (const auto& [key, field] : config_detail::registry())
    os << "  " << key << " (default " << field.get(d) << "): " << field.help << '\n';
  return os.str();
}

}  // namespace hrl
