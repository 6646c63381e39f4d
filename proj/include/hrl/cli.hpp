#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "hrl/hrl.hpp"

namespace hrl::cli {

namespace fs = std::filesystem;

inline std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// --- Manifest ---------------------------------------------------------------

/// Written last into every output directory; its presence marks a completed
/// run and it lists every file the run emitted.
struct RunManifest {
  std::string mode;  // subcommand name
  std::uint64_t seed = 0;
  std::string started;
  std::string finished;
  std::vector<std::string> files;
  std::string config_echo;

  nlohmann::json to_json() const {
    return {{"format", "hrl-manifest"}, {"format_version", 1},
            {"version", kVersion},      {"mode", mode},
            {"seed", seed},             {"started", started},
            {"finished", finished},     {"files", files},
            {"config", config_echo}};
  }
};

inline void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << content;
}

inline std::string read_text_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

inline void finish_manifest(RunManifest& manifest, const fs::path& out_dir) {
  manifest.finished = timestamp_utc();
  manifest.files.push_back("manifest.json");
  write_text_file(out_dir / "manifest.json", manifest.to_json().dump(2) + "\n");
}

// --- Artifact IO -------------------------------------------------------------

inline void write_controller_files(const StateGoalNet& net, const fs::path& out_dir,
                                   RunManifest& manifest) {
  {
    std::ofstream os(out_dir / "controller.bin", std::ios::binary);
    save_checkpoint(net, os);
  }
  write_text_file(out_dir / "controller.json",
                  checkpoint_sidecar(net, "controller.bin").dump(2) + "\n");
  manifest.files.push_back("controller.bin");
  manifest.files.push_back("controller.json");
}

inline void write_run_artifacts(const RunArtifacts& art, const fs::path& out_dir,
                                RunManifest& manifest) {
  write_text_file(out_dir / "layout.json", hrl::to_json(art.layout).dump(2) + "\n");
  manifest.files.push_back("layout.json");
  write_controller_files(art.controller, out_dir, manifest);
  if (!art.baseline) {
    write_text_file(out_dir / "meta_q.json", hrl::to_json(art.meta).dump(2) + "\n");
    write_text_file(out_dir / "subgoals.json", hrl::to_json(art.subgoals).dump(2) + "\n");
    manifest.files.push_back("meta_q.json");
    manifest.files.push_back("subgoals.json");
  }
  {
    std::ofstream os(out_dir / "metrics.csv", std::ios::binary);
    write_metrics_csv(art.metrics, os);
  }
  manifest.files.push_back("metrics.csv");
  {
    std::ofstream os(out_dir / "eval.csv", std::ios::binary);
    write_eval_csv(art.metrics, os);
  }
  manifest.files.push_back("eval.csv");
  write_text_file(out_dir / "config.txt", emit_config(art.config));
  manifest.files.push_back("config.txt");
}

struct LoadedArtifacts {
  TrainConfig config;
  Layout layout;
  StateGoalNet controller;
  MetaQTable meta;
  SubgoalSet subgoals;
  KMeansState kmeans;
  bool baseline = false;
};

inline LoadedArtifacts load_artifacts(const fs::path& dir) {
  const auto manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
  LoadedArtifacts art;
  art.baseline = manifest.value("mode", "") == "baseline";
  {
    std::istringstream cfg_is(manifest.at("config").get<std::string>());
    art.config = parse_config(cfg_is);
  }
  art.layout = layout_from_json(nlohmann::json::parse(read_text_file(dir / "layout.json")));
  {
    std::ifstream is(dir / "controller.bin", std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + (dir / "controller.bin").string());
    art.controller = load_checkpoint(is);
  }
  if (!art.baseline) {
    art.meta = meta_q_from_json(nlohmann::json::parse(read_text_file(dir / "meta_q.json")));
    art.subgoals =
        subgoals_from_json(nlohmann::json::parse(read_text_file(dir / "subgoals.json")));
    art.kmeans = kmeans_from_subgoals(art.subgoals);
  }
  return art;
}

// --- Option plumbing -----------------------------------------------------------

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;  // key=value pairs
};

inline void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_out = true) {
  cmd->add_option("--config", opts.config_path,
                  "config file (key = value lines, or a JSON object)");
  if (needs_out)
    cmd->add_option("--out", opts.out_dir, "output directory")->required();
  cmd->add_option("--seed", opts.seed, "run seed (overrides the config value)");
  cmd->add_option("--set", opts.overrides,
                  "config override, key=value (repeatable)");
}

inline TrainConfig resolve_config(const CommonOpts& opts) {
  TrainConfig cfg;
  if (!opts.config_path.empty()) {
    std::ifstream is(opts.config_path);
    if (!is) throw std::runtime_error("cannot read config " + opts.config_path);
    cfg = parse_config(is);
  }
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got \"" + kv + "\"");
    apply_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opts.seed) cfg.seed = *opts.seed;
  validate_config(cfg);
  return cfg;
}

inline fs::path prepare_out_dir(const std::string& out) {
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

// --- Subcommand bodies -----------------------------------------------------------

inline int cmd_pretrain(const CommonOpts& opts) {
  const TrainConfig cfg = resolve_config(opts);
  const fs::path out = prepare_out_dir(opts.out_dir);
  RunManifest manifest{"pretrain", cfg.seed, timestamp_utc(), "", {}, emit_config(cfg)};

  UnifiedTrainer trainer(cfg);
  trainer.pretrain(cfg.pretrain_episodes);

  write_text_file(out / "layout.json", hrl::to_json(trainer.layout()).dump(2) + "\n");
  manifest.files.push_back("layout.json");
  write_controller_files(trainer.controller().net, out, manifest);
  {
    std::ofstream os(out / "memory.jsonl", std::ios::binary);
    dump_jsonl(trainer.agent_memory(), os, cfg.width, cfg.height);
  }
  manifest.files.push_back("memory.jsonl");
  {
    RunMetrics m;
    m.episodes = trainer.pretrain_log();
    std::ofstream os(out / "metrics.csv", std::ios::binary);
    write_metrics_csv(m, os);
  }
  manifest.files.push_back("metrics.csv");
  write_text_file(out / "config.txt", emit_config(cfg));
  manifest.files.push_back("config.txt");
  finish_manifest(manifest, out);

  int successes = 0;
  for (const auto& e : trainer.pretrain_log()) successes += e.success;
  std::cout << "pretrain: " << cfg.pretrain_episodes << " episodes, "
            << successes << " subgoal attainments\n";
  return 0;
}

inline int cmd_walk(const CommonOpts& opts, const std::string& checkpoint_dir) {
  const TrainConfig cfg = resolve_config(opts);
  const fs::path out = prepare_out_dir(opts.out_dir);
  RunManifest manifest{"walk", cfg.seed, timestamp_utc(), "", {}, emit_config(cfg)};

  UnifiedTrainer trainer(cfg);
  if (!checkpoint_dir.empty()) {
    auto loaded = load_artifacts(checkpoint_dir);
    trainer.load_controller(std::move(loaded.controller));
  } else {
    trainer.pretrain(cfg.pretrain_episodes);
    trainer.clear_memories();
  }
  trainer.random_walk(cfg.walk_episodes);

  write_text_file(out / "layout.json", hrl::to_json(trainer.layout()).dump(2) + "\n");
  manifest.files.push_back("layout.json");
  {
    std::ofstream os(out / "memory.jsonl", std::ios::binary);
    dump_jsonl(trainer.agent_memory(), os, cfg.width, cfg.height);
  }
  manifest.files.push_back("memory.jsonl");
  write_text_file(out / "config.txt", emit_config(cfg));
  manifest.files.push_back("config.txt");
  finish_manifest(manifest, out);

  std::cout << "walk: " << cfg.walk_episodes << " episodes, "
            << trainer.agent_memory().size() << " transitions\n";
  return 0;
}

inline int cmd_discover(const CommonOpts& opts, const std::string& memory_path, int k) {
  TrainConfig cfg = resolve_config(opts);
  if (k > 0) cfg.clusters = k;
  const fs::path out = prepare_out_dir(opts.out_dir);
  RunManifest manifest{"discover", cfg.seed, timestamp_utc(), "", {}, emit_config(cfg)};

  ReplayBuffer<Transition> memory(cfg.agent_memory_capacity);
  std::ifstream is(memory_path);
  if (!is) throw std::runtime_error("cannot read memory dump " + memory_path);
  const auto header = load_jsonl(is, memory);
  const int width = header.width > 0 ? header.width : cfg.width;
  const int height = header.height > 0 ? header.height : cfg.height;

  TrainConfig dims = cfg;
  dims.width = width;
  dims.height = height;
  AnomalyDetector detector(cfg.anomaly_threshold, width, height,
                           merge_radius_normalized(dims),
                           cfg.feature_distance_threshold > 0.0
                               ? std::optional<double>(cfg.feature_distance_threshold)
                               : std::nullopt);
  SubgoalSet gset;
  gset.merge_radius = merge_radius_normalized(dims);
  KMeansState kstate;
  kstate.k = cfg.clusters;
  Rng rng(cfg.seed);
  const auto res = discover(memory, detector, kstate, gset, width, height, rng);

  write_text_file(out / "subgoals.json", hrl::to_json(gset).dump(2) + "\n");
  manifest.files.push_back("subgoals.json");
  write_text_file(out / "config.txt", emit_config(cfg));
  manifest.files.push_back("config.txt");
  finish_manifest(manifest, out);

  std::cout << "discover: " << gset.anomaly_count() << " anomalies, "
            << gset.centroid_count() << " centroids ("
            << (res.kmeans_ready ? "k-means ready" : "k-means deferred") << "), removed "
            << res.removed_from_memory << " anomalous experiences\n";
  return 0;
}

inline int run_train_once(const TrainConfig& cfg, const fs::path& out,
                          const char* mode) {
  RunManifest manifest{mode, cfg.seed, timestamp_utc(), "", {}, emit_config(cfg)};
  const bool baseline = std::string(mode) == "baseline";
  const RunArtifacts art = baseline ? run_baseline(cfg) : run_unified(cfg);
  write_run_artifacts(art, out, manifest);
  finish_manifest(manifest, out);

  const auto& evals = art.metrics.evals;
  std::cout << mode << ": " << cfg.episodes << " episodes";
  if (!evals.empty())
    std::cout << ", final greedy success " << evals.back().success_rate * 100 << "%"
              << ", mean return " << evals.back().mean_return;
  std::cout << '\n';
  return 0;
}

/// Multi-seed sweep: each seed runs as an independent child process of this
/// binary, at most `jobs` at a time, writing to <out_root>/seed_<n>/.
inline int spawn_sweep(const std::vector<std::uint64_t>& seeds, int jobs,
                       const std::string& self_exe,
                       const std::vector<std::string>& base_args,
                       const std::string& out_root) {
  if (self_exe.empty())
    throw std::runtime_error("sweep: cannot locate own executable");
  std::vector<pid_t> running;
  int failures = 0;
  const auto reap_one = [&]() {
    int status = 0;
    const pid_t done = waitpid(-1, &status, 0);
    if (done > 0) {
      running.erase(std::remove(running.begin(), running.end(), done), running.end());
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) ++failures;
    }
  };
  for (std::uint64_t seed : seeds) {
    while (static_cast<int>(running.size()) >= std::max(1, jobs)) reap_one();
    std::vector<std::string> args = base_args;
    args.push_back("--seed");
    args.push_back(std::to_string(seed));
    args.push_back("--out");
    args.push_back(out_root + "/seed_" + std::to_string(seed));
    const pid_t pid = fork();
    if (pid < 0) throw std::runtime_error("sweep: fork failed");
    if (pid == 0) {
      std::vector<char*> argv;
      argv.push_back(const_cast<char*>(self_exe.c_str()));
      for (auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
      argv.push_back(nullptr);
      execv(self_exe.c_str(), argv.data());
      std::perror("sweep: execv");
      _exit(127);
    }
    running.push_back(pid);
  }
  while (!running.empty()) reap_one();
  return failures == 0 ? 0 : 1;
}

inline int cmd_train(const CommonOpts& opts, const std::string& mode,
                     const std::string& seeds_csv, int jobs,
                     const std::string& self_exe) {
  const TrainConfig cfg = resolve_config(opts);
  if (!seeds_csv.empty()) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(seeds_csv);
    std::string item;
    while (std::getline(ss, item, ',')) seeds.push_back(std::stoull(item));
    std::vector<std::string> args{mode};
    if (!opts.config_path.empty()) {
      args.push_back("--config");
      args.push_back(opts.config_path);
    }
    for (const auto& kv : opts.overrides) {
      args.push_back("--set");
      args.push_back(kv);
    }
    return spawn_sweep(seeds, jobs, self_exe, args, opts.out_dir);
  }
  return run_train_once(cfg, prepare_out_dir(opts.out_dir), mode.c_str());
}

inline int cmd_eval(const std::string& checkpoint_dir, int episodes, std::uint64_t seed) {
  const auto art = load_artifacts(checkpoint_dir);
  EvalResult res;
  if (art.baseline) {
    StateGoalNet net = art.controller;
    const GoalGate gate = net.gate_for({0.5, 0.5});
    GreedyFlatPolicy policy(net, gate, art.layout.width, art.layout.height);
    res = evaluate(policy, art.layout, episodes, seed);
  } else {
    GreedyHierarchicalPolicy policy(art.controller, art.meta, art.subgoals, art.kmeans,
                                    art.layout.width, art.layout.height,
                                    art.config.controller_max_steps);
    res = evaluate(policy, art.layout, episodes, seed);
  }
  std::cout << "episodes " << episodes << "\nsuccess_rate " << res.success_rate
            << "\nmean_return " << res.mean_return << "\nmax_return " << res.max_return
            << '\n';
  return 0;
}

inline int cmd_diagnose(const std::string& checkpoint_dir, int samples,
                        std::uint64_t seed, const std::string& out_dir) {
  const auto art = load_artifacts(checkpoint_dir);
  if (art.baseline)
    throw std::runtime_error("diagnose: needs a hierarchical run checkpoint");
  GreedyHierarchicalPolicy policy(art.controller, art.meta, art.subgoals, art.kmeans,
                                  art.layout.width, art.layout.height,
                                  art.config.controller_max_steps);
  const auto stats = cluster_value_diagnostic(policy, art.layout, art.kmeans,
                                              art.config.gamma, samples, seed);
  std::ostringstream csv;
  csv << "# format: hrl-cluster-values-v1\ncluster,mean_value,stddev,samples\n";
  for (const auto& s : stats) {
    csv << s.cluster << ',' << s.mean_value << ',' << s.stddev << ',' << s.samples
        << '\n';
    std::cout << "cluster " << s.cluster << ": mean " << s.mean_value << " stddev "
              << s.stddev << " (" << s.samples << " rollouts)\n";
  }
  if (!out_dir.empty()) {
    const fs::path out = prepare_out_dir(out_dir);
    RunManifest manifest{"diagnose", seed, timestamp_utc(), "", {}, emit_config(art.config)};
    write_text_file(out / "cluster_values.csv", csv.str());
    manifest.files.push_back("cluster_values.csv");
    finish_manifest(manifest, out);
  }
  return 0;
}

// --- Entry point -----------------------------------------------------------------

inline int run_main(std::vector<std::string> args, const std::string& self_exe) {
  CLI::App app{"Model-free hierarchical reinforcement learning on gridworld rooms "
               "tasks: subgoal discovery, intrinsic skill learning and a subgoal "
               "selection meta-policy."};
  app.require_subcommand(1);
  app.footer("Config keys (also accepted via --set key=value):\n" + config_help());

  CommonOpts pre_opts, walk_opts, disc_opts, train_opts, base_opts;
  std::string walk_checkpoint;
  std::string memory_path;
  int disc_k = 0;
  std::string train_seeds, base_seeds;
  int train_jobs = 1, base_jobs = 1;
  std::string eval_checkpoint, diag_checkpoint, diag_out;
  int eval_episodes = 100, diag_samples = 20;
  std::uint64_t eval_seed = 1, diag_seed = 1;

  auto* pre = app.add_subcommand("pretrain", "intrinsic motivation pretraining on random goals");
  add_common(pre, pre_opts);

  auto* walk = app.add_subcommand("walk", "collect a random-walk experience memory");
  add_common(walk, walk_opts);
  walk->add_option("--checkpoint", walk_checkpoint,
                   "pretrain output directory to load the controller from");

  auto* disc = app.add_subcommand("discover", "unsupervised subgoal discovery on a memory dump");
  add_common(disc, disc_opts);
  disc->add_option("--memory", memory_path, "memory dump (JSONL)")->required();
  disc->add_option("--k", disc_k, "number of K-means clusters");

  auto* train = app.add_subcommand("train", "unified hierarchical training run");
  add_common(train, train_opts);
  train->add_option("--seeds", train_seeds, "comma-separated seeds for a sweep");
  train->add_option("--jobs", train_jobs, "parallel child runs for --seeds");

  auto* base = app.add_subcommand("baseline", "flat SARSA baseline run");
  add_common(base, base_opts);
  base->add_option("--seeds", base_seeds, "comma-separated seeds for a sweep");
  base->add_option("--jobs", base_jobs, "parallel child runs for --seeds");

  auto* ev = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
  ev->add_option("--checkpoint", eval_checkpoint, "run output directory")->required();
  ev->add_option("--episodes", eval_episodes, "evaluation episodes");
  ev->add_option("--seed", eval_seed, "evaluation seed");

  auto* diag = app.add_subcommand("diagnose", "per-cluster Monte-Carlo value estimates");
  diag->add_option("--checkpoint", diag_checkpoint, "run output directory")->required();
  diag->add_option("--samples", diag_samples, "rollouts per cluster");
  diag->add_option("--seed", diag_seed, "sampling seed");
  diag->add_option("--out", diag_out, "optional output directory for the CSV");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (pre->parsed()) return cmd_pretrain(pre_opts);
    if (walk->parsed()) return cmd_walk(walk_opts, walk_checkpoint);
    if (disc->parsed()) return cmd_discover(disc_opts, memory_path, disc_k);
    if (train->parsed())
      return cmd_train(train_opts, "train", train_seeds, train_jobs, self_exe);
    if (base->parsed())
      return cmd_train(base_opts, "baseline", base_seeds, base_jobs, self_exe);
    if (ev->parsed()) return cmd_eval(eval_checkpoint, eval_episodes, eval_seed);
    if (diag->parsed()) return cmd_diagnose(diag_checkpoint, diag_samples, diag_seed, diag_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace hrl::cli
