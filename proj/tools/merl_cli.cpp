// merl: train and evaluate MERL and its baselines on the particle tasks.
//
//   merl run --config configs/coop_nav.cfg --frames 300000 --out runs/cn
//   merl sweep --algo mixed --axis mixed_weight --values 1,10,100 --out runs/w
//   merl eval --checkpoint runs/cn/checkpoint.bin
//   merl trajectory --checkpoint runs/cn/checkpoint.bin --seed 2019 --out traj.csv

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "merl/config.hpp"
#include "merl/trainer.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::string algo, task, out, mixed_weight;
  std::optional<std::uint64_t> frames, seed, coupling, workers;
  std::vector<std::string> sets;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "Config file (key = value lines)")->check(CLI::ExistingFile);
    app->add_option("--algo", algo, "merl, ea, matd3, maddpg or mixed");
    app->add_option("--task", task, "coop_nav, rover or predator_prey");
    app->add_option("--frames", frames, "Frame budget");
    app->add_option("--seed", seed, "Training seed");
    app->add_option("--out", out, "Output directory");
    app->add_option("--coupling", coupling, "Rover coupling requirement");
    app->add_option("--mixed-weight", mixed_weight, "Team-reward weight for the mixed baseline");
    app->add_option("--workers", workers, "Rollout worker threads");
    app->add_option("--set", sets, "Extra key=value override (repeatable)");
  }

  merl::Overrides overrides() const {
    merl::Overrides o;
    if (!config.empty()) o = merl::parse_config_file(config);
    auto flag = [&](const std::string& key, const std::string& value) { o.add(key, value, merl::Source::Flag); };
    if (!task.empty()) flag("task", task);
    if (!algo.empty()) flag("algo", algo);
    if (frames) flag("frames", std::to_string(*frames));
    if (seed) flag("seed", std::to_string(*seed));
    if (!out.empty()) flag("out", out);
    if (coupling) flag("coupling", std::to_string(*coupling));
    if (!mixed_weight.empty()) flag("mixed_weight", mixed_weight);
    if (workers) flag("workers", std::to_string(*workers));
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
      auto trim = [](std::string v) {
        v.erase(0, v.find_first_not_of(" \t"));
        v.erase(v.find_last_not_of(" \t") + 1);
        return v;
      };
      flag(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    return o;
  }
};

std::vector<std::string> split_values(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::unique_ptr<merl::Trainer> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path);
  return merl::Trainer::load(f);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiagent evolutionary reinforcement learning"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  std::string resume;
  bool quiet = false;
  auto* run_cmd = app.add_subcommand("run", "Train one configuration until its frame budget");
  run_flags.attach(run_cmd);
  run_cmd->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  run_cmd->add_flag("--quiet,-q", quiet, "No per-row progress");

  CommonFlags sweep_flags;
  std::string axis = "mixed_weight", values_text;
  std::size_t parallel = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "One run per value of a config key");
  sweep_flags.attach(sweep_cmd);
  sweep_cmd->add_option("--axis", axis, "Config key to vary")->capture_default_str();
  sweep_cmd->add_option("--values", values_text, "Comma-separated values")->required();
  sweep_cmd->add_option("--parallel", parallel, "Concurrent runs")->capture_default_str();

  CommonFlags show_flags;
  auto* show_cmd = app.add_subcommand("config", "Print the resolved configuration");
  show_flags.attach(show_cmd);

  std::string ckpt;
  std::optional<std::uint64_t> eval_seed;
  std::optional<std::size_t> instances;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate the champion of a checkpoint");
  eval_cmd->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--seed-base", eval_seed, "First evaluation seed");
  eval_cmd->add_option("--instances", instances, "Number of evaluation instances");
  bool eval_pg = false;
  eval_cmd->add_flag("--pg", eval_pg, "Evaluate the policy-gradient team instead of the champion");

  std::string traj_ckpt, traj_out;
  std::optional<std::uint64_t> traj_seed;
  auto* traj_cmd = app.add_subcommand("trajectory", "Dump one noiseless champion episode as CSV");
  traj_cmd->add_option("--checkpoint", traj_ckpt)->required()->check(CLI::ExistingFile);
  traj_cmd->add_option("--seed", traj_seed, "Episode seed (default: first eval seed)");
  traj_cmd->add_option("--out", traj_out, "Output file (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      merl::RunOptions opts;
      if (!quiet) opts.progress = &std::cerr;
      merl::ExperimentConfig cfg;
      if (!resume.empty()) {
        opts.resume = resume;
        if (run_flags.frames) opts.frame_budget = *run_flags.frames;
      } else {
        const auto rc = merl::resolve_config(run_flags.overrides());
        cfg = rc.config;
        opts.lockfile = rc.lockfile();
      }
      const auto summary = merl::run(cfg, opts);
      std::cout << "final eval mean " << summary.final_eval.mean << " (" << summary.out_dir.string() << ")\n";
    } else if (*sweep_cmd) {
      const auto rows =
          merl::sweep(sweep_flags.overrides(), axis, split_values(values_text),
                      std::filesystem::path(sweep_flags.out.empty() ? "runs/sweep" : sweep_flags.out), parallel);
      for (const auto& r : rows) std::cout << axis << '=' << r.value << "  final eval " << r.final_eval_mean << '\n';
    } else if (*show_cmd) {
      std::cout << merl::resolve_config(show_flags.overrides()).lockfile();
    } else if (*eval_cmd) {
      auto t = load_checkpoint(ckpt);
      const auto& c = t->config();
      if (eval_pg && c.algo != merl::Algorithm::Merl) throw std::invalid_argument("--pg needs a merl checkpoint");
      const auto& team = eval_pg ? t->pg().actor() : t->champion();
      auto rep = merl::evaluate_team(team, c.env, t->prey(), instances.value_or(c.eval_instances),
                                     eval_seed.value_or(c.eval_seed_base));
      nlohmann::json j;
      j["frames"] = t->frames().total();
      j["generation"] = t->generation();
      j["mean"] = rep.mean;
      j["std"] = rep.stddev;
      j["scores"] = rep.scores;
      std::cout << j.dump(2) << '\n';
    } else if (*traj_cmd) {
      auto t = load_checkpoint(traj_ckpt);
      const auto& c = t->config();
      const auto seed = traj_seed.value_or(c.eval_seed_base);
      if (traj_out.empty()) {
        merl::write_trajectory(std::cout, t->champion(), c.env, t->prey(), seed);
      } else {
        std::ofstream f(traj_out);
        merl::write_trajectory(f, t->champion(), c.env, t->prey(), seed);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
