#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "icrl/rng.hpp"

namespace icrl::env {

class EnvError : public std::runtime_error {
 public:
  explicit EnvError(const std::string& what) : std::runtime_error(what) {}
};

/// Analytic stand-ins for the benchmark domains. All three hide the task
/// parameters from the observation, so task identity is only recoverable
/// from the reward/transition stream.
///
///   CVecReach        obs = position in [-1,1]^d; p' = clip(p + 0.1 a);
///                    r = -|p' - goal|; per-step reward in [-2*sqrt(d), 0].
///   CBandit          obs = {0}; single-step episodes; r = -|a - optimum|,
///                    reward in [-2*sqrt(k), 0].
///   DampedIntegrator obs = position (+-2 box) ++ velocity (+-0.5 box);
///                    v' = clip((1-drag) v + 0.1 a), p' = clip(p + v');
///                    r = -|p' - goal|; reward in [-(2*sqrt(d)+...), 0],
///                    bounded by the position box (see reward_lower_bound).
enum class DomainId { CVecReach, CBandit, DampedIntegrator };

std::string to_string(DomainId d);
DomainId domain_from_string(const std::string& s);

struct TaskSpec {
  DomainId domain_id = DomainId::CVecReach;
  std::string task_id;
  int obs_dim = 0;
  int act_dim = 0;
  int episode_len = 0;
  std::vector<float> action_low, action_high;
  std::vector<float> hidden_params;  // goal / bandit optimum / goal ++ drag
  std::string semantics;             // channel-meaning tag used for grouping

  void validate() const;
};

TaskSpec make_cvec_reach(int dim, std::vector<float> goal, int episode_len = 20);
TaskSpec make_cbandit(int k, std::vector<float> optimum);
TaskSpec make_damped_integrator(std::vector<float> goal, float drag, int episode_len = 25);

struct EnvState {
  TaskSpec task;
  std::vector<float> agent_state;  // position, or position ++ velocity
  int step_index = 0;
  Rng rng;
};

struct StepResult {
  std::vector<float> obs;
  float reward = 0;
  bool done = false;
};

/// Deterministic: identical (task, seed) produce identical episodes.
std::pair<EnvState, std::vector<float>> reset(const TaskSpec& task, uint64_t seed);

/// Applies domain dynamics; actions are clipped to the action box inside.
StepResult step(EnvState& state, std::span<const float> action);

std::vector<float> observe(const EnvState& state);

/// Privileged analytic controller (sees hidden_params; the model never does).
std::vector<float> demonstrator_action(const TaskSpec& task, const EnvState& state);

/// Per-step reward is always within [reward_lower_bound(task), 0].
double reward_lower_bound(const TaskSpec& task);

struct Baselines {
  double random_score = 0;
  double demonstrator_score = 0;
};

/// Monte Carlo mean episode return of the uniform-random policy and of the
/// demonstrator, n_episodes each; deterministic given seed.
Baselines score_baselines(const TaskSpec& task, int n_episodes, uint64_t seed);

/// One declared task plus its collection settings from a suite config file.
struct SuiteEntry {
  TaskSpec spec;
  int n_steps = 0;                  // noise-distillation trajectory length
  double zero_noise_fraction = 0.1;
  double curvature = 1.0;
  int trajectories = 4;             // seeds per task
  uint64_t seed = 1;                // base seed; trajectory i uses seed + i
  double reward_scale = 1.0;
};

struct SuiteConfig {
  std::string name;
  std::vector<SuiteEntry> train;
  std::vector<SuiteEntry> eval;  // optional extra eval-only tasks
};

/// Loads the JSON suite declaration (see configs/ for the schema: domains
/// with goal/optimum grids expanded into one task per hidden parameter).
SuiteConfig load_suite_config(const std::string& path);
SuiteConfig parse_suite_config(const std::string& json_text);

}  // namespace icrl::env
