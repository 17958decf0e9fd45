#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "icrl/dataset.hpp"
#include "icrl/envsuite.hpp"

namespace icrl::distill {

class DistillError : public std::runtime_error {
 public:
  explicit DistillError(const std::string& what) : std::runtime_error(what) {}
};

/// Generalized epsilon-decay configuration: total_steps is the trajectory
/// length, zero_noise_fraction the tail fraction driven purely by the
/// demonstrator, curvature bends the decay (1 = linear).
struct NoiseSchedule {
  int64_t total_steps = 0;
  double zero_noise_fraction = 0.1;
  double curvature = 1.0;

  void validate() const;
};

/// Noise proportion at global step n_s:
///   (1 - (n_s / ((1-f) N))^p)^(1/p)  for n_s <= (1-f) N, else 0.
/// Exactly 1 at n_s = 0 and exactly 0 from ceil((1-f) N) on; nonincreasing.
double epsilon(const NoiseSchedule& schedule, int64_t n_s);

struct Transition {
  std::vector<float> obs;
  std::vector<float> action;
  float reward = 0;
  bool done = false;
  std::vector<float> next_obs;
};

/// One continuous learning history: episodes concatenated, epsilon annealed
/// over the global step index (never reset at episode boundaries). Columnar
/// storage; transition(i) materializes a row.
struct Trajectory {
  std::string task_id;
  NoiseSchedule schedule;
  uint64_t seed = 0;
  int obs_dim = 0, act_dim = 0;
  int64_t steps = 0;
  std::vector<float> obs, action, next_obs;  // [steps * dim]
  std::vector<float> reward;                 // [steps]
  std::vector<uint8_t> done;                 // [steps]

  Transition transition(int64_t i) const;
};

enum class PolicyMode {
  NoiseDistilled,  // a = (1-eps) * demonstrator + eps * u,  u ~ Uniform(box)
  ExpertOnly,      // a = demonstrator (equal step counts; used by the ED ablation)
};

/// Rolls out the mixture policy for schedule.total_steps environment steps,
/// resetting at episode ends. Episode e restarts from seed Rng::mix(seed, e);
/// the noise stream is Rng(Rng::mix(seed, kNoiseStream)), one uniform draw
/// per action channel per step (drawn in both policy modes so the streams
/// stay aligned). total_steps must be a multiple of the episode length.
Trajectory collect_trajectory(const env::TaskSpec& task, const NoiseSchedule& schedule,
                              uint64_t seed, PolicyMode mode = PolicyMode::NoiseDistilled);

constexpr uint64_t kNoiseStream = 0xD15711;

/// Collects every (task, trajectory-seed) pair of the suite in parallel and
/// assembles the cross-domain bundle with manifest statistics. Per-task
/// failures are gathered and reported together after the healthy tasks finish.
data::DatasetBundle collect_suite(const std::vector<env::SuiteEntry>& entries,
                                  const std::string& name,
                                  PolicyMode mode = PolicyMode::NoiseDistilled);

}  // namespace icrl::distill
