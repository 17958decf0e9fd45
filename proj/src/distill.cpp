#include "icrl/distill.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>

#include "icrl/threadpool.hpp"

namespace icrl::distill {

void NoiseSchedule::validate() const {
  if (total_steps < 1) throw DistillError("schedule: total_steps must be >= 1");
  if (zero_noise_fraction < 0.0 || zero_noise_fraction >= 1.0)
    throw DistillError("schedule: zero_noise_fraction must be in [0, 1)");
  if (!(curvature > 0.0)) throw DistillError("schedule: curvature must be > 0");
}

double epsilon(const NoiseSchedule& schedule, int64_t n_s) {
  schedule.validate();
  if (n_s < 0 || n_s > schedule.total_steps)
    throw DistillError("epsilon: step " + std::to_string(n_s) + " outside [0, " +
                       std::to_string(schedule.total_steps) + "]");
  const double cut = (1.0 - schedule.zero_noise_fraction) * static_cast<double>(schedule.total_steps);
  if (static_cast<double>(n_s) >= cut) return 0.0;
  const double ratio = static_cast<double>(n_s) / cut;
  if (schedule.curvature == 1.0) return 1.0 - ratio;  // exact linear decay
  const double base = 1.0 - std::pow(ratio, schedule.curvature);
  return std::pow(std::max(base, 0.0), 1.0 / schedule.curvature);
}

Transition Trajectory::transition(int64_t i) const {
  if (i < 0 || i >= steps) throw DistillError("transition index out of range");
  Transition t;
  t.obs.assign(obs.begin() + i * obs_dim, obs.begin() + (i + 1) * obs_dim);
  t.action.assign(action.begin() + i * act_dim, action.begin() + (i + 1) * act_dim);
  t.reward = reward[static_cast<size_t>(i)];
  t.done = done[static_cast<size_t>(i)] != 0;
  t.next_obs.assign(next_obs.begin() + i * obs_dim, next_obs.begin() + (i + 1) * obs_dim);
  return t;
}

Trajectory collect_trajectory(const env::TaskSpec& task, const NoiseSchedule& schedule,
                              uint64_t seed, PolicyMode mode) {
  schedule.validate();
  task.validate();
  if (schedule.total_steps % task.episode_len != 0)
    throw DistillError("collect: total_steps " + std::to_string(schedule.total_steps) +
                       " must be a multiple of episode_len " + std::to_string(task.episode_len) +
                       " for task " + task.task_id);
  Trajectory traj;
  traj.task_id = task.task_id;
  traj.schedule = schedule;
  traj.seed = seed;
  traj.obs_dim = task.obs_dim;
  traj.act_dim = task.act_dim;
  traj.steps = schedule.total_steps;
  traj.obs.resize(static_cast<size_t>(traj.steps * task.obs_dim));
  traj.action.resize(static_cast<size_t>(traj.steps * task.act_dim));
  traj.reward.resize(static_cast<size_t>(traj.steps));
  traj.done.resize(static_cast<size_t>(traj.steps));
  traj.next_obs.resize(static_cast<size_t>(traj.steps * task.obs_dim));

  Rng noise(Rng::mix(seed, kNoiseStream));
  int64_t episode = 0;
  auto [state, obs] = env::reset(task, Rng::mix(seed, static_cast<uint64_t>(episode)));
  std::vector<float> a(static_cast<size_t>(task.act_dim));
  for (int64_t n = 0; n < traj.steps; ++n) {
    const double eps = mode == PolicyMode::ExpertOnly ? 0.0 : epsilon(schedule, n);
    const std::vector<float> pi = env::demonstrator_action(task, state);
    for (int i = 0; i < task.act_dim; ++i) {
      // u is drawn every step in both modes to keep the noise stream aligned.
      const float u = static_cast<float>(noise.uniform(task.action_low[static_cast<size_t>(i)],
                                                       task.action_high[static_cast<size_t>(i)]));
      a[static_cast<size_t>(i)] = static_cast<float>((1.0 - eps)) * pi[static_cast<size_t>(i)] +
                                  static_cast<float>(eps) * u;
    }
    std::copy(obs.begin(), obs.end(), traj.obs.begin() + n * task.obs_dim);
    std::copy(a.begin(), a.end(), traj.action.begin() + n * task.act_dim);
    const env::StepResult res = env::step(state, a);
    traj.reward[static_cast<size_t>(n)] = res.reward;
    traj.done[static_cast<size_t>(n)] = res.done ? 1 : 0;
    std::copy(res.obs.begin(), res.obs.end(), traj.next_obs.begin() + n * task.obs_dim);
    if (res.done) {
      ++episode;
      auto restart = env::reset(task, Rng::mix(seed, static_cast<uint64_t>(episode)));
      state = std::move(restart.first);
      obs = std::move(restart.second);
    } else {
      obs = res.obs;
    }
  }
  return traj;
}

data::DatasetBundle collect_suite(const std::vector<env::SuiteEntry>& entries,
                                  const std::string& name, PolicyMode mode) {
  if (entries.empty()) throw DistillError("collect_suite: empty task list");
  struct Job {
    size_t task = 0;
    int traj = 0;
  };
  std::vector<Job> jobs;
  for (size_t t = 0; t < entries.size(); ++t)
    for (int k = 0; k < entries[t].trajectories; ++k) jobs.push_back({t, k});

  std::vector<std::vector<Trajectory>> results(entries.size());
  for (auto& r : results) r.resize(0);
  for (size_t t = 0; t < entries.size(); ++t)
    results[t].resize(static_cast<size_t>(entries[t].trajectories));
  std::vector<std::string> errors;
  std::mutex err_mutex;

  parallel_for(static_cast<int64_t>(jobs.size()), [&](int64_t lo, int64_t hi) {
    for (int64_t j = lo; j < hi; ++j) {
      const Job& job = jobs[static_cast<size_t>(j)];
      const env::SuiteEntry& entry = entries[job.task];
      NoiseSchedule schedule{entry.n_steps, entry.zero_noise_fraction, entry.curvature};
      try {
        results[job.task][static_cast<size_t>(job.traj)] = collect_trajectory(
            entry.spec, schedule, entry.seed + static_cast<uint64_t>(job.traj), mode);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mutex);
        errors.push_back(entry.spec.task_id + ": " + e.what());
      }
    }
  });
  if (!errors.empty()) {
    std::sort(errors.begin(), errors.end());
    std::ostringstream os;
    os << "collect_suite: " << errors.size() << " task collection(s) failed:";
    for (const auto& e : errors) os << "\n  " << e;
    throw DistillError(os.str());
  }

  data::DatasetBundle bundle;
  for (size_t t = 0; t < entries.size(); ++t) {
    const env::SuiteEntry& entry = entries[t];
    data::TaskRecord rec;
    rec.spec = entry.spec;
    rec.zero_noise_fraction = entry.zero_noise_fraction;
    rec.curvature = entry.curvature;
    rec.reward_scale = entry.reward_scale;
    data::TaskData td;
    for (const Trajectory& traj : results[t]) {
      rec.trajectory_lengths.push_back(traj.steps);
      rec.seeds.push_back(traj.seed);
      td.obs.insert(td.obs.end(), traj.obs.begin(), traj.obs.end());
      td.action.insert(td.action.end(), traj.action.begin(), traj.action.end());
      td.reward.insert(td.reward.end(), traj.reward.begin(), traj.reward.end());
      td.done.insert(td.done.end(), traj.done.begin(), traj.done.end());
      td.next_obs.insert(td.next_obs.end(), traj.next_obs.begin(), traj.next_obs.end());
    }
    bundle.manifest.tasks.push_back(std::move(rec));
    bundle.data.push_back(std::move(td));
  }
  data::compute_manifest(bundle, name);
  return bundle;
}

}  // namespace icrl::distill
