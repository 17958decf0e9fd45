#include "icrl/envsuite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace icrl::env {

namespace {

constexpr float kMoveScale = 0.1f;       // action-to-motion scale, both domains
constexpr float kReachGain = 5.0f;       // proportional gain, CVecReach
constexpr float kIntegratorPosGain = 4.0f;
constexpr float kIntegratorVelGain = 7.0f;
constexpr float kIntegratorVelBox = 0.5f;
constexpr float kIntegratorPosBox = 2.0f;

float clipf(float v, float lo, float hi) { return std::min(hi, std::max(lo, v)); }

std::vector<float> clip_action(const TaskSpec& task, std::span<const float> action) {
  if (static_cast<int>(action.size()) != task.act_dim)
    throw EnvError("step: action length " + std::to_string(action.size()) + " != act_dim " +
                   std::to_string(task.act_dim) + " for task " + task.task_id);
  std::vector<float> a(action.begin(), action.end());
  for (int i = 0; i < task.act_dim; ++i)
    a[static_cast<size_t>(i)] = clipf(a[static_cast<size_t>(i)],
                                      task.action_low[static_cast<size_t>(i)],
                                      task.action_high[static_cast<size_t>(i)]);
  return a;
}

float distance_to_goal(std::span<const float> pos, std::span<const float> goal) {
  double acc = 0;
  for (size_t i = 0; i < pos.size(); ++i) {
    const double d = static_cast<double>(pos[i]) - static_cast<double>(goal[i]);
    acc += d * d;
  }
  return static_cast<float>(std::sqrt(acc));
}

std::string format_signed(float v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%+.2f", static_cast<double>(v));
  return buf;
}

}  // namespace

std::string to_string(DomainId d) {
  switch (d) {
    case DomainId::CVecReach: return "CVecReach";
    case DomainId::CBandit: return "CBandit";
    case DomainId::DampedIntegrator: return "DampedIntegrator";
  }
  return "?";
}

DomainId domain_from_string(const std::string& s) {
  if (s == "CVecReach") return DomainId::CVecReach;
  if (s == "CBandit") return DomainId::CBandit;
  if (s == "DampedIntegrator") return DomainId::DampedIntegrator;
  throw EnvError("unknown domain '" + s + "'");
}

void TaskSpec::validate() const {
  if (episode_len < 1) throw EnvError(task_id + ": episode_len must be >= 1");
  if (obs_dim < 1 || act_dim < 1) throw EnvError(task_id + ": dims must be positive");
  if (static_cast<int>(action_low.size()) != act_dim ||
      static_cast<int>(action_high.size()) != act_dim)
    throw EnvError(task_id + ": action bounds must have act_dim channels");
  for (int i = 0; i < act_dim; ++i) {
    if (!(action_low[static_cast<size_t>(i)] < action_high[static_cast<size_t>(i)]))
      throw EnvError(task_id + ": action_low must be < action_high per channel");
  }
  for (float h : hidden_params)
    if (!std::isfinite(h)) throw EnvError(task_id + ": non-finite hidden parameter");
  switch (domain_id) {
    case DomainId::CVecReach:
      if (obs_dim != act_dim || static_cast<int>(hidden_params.size()) != obs_dim)
        throw EnvError(task_id + ": CVecReach needs obs_dim == act_dim == goal dim");
      break;
    case DomainId::CBandit:
      if (obs_dim != 1 || static_cast<int>(hidden_params.size()) != act_dim)
        throw EnvError(task_id + ": CBandit needs obs_dim 1 and optimum of act_dim");
      if (episode_len != 1) throw EnvError(task_id + ": CBandit episodes are single-step");
      break;
    case DomainId::DampedIntegrator: {
      const int d = act_dim;
      if (obs_dim != 2 * d || static_cast<int>(hidden_params.size()) != d + 1)
        throw EnvError(task_id + ": DampedIntegrator needs obs 2d and goal+drag params");
      const float drag = hidden_params.back();
      if (drag < 0.0f || drag >= 1.0f) throw EnvError(task_id + ": drag must be in [0,1)");
      break;
    }
  }
}

TaskSpec make_cvec_reach(int dim, std::vector<float> goal, int episode_len) {
  TaskSpec t;
  t.domain_id = DomainId::CVecReach;
  t.obs_dim = dim;
  t.act_dim = dim;
  t.episode_len = episode_len;
  t.action_low.assign(static_cast<size_t>(dim), -1.0f);
  t.action_high.assign(static_cast<size_t>(dim), 1.0f);
  t.hidden_params = std::move(goal);
  t.semantics = "reach-pos";
  std::string id = "reach" + std::to_string(dim) + "-g";
  for (float g : t.hidden_params) id += format_signed(g);
  t.task_id = id;
  t.validate();
  return t;
}

TaskSpec make_cbandit(int k, std::vector<float> optimum) {
  TaskSpec t;
  t.domain_id = DomainId::CBandit;
  t.obs_dim = 1;
  t.act_dim = k;
  t.episode_len = 1;
  t.action_low.assign(static_cast<size_t>(k), -1.0f);
  t.action_high.assign(static_cast<size_t>(k), 1.0f);
  t.hidden_params = std::move(optimum);
  t.semantics = "bandit-const";
  std::string id = "bandit" + std::to_string(k) + "-o";
  for (float o : t.hidden_params) id += format_signed(o);
  t.task_id = id;
  t.validate();
  return t;
}

TaskSpec make_damped_integrator(std::vector<float> goal, float drag, int episode_len) {
  TaskSpec t;
  t.domain_id = DomainId::DampedIntegrator;
  const int d = static_cast<int>(goal.size());
  t.obs_dim = 2 * d;
  t.act_dim = d;
  t.episode_len = episode_len;
  t.action_low.assign(static_cast<size_t>(d), -1.0f);
  t.action_high.assign(static_cast<size_t>(d), 1.0f);
  t.hidden_params = std::move(goal);
  t.hidden_params.push_back(drag);
  t.semantics = "integrator-posvel";
  std::string id = "integ" + std::to_string(d) + "-g";
  for (size_t i = 0; i + 1 < t.hidden_params.size(); ++i) id += format_signed(t.hidden_params[i]);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "-d%.2f", static_cast<double>(drag));
  t.task_id = id + buf;
  t.validate();
  return t;
}

std::vector<float> observe(const EnvState& state) {
  switch (state.task.domain_id) {
    case DomainId::CVecReach:
    case DomainId::DampedIntegrator:
      return state.agent_state;
    case DomainId::CBandit:
      return {0.0f};
  }
  return {};
}

std::pair<EnvState, std::vector<float>> reset(const TaskSpec& task, uint64_t seed) {
  task.validate();
  EnvState s;
  s.task = task;
  s.step_index = 0;
  // The start-state draw depends on the seed only, never on hidden_params:
  // tasks differing only in hidden parameters are indistinguishable at reset.
  s.rng = Rng::derive(seed, 0x5eedULL);
  switch (task.domain_id) {
    case DomainId::CVecReach:
      s.agent_state.resize(static_cast<size_t>(task.obs_dim));
      for (auto& x : s.agent_state) x = static_cast<float>(s.rng.uniform(-1.0, 1.0));
      break;
    case DomainId::CBandit:
      s.agent_state.clear();
      break;
    case DomainId::DampedIntegrator: {
      const int d = task.act_dim;
      s.agent_state.assign(static_cast<size_t>(2 * d), 0.0f);
      for (int i = 0; i < d; ++i)
        s.agent_state[static_cast<size_t>(i)] = static_cast<float>(s.rng.uniform(-1.0, 1.0));
      break;
    }
  }
  return {std::move(s), observe(s)};
}

StepResult step(EnvState& state, std::span<const float> action) {
  const TaskSpec& task = state.task;
  if (state.step_index >= task.episode_len)
    throw EnvError("step: episode already finished for task " + task.task_id);
  const std::vector<float> a = clip_action(task, action);
  StepResult result;
  switch (task.domain_id) {
    case DomainId::CVecReach: {
      for (int i = 0; i < task.act_dim; ++i) {
        float& p = state.agent_state[static_cast<size_t>(i)];
        p = clipf(p + kMoveScale * a[static_cast<size_t>(i)], -1.0f, 1.0f);
      }
      result.reward = -distance_to_goal(state.agent_state, task.hidden_params);
      break;
    }
    case DomainId::CBandit: {
      result.reward = -distance_to_goal(a, task.hidden_params);
      break;
    }
    case DomainId::DampedIntegrator: {
      const int d = task.act_dim;
      const float drag = task.hidden_params.back();
      for (int i = 0; i < d; ++i) {
        float& p = state.agent_state[static_cast<size_t>(i)];
        float& v = state.agent_state[static_cast<size_t>(d + i)];
        v = clipf((1.0f - drag) * v + kMoveScale * a[static_cast<size_t>(i)],
                  -kIntegratorVelBox, kIntegratorVelBox);
        p = clipf(p + v, -kIntegratorPosBox, kIntegratorPosBox);
      }
      result.reward = -distance_to_goal(
          std::span<const float>(state.agent_state.data(), static_cast<size_t>(d)),
          std::span<const float>(task.hidden_params.data(), static_cast<size_t>(d)));
      break;
    }
  }
  ++state.step_index;
  result.done = state.step_index == task.episode_len;
  result.obs = observe(state);
  return result;
}

std::vector<float> demonstrator_action(const TaskSpec& task, const EnvState& state) {
  std::vector<float> a(static_cast<size_t>(task.act_dim), 0.0f);
  switch (task.domain_id) {
    case DomainId::CVecReach:
      for (int i = 0; i < task.act_dim; ++i)
        a[static_cast<size_t>(i)] =
            clipf(kReachGain * (task.hidden_params[static_cast<size_t>(i)] -
                                state.agent_state[static_cast<size_t>(i)]),
                  task.action_low[static_cast<size_t>(i)], task.action_high[static_cast<size_t>(i)]);
      break;
    case DomainId::CBandit:
      a.assign(task.hidden_params.begin(), task.hidden_params.end());
      break;
    case DomainId::DampedIntegrator: {
      const int d = task.act_dim;
      for (int i = 0; i < d; ++i) {
        const float p = state.agent_state[static_cast<size_t>(i)];
        const float v = state.agent_state[static_cast<size_t>(d + i)];
        const float g = task.hidden_params[static_cast<size_t>(i)];
        a[static_cast<size_t>(i)] =
            clipf(kIntegratorPosGain * (g - p) - kIntegratorVelGain * v,
                  task.action_low[static_cast<size_t>(i)], task.action_high[static_cast<size_t>(i)]);
      }
      break;
    }
  }
  return a;
}

double reward_lower_bound(const TaskSpec& task) {
  const double d = task.act_dim;
  switch (task.domain_id) {
    case DomainId::CVecReach:
      return -2.0 * std::sqrt(d);
    case DomainId::CBandit:
      return -2.0 * std::sqrt(d);
    case DomainId::DampedIntegrator:
      return -(kIntegratorPosBox + 1.0) * std::sqrt(d);
  }
  return 0;
}

Baselines score_baselines(const TaskSpec& task, int n_episodes, uint64_t seed) {
  if (n_episodes < 1) throw EnvError("score_baselines: n_episodes must be >= 1");
  double random_total = 0, demo_total = 0;
  for (int e = 0; e < n_episodes; ++e) {
    const uint64_t ep_seed = seed + static_cast<uint64_t>(e);
    // Same start states for both policies (paired estimates).
    Rng noise = Rng::derive(ep_seed, 0xAC7104ULL);
    auto [rs, obs_r] = reset(task, ep_seed);
    std::vector<float> a(static_cast<size_t>(task.act_dim));
    for (int t = 0; t < task.episode_len; ++t) {
      for (int i = 0; i < task.act_dim; ++i)
        a[static_cast<size_t>(i)] = static_cast<float>(
            noise.uniform(task.action_low[static_cast<size_t>(i)],
                          task.action_high[static_cast<size_t>(i)]));
      random_total += step(rs, a).reward;
    }
    auto [ds, obs_d] = reset(task, ep_seed);
    for (int t = 0; t < task.episode_len; ++t)
      demo_total += step(ds, demonstrator_action(task, ds)).reward;
  }
  return {random_total / n_episodes, demo_total / n_episodes};
}

namespace {

std::vector<std::vector<float>> parse_vector_grid(const nlohmann::json& j, const std::string& key) {
  std::vector<std::vector<float>> out;
  for (const auto& row : j.at(key)) out.push_back(row.get<std::vector<float>>());
  return out;
}

void expand_domain_entry(const nlohmann::json& j, SuiteConfig& cfg) {
  const std::string domain = j.at("domain").get<std::string>();
  const DomainId id = domain_from_string(domain);
  SuiteEntry proto;
  proto.n_steps = j.value("n_steps", 0);
  proto.zero_noise_fraction = j.value("zero_noise_fraction", 0.1);
  proto.curvature = j.value("curvature", 1.0);
  proto.trajectories = j.value("trajectories", 4);
  proto.seed = j.value("seed", uint64_t{1});
  proto.reward_scale = j.value("reward_scale", 1.0);
  const bool eval_split = j.value("split", std::string("train")) == "eval";

  std::vector<TaskSpec> specs;
  switch (id) {
    case DomainId::CVecReach: {
      const int dim = j.at("dim").get<int>();
      const int ep = j.value("episode_len", 20);
      for (auto& goal : parse_vector_grid(j, "goals")) specs.push_back(make_cvec_reach(dim, goal, ep));
      break;
    }
    case DomainId::CBandit: {
      const int dim = j.at("dim").get<int>();
      for (auto& opt : parse_vector_grid(j, "optima")) {
        if (static_cast<int>(opt.size()) != dim)
          throw EnvError("CBandit optimum dim mismatch in config");
        specs.push_back(make_cbandit(dim, opt));
      }
      break;
    }
    case DomainId::DampedIntegrator: {
      const int ep = j.value("episode_len", 25);
      const auto drags = j.at("drags").get<std::vector<float>>();
      for (auto& goal : parse_vector_grid(j, "goals"))
        for (float drag : drags) specs.push_back(make_damped_integrator(goal, drag, ep));
      break;
    }
  }
  if (proto.n_steps <= 0) throw EnvError("suite config: n_steps must be set and positive");
  uint64_t idx = 0;
  for (auto& spec : specs) {
    SuiteEntry entry = proto;
    entry.spec = std::move(spec);
    entry.seed = proto.seed + 1000003ULL * idx++;  // distinct noise streams per task
    (eval_split ? cfg.eval : cfg.train).push_back(std::move(entry));
  }
}

}  // namespace

SuiteConfig parse_suite_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw EnvError(std::string("suite config: invalid JSON: ") + e.what());
  }
  SuiteConfig cfg;
  try {
    cfg.name = j.at("name").get<std::string>();
    for (const auto& entry : j.at("domains")) expand_domain_entry(entry, cfg);
  } catch (const nlohmann::json::exception& e) {
    throw EnvError(std::string("suite config: ") + e.what());
  }
  if (cfg.train.empty()) throw EnvError("suite config: no training tasks declared");
  return cfg;
}

SuiteConfig load_suite_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw EnvError("cannot open suite config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_suite_config(ss.str());
}

}  // namespace icrl::env
