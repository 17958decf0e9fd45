#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "icrl/envsuite.hpp"
#include "icrl/rng.hpp"

using namespace icrl;
using namespace icrl::env;

#ifndef ICRL_CONFIG_DIR
#define ICRL_CONFIG_DIR "configs"
#endif

TEST_CASE("reset is deterministic and hides task parameters") {
  auto near_goal = make_cvec_reach(2, {0.7f, 0.7f});
  auto far_goal = make_cvec_reach(2, {-0.7f, -0.7f});

  auto [s1, o1] = reset(near_goal, 42);
  auto [s2, o2] = reset(near_goal, 42);
  CHECK(o1 == o2);
  CHECK(o1.size() == 2);
  for (float x : o1) {
    CHECK(x >= -1.0f);
    CHECK(x <= 1.0f);
  }

  // start states depend on the seed only, never on hidden_params
  auto [s3, o3] = reset(far_goal, 42);
  CHECK(o1 == o3);

  auto bandit = make_cbandit(3, {0.1f, 0.2f, 0.3f});
  auto [bs, bo] = reset(bandit, 7);
  CHECK(bo == std::vector<float>{0.0f});
}

TEST_CASE("step applies documented dynamics exactly") {
  SUBCASE("CVecReach") {
    auto task = make_cvec_reach(2, {0.5f, -0.5f});
    auto [state, obs] = reset(task, 1);
    const float p0 = obs[0], p1 = obs[1];
    std::vector<float> a{0.3f, -2.0f};  // second channel clipped to -1
    auto res = step(state, a);
    const float e0 = std::min(1.0f, std::max(-1.0f, p0 + 0.1f * 0.3f));
    const float e1 = std::min(1.0f, std::max(-1.0f, p1 + 0.1f * -1.0f));
    CHECK(res.obs[0] == e0);
    CHECK(res.obs[1] == e1);
    const float dist = std::sqrt((e0 - 0.5f) * (e0 - 0.5f) + (e1 + 0.5f) * (e1 + 0.5f));
    CHECK(res.reward == doctest::Approx(-dist).epsilon(1e-6));
    CHECK_FALSE(res.done);
  }
  SUBCASE("CBandit finishes in one step") {
    auto task = make_cbandit(2, {0.25f, -0.5f});
    auto [state, obs] = reset(task, 3);
    auto res = step(state, std::vector<float>{0.25f, -0.5f});
    CHECK(res.reward == doctest::Approx(0.0).epsilon(1e-7));
    CHECK(res.done);
    CHECK_THROWS_AS(step(state, std::vector<float>{0.0f, 0.0f}), EnvError);
  }
  SUBCASE("DampedIntegrator") {
    auto task = make_damped_integrator({0.5f, 0.5f}, 0.2f);
    auto [state, obs] = reset(task, 9);
    const float p0 = obs[0], p1 = obs[1];
    CHECK(obs[2] == 0.0f);  // zero initial velocity
    CHECK(obs[3] == 0.0f);
    auto res = step(state, std::vector<float>{1.0f, -1.0f});
    const float v0 = 0.8f * 0.0f + 0.1f * 1.0f;
    const float v1 = 0.8f * 0.0f + 0.1f * -1.0f;
    CHECK(res.obs[2] == doctest::Approx(v0).epsilon(1e-6));
    CHECK(res.obs[3] == doctest::Approx(v1).epsilon(1e-6));
    CHECK(res.obs[0] == doctest::Approx(p0 + v0).epsilon(1e-6));
    CHECK(res.obs[1] == doctest::Approx(p1 + v1).epsilon(1e-6));
  }
  SUBCASE("dimension mismatch is rejected") {
    auto task = make_cvec_reach(2, {0.0f, 0.0f});
    auto [state, obs] = reset(task, 1);
    CHECK_THROWS_AS(step(state, std::vector<float>{1.0f}), EnvError);
  }
}

TEST_CASE("demonstrator actions") {
  SUBCASE("zero action at the goal") {
    auto task = make_cvec_reach(2, {0.3f, -0.3f});
    auto [state, obs] = reset(task, 1);
    state.agent_state = {0.3f, -0.3f};
    auto a = demonstrator_action(task, state);
    CHECK(a[0] == 0.0f);
    CHECK(a[1] == 0.0f);
  }
  SUBCASE("saturates toward a distant goal") {
    auto task = make_cvec_reach(2, {1.0f, 0.0f});
    auto [state, obs] = reset(task, 1);
    state.agent_state = {0.0f, 0.0f};
    auto a = demonstrator_action(task, state);
    CHECK(a[0] == 1.0f);
    CHECK(a[1] == 0.0f);
  }
  SUBCASE("bandit demonstrator returns the optimum everywhere") {
    auto task = make_cbandit(2, {0.45f, 0.7f});
    auto [state, obs] = reset(task, 11);
    auto a = demonstrator_action(task, state);
    CHECK(a == std::vector<float>{0.45f, 0.7f});
  }
}

TEST_CASE("score baselines: closed-form bandit values and dominance") {
  SUBCASE("demonstrator at the optimum scores zero") {
    auto task = make_cbandit(1, {0.5f});
    auto b = score_baselines(task, 200, 1);
    CHECK(b.demonstrator_score == doctest::Approx(0.0).epsilon(1e-7));
  }
  SUBCASE("random score of 1-d bandit at origin is -E|u| = -0.5") {
    auto task = make_cbandit(1, {0.0f});
    auto b = score_baselines(task, 10000, 2);
    CHECK(b.random_score == doctest::Approx(-0.5).epsilon(0.04));  // tolerance 0.02 absolute
    CHECK(std::abs(b.random_score + 0.5) < 0.02);
  }
  SUBCASE("demonstrator dominates random on every shipped task") {
    for (const char* file : {ICRL_CONFIG_DIR "/default16.json", ICRL_CONFIG_DIR "/integrator.json"}) {
      auto cfg = load_suite_config(file);
      auto all = cfg.train;
      all.insert(all.end(), cfg.eval.begin(), cfg.eval.end());
      CHECK(!all.empty());
      for (const auto& entry : all) {
        auto b = score_baselines(entry.spec, 300, 99);
        INFO("task ", entry.spec.task_id);
        CHECK(b.demonstrator_score > b.random_score);
      }
    }
  }
}

TEST_CASE("rewards stay within the documented range under random play") {
  Rng rng(5);
  for (const auto& task :
       {make_cvec_reach(2, {0.7f, -0.7f}), make_cbandit(3, {0.2f, -0.7f, 0.5f}),
        make_damped_integrator({0.5f, -0.5f}, 0.0f)}) {
    const double lb = reward_lower_bound(task);
    for (int e = 0; e < 30; ++e) {
      auto [state, obs] = reset(task, static_cast<uint64_t>(e));
      for (int t = 0; t < task.episode_len; ++t) {
        std::vector<float> a(static_cast<size_t>(task.act_dim));
        for (auto& x : a) x = static_cast<float>(rng.uniform(-1.5, 1.5));  // clipped inside
        auto res = step(state, a);
        CHECK(res.reward <= 0.0f);
        CHECK(res.reward >= static_cast<float>(lb));
      }
    }
  }
}

TEST_CASE("suite config loader expands grids and validates") {
  auto cfg = load_suite_config(ICRL_CONFIG_DIR "/default16.json");
  CHECK(cfg.name == "default16");
  CHECK(cfg.train.size() == 16);
  CHECK(cfg.eval.empty());
  int reach2 = 0, reach4 = 0, bandit2 = 0, bandit3 = 0;
  for (const auto& e : cfg.train) {
    if (e.spec.domain_id == DomainId::CVecReach && e.spec.act_dim == 2) ++reach2;
    if (e.spec.domain_id == DomainId::CVecReach && e.spec.act_dim == 4) ++reach4;
    if (e.spec.domain_id == DomainId::CBandit && e.spec.act_dim == 2) ++bandit2;
    if (e.spec.domain_id == DomainId::CBandit && e.spec.act_dim == 3) ++bandit3;
    CHECK(e.n_steps % e.spec.episode_len == 0);
  }
  CHECK(reach2 == 4);
  CHECK(reach4 == 4);
  CHECK(bandit2 == 4);
  CHECK(bandit3 == 4);

  auto integ = load_suite_config(ICRL_CONFIG_DIR "/integrator.json");
  CHECK(integ.train.size() == 12);
  CHECK(integ.eval.size() == 12);

  CHECK_THROWS_AS(parse_suite_config("{not json"), EnvError);
  CHECK_THROWS_AS(parse_suite_config(R"({"name":"x","domains":[{"domain":"Nope"}]})"), EnvError);
  CHECK_THROWS_AS(parse_suite_config(R"({"name":"x","domains":[]})"), EnvError);
}
