#pragma once

#include <cstdint>
#include <vector>

#include "icrl/tensor.hpp"

namespace icrl::model {

/// Collated training input: one token per environment step, carrying the
/// previous transition (action, reward, termination flag) and the current
/// observation; targets are the actions actually taken at each step.
template <typename Real>
struct TokenBatch {
  int group_id = -1;
  int64_t batch = 0;
  int64_t length = 0;
  nn::Tensor<Real> prev_action;    // [B, L, act_dim]
  nn::Tensor<Real> prev_reward;    // [B, L, 1]
  nn::Tensor<Real> prev_done;      // [B, L, 1]
  nn::Tensor<Real> obs;            // [B, L, obs_dim]
  nn::Tensor<Real> target_action;  // [B, L, act_dim]
  std::vector<int64_t> positions;  // [L] absolute indices (shared across batch)

  template <typename U>
  TokenBatch<U> cast() const {
    TokenBatch<U> out;
    out.group_id = group_id;
    out.batch = batch;
    out.length = length;
    out.prev_action = prev_action.template cast<U>();
    out.prev_reward = prev_reward.template cast<U>();
    out.prev_done = prev_done.template cast<U>();
    out.obs = obs.template cast<U>();
    out.target_action = target_action.template cast<U>();
    out.positions = positions;
    return out;
  }
};

}  // namespace icrl::model
