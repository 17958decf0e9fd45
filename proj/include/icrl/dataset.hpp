#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "icrl/envsuite.hpp"
#include "icrl/rng.hpp"
#include "icrl/tokens.hpp"

namespace icrl::data {

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Bad magic bytes or otherwise unreadable container layout.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

/// Container written by a newer format_version than this reader supports.
class VersionError : public DataError {
 public:
  using DataError::DataError;
};

/// File ends before the declared payload does.
class TruncationError : public DataError {
 public:
  using DataError::DataError;
};

/// Stored CRC does not match the payload.
class ChecksumError : public DataError {
 public:
  using DataError::DataError;
};

constexpr int kFormatVersion = 1;
inline constexpr char kMagic[9] = "ICRLDS01";

/// Dimensionality-based group: tasks sharing (obs_dim, act_dim, channel
/// semantics). The group id is the only structural hint the model receives.
struct GroupInfo {
  int group_id = -1;
  int obs_dim = 0;
  int act_dim = 0;
  std::string semantics;
  std::vector<std::string> tasks;
};

struct TaskRecord {
  env::TaskSpec spec;
  // Collection metadata (enough to regenerate matched expert rollouts).
  std::vector<int64_t> trajectory_lengths;
  std::vector<uint64_t> seeds;
  double zero_noise_fraction = 0.1;
  double curvature = 1.0;
  // Aggregates and scaling.
  int64_t episodes = 0;
  int64_t timesteps = 0;
  double reward_scale = 1.0;
  std::vector<double> obs_mean, obs_std;  // per channel; std floored
  int group_id = -1;
};

struct Manifest {
  int format_version = kFormatVersion;
  std::string name;
  std::vector<TaskRecord> tasks;
  std::vector<GroupInfo> groups;

  int64_t total_timesteps() const;
  int64_t total_episodes() const;
  int task_index(const std::string& task_id) const;  // -1 if absent
  const GroupInfo& group(int group_id) const;
};

/// Columnar transition storage for one task; trajectories are concatenated
/// in manifest order and split via TaskRecord::trajectory_lengths.
struct TaskData {
  std::vector<float> obs, action, reward, next_obs;
  std::vector<uint8_t> done;
};

struct DatasetBundle {
  Manifest manifest;
  std::vector<TaskData> data;  // parallel to manifest.tasks
};

constexpr double kObsStdFloor = 1e-6;

/// Fills per-task observation statistics (double accumulation, std floored at
/// kObsStdFloor), episode/timestep counts, and dimensionality groups. Group
/// ids are assigned by sorted (obs_dim, act_dim, semantics) key.
void compute_manifest(DatasetBundle& bundle, const std::string& name);

/// Normalization/scaling used identically at training and inference time.
std::vector<float> normalize_obs(const TaskRecord& task, std::span<const float> obs);
float scale_reward(const TaskRecord& task, float reward);

void write_bundle(const DatasetBundle& bundle, const std::string& path);
DatasetBundle read_bundle(const std::string& path);

/// FNV-1a over the canonical manifest encoding; links checkpoints to data.
uint64_t manifest_hash(const Manifest& manifest);

struct SubSequence {
  int task_index = -1;
  int group_id = -1;
  int64_t start = 0;  // t within the source trajectory
  int64_t length = 0;
  int64_t episodes = 0;  // M
  // Flattened [L * dim] rows, already normalized (obs) and scaled (reward).
  std::vector<float> prev_action, prev_reward, prev_done, obs, target_action;
};

/// Uniform-task sampler over a bundle: task uniform over all tasks, then
/// trajectory, then start index with t + L <= trajectory length.
class SubSequenceSampler {
 public:
  SubSequenceSampler(const DatasetBundle& bundle, int64_t length, uint64_t seed);

  SubSequence sample();
  SubSequence sample_from_group(int group_id);
  SubSequence sample_task(int task_index);

  Rng& rng() { return rng_; }
  int64_t length() const { return length_; }

 private:
  const DatasetBundle& bundle_;
  int64_t length_;
  Rng rng_;
  std::vector<std::vector<int>> group_tasks_;  // group_id -> task indices
};

/// One-off draw (see SubSequenceSampler for repeated use).
SubSequence sample_subsequence(const DatasetBundle& bundle, int64_t length, Rng& rng);

/// Collates same-group sub-sequences into dense [B, L, .] arrays.
model::TokenBatch<float> collate_batch(const DatasetBundle& bundle,
                                       std::span<const SubSequence> subs);

struct SummaryRow {
  std::string domain;
  int64_t tasks = 0;
  int64_t episodes = 0;
  int64_t timesteps = 0;
  double weight = 0;  // share of total timesteps
};

struct Summary {
  std::vector<SummaryRow> rows;  // per domain plus a final "overall" row
  std::string to_text() const;
  std::string to_csv() const;
};

Summary summarize(const DatasetBundle& bundle);

}  // namespace icrl::data
