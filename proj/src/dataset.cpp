#include "icrl/dataset.hpp"

#include <algorithm>
#include <array>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include <json.hpp>

namespace icrl::data {

namespace {

uint32_t crc32(const uint8_t* data, size_t len) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t crc = 0xFFFFFFFFu;
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

void write_u64(std::ostream& os, uint64_t v) {
  uint8_t buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<uint8_t>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

void write_u32(std::ostream& os, uint32_t v) {
  uint8_t buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<uint8_t>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 4);
}

uint64_t read_u64(std::istream& is) {
  uint8_t buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  if (is.gcount() != 8) throw TruncationError("unexpected end of file reading u64");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

uint32_t read_u32(std::istream& is) {
  uint8_t buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  if (is.gcount() != 4) throw TruncationError("unexpected end of file reading u32");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[i]) << (8 * i);
  return v;
}

nlohmann::json task_to_json(const TaskRecord& t) {
  nlohmann::json j;
  j["task_id"] = t.spec.task_id;
  j["domain"] = env::to_string(t.spec.domain_id);
  j["obs_dim"] = t.spec.obs_dim;
  j["act_dim"] = t.spec.act_dim;
  j["episode_len"] = t.spec.episode_len;
  j["action_low"] = t.spec.action_low;
  j["action_high"] = t.spec.action_high;
  j["hidden_params"] = t.spec.hidden_params;
  j["semantics"] = t.spec.semantics;
  j["trajectory_lengths"] = t.trajectory_lengths;
  j["seeds"] = t.seeds;
  j["zero_noise_fraction"] = t.zero_noise_fraction;
  j["curvature"] = t.curvature;
  j["episodes"] = t.episodes;
  j["timesteps"] = t.timesteps;
  j["reward_scale"] = t.reward_scale;
  j["obs_mean"] = t.obs_mean;
  j["obs_std"] = t.obs_std;
  j["group_id"] = t.group_id;
  return j;
}

TaskRecord task_from_json(const nlohmann::json& j) {
  TaskRecord t;
  t.spec.task_id = j.at("task_id").get<std::string>();
  t.spec.domain_id = env::domain_from_string(j.at("domain").get<std::string>());
  t.spec.obs_dim = j.at("obs_dim").get<int>();
  t.spec.act_dim = j.at("act_dim").get<int>();
  t.spec.episode_len = j.at("episode_len").get<int>();
  t.spec.action_low = j.at("action_low").get<std::vector<float>>();
  t.spec.action_high = j.at("action_high").get<std::vector<float>>();
  t.spec.hidden_params = j.at("hidden_params").get<std::vector<float>>();
  t.spec.semantics = j.at("semantics").get<std::string>();
  t.trajectory_lengths = j.at("trajectory_lengths").get<std::vector<int64_t>>();
  t.seeds = j.at("seeds").get<std::vector<uint64_t>>();
  t.zero_noise_fraction = j.at("zero_noise_fraction").get<double>();
  t.curvature = j.at("curvature").get<double>();
  t.episodes = j.at("episodes").get<int64_t>();
  t.timesteps = j.at("timesteps").get<int64_t>();
  t.reward_scale = j.at("reward_scale").get<double>();
  t.obs_mean = j.at("obs_mean").get<std::vector<double>>();
  t.obs_std = j.at("obs_std").get<std::vector<double>>();
  t.group_id = j.at("group_id").get<int>();
  return t;
}

nlohmann::json manifest_to_json(const Manifest& m) {
  nlohmann::json j;
  j["format_version"] = m.format_version;
  j["name"] = m.name;
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : m.groups) {
    nlohmann::json gj;
    gj["group_id"] = g.group_id;
    gj["obs_dim"] = g.obs_dim;
    gj["act_dim"] = g.act_dim;
    gj["semantics"] = g.semantics;
    gj["tasks"] = g.tasks;
    groups.push_back(gj);
  }
  j["groups"] = groups;
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : m.tasks) tasks.push_back(task_to_json(t));
  j["tasks"] = tasks;
  return j;
}

Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  m.format_version = j.at("format_version").get<int>();
  m.name = j.at("name").get<std::string>();
  for (const auto& gj : j.at("groups")) {
    GroupInfo g;
    g.group_id = gj.at("group_id").get<int>();
    g.obs_dim = gj.at("obs_dim").get<int>();
    g.act_dim = gj.at("act_dim").get<int>();
    g.semantics = gj.at("semantics").get<std::string>();
    g.tasks = gj.at("tasks").get<std::vector<std::string>>();
    m.groups.push_back(std::move(g));
  }
  for (const auto& tj : j.at("tasks")) m.tasks.push_back(task_from_json(tj));
  return m;
}

template <typename T>
void append_array(const std::vector<T>& v, std::vector<uint8_t>& payload) {
  const auto* bytes = reinterpret_cast<const uint8_t*>(v.data());
  payload.insert(payload.end(), bytes, bytes + v.size() * sizeof(T));
}

template <typename T>
void read_array(std::istream& is, std::vector<T>& v, size_t count, std::vector<uint8_t>& payload) {
  v.resize(count);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(T)));
  if (static_cast<size_t>(is.gcount()) != count * sizeof(T))
    throw TruncationError("unexpected end of file in task block");
  const auto* bytes = reinterpret_cast<const uint8_t*>(v.data());
  payload.insert(payload.end(), bytes, bytes + count * sizeof(T));
}

}  // namespace

int64_t Manifest::total_timesteps() const {
  int64_t n = 0;
  for (const auto& t : tasks) n += t.timesteps;
  return n;
}

int64_t Manifest::total_episodes() const {
  int64_t n = 0;
  for (const auto& t : tasks) n += t.episodes;
  return n;
}

int Manifest::task_index(const std::string& task_id) const {
  for (size_t i = 0; i < tasks.size(); ++i)
    if (tasks[i].spec.task_id == task_id) return static_cast<int>(i);
  return -1;
}

const GroupInfo& Manifest::group(int group_id) const {
  for (const auto& g : groups)
    if (g.group_id == group_id) return g;
  throw DataError("unknown group id " + std::to_string(group_id));
}

void compute_manifest(DatasetBundle& bundle, const std::string& name) {
  if (bundle.manifest.tasks.empty()) throw DataError("compute_manifest: no tasks");
  bundle.manifest.name = name;
  bundle.manifest.format_version = kFormatVersion;
  if (bundle.data.size() != bundle.manifest.tasks.size())
    throw DataError("compute_manifest: data/manifest task count mismatch");

  for (size_t ti = 0; ti < bundle.manifest.tasks.size(); ++ti) {
    TaskRecord& rec = bundle.manifest.tasks[ti];
    const TaskData& td = bundle.data[ti];
    const int c = rec.spec.obs_dim;
    const int64_t n = static_cast<int64_t>(td.reward.size());
    if (n == 0) throw DataError("compute_manifest: task " + rec.spec.task_id + " has no data");
    int64_t declared = 0;
    for (int64_t len : rec.trajectory_lengths) declared += len;
    if (declared != n)
      throw DataError("compute_manifest: trajectory lengths do not cover stored data for " +
                      rec.spec.task_id);
    rec.timesteps = n;
    int64_t dones = 0;
    for (uint8_t d : td.done) dones += d;
    rec.episodes = dones + (td.done.back() ? 0 : 1);

    rec.obs_mean.assign(static_cast<size_t>(c), 0.0);
    rec.obs_std.assign(static_cast<size_t>(c), 0.0);
    for (int64_t i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j)
        rec.obs_mean[static_cast<size_t>(j)] += static_cast<double>(td.obs[i * c + j]);
    for (int j = 0; j < c; ++j) rec.obs_mean[static_cast<size_t>(j)] /= static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) {
        const double d = static_cast<double>(td.obs[i * c + j]) - rec.obs_mean[static_cast<size_t>(j)];
        rec.obs_std[static_cast<size_t>(j)] += d * d;
      }
    for (int j = 0; j < c; ++j) {
      double std = std::sqrt(rec.obs_std[static_cast<size_t>(j)] / static_cast<double>(n));
      rec.obs_std[static_cast<size_t>(j)] = std::max(std, kObsStdFloor);
    }
  }

  // Group assignment: sorted (obs_dim, act_dim, semantics) keys.
  std::map<std::tuple<int, int, std::string>, std::vector<int>> keys;
  for (size_t ti = 0; ti < bundle.manifest.tasks.size(); ++ti) {
    const auto& spec = bundle.manifest.tasks[ti].spec;
    keys[{spec.obs_dim, spec.act_dim, spec.semantics}].push_back(static_cast<int>(ti));
  }
  bundle.manifest.groups.clear();
  int gid = 0;
  for (const auto& [key, members] : keys) {
    GroupInfo g;
    g.group_id = gid++;
    g.obs_dim = std::get<0>(key);
    g.act_dim = std::get<1>(key);
    g.semantics = std::get<2>(key);
    for (int ti : members) {
      g.tasks.push_back(bundle.manifest.tasks[static_cast<size_t>(ti)].spec.task_id);
      bundle.manifest.tasks[static_cast<size_t>(ti)].group_id = g.group_id;
    }
    bundle.manifest.groups.push_back(std::move(g));
  }
}

std::vector<float> normalize_obs(const TaskRecord& task, std::span<const float> obs) {
  const size_t c = task.obs_mean.size();
  if (c == 0 || obs.size() % c != 0)
    throw DataError("normalize_obs: length not a multiple of obs_dim for " + task.spec.task_id);
  std::vector<float> out(obs.size());
  for (size_t i = 0; i < obs.size(); ++i) {
    const size_t j = i % c;
    out[i] = static_cast<float>((static_cast<double>(obs[i]) - task.obs_mean[j]) / task.obs_std[j]);
  }
  return out;
}

float scale_reward(const TaskRecord& task, float reward) {
  return static_cast<float>(static_cast<double>(reward) * task.reward_scale);
}

void write_bundle(const DatasetBundle& bundle, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os.write(kMagic, 8);
  const std::string manifest_text = manifest_to_json(bundle.manifest).dump();
  write_u64(os, manifest_text.size());
  os.write(manifest_text.data(), static_cast<std::streamsize>(manifest_text.size()));
  for (size_t ti = 0; ti < bundle.manifest.tasks.size(); ++ti) {
    const TaskData& td = bundle.data[ti];
    std::vector<uint8_t> payload;
    append_array(td.obs, payload);
    append_array(td.action, payload);
    append_array(td.reward, payload);
    append_array(td.done, payload);
    append_array(td.next_obs, payload);
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size()));
    write_u32(os, crc32(payload.data(), payload.size()));
  }
  if (!os) throw DataError("write failed for '" + path + "'");
}

DatasetBundle read_bundle(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "' for reading");
  char magic[8];
  is.read(magic, 8);
  if (is.gcount() != 8) throw TruncationError("file shorter than magic header");
  if (std::memcmp(magic, "ICRLDS", 6) != 0)
    throw FormatError("bad magic bytes; not an ICRL dataset file");
  if (std::memcmp(magic + 6, "01", 2) != 0)
    throw VersionError(std::string("unsupported container version '") + magic[6] + magic[7] + "'");
  const uint64_t manifest_len = read_u64(is);
  std::string manifest_text(manifest_len, '\0');
  is.read(manifest_text.data(), static_cast<std::streamsize>(manifest_len));
  if (static_cast<uint64_t>(is.gcount()) != manifest_len)
    throw TruncationError("unexpected end of file in manifest");
  DatasetBundle bundle;
  try {
    bundle.manifest = manifest_from_json(nlohmann::json::parse(manifest_text));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (bundle.manifest.format_version > kFormatVersion)
    throw VersionError("manifest format_version " +
                       std::to_string(bundle.manifest.format_version) +
                       " is newer than supported version " + std::to_string(kFormatVersion));
  for (const auto& rec : bundle.manifest.tasks) {
    TaskData td;
    const size_t n = static_cast<size_t>(rec.timesteps);
    std::vector<uint8_t> payload;
    read_array(is, td.obs, n * static_cast<size_t>(rec.spec.obs_dim), payload);
    read_array(is, td.action, n * static_cast<size_t>(rec.spec.act_dim), payload);
    read_array(is, td.reward, n, payload);
    read_array(is, td.done, n, payload);
    read_array(is, td.next_obs, n * static_cast<size_t>(rec.spec.obs_dim), payload);
    const uint32_t stored = read_u32(is);
    const uint32_t actual = crc32(payload.data(), payload.size());
    if (stored != actual)
      throw ChecksumError("CRC mismatch in task block '" + rec.spec.task_id + "'");
    bundle.data.push_back(std::move(td));
  }
  return bundle;
}

uint64_t manifest_hash(const Manifest& manifest) {
  const std::string text = manifest_to_json(manifest).dump();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

SubSequenceSampler::SubSequenceSampler(const DatasetBundle& bundle, int64_t length, uint64_t seed)
    : bundle_(bundle), length_(length), rng_(Rng::derive(seed, 0x5a3317eULL)) {
  if (length_ < 1) throw DataError("sampler: length must be >= 1");
  for (const auto& rec : bundle.manifest.tasks)
    for (int64_t len : rec.trajectory_lengths)
      if (len < length_)
        throw DataError("sampler: sub-sequence length " + std::to_string(length_) +
                        " exceeds trajectory length " + std::to_string(len) + " of task " +
                        rec.spec.task_id);
  int max_gid = -1;
  for (const auto& g : bundle.manifest.groups) max_gid = std::max(max_gid, g.group_id);
  group_tasks_.assign(static_cast<size_t>(max_gid + 1), {});
  for (size_t ti = 0; ti < bundle.manifest.tasks.size(); ++ti)
    group_tasks_[static_cast<size_t>(bundle.manifest.tasks[ti].group_id)].push_back(
        static_cast<int>(ti));
}

SubSequence SubSequenceSampler::sample() {
  return sample_task(static_cast<int>(rng_.uniform_index(bundle_.manifest.tasks.size())));
}

SubSequence SubSequenceSampler::sample_from_group(int group_id) {
  if (group_id < 0 || static_cast<size_t>(group_id) >= group_tasks_.size() ||
      group_tasks_[static_cast<size_t>(group_id)].empty())
    throw DataError("sampler: no tasks in group " + std::to_string(group_id));
  const auto& tasks = group_tasks_[static_cast<size_t>(group_id)];
  return sample_task(tasks[rng_.uniform_index(tasks.size())]);
}

SubSequence SubSequenceSampler::sample_task(int task_index) {
  const TaskRecord& rec = bundle_.manifest.tasks[static_cast<size_t>(task_index)];
  const TaskData& td = bundle_.data[static_cast<size_t>(task_index)];
  const size_t n_traj = rec.trajectory_lengths.size();
  const size_t traj = static_cast<size_t>(rng_.uniform_index(n_traj));
  int64_t traj_offset = 0;
  for (size_t i = 0; i < traj; ++i) traj_offset += rec.trajectory_lengths[i];
  const int64_t traj_len = rec.trajectory_lengths[traj];
  const int64_t t = static_cast<int64_t>(rng_.uniform_index(
      static_cast<uint64_t>(traj_len - length_ + 1)));

  const int obs_dim = rec.spec.obs_dim, act_dim = rec.spec.act_dim;
  SubSequence s;
  s.task_index = task_index;
  s.group_id = rec.group_id;
  s.start = t;
  s.length = length_;
  s.prev_action.assign(static_cast<size_t>(length_ * act_dim), 0.0f);
  s.prev_reward.assign(static_cast<size_t>(length_), 0.0f);
  s.prev_done.assign(static_cast<size_t>(length_), 0.0f);
  s.obs.resize(static_cast<size_t>(length_ * obs_dim));
  s.target_action.resize(static_cast<size_t>(length_ * act_dim));
  s.episodes = 1;
  for (int64_t i = 0; i < length_; ++i) {
    const int64_t abs = traj_offset + t + i;
    auto norm = normalize_obs(
        rec, std::span<const float>(td.obs.data() + abs * obs_dim, static_cast<size_t>(obs_dim)));
    std::copy(norm.begin(), norm.end(), s.obs.begin() + i * obs_dim);
    std::copy(td.action.begin() + abs * act_dim, td.action.begin() + (abs + 1) * act_dim,
              s.target_action.begin() + i * act_dim);
    if (t + i > 0) {  // previous step within the same trajectory; zeros at t=0
      const int64_t prev = abs - 1;
      std::copy(td.action.begin() + prev * act_dim, td.action.begin() + (prev + 1) * act_dim,
                s.prev_action.begin() + i * act_dim);
      s.prev_reward[static_cast<size_t>(i)] = scale_reward(rec, td.reward[prev]);
      s.prev_done[static_cast<size_t>(i)] = td.done[prev] ? 1.0f : 0.0f;
    }
    if (i < length_ - 1 && td.done[abs]) ++s.episodes;
  }
  return s;
}

SubSequence sample_subsequence(const DatasetBundle& bundle, int64_t length, Rng& rng) {
  SubSequenceSampler sampler(bundle, length, 0);
  sampler.rng() = rng;
  SubSequence s = sampler.sample();
  rng = sampler.rng();
  return s;
}

model::TokenBatch<float> collate_batch(const DatasetBundle& bundle,
                                       std::span<const SubSequence> subs) {
  if (subs.empty()) throw DataError("collate_batch: empty batch");
  const int group_id = subs[0].group_id;
  for (const auto& s : subs)
    if (s.group_id != group_id)
      throw DataError("collate_batch: mixed groups " + std::to_string(group_id) + " and " +
                      std::to_string(s.group_id) + " in one batch");
  const GroupInfo& g = bundle.manifest.group(group_id);
  const int64_t B = static_cast<int64_t>(subs.size()), L = subs[0].length;
  model::TokenBatch<float> batch;
  batch.group_id = group_id;
  batch.batch = B;
  batch.length = L;
  batch.prev_action = nn::Tensor<float>::uninitialized({B, L, g.act_dim});
  batch.prev_reward = nn::Tensor<float>::uninitialized({B, L, 1});
  batch.prev_done = nn::Tensor<float>::uninitialized({B, L, 1});
  batch.obs = nn::Tensor<float>::uninitialized({B, L, g.obs_dim});
  batch.target_action = nn::Tensor<float>::uninitialized({B, L, g.act_dim});
  for (int64_t b = 0; b < B; ++b) {
    const SubSequence& s = subs[static_cast<size_t>(b)];
    if (s.length != L) throw DataError("collate_batch: ragged sub-sequence lengths");
    std::copy(s.prev_action.begin(), s.prev_action.end(),
              batch.prev_action.data() + b * L * g.act_dim);
    std::copy(s.prev_reward.begin(), s.prev_reward.end(), batch.prev_reward.data() + b * L);
    std::copy(s.prev_done.begin(), s.prev_done.end(), batch.prev_done.data() + b * L);
    std::copy(s.obs.begin(), s.obs.end(), batch.obs.data() + b * L * g.obs_dim);
    std::copy(s.target_action.begin(), s.target_action.end(),
              batch.target_action.data() + b * L * g.act_dim);
  }
  batch.positions.resize(static_cast<size_t>(L));
  for (int64_t i = 0; i < L; ++i) batch.positions[static_cast<size_t>(i)] = i;
  return batch;
}

Summary summarize(const DatasetBundle& bundle) {
  Summary sum;
  std::vector<std::string> order;
  std::map<std::string, SummaryRow> by_domain;
  for (const auto& rec : bundle.manifest.tasks) {
    const std::string d = env::to_string(rec.spec.domain_id);
    if (!by_domain.count(d)) order.push_back(d);
    auto& row = by_domain[d];
    row.domain = d;
    row.tasks += 1;
    row.episodes += rec.episodes;
    row.timesteps += rec.timesteps;
  }
  const double total = static_cast<double>(bundle.manifest.total_timesteps());
  SummaryRow overall;
  overall.domain = "overall";
  double weight_sum = 0;
  for (const auto& d : order) {
    SummaryRow row = by_domain[d];
    row.weight = static_cast<double>(row.timesteps) / total;
    weight_sum += row.weight;
    overall.tasks += row.tasks;
    overall.episodes += row.episodes;
    overall.timesteps += row.timesteps;
    sum.rows.push_back(row);
  }
  overall.weight = weight_sum;
  sum.rows.push_back(overall);
  return sum;
}

std::string Summary::to_text() const {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-20s %8s %12s %14s %10s\n", "domain", "tasks", "episodes",
                "timesteps", "weight");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-20s %8" PRId64 " %12" PRId64 " %14" PRId64 " %9.1f%%\n",
                  r.domain.c_str(), r.tasks, r.episodes, r.timesteps, 100.0 * r.weight);
    os << buf;
  }
  return os.str();
}

std::string Summary::to_csv() const {
  std::ostringstream os;
  os << "domain,tasks,episodes,timesteps,weight\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s,%" PRId64 ",%" PRId64 ",%" PRId64 ",%.6f\n",
                  r.domain.c_str(), r.tasks, r.episodes, r.timesteps, r.weight);
    os << buf;
  }
  return os.str();
}

}  // namespace icrl::data
