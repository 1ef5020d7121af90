#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "smnet/errors.hpp"
#include "smnet/rng.hpp"
#include "smnet/tensor.hpp"

namespace smnet::stream {

enum class Split { train, valid, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::valid: return "valid";
    case Split::test: return "test";
    case Split::train: break;
  }
  return "train";
}

// Examples grouped by global label. Each class stores its rows contiguously
// as f32, matching the on-disk format.
struct LabeledDataset {
  Split split = Split::train;
  std::size_t feature_dim = 0;
  std::map<std::uint32_t, std::vector<float>> classes;

  std::size_t class_size(std::uint32_t label) const {
    return classes.at(label).size() / feature_dim;
  }

  std::span<const float> example(std::uint32_t label, std::size_t i) const {
    const auto& rows = classes.at(label);
    return std::span<const float>(rows).subspan(i * feature_dim, feature_dim);
  }

  std::vector<std::uint32_t> labels() const {
    std::vector<std::uint32_t> out;
    for (const auto& [l, _] : classes) out.push_back(l);
    return out;
  }

  std::size_t total_examples() const {
    std::size_t n = 0;
    for (const auto& [l, rows] : classes) n += rows.size() / feature_dim;
    return n;
  }

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

// Gaussian clusters around unit-norm random means, one per label 0..n-1.
inline LabeledDataset synth_dataset(std::size_t n_classes, std::size_t per_class, std::size_t feature_dim,
                                    std::uint64_t seed, double sigma = 0.3) {
  if (n_classes == 0 || per_class == 0 || feature_dim == 0)
    throw ConfigError("synth_dataset: sizes must be positive");
  Rng rng = make_rng(seed, "synth-data");
  std::normal_distribution<double> normal(0.0, 1.0);
  LabeledDataset ds;
  ds.feature_dim = feature_dim;
  std::vector<double> mean(feature_dim);
  for (std::uint32_t c = 0; c < n_classes; ++c) {
    double norm = 0.0;
    for (double& m : mean) {
      m = normal(rng);
      norm += m * m;
    }
    norm = std::sqrt(norm);
    for (double& m : mean) m /= norm;
    auto& rows = ds.classes[c];
    rows.resize(per_class * feature_dim);
    for (std::size_t i = 0; i < per_class; ++i)
      for (std::size_t j = 0; j < feature_dim; ++j)
        rows[i * feature_dim + j] = static_cast<float>(mean[j] + sigma * normal(rng));
  }
  return ds;
}

// Partitions classes (not examples) into disjoint train/valid/test pools.
// Labels are shuffled under `seed` before the cut.
inline std::array<LabeledDataset, 3> split_classes(const LabeledDataset& all, std::array<std::size_t, 3> counts,
                                                   std::uint64_t seed) {
  std::vector<std::uint32_t> labels = all.labels();
  if (counts[0] + counts[1] + counts[2] > labels.size())
    throw ConfigError("split_classes: asked for " + std::to_string(counts[0] + counts[1] + counts[2]) +
                      " classes, dataset has " + std::to_string(labels.size()));
  Rng rng = make_rng(seed, "class-split");
  std::shuffle(labels.begin(), labels.end(), rng);
  std::array<LabeledDataset, 3> out;
  const std::array<Split, 3> splits{Split::train, Split::valid, Split::test};
  std::size_t pos = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    out[s].split = splits[s];
    out[s].feature_dim = all.feature_dim;
    for (std::size_t i = 0; i < counts[s]; ++i, ++pos) out[s].classes[labels[pos]] = all.classes.at(labels[pos]);
  }
  return out;
}

// Fractional split, e.g. {0.4, 0.3, 0.3} of 100 classes gives 40/30/30.
inline std::array<LabeledDataset, 3> split_classes(const LabeledDataset& all, std::array<double, 3> fractions,
                                                   std::uint64_t seed) {
  const auto n = static_cast<double>(all.classes.size());
  const auto a = static_cast<std::size_t>(std::floor(fractions[0] * n + 1e-9));
  const auto b = static_cast<std::size_t>(std::floor(fractions[1] * n + 1e-9));
  return split_classes(all, std::array<std::size_t, 3>{a, b, all.classes.size() - a - b}, seed);
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class ByteReader {
 public:
  explicit ByteReader(std::string data) : data_(std::move(data)) {}

  std::size_t offset() const noexcept { return pos_; }
  bool at_end() const noexcept { return pos_ == data_.size(); }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  void expect(std::string_view magic) {
    need(magic.size(), "header");
    if (data_.compare(pos_, magic.size(), magic) != 0) throw ParseError(pos_, "bad magic, expected SMDS1");
    pos_ += magic.size();
  }

  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) throw ParseError(pos_, std::string("truncated ") + what);
  }

 private:
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline constexpr std::string_view kDatasetMagic = "SMDS1";

inline std::string encode_dataset(const LabeledDataset& ds) {
  std::string out(kDatasetMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(ds.classes.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(ds.feature_dim));
  for (const auto& [label, rows] : ds.classes) {
    detail::put_u32(out, label);
    detail::put_u32(out, static_cast<std::uint32_t>(rows.size() / ds.feature_dim));
    for (float v : rows) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

inline LabeledDataset decode_dataset(std::string bytes, Split split = Split::train) {
  detail::ByteReader r(std::move(bytes));
  r.expect(kDatasetMagic);
  const std::size_t n_off = r.offset();
  const std::uint32_t n_classes = r.u32("class count");
  const std::size_t d_off = r.offset();
  const std::uint32_t dim = r.u32("feature dimension");
  if (n_classes == 0) throw ParseError(n_off, "dataset declares zero classes");
  if (dim == 0) throw ParseError(d_off, "dataset declares zero feature dimension");
  LabeledDataset ds;
  ds.split = split;
  ds.feature_dim = dim;
  for (std::uint32_t c = 0; c < n_classes; ++c) {
    const std::size_t rec = r.offset();
    const std::uint32_t label = r.u32("class label");
    const std::uint32_t n = r.u32("example count");
    if (n == 0) throw ParseError(rec + 4, "class " + std::to_string(label) + " has no examples");
    if (ds.classes.contains(label)) throw ParseError(rec, "duplicate class label " + std::to_string(label));
    r.need(static_cast<std::size_t>(n) * dim * 4, "example rows");
    auto& rows = ds.classes[label];
    rows.resize(static_cast<std::size_t>(n) * dim);
    for (float& v : rows) v = r.f32("example rows");
  }
  if (!r.at_end()) throw ParseError(r.offset(), "trailing bytes after last class");
  return ds;
}

inline void save_dataset(const std::string& path, const LabeledDataset& ds) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  const std::string bytes = encode_dataset(ds);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline LabeledDataset load_dataset(const std::string& path, Split split = Split::train) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open dataset " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_dataset(std::move(bytes), split);
}

// One task of the stream. Task ids are the local 0..nb_classes-1 labels the
// learner must output; global labels index the dataset.
struct TaskSpec {
  std::map<int, std::uint32_t> task_map;  // task id -> global label
  std::map<int, int> new_old_map;         // perseveration class: task id -> previous task id
  std::set<int> kept_ids;
  std::size_t length = 1;  // rounds (mini-batches)

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

struct StreamConfig {
  int nb_classes = 5;
  int nb_perv = 2;
  int nb_kept = 1;
  std::size_t min_length = 15;
  std::size_t max_length = 30;
  std::size_t total_tasks = 400;
  std::size_t batch_size = 32;
  double holdout_fraction = 0.2;  // tail of each class reserved for held-out batches
  std::uint64_t seed = 0;

  void validate() const {
    if (nb_classes < 2) throw ConfigError("stream: nb_classes must be at least 2");
    if (nb_perv < 0 || nb_kept < 0) throw ConfigError("stream: class counts must be non-negative");
    if (nb_perv + nb_kept >= nb_classes) throw ConfigError("stream: nb_perv + nb_kept must be below nb_classes");
    if (min_length < 1 || max_length < min_length) throw ConfigError("stream: invalid task length range");
    if (batch_size < 1) throw ConfigError("stream: batch size must be positive");
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
      throw ConfigError("stream: holdout fraction must be in [0, 1)");
  }

  friend bool operator==(const StreamConfig&, const StreamConfig&) = default;
};

struct Batch {
  Tensor features;                 // rows x feature_dim
  std::vector<int> labels;         // task ids
  std::vector<int> perv_labels;    // previous task id for perseveration classes, else -1
  std::vector<std::uint8_t> kept;  // 1 for kept-class examples
  std::vector<std::uint32_t> global_labels;
  bool epoch_done = false;

  std::size_t size() const noexcept { return labels.size(); }
};

class StreamGenerator {
 public:
  StreamGenerator(const LabeledDataset& data, StreamConfig cfg)
      : data_(&data),
        cfg_(cfg),
        task_rng_(make_rng(cfg.seed, "stream-tasks")),
        batch_rng_(make_rng(cfg.seed, "stream-batches")) {
    cfg_.validate();
    if (data.feature_dim == 0) throw ConfigError("stream: dataset has no features");
    for (const auto& [label, rows] : data.classes) {
      const std::size_t n = rows.size() / data.feature_dim;
      const auto held = static_cast<std::size_t>(std::floor(cfg_.holdout_fraction * static_cast<double>(n)));
      if (n - held == 0 || (cfg_.holdout_fraction > 0.0 && held == 0))
        throw ConfigError("stream: class " + std::to_string(label) + " too small for the holdout split");
    }
  }

  const StreamConfig& config() const noexcept { return cfg_; }
  const LabeledDataset& dataset() const noexcept { return *data_; }
  const std::optional<TaskSpec>& current_task() const noexcept { return current_; }
  const std::optional<TaskSpec>& previous_task() const noexcept { return previous_; }
  std::size_t tasks_started() const noexcept { return total_tasks_; }
  std::size_t task_round() const noexcept { return task_round_; }
  std::size_t task_epoch() const noexcept { return task_epoch_; }
  std::size_t total_rounds() const noexcept { return total_rounds_; }

  // Every consumed round of the configured number of tasks.
  bool done() const noexcept {
    return total_tasks_ >= cfg_.total_tasks && current_ && task_round_ >= current_->length;
  }

  // Builds the next task (or installs `replay` verbatim) and its example pools.
  const TaskSpec& next_task(const std::optional<TaskSpec>& replay = std::nullopt) {
    TaskSpec t = replay ? *replay : make_task();
    previous_ = std::move(current_);
    current_ = std::move(t);
    build_pools();
    ++total_tasks_;
    task_round_ = 0;
    task_epoch_ = 0;
    return *current_;
  }

  // Next shuffled mini-batch of the current task. The last batch of an epoch
  // may be short; it carries epoch_done and the pool is reshuffled.
  Batch next_batch(bool train = true) {
    if (!current_) throw StateError("next_batch before next_task");
    auto& pool = train ? train_pool_ : held_pool_;
    auto& cursor = train ? train_cursor_ : held_cursor_;
    const std::size_t d = data_->feature_dim;
    const std::size_t n = std::min(cfg_.batch_size, pool.size() - cursor);
    Batch b;
    b.features = Tensor::matrix(n, d);
    b.labels.reserve(n);
    b.perv_labels.reserve(n);
    b.kept.reserve(n);
    b.global_labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Entry& e = pool[cursor + i];
      const auto x = data_->example(e.global, e.index);
      auto row = b.features.row(i);
      for (std::size_t j = 0; j < d; ++j) row[j] = x[j];
      b.labels.push_back(e.id);
      b.perv_labels.push_back(e.perv);
      b.kept.push_back(e.kept);
      b.global_labels.push_back(e.global);
    }
    cursor += n;
    if (cursor >= pool.size()) {
      std::shuffle(pool.begin(), pool.end(), batch_rng_);
      cursor = 0;
      b.epoch_done = true;
      if (train) ++task_epoch_;
    }
    if (train) {
      ++task_round_;
      ++total_rounds_;
    }
    return b;
  }

  // Number of examples per epoch of the current task.
  std::size_t pool_size(bool train = true) const { return train ? train_pool_.size() : held_pool_.size(); }

 private:
  struct Entry {
    std::uint32_t global;
    std::uint32_t index;
    int id;
    int perv;
    std::uint8_t kept;
  };

  template <class T>
  std::vector<T> sample(std::vector<T> from, std::size_t n) {
    if (n > from.size()) throw GenerationError("stream: class pool exhausted");
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = static_cast<std::size_t>(uniform_int(task_rng_, static_cast<std::int64_t>(i),
                                                          static_cast<std::int64_t>(from.size() - 1)));
      std::swap(from[i], from[j]);
    }
    from.resize(n);
    return from;
  }

  TaskSpec make_task() {
    const int n = cfg_.nb_classes;
    std::vector<int> ids(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;
    const std::vector<std::uint32_t> all = data_->labels();
    TaskSpec t;
    t.length = static_cast<std::size_t>(uniform_int(task_rng_, static_cast<std::int64_t>(cfg_.min_length),
                                                    static_cast<std::int64_t>(cfg_.max_length)));
    if (!current_) {
      const auto labels = sample(all, static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) t.task_map[i] = labels[static_cast<std::size_t>(i)];
      return t;
    }
    const TaskSpec& prev = *current_;
    std::set<std::uint32_t> prev_labels;
    for (const auto& [id, l] : prev.task_map) prev_labels.insert(l);

    // Kept: same id, same label.
    for (int id : sample(ids, static_cast<std::size_t>(cfg_.nb_kept))) {
      t.kept_ids.insert(id);
      t.task_map[id] = prev.task_map.at(id);
    }
    std::vector<int> free;
    for (int id : ids)
      if (!t.kept_ids.contains(id)) free.push_back(id);

    // Perseveration: a previous label moves to a different id.
    const auto old_ids = sample(free, static_cast<std::size_t>(cfg_.nb_perv));
    std::vector<int> new_ids;
    for (;;) {
      new_ids = sample(free, static_cast<std::size_t>(cfg_.nb_perv));
      bool moved = true;
      for (std::size_t i = 0; i < new_ids.size(); ++i) moved = moved && new_ids[i] != old_ids[i];
      if (moved) break;
    }
    for (std::size_t i = 0; i < new_ids.size(); ++i) {
      t.task_map[new_ids[i]] = prev.task_map.at(old_ids[i]);
      t.new_old_map[new_ids[i]] = old_ids[i];
    }

    // Novel: labels absent from the previous task.
    std::vector<int> rest;
    for (int id : free)
      if (!t.task_map.contains(id)) rest.push_back(id);
    std::vector<std::uint32_t> unseen;
    for (std::uint32_t l : all)
      if (!prev_labels.contains(l)) unseen.push_back(l);
    const auto fresh = sample(unseen, rest.size());
    for (std::size_t i = 0; i < rest.size(); ++i) t.task_map[rest[i]] = fresh[i];
    return t;
  }

  void build_pools() {
    train_pool_.clear();
    held_pool_.clear();
    for (const auto& [id, label] : current_->task_map) {
      if (!data_->classes.contains(label))
        throw GenerationError("stream: task uses label " + std::to_string(label) + " missing from the dataset");
      const auto perv_it = current_->new_old_map.find(id);
      const int perv = perv_it == current_->new_old_map.end() ? -1 : perv_it->second;
      const std::uint8_t kept = current_->kept_ids.contains(id) ? 1 : 0;
      const std::size_t n = data_->class_size(label);
      const auto held = static_cast<std::size_t>(std::floor(cfg_.holdout_fraction * static_cast<double>(n)));
      for (std::size_t i = 0; i < n; ++i) {
        Entry e{label, static_cast<std::uint32_t>(i), id, perv, kept};
        (i < n - held ? train_pool_ : held_pool_).push_back(e);
      }
    }
    std::shuffle(train_pool_.begin(), train_pool_.end(), batch_rng_);
    std::shuffle(held_pool_.begin(), held_pool_.end(), batch_rng_);
    train_cursor_ = 0;
    held_cursor_ = 0;
  }

  const LabeledDataset* data_;
  StreamConfig cfg_;
  Rng task_rng_;
  Rng batch_rng_;
  std::optional<TaskSpec> current_;
  std::optional<TaskSpec> previous_;
  std::vector<Entry> train_pool_;
  std::vector<Entry> held_pool_;
  std::size_t train_cursor_ = 0;
  std::size_t held_cursor_ = 0;
  std::size_t total_tasks_ = 0;
  std::size_t task_round_ = 0;
  std::size_t task_epoch_ = 0;
  std::size_t total_rounds_ = 0;
};

// Manifest: one JSON object per task and line.
inline nlohmann::json task_to_json(const TaskSpec& t) {
  nlohmann::json j;
  j["length"] = t.length;
  nlohmann::json map = nlohmann::json::object();
  for (const auto& [id, l] : t.task_map) map[std::to_string(id)] = l;
  j["task_map"] = map;
  nlohmann::json perv = nlohmann::json::object();
  for (const auto& [id, old] : t.new_old_map) perv[std::to_string(id)] = old;
  j["new_old_map"] = perv;
  j["kept_ids"] = std::vector<int>(t.kept_ids.begin(), t.kept_ids.end());
  return j;
}

inline TaskSpec task_from_json(const nlohmann::json& j) {
  TaskSpec t;
  t.length = j.at("length").get<std::size_t>();
  for (const auto& [k, v] : j.at("task_map").items()) t.task_map[std::stoi(k)] = v.get<std::uint32_t>();
  for (const auto& [k, v] : j.at("new_old_map").items()) t.new_old_map[std::stoi(k)] = v.get<int>();
  for (const auto& v : j.at("kept_ids")) t.kept_ids.insert(v.get<int>());
  if (t.length == 0) throw ConfigError("manifest task has zero length");
  return t;
}

inline void write_manifest(std::ostream& out, const std::vector<TaskSpec>& tasks) {
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    nlohmann::json j = task_to_json(tasks[i]);
    j["task"] = i + 1;
    out << j.dump() << '\n';
  }
}

inline std::vector<TaskSpec> read_manifest(std::istream& in) {
  std::vector<TaskSpec> tasks;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      tasks.push_back(task_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return tasks;
}

struct TaskMetrics {
  std::size_t task_index = 0;  // 1-based
  std::size_t length = 0;
  std::size_t examples = 0;
  std::size_t correct = 0;
  std::size_t perv_examples = 0;
  std::size_t perv_errors = 0;  // predicted the class's previous task id
  std::size_t kept_examples = 0;
  std::size_t kept_correct = 0;
  std::optional<double> interference;

  double accuracy() const { return examples ? static_cast<double>(correct) / static_cast<double>(examples) : 0.0; }
};

// Running stream metrics. Predictions are scored before the learner sees the
// labels of the batch.
class StreamMetrics {
 public:
  // `tail_rounds`: rounds at the end of a task whose per-class accuracy is the
  // reference for interference on the next task.
  explicit StreamMetrics(std::size_t tail_rounds = 3) : tail_rounds_(tail_rounds) {}

  void begin_task(const TaskSpec& task) {
    if (open_) end_task();
    open_ = true;
    current_ = TaskMetrics{};
    current_.task_index = tasks_.size() + 1;
    current_.length = task.length;
    kept_labels_.clear();
    for (int id : task.kept_ids) kept_labels_.insert(task.task_map.at(id));
    rounds_.clear();
  }

  void observe(std::span<const int> predictions, const Batch& batch) {
    if (!open_) throw StateError("StreamMetrics::observe before begin_task");
    if (predictions.size() != batch.size())
      throw DimensionError("stream metrics: predictions vs batch", {predictions.size()}, {batch.size()});
    std::map<std::uint32_t, std::pair<std::size_t, std::size_t>> per_class;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const bool ok = predictions[i] == batch.labels[i];
      ++current_.examples;
      current_.correct += ok;
      if (batch.perv_labels[i] >= 0) {
        ++current_.perv_examples;
        current_.perv_errors += predictions[i] == batch.perv_labels[i];
      }
      if (batch.kept[i]) {
        ++current_.kept_examples;
        current_.kept_correct += ok;
      }
      auto& pc = per_class[batch.global_labels[i]];
      ++pc.first;
      pc.second += ok;
    }
    rounds_.push_back(std::move(per_class));
  }

  void end_task() {
    if (!open_) return;
    open_ = false;
    if (current_.kept_examples > 0) {
      std::size_t n = 0, ok = 0;
      for (std::uint32_t l : kept_labels_) {
        const auto it = reference_.find(l);
        if (it == reference_.end()) continue;
        n += it->second.first;
        ok += it->second.second;
      }
      if (n > 0)
        current_.interference = static_cast<double>(current_.kept_correct) / static_cast<double>(current_.kept_examples) -
                                static_cast<double>(ok) / static_cast<double>(n);
    }
    reference_.clear();
    const std::size_t from = rounds_.size() > tail_rounds_ ? rounds_.size() - tail_rounds_ : 0;
    for (std::size_t r = from; r < rounds_.size(); ++r)
      for (const auto& [l, c] : rounds_[r]) {
        reference_[l].first += c.first;
        reference_[l].second += c.second;
      }
    tasks_.push_back(current_);
  }

  const std::vector<TaskMetrics>& tasks() const noexcept { return tasks_; }

  // Mean over tasks of per-task accuracy.
  double mean_task_accuracy() const {
    if (tasks_.empty()) return 0.0;
    double s = 0.0;
    for (const auto& t : tasks_) s += t.accuracy();
    return s / static_cast<double>(tasks_.size());
  }

  // Pooled fraction of perseveration-class examples predicted as their old id.
  double perseveration_rate() const {
    std::size_t n = 0, e = 0;
    for (const auto& t : tasks_) {
      n += t.perv_examples;
      e += t.perv_errors;
    }
    return n ? static_cast<double>(e) / static_cast<double>(n) : 0.0;
  }

  double mean_interference() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& t : tasks_)
      if (t.interference) {
        s += *t.interference;
        ++n;
      }
    return n ? s / static_cast<double>(n) : 0.0;
  }

 private:
  std::size_t tail_rounds_;
  bool open_ = false;
  TaskMetrics current_;
  std::set<std::uint32_t> kept_labels_;
  std::vector<std::map<std::uint32_t, std::pair<std::size_t, std::size_t>>> rounds_;
  std::map<std::uint32_t, std::pair<std::size_t, std::size_t>> reference_;
  std::vector<TaskMetrics> tasks_;
};

}  // namespace smnet::stream
