#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dsta/datapipe.hpp"
#include "dsta/network.hpp"
#include "dsta/tensor.hpp"

namespace dsta {

struct TrainConfig {
  std::size_t epochs = 120;
  std::size_t batch_size = 32;
  double base_lr = 0.1;
  std::vector<std::size_t> lr_drop_epochs = {60, 90};
  double lr_drop_factor = 10.0;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::uint64_t seed = 1;
  StreamKind stream = StreamKind::spatial_temporal;
  std::size_t fast_stride = 1;
  std::size_t slow_stride = 2;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (base_lr < 0.0) throw std::invalid_argument("base_lr must be non-negative");
    if (lr_drop_factor <= 1.0) throw std::invalid_argument("lr_drop_factor must exceed 1");
    for (std::size_t i = 0; i < lr_drop_epochs.size(); ++i) {
      if (lr_drop_epochs[i] >= epochs) {
        throw std::invalid_argument("lr drop epoch " + std::to_string(lr_drop_epochs[i]) +
                                    " must lie before the end of training");
      }
      if (i > 0 && lr_drop_epochs[i] <= lr_drop_epochs[i - 1]) {
        throw std::invalid_argument("lr drop epochs must be strictly increasing");
      }
    }
    if (fast_stride < 1 || slow_stride < 1) {
      throw std::invalid_argument("temporal strides must be >= 1");
    }
  }
};

// Step schedule: base_lr divided by factor once per drop epoch reached.
inline double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  if (epoch >= cfg.epochs) {
    throw std::invalid_argument("epoch " + std::to_string(epoch) + " outside [0," +
                                std::to_string(cfg.epochs) + ")");
  }
  double lr = cfg.base_lr;
  for (std::size_t drop : cfg.lr_drop_epochs) {
    if (epoch >= drop) lr /= cfg.lr_drop_factor;
  }
  return lr;
}

// The training pipeline resamples to 150/128 of the crop length, then crops
// to the network frame count (the stock recipe scaled to the input size).
inline std::size_t resample_length_for(std::size_t crop_length) {
  return static_cast<std::size_t>(
      std::lround(static_cast<double>(crop_length) * 150.0 / 128.0));
}

// ---------------------------------------------------------------------------
// Dataset handle
// ---------------------------------------------------------------------------

struct LoadedDataset {
  DatasetManifest manifest;
  std::filesystem::path base_dir;
  std::vector<SkeletonSequence> sequences;  // parallel to manifest.entries

  static LoadedDataset load(const std::filesystem::path& manifest_path) {
    LoadedDataset ds;
    ds.manifest = load_manifest(manifest_path);
    ds.base_dir = manifest_path.parent_path();
    ds.sequences.reserve(ds.manifest.entries.size());
    for (const auto& e : ds.manifest.entries) {
      SkeletonSequence seq = load_skeleton_file(ds.base_dir / e.path);
      seq.label = e.label;
      ds.sequences.push_back(std::move(seq));
    }
    return ds;
  }

  std::vector<std::size_t> split_indices(const std::string& split) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i)
      if (manifest.entries[i].split == split) idx.push_back(i);
    return idx;
  }

  std::size_t num_classes() const {
    if (!manifest.class_names.empty()) return manifest.class_names.size();
    int mx = -1;
    for (const auto& e : manifest.entries) mx = std::max(mx, e.label);
    return static_cast<std::size_t>(mx + 1);
  }
};

namespace detail {

// resample -> crop -> stream, returned in network layout [N x T x C].
inline Tensor preprocess_sample(const SkeletonSequence& seq, const NetworkConfig& net_cfg,
                                const TrainConfig& cfg, bool training, Rng* rng) {
  if (seq.num_joints() != net_cfg.num_joints) {
    throw ShapeError("sample '" + seq.id + "' has " + std::to_string(seq.num_joints()) +
                     " joints but num_joints is " + std::to_string(net_cfg.num_joints));
  }
  if (seq.channels != net_cfg.in_channels) {
    throw ShapeError("sample '" + seq.id + "' has " + std::to_string(seq.channels) +
                     " channels but in_channels is " + std::to_string(net_cfg.in_channels));
  }
  const std::size_t crop_t = net_cfg.num_frames;
  const std::size_t resample_t = std::max(crop_t, resample_length_for(crop_t));
  SkeletonSequence r = resample_frames(
      seq, resample_t, training ? ResampleMode::random : ResampleMode::uniform, rng);
  SkeletonSequence c =
      crop_frames(r, crop_t, training ? CropMode::random : CropMode::center, rng);
  SkeletonSequence s = stream_view(c, cfg.stream, cfg.fast_stride, cfg.slow_stride);
  return to_tensor_ntc(s);
}

inline std::size_t argmax_row(const Tensor& t, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < t.dim(1); ++j)
    if (t.at(row, j) > t.at(row, best)) best = j;
  return best;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochStats {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double train_acc = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> log;
};

inline void write_epoch_line(std::ostream& os, const EpochStats& s) {
  os << s.epoch << ',' << detail::format_double(s.lr) << ',' << detail::format_double(s.loss)
     << ',' << detail::format_double(s.train_acc) << '\n';
}

// Shuffled minibatch SGD with the stock augmentations (random resample +
// random crop on the train split). Writes a checkpoint at the end when a
// path is given.
inline TrainResult train(Network& net, const LoadedDataset& data, const TrainConfig& cfg,
                         std::ostream* log_os = nullptr,
                         const std::optional<std::filesystem::path>& ckpt_path = std::nullopt) {
  cfg.validate();
  const NetworkConfig& ncfg = net.config();
  std::vector<std::size_t> train_idx = data.split_indices("train");
  if (train_idx.empty()) throw std::invalid_argument("train split is empty");
  if (data.num_classes() > ncfg.num_classes) {
    throw ShapeError("dataset has " + std::to_string(data.num_classes()) +
                     " classes but num_classes is " + std::to_string(ncfg.num_classes));
  }

  Rng rng(cfg.seed);
  TrainResult result;
  if (log_os) *log_os << "epoch,lr,loss,train_acc\n";

  const std::size_t sample_numel =
      ncfg.num_joints * ncfg.num_frames * ncfg.in_channels;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    rng.shuffle(train_idx);
    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;

    for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, train_idx.size() - start);
      Tensor batch({b, ncfg.num_joints, ncfg.num_frames, ncfg.in_channels});
      std::vector<std::size_t> labels(b);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t idx = train_idx[start + i];
        Tensor sample =
            detail::preprocess_sample(data.sequences[idx], ncfg, cfg, true, &rng);
        std::copy(sample.data(), sample.data() + sample_numel,
                  batch.data() + i * sample_numel);
        labels[i] = static_cast<std::size_t>(data.manifest.entries[idx].label);
      }
      try {
        Tape tape;
        Tensor logits = net.forward(batch);
        Tensor loss = cross_entropy(logits, labels);
        if (!std::isfinite(loss.at(0))) {
          throw NumericError("loss is non-finite");
        }
        backward(loss);
        sgd_nesterov_step(net.params(), lr, cfg.momentum, cfg.weight_decay);
        loss_sum += loss.at(0) * static_cast<double>(b);
        for (std::size_t i = 0; i < b; ++i) {
          if (detail::argmax_row(logits, i) == labels[i]) ++correct;
        }
        seen += b;
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(start / cfg.batch_size) + ": " +
                           e.what());
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.loss = loss_sum / static_cast<double>(seen);
    stats.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
    if (log_os) write_epoch_line(*log_os, stats);
    result.log.push_back(stats);
  }

  if (ckpt_path) net.save(*ckpt_path);
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation and fusion
// ---------------------------------------------------------------------------

struct ScoreRow {
  int label = -1;
  std::vector<double> probs;
};

struct ScoreTable {
  std::string stream;  // tag of the producing stream, or "fused"
  std::map<std::string, ScoreRow> rows;

  double accuracy() const {
    if (rows.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& [id, row] : rows) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < row.probs.size(); ++j)
        if (row.probs[j] > row.probs[best]) best = j;
      if (static_cast<int>(best) == row.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(rows.size());
  }

  // Mean accuracy over the samples of one class.
  double class_accuracy(int label) const {
    std::size_t correct = 0, total = 0;
    for (const auto& [id, row] : rows) {
      if (row.label != label) continue;
      ++total;
      std::size_t best = 0;
      for (std::size_t j = 1; j < row.probs.size(); ++j)
        if (row.probs[j] > row.probs[best]) best = j;
      if (static_cast<int>(best) == row.label) ++correct;
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  }
};

struct EvalResult {
  double accuracy = 0.0;
  ScoreTable table;
};

// Uniform resample + center crop, then softmax probabilities per sample.
inline EvalResult evaluate(const Network& net, const LoadedDataset& data,
                           const std::string& split, const TrainConfig& cfg) {
  EvalResult result;
  result.table.stream = stream_tag(cfg.stream);
  const auto idx = data.split_indices(split);
  if (idx.empty()) throw std::invalid_argument("split '" + split + "' is empty");
  for (std::size_t i : idx) {
    const SkeletonSequence& seq = data.sequences[i];
    Tensor x = detail::preprocess_sample(seq, net.config(), cfg, false, nullptr);
    Tensor logits = net.forward_sample(x);
    Tensor probs = softmax_rows(logits);
    ScoreRow row;
    row.label = data.manifest.entries[i].label;
    row.probs.assign(probs.data(), probs.data() + probs.size());
    if (!result.table.rows.emplace(seq.id, std::move(row)).second) {
      throw std::invalid_argument("duplicate sample id '" + seq.id + "' in split " + split);
    }
  }
  result.accuracy = result.table.accuracy();
  return result;
}

// Arithmetic mean of the probability vectors, per sample id.
inline ScoreTable fuse_scores(const std::vector<ScoreTable>& tables) {
  if (tables.empty()) throw std::invalid_argument("fuse_scores needs at least one table");
  ScoreTable fused;
  fused.stream = "fused";
  const ScoreTable& first = tables[0];
  for (const auto& t : tables) {
    if (t.rows.size() != first.rows.size()) {
      throw std::invalid_argument("fuse_scores: tables cover different sample sets");
    }
  }
  for (const auto& [id, row] : first.rows) {
    ScoreRow out;
    out.label = row.label;
    out.probs.assign(row.probs.size(), 0.0);
    for (const auto& t : tables) {
      auto it = t.rows.find(id);
      if (it == t.rows.end()) {
        throw std::invalid_argument("fuse_scores: sample '" + id + "' missing from table '" +
                                    t.stream + "'");
      }
      if (it->second.probs.size() != out.probs.size() || it->second.label != out.label) {
        throw std::invalid_argument("fuse_scores: sample '" + id +
                                    "' disagrees across tables");
      }
      for (std::size_t j = 0; j < out.probs.size(); ++j) out.probs[j] += it->second.probs[j];
    }
    for (double& p : out.probs) p /= static_cast<double>(tables.size());
    fused.rows.emplace(id, std::move(out));
  }
  return fused;
}

// ---------------------------------------------------------------------------
// Score table CSV: "# stream: <tag>", header, then id,label,p0..p{K-1}
// ---------------------------------------------------------------------------

inline void write_score_table(std::ostream& os, const ScoreTable& table) {
  os << "# stream: " << table.stream << "\n";
  std::size_t k = 0;
  if (!table.rows.empty()) k = table.rows.begin()->second.probs.size();
  os << "id,label";
  for (std::size_t j = 0; j < k; ++j) os << ",p" << j;
  os << "\n";
  for (const auto& [id, row] : table.rows) {
    os << id << ',' << row.label;
    for (double p : row.probs) os << ',' << detail::format_double(p);
    os << "\n";
  }
}

inline void save_score_table(const std::filesystem::path& path, const ScoreTable& table) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot open score table for writing: " + path.string());
  write_score_table(out, table);
}

inline ScoreTable load_score_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open score table: " + path.string());
  ScoreTable table;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind("# stream:", 0) == 0) {
      table.stream = line.substr(9);
      table.stream.erase(0, table.stream.find_first_not_of(' '));
      continue;
    }
    if (line.rfind("id,label", 0) == 0) {
      header_seen = true;
      continue;
    }
    if (!header_seen) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": missing header");
    }
    std::stringstream ss(line);
    std::string field;
    if (!std::getline(ss, field, ',')) continue;
    ScoreRow row;
    const std::string id = field;
    if (!std::getline(ss, field, ',')) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": missing label");
    }
    row.label = std::stoi(field);
    while (std::getline(ss, field, ',')) row.probs.push_back(std::stod(field));
    if (row.probs.empty()) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": no probabilities");
    }
    if (!table.rows.emplace(id, std::move(row)).second) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": duplicate id '" +
                       id + "'");
    }
  }
  return table;
}

}  // namespace dsta
