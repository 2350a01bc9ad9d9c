#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dsta/common.hpp"
#include "dsta/tensor.hpp"

namespace dsta {

// One skeleton sample: joint names, a bone tree, frame-major coordinates
// [T][N][C] and a class label. File schema is documented in docs/FORMATS.md.
struct SkeletonSequence {
  std::string id;
  int label = -1;
  std::vector<std::string> joints;
  std::vector<std::pair<int, int>> bones;  // (parent, child)
  std::size_t num_frames = 0;
  std::size_t channels = 0;
  std::vector<double> frames;  // T * N * C row-major
  std::string stream_tag;      // "", or one of st/s/ft/sl

  std::size_t num_joints() const { return joints.size(); }

  double& at(std::size_t t, std::size_t n, std::size_t c) {
    return frames[(t * num_joints() + n) * channels + c];
  }
  double at(std::size_t t, std::size_t n, std::size_t c) const {
    return frames[(t * num_joints() + n) * channels + c];
  }

  void validate() const {
    const std::size_t n = num_joints();
    if (n < 1) throw ParseError("skeleton '" + id + "': joints must be non-empty");
    if (channels != 2 && channels != 3) {
      throw ParseError("skeleton '" + id + "': channels must be 2 or 3, got " +
                       std::to_string(channels));
    }
    if (num_frames < 1) throw ParseError("skeleton '" + id + "': no frames");
    if (frames.size() != num_frames * n * channels) {
      throw ParseError("skeleton '" + id + "': frame buffer size mismatch");
    }
    for (double v : frames) {
      if (!std::isfinite(v)) {
        throw ParseError("skeleton '" + id + "': non-finite coordinate");
      }
    }
    // The bone list must form a tree over the joints (undirected).
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int a) {
      while (parent[a] != a) a = parent[a] = parent[parent[a]];
      return a;
    };
    for (const auto& [p, c] : bones) {
      if (p < 0 || c < 0 || p >= static_cast<int>(n) || c >= static_cast<int>(n)) {
        throw ParseError("skeleton '" + id + "': bone index out of range (" +
                         std::to_string(p) + "," + std::to_string(c) + ") with " +
                         std::to_string(n) + " joints");
      }
      const int rp = find(p), rc = find(c);
      if (rp == rc) throw ParseError("skeleton '" + id + "': bones form a cycle");
      parent[rp] = rc;
    }
    const int root = find(0);
    for (std::size_t i = 1; i < n; ++i) {
      if (find(static_cast<int>(i)) != root) {
        throw ParseError("skeleton '" + id + "': bones do not connect all joints");
      }
    }
  }
};

// Network-layout view: [N x T x C].
inline Tensor to_tensor_ntc(const SkeletonSequence& seq) {
  const std::size_t n = seq.num_joints(), t = seq.num_frames, c = seq.channels;
  Tensor out({n, t, c});
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t f = 0; f < t; ++f)
      for (std::size_t cc = 0; cc < c; ++cc) out.at(j, f, cc) = seq.at(f, j, cc);
  return out;
}

// ---------------------------------------------------------------------------
// Skeleton file I/O (JSON, deterministic serialization)
// ---------------------------------------------------------------------------

inline std::string skeleton_to_json(const SkeletonSequence& seq) {
  nlohmann::json doc;
  doc["name"] = seq.id;
  doc["label"] = seq.label;
  doc["joints"] = seq.joints;
  doc["bones"] = nlohmann::json::array();
  for (const auto& [p, c] : seq.bones) doc["bones"].push_back({p, c});
  doc["frames"] = nlohmann::json::array();
  for (std::size_t t = 0; t < seq.num_frames; ++t) {
    nlohmann::json frame = nlohmann::json::array();
    for (std::size_t j = 0; j < seq.num_joints(); ++j) {
      nlohmann::json pt = nlohmann::json::array();
      for (std::size_t c = 0; c < seq.channels; ++c) pt.push_back(seq.at(t, j, c));
      frame.push_back(pt);
    }
    doc["frames"].push_back(frame);
  }
  if (!seq.stream_tag.empty()) doc["stream"] = seq.stream_tag;
  return doc.dump(1) + "\n";
}

inline SkeletonSequence parse_skeleton_json(const std::string& text,
                                            const std::string& context) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(context + ": " + e.what());
  }
  auto field_error = [&](const char* field, const char* what) -> ParseError {
    return ParseError(context + ": field '" + field + "': " + what);
  };
  if (!doc.is_object()) throw ParseError(context + ": expected a JSON object");
  SkeletonSequence seq;
  try {
    if (!doc.contains("name") || !doc.at("name").is_string())
      throw field_error("name", "missing or not a string");
    seq.id = doc.at("name").get<std::string>();
    if (!doc.contains("label") || !doc.at("label").is_number_integer())
      throw field_error("label", "missing or not an integer");
    seq.label = doc.at("label").get<int>();
    if (!doc.contains("joints") || !doc.at("joints").is_array() || doc.at("joints").empty())
      throw field_error("joints", "missing or empty");
    for (const auto& j : doc.at("joints")) seq.joints.push_back(j.get<std::string>());
    if (!doc.contains("bones") || !doc.at("bones").is_array())
      throw field_error("bones", "missing");
    for (const auto& b : doc.at("bones")) {
      if (!b.is_array() || b.size() != 2) throw field_error("bones", "entries must be pairs");
      seq.bones.emplace_back(b[0].get<int>(), b[1].get<int>());
    }
    if (!doc.contains("frames") || !doc.at("frames").is_array() || doc.at("frames").empty())
      throw field_error("frames", "missing or empty");
    const auto& frames = doc.at("frames");
    seq.num_frames = frames.size();
    const std::size_t n = seq.joints.size();
    for (std::size_t t = 0; t < seq.num_frames; ++t) {
      const auto& frame = frames.at(t);
      if (!frame.is_array() || frame.size() != n) {
        throw ParseError(context + ": frame " + std::to_string(t) + " has " +
                         std::to_string(frame.size()) + " joints, expected " +
                         std::to_string(n));
      }
      for (std::size_t j = 0; j < n; ++j) {
        const auto& pt = frame.at(j);
        if (!pt.is_array() || pt.empty()) {
          throw ParseError(context + ": frame " + std::to_string(t) + " joint " +
                           std::to_string(j) + ": expected a coordinate array");
        }
        if (t == 0 && j == 0) seq.channels = pt.size();
        if (pt.size() != seq.channels) {
          throw ParseError(context + ": frame " + std::to_string(t) + " joint " +
                           std::to_string(j) + ": inconsistent channel count");
        }
        for (const auto& v : pt) seq.frames.push_back(v.get<double>());
      }
    }
    if (doc.contains("stream")) seq.stream_tag = doc.at("stream").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(context + ": " + e.what());
  }
  seq.validate();
  return seq;
}

inline SkeletonSequence load_skeleton_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open skeleton file: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_skeleton_json(text, path.string());
}

inline void save_skeleton_file(const std::filesystem::path& path,
                               const SkeletonSequence& seq) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot open skeleton file for writing: " + path.string());
  out << skeleton_to_json(seq);
}

// ---------------------------------------------------------------------------
// Frame resampling and cropping
// ---------------------------------------------------------------------------

enum class ResampleMode { uniform, random };
enum class CropMode { center, random };

namespace detail {

inline SkeletonSequence with_frames(const SkeletonSequence& src,
                                    const std::vector<std::size_t>& indices) {
  SkeletonSequence out = src;
  out.num_frames = indices.size();
  out.frames.clear();
  out.frames.reserve(indices.size() * src.num_joints() * src.channels);
  const std::size_t stride = src.num_joints() * src.channels;
  for (std::size_t idx : indices) {
    const double* begin = src.frames.data() + idx * stride;
    out.frames.insert(out.frames.end(), begin, begin + stride);
  }
  return out;
}

}  // namespace detail

// Uniform mode picks indices round(k*(T-1)/(target-1)); random mode draws one
// frame per equal-width bin (sorted by construction). Repetition is how short
// clips stretch to the target length.
inline SkeletonSequence resample_frames(const SkeletonSequence& seq, std::size_t target,
                                        ResampleMode mode, Rng* rng = nullptr) {
  if (target < 1) throw std::invalid_argument("resample target must be >= 1");
  if (seq.num_frames < 1) throw std::invalid_argument("cannot resample an empty sequence");
  const std::size_t t = seq.num_frames;
  std::vector<std::size_t> idx(target);
  if (mode == ResampleMode::uniform) {
    if (target == 1) {
      idx[0] = 0;
    } else {
      for (std::size_t k = 0; k < target; ++k) {
        idx[k] = static_cast<std::size_t>(std::lround(
            static_cast<double>(k) * static_cast<double>(t - 1) /
            static_cast<double>(target - 1)));
      }
    }
  } else {
    if (!rng) throw std::invalid_argument("random resampling needs an rng");
    for (std::size_t k = 0; k < target; ++k) {
      const std::size_t lo = k * t / target;
      const std::size_t hi = std::max(lo + 1, (k + 1) * t / target);
      idx[k] = lo + rng->index(hi - lo);
    }
  }
  return detail::with_frames(seq, idx);
}

inline SkeletonSequence crop_frames(const SkeletonSequence& seq, std::size_t crop,
                                    CropMode mode, Rng* rng = nullptr) {
  if (crop < 1) throw std::invalid_argument("crop length must be >= 1");
  if (crop > seq.num_frames) {
    throw std::invalid_argument("crop length " + std::to_string(crop) +
                                " exceeds frame count " + std::to_string(seq.num_frames));
  }
  std::size_t start = 0;
  if (mode == CropMode::center) {
    start = (seq.num_frames - crop) / 2;
  } else {
    if (!rng) throw std::invalid_argument("random cropping needs an rng");
    start = rng->index(seq.num_frames - crop + 1);
  }
  std::vector<std::size_t> idx(crop);
  std::iota(idx.begin(), idx.end(), start);
  return detail::with_frames(seq, idx);
}

// ---------------------------------------------------------------------------
// Data decoupling (the four streams)
// ---------------------------------------------------------------------------

// Bone vectors: child minus parent per frame; joints that are no bone's
// child (the root) stay zero. Translation of the whole skeleton cancels.
inline SkeletonSequence decouple_spatial(const SkeletonSequence& seq) {
  SkeletonSequence out = seq;
  std::fill(out.frames.begin(), out.frames.end(), 0.0);
  for (std::size_t t = 0; t < seq.num_frames; ++t) {
    for (const auto& [p, c] : seq.bones) {
      for (std::size_t cc = 0; cc < seq.channels; ++cc) {
        out.at(t, c, cc) = seq.at(t, c, cc) - seq.at(t, p, cc);
      }
    }
  }
  out.stream_tag = "s";
  return out;
}

// Frame differences at the given stride: out[t] = in[t+stride] - in[t].
inline SkeletonSequence decouple_temporal(const SkeletonSequence& seq, std::size_t stride) {
  if (stride < 1) throw std::invalid_argument("temporal stride must be >= 1");
  if (stride >= seq.num_frames) {
    throw std::invalid_argument("temporal stride " + std::to_string(stride) +
                                " must be smaller than the frame count " +
                                std::to_string(seq.num_frames));
  }
  SkeletonSequence out = seq;
  out.num_frames = seq.num_frames - stride;
  out.frames.assign(out.num_frames * seq.num_joints() * seq.channels, 0.0);
  for (std::size_t t = 0; t < out.num_frames; ++t)
    for (std::size_t j = 0; j < seq.num_joints(); ++j)
      for (std::size_t cc = 0; cc < seq.channels; ++cc)
        out.at(t, j, cc) = seq.at(t + stride, j, cc) - seq.at(t, j, cc);
  return out;
}

// Edge-repeat padding to `target` frames: out[t] = in[min(t, T-1)].
inline SkeletonSequence pad_frames_to(const SkeletonSequence& seq, std::size_t target) {
  if (target < seq.num_frames) {
    throw std::invalid_argument("pad target shorter than the sequence");
  }
  std::vector<std::size_t> idx(target);
  for (std::size_t t = 0; t < target; ++t) idx[t] = std::min(t, seq.num_frames - 1);
  return detail::with_frames(seq, idx);
}

struct StreamSet {
  SkeletonSequence spatial_temporal;
  SkeletonSequence spatial;
  SkeletonSequence fast_temporal;
  SkeletonSequence slow_temporal;
};

// The four decoupled views; temporal streams are edge-padded back to the
// input length so one network shape serves every stream.
inline StreamSet build_streams(const SkeletonSequence& seq, std::size_t fast_stride = 1,
                               std::size_t slow_stride = 2) {
  StreamSet set;
  set.spatial_temporal = seq;
  set.spatial_temporal.stream_tag = "st";
  set.spatial = decouple_spatial(seq);
  set.fast_temporal = pad_frames_to(decouple_temporal(seq, fast_stride), seq.num_frames);
  set.fast_temporal.stream_tag = "ft";
  set.slow_temporal = pad_frames_to(decouple_temporal(seq, slow_stride), seq.num_frames);
  set.slow_temporal.stream_tag = "sl";
  return set;
}

enum class StreamKind { spatial_temporal, spatial, fast_temporal, slow_temporal };

inline const char* stream_tag(StreamKind k) {
  switch (k) {
    case StreamKind::spatial_temporal: return "st";
    case StreamKind::spatial: return "s";
    case StreamKind::fast_temporal: return "ft";
    default: return "sl";
  }
}

inline StreamKind parse_stream_tag(std::string_view s) {
  if (s == "st") return StreamKind::spatial_temporal;
  if (s == "s") return StreamKind::spatial;
  if (s == "ft") return StreamKind::fast_temporal;
  if (s == "sl") return StreamKind::slow_temporal;
  throw std::invalid_argument("unknown stream tag '" + std::string(s) +
                              "' (expected st, s, ft or sl)");
}

inline SkeletonSequence stream_view(const SkeletonSequence& seq, StreamKind kind,
                                    std::size_t fast_stride = 1, std::size_t slow_stride = 2) {
  switch (kind) {
    case StreamKind::spatial_temporal: {
      SkeletonSequence out = seq;
      out.stream_tag = "st";
      return out;
    }
    case StreamKind::spatial:
      return decouple_spatial(seq);
    case StreamKind::fast_temporal: {
      SkeletonSequence out =
          pad_frames_to(decouple_temporal(seq, fast_stride), seq.num_frames);
      out.stream_tag = "ft";
      return out;
    }
    default: {
      SkeletonSequence out =
          pad_frames_to(decouple_temporal(seq, slow_stride), seq.num_frames);
      out.stream_tag = "sl";
      return out;
    }
  }
}

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string path;
  int label = -1;
  std::string split;  // "train" or "test"
};

struct DatasetManifest {
  std::vector<std::string> class_names;
  std::vector<ManifestEntry> entries;
};

// Text format: a "# classes:" header line, then one "path,label,split"
// entry per line.
inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot open manifest for writing: " + path.string());
  out << "# classes:";
  for (std::size_t i = 0; i < m.class_names.size(); ++i)
    out << (i ? "," : " ") << m.class_names[i];
  out << "\n";
  for (const auto& e : m.entries) out << e.path << ',' << e.label << ',' << e.split << '\n';
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open manifest: " + path.string());
  DatasetManifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind("# classes:", 0) == 0) {
      std::string names = line.substr(10);
      std::stringstream ss(names);
      std::string name;
      while (std::getline(ss, name, ',')) {
        name.erase(0, name.find_first_not_of(' '));
        if (!name.empty()) m.class_names.push_back(name);
      }
      continue;
    }
    if (line[0] == '#') continue;
    std::stringstream ss(line);
    std::string p, l, s;
    if (!std::getline(ss, p, ',') || !std::getline(ss, l, ',') || !std::getline(ss, s)) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": expected 'path,label,split'");
    }
    ManifestEntry e;
    e.path = p;
    try {
      e.label = std::stoi(l);
    } catch (const std::exception&) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad label '" + l +
                       "'");
    }
    e.split = s;
    if (e.split != "train" && e.split != "test") {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad split '" + s +
                       "' (expected train or test)");
    }
    if (e.label < 0 ||
        (!m.class_names.empty() && e.label >= static_cast<int>(m.class_names.size()))) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": label " + l +
                       " outside the class table");
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Synthetic gesture generator
// ---------------------------------------------------------------------------

// Deterministic gesture families on a chain skeleton. The first half of the
// classes differ only in static pose (per-class joint offsets, shared
// motion); the second half differ only in trajectory (shared pose, rigid
// translation varying in direction and speed, slow/fast variants). The only
// per-sample variation at noise 0 is a phase jitter in the trajectory.
struct SynthSpec {
  std::size_t classes = 4;
  std::size_t per_class = 50;
  std::size_t joints = 10;
  std::size_t frames = 32;
  double noise = 0.05;
  std::uint64_t seed = 1;
  double train_fraction = 0.8;

  void validate() const {
    if (classes < 1) throw std::invalid_argument("classes must be >= 1");
    if (per_class < 1) throw std::invalid_argument("per-class count must be >= 1");
    if (joints < 2) throw std::invalid_argument("need at least 2 joints");
    if (frames < 4) throw std::invalid_argument("need at least 4 frames");
    if (noise < 0.0) throw std::invalid_argument("noise must be non-negative");
    if (train_fraction < 0.0 || train_fraction > 1.0) {
      throw std::invalid_argument("train fraction must lie in [0,1]");
    }
  }
};

namespace detail {

struct SynthClass {
  std::string name;
  bool pose_kind = false;
  std::vector<double> pose_offset;  // joints * 3
  double freq = 1.0;
  double dir[3] = {0.0, 1.0, 0.0};
  double amp = 1.0;
};

inline std::vector<SynthClass> synth_classes(const SynthSpec& spec, Rng& rng) {
  std::vector<SynthClass> classes;
  const std::size_t pose_count = (spec.classes + 1) / 2;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    SynthClass sc;
    if (c < pose_count) {
      sc.pose_kind = true;
      sc.name = "pose" + std::to_string(c);
      sc.pose_offset.resize(spec.joints * 3);
      for (double& v : sc.pose_offset) v = rng.uniform(-1.0, 1.0);
      // Shared gentle motion for every pose class.
      sc.freq = 1.0;
      sc.dir[0] = 0.0;
      sc.dir[1] = 1.0;
      sc.dir[2] = 0.0;
      sc.amp = 0.2;
    } else {
      const std::size_t q = c - pose_count;
      sc.pose_kind = false;
      const bool fast = q % 2 == 1;
      const bool z_dir = (q / 2) % 2 == 1;
      sc.name = "move" + std::to_string(q) + (fast ? "_fast" : "_slow") + (z_dir ? "_z" : "_y");
      sc.pose_offset.assign(spec.joints * 3, 0.0);
      // Speed variants: slow wide swing vs fast narrow vibration. Peak
      // velocity and excursion both separate the two scales.
      sc.freq = fast ? 4.0 : 1.0;
      sc.dir[0] = 0.0;
      sc.dir[1] = z_dir ? 0.0 : 1.0;
      sc.dir[2] = z_dir ? 1.0 : 0.0;
      sc.amp = fast ? 0.35 : 0.8;
    }
    classes.push_back(std::move(sc));
  }
  return classes;
}

}  // namespace detail

// One sample of a synthetic class, including the per-sample phase jitter.
inline SkeletonSequence synth_sample(const SynthSpec& spec, const detail::SynthClass& cls,
                                     int label, const std::string& id, Rng& rng) {
  SkeletonSequence seq;
  seq.id = id;
  seq.label = label;
  for (std::size_t j = 0; j < spec.joints; ++j) seq.joints.push_back("j" + std::to_string(j));
  for (std::size_t j = 0; j + 1 < spec.joints; ++j)
    seq.bones.emplace_back(static_cast<int>(j), static_cast<int>(j + 1));
  seq.num_frames = spec.frames;
  seq.channels = 3;
  seq.frames.assign(spec.frames * spec.joints * 3, 0.0);

  const double phase = rng.uniform(0.0, 6.283185307179586477);
  const double mid = 0.5 * static_cast<double>(spec.joints - 1);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const double wave =
        cls.amp * std::sin(6.283185307179586477 * cls.freq * static_cast<double>(t) /
                               static_cast<double>(spec.frames) +
                           phase);
    for (std::size_t j = 0; j < spec.joints; ++j) {
      seq.at(t, j, 0) = 0.1 * (static_cast<double>(j) - mid) + cls.pose_offset[j * 3 + 0] +
                        wave * cls.dir[0];
      seq.at(t, j, 1) = cls.pose_offset[j * 3 + 1] + wave * cls.dir[1];
      seq.at(t, j, 2) = cls.pose_offset[j * 3 + 2] + wave * cls.dir[2];
    }
  }
  if (spec.noise > 0.0) {
    for (double& v : seq.frames) v += rng.gaussian(0.0, spec.noise);
  }
  return seq;
}

// Writes per-sample skeleton files plus manifest.csv; returns the manifest.
inline DatasetManifest synth_generate(const SynthSpec& spec,
                                      const std::filesystem::path& out_dir) {
  spec.validate();
  std::filesystem::create_directories(out_dir);
  Rng rng(spec.seed);
  const auto classes = detail::synth_classes(spec, rng);

  DatasetManifest manifest;
  for (const auto& c : classes) manifest.class_names.push_back(c.name);

  const std::size_t train_count =
      static_cast<std::size_t>(spec.train_fraction * static_cast<double>(spec.per_class));
  for (std::size_t c = 0; c < classes.size(); ++c) {
    for (std::size_t k = 0; k < spec.per_class; ++k) {
      char suffix[16];
      std::snprintf(suffix, sizeof(suffix), "%04zu", k);
      const std::string id = classes[c].name + "_" + suffix;
      SkeletonSequence seq = synth_sample(spec, classes[c], static_cast<int>(c), id, rng);
      const std::string filename = id + ".skel.json";
      save_skeleton_file(out_dir / filename, seq);
      ManifestEntry e;
      e.path = filename;
      e.label = static_cast<int>(c);
      e.split = k < train_count ? "train" : "test";
      manifest.entries.push_back(std::move(e));
    }
  }
  save_manifest(out_dir / "manifest.csv", manifest);
  return manifest;
}

}  // namespace dsta
