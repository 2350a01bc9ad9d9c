#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "dsta/datapipe.hpp"

using namespace dsta;
namespace fs = std::filesystem;

namespace {

SkeletonSequence make_chain(std::size_t joints, std::size_t frames,
                            std::function<double(std::size_t, std::size_t, std::size_t)> f) {
  SkeletonSequence seq;
  seq.id = "chain";
  seq.label = 0;
  for (std::size_t j = 0; j < joints; ++j) seq.joints.push_back("j" + std::to_string(j));
  for (std::size_t j = 0; j + 1 < joints; ++j)
    seq.bones.emplace_back(static_cast<int>(j), static_cast<int>(j + 1));
  seq.num_frames = frames;
  seq.channels = 3;
  seq.frames.resize(frames * joints * 3);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t j = 0; j < joints; ++j)
      for (std::size_t c = 0; c < 3; ++c) seq.at(t, j, c) = f(t, j, c);
  return seq;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("dsta_dp_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("skeleton file round trip") {
  const fs::path dir = temp_dir("roundtrip");
  SkeletonSequence seq;
  seq.id = "mini";
  seq.label = 1;
  seq.joints = {"root", "tip"};
  seq.bones = {{0, 1}};
  seq.num_frames = 2;
  seq.channels = 3;
  seq.frames = {0, 0, 0, 1, 0.5, -0.25, 0.125, 0, 0, 1.5, 0.5, -0.125};

  const fs::path p = dir / "mini.skel.json";
  save_skeleton_file(p, seq);
  SkeletonSequence back = load_skeleton_file(p);
  CHECK(back.id == "mini");
  CHECK(back.label == 1);
  CHECK(back.joints == seq.joints);
  CHECK(back.bones == seq.bones);
  CHECK(back.frames == seq.frames);

  // Saving what we loaded reproduces identical bytes.
  const fs::path p2 = dir / "mini2.skel.json";
  save_skeleton_file(p2, back);
  CHECK(file_bytes(p) == file_bytes(p2));
  fs::remove_all(dir);
}

TEST_CASE("skeleton validation errors") {
  SkeletonSequence seq;
  seq.id = "bad";
  seq.joints = {"a", "b"};
  seq.bones = {{0, 2}};  // out of range
  seq.num_frames = 1;
  seq.channels = 3;
  seq.frames.assign(6, 0.0);
  CHECK_THROWS_WITH(seq.validate(), Catch::Matchers::ContainsSubstring("bone index out of range"));

  seq.bones = {{0, 1}, {1, 0}};
  CHECK_THROWS_WITH(seq.validate(), Catch::Matchers::ContainsSubstring("cycle"));

  seq.joints = {"a", "b", "c"};
  seq.bones = {{0, 1}};
  seq.frames.assign(9, 0.0);
  CHECK_THROWS_WITH(seq.validate(), Catch::Matchers::ContainsSubstring("connect"));

  seq.joints = {"a", "b"};
  seq.bones = {{0, 1}};
  seq.frames.assign(6, 0.0);
  seq.frames[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH(seq.validate(), Catch::Matchers::ContainsSubstring("non-finite"));

  CHECK_THROWS_AS(parse_skeleton_json("{", "ctx"), ParseError);
  CHECK_THROWS_WITH(parse_skeleton_json(R"({"label":0})", "ctx"),
                    Catch::Matchers::ContainsSubstring("name"));
}

TEST_CASE("resample frame selection") {
  auto ramp = make_chain(2, 4, [](std::size_t t, std::size_t, std::size_t c) {
    return c == 0 ? static_cast<double>(t) : 0.0;
  });

  SECTION("same length uniform is the identity") {
    SkeletonSequence out = resample_frames(ramp, 4, ResampleMode::uniform);
    CHECK(out.frames == ramp.frames);
  }
  SECTION("downsample 4 -> 2 picks frames 0 and 3") {
    SkeletonSequence out = resample_frames(ramp, 2, ResampleMode::uniform);
    REQUIRE(out.num_frames == 2);
    CHECK(out.at(0, 0, 0) == 0.0);
    CHECK(out.at(1, 0, 0) == 3.0);
  }
  SECTION("upsample 2 -> 4 repeats frames as 0,0,1,1") {
    auto two = make_chain(2, 2, [](std::size_t t, std::size_t, std::size_t c) {
      return c == 0 ? static_cast<double>(t) : 0.0;
    });
    SkeletonSequence out = resample_frames(two, 4, ResampleMode::uniform);
    REQUIRE(out.num_frames == 4);
    CHECK(out.at(0, 0, 0) == 0.0);
    CHECK(out.at(1, 0, 0) == 0.0);
    CHECK(out.at(2, 0, 0) == 1.0);
    CHECK(out.at(3, 0, 0) == 1.0);
  }
  SECTION("random mode is seeded and sorted") {
    Rng r1(9), r2(9);
    SkeletonSequence a = resample_frames(ramp, 3, ResampleMode::random, &r1);
    SkeletonSequence b = resample_frames(ramp, 3, ResampleMode::random, &r2);
    CHECK(a.frames == b.frames);
    for (std::size_t t = 1; t < a.num_frames; ++t)
      CHECK(a.at(t, 0, 0) >= a.at(t - 1, 0, 0));
  }
  SECTION("invalid target") {
    CHECK_THROWS_AS(resample_frames(ramp, 0, ResampleMode::uniform), std::invalid_argument);
  }
}

TEST_CASE("crop frame selection") {
  auto ramp = make_chain(2, 10, [](std::size_t t, std::size_t, std::size_t c) {
    return c == 0 ? static_cast<double>(t) : 0.0;
  });
  SECTION("full-length crop is the identity") {
    CHECK(crop_frames(ramp, 10, CropMode::center).frames == ramp.frames);
  }
  SECTION("center crop of 4 from 10 starts at frame 3") {
    SkeletonSequence out = crop_frames(ramp, 4, CropMode::center);
    REQUIRE(out.num_frames == 4);
    for (std::size_t t = 0; t < 4; ++t) CHECK(out.at(t, 0, 0) == static_cast<double>(t + 3));
  }
  SECTION("random crop is reproducible under a fixed seed") {
    Rng r1(4), r2(4);
    CHECK(crop_frames(ramp, 4, CropMode::random, &r1).frames ==
          crop_frames(ramp, 4, CropMode::random, &r2).frames);
  }
  SECTION("crop longer than the clip is rejected") {
    CHECK_THROWS_AS(crop_frames(ramp, 11, CropMode::center), std::invalid_argument);
  }
}

TEST_CASE("spatial decoupling") {
  SECTION("simple bone vector") {
    auto seq = make_chain(2, 1, [](std::size_t, std::size_t j, std::size_t c) {
      const double child[3] = {1, 2, 3};
      return j == 0 ? 0.0 : child[c];
    });
    SkeletonSequence s = decouple_spatial(seq);
    CHECK(s.at(0, 1, 0) == 1.0);
    CHECK(s.at(0, 1, 1) == 2.0);
    CHECK(s.at(0, 1, 2) == 3.0);
    // Root carries zeros.
    for (std::size_t c = 0; c < 3; ++c) CHECK(s.at(0, 0, c) == 0.0);
  }

  SECTION("translation invariance is exact") {
    // Coordinates quantized to 2^-10 so translated sums stay exact.
    Rng rng(15);
    auto seq = make_chain(5, 7, [&](std::size_t, std::size_t, std::size_t) {
      return std::floor(rng.uniform(-4.0, 4.0) * 1024.0) / 1024.0;
    });
    SkeletonSequence moved = seq;
    const double shift[3] = {1.25, -2.5, 0.75};
    for (std::size_t t = 0; t < seq.num_frames; ++t)
      for (std::size_t j = 0; j < 5; ++j)
        for (std::size_t c = 0; c < 3; ++c) moved.at(t, j, c) += shift[c];
    CHECK(decouple_spatial(seq).frames == decouple_spatial(moved).frames);
  }
}

TEST_CASE("temporal decoupling") {
  SECTION("constant sequence differences vanish") {
    auto seq = make_chain(3, 5, [](std::size_t, std::size_t j, std::size_t c) {
      return static_cast<double>(j) + 0.1 * static_cast<double>(c);
    });
    SkeletonSequence d = decouple_temporal(seq, 1);
    REQUIRE(d.num_frames == 4);
    for (double v : d.frames) CHECK(v == 0.0);
  }
  SECTION("1-d positions 0,1,4,9 at stride 2 give 4 and 8") {
    const double pos[4] = {0, 1, 4, 9};
    auto seq = make_chain(2, 4, [&](std::size_t t, std::size_t, std::size_t c) {
      return c == 0 ? pos[t] : 0.0;
    });
    SkeletonSequence d = decouple_temporal(seq, 2);
    REQUIRE(d.num_frames == 2);
    CHECK(d.at(0, 0, 0) == 4.0);
    CHECK(d.at(1, 0, 0) == 8.0);
  }
  SECTION("stride-2 differences telescope out of stride-1 differences") {
    Rng rng(27);
    auto seq = make_chain(4, 9, [&](std::size_t, std::size_t, std::size_t) {
      return rng.uniform(-2.0, 2.0);
    });
    SkeletonSequence d1 = decouple_temporal(seq, 1);
    SkeletonSequence d2 = decouple_temporal(seq, 2);
    for (std::size_t t = 0; t < d2.num_frames; ++t)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t c = 0; c < 3; ++c) {
          const double sum = d1.at(t, j, c) + d1.at(t + 1, j, c);
          CHECK(std::abs(d2.at(t, j, c) - sum) <= 1e-12);
        }
  }
  SECTION("constant velocity gives exactly v times stride") {
    // Dyadic base plus t * dyadic velocity: every value is exact.
    const double v[3] = {0.25, -0.125, 0.5};
    auto seq = make_chain(3, 12, [&](std::size_t t, std::size_t j, std::size_t c) {
      return static_cast<double>(j) * 0.5 + static_cast<double>(t) * v[c];
    });
    for (std::size_t stride : {1, 2, 3}) {
      SkeletonSequence d = decouple_temporal(seq, stride);
      for (std::size_t t = 0; t < d.num_frames; ++t)
        for (std::size_t j = 0; j < 3; ++j)
          for (std::size_t c = 0; c < 3; ++c)
            CHECK(d.at(t, j, c) == static_cast<double>(stride) * v[c]);
    }
  }
  SECTION("stride must stay below the frame count") {
    auto seq = make_chain(2, 3, [](std::size_t, std::size_t, std::size_t) { return 0.0; });
    CHECK_THROWS_AS(decouple_temporal(seq, 3), std::invalid_argument);
    CHECK_THROWS_AS(decouple_temporal(seq, 0), std::invalid_argument);
  }
}

TEST_CASE("build_streams") {
  Rng rng(33);
  auto seq = make_chain(4, 8, [&](std::size_t, std::size_t, std::size_t) {
    return rng.uniform(-1.0, 1.0);
  });

  StreamSet set = build_streams(seq, 1, 2);
  SECTION("all four streams share joint count, length and channels") {
    for (const SkeletonSequence* s :
         {&set.spatial_temporal, &set.spatial, &set.fast_temporal, &set.slow_temporal}) {
      CHECK(s->num_joints() == 4);
      CHECK(s->num_frames == 8);
      CHECK(s->channels == 3);
    }
  }
  SECTION("the raw stream is bit-identical to the input") {
    CHECK(set.spatial_temporal.frames == seq.frames);
    CHECK(set.spatial_temporal.stream_tag == "st");
  }
  SECTION("temporal streams repeat their last difference frame") {
    SkeletonSequence d1 = decouple_temporal(seq, 1);
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t c = 0; c < 3; ++c)
        CHECK(set.fast_temporal.at(7, j, c) == d1.at(6, j, c));
  }
  SECTION("zero motion zeroes the temporal streams and keeps static bones") {
    auto still = make_chain(4, 6, [](std::size_t, std::size_t j, std::size_t c) {
      return c == 0 ? 0.4 * static_cast<double>(j) : 0.25;
    });
    StreamSet s2 = build_streams(still);
    for (double v : s2.fast_temporal.frames) CHECK(v == 0.0);
    for (double v : s2.slow_temporal.frames) CHECK(v == 0.0);
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t j = 1; j < 4; ++j) {
        CHECK(s2.spatial.at(t, j, 0) == Catch::Approx(0.4).margin(1e-15));
        CHECK(s2.spatial.at(t, j, 1) == 0.0);
      }
  }
  SECTION("building twice is bit-identical") {
    StreamSet again = build_streams(seq, 1, 2);
    CHECK(again.spatial.frames == set.spatial.frames);
    CHECK(again.fast_temporal.frames == set.fast_temporal.frames);
    CHECK(again.slow_temporal.frames == set.slow_temporal.frames);
  }
}

TEST_CASE("resample then crop stays in bounds across random lengths") {
  Rng rng(71);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t t = 1 + rng.index(60);
    auto seq = make_chain(2, t, [&](std::size_t, std::size_t, std::size_t) {
      return rng.uniform(-1.0, 1.0);
    });
    const std::size_t target = 1 + rng.index(40);
    const std::size_t crop = 1 + rng.index(target);
    Rng aug(trial);
    SkeletonSequence r = resample_frames(seq, target, ResampleMode::random, &aug);
    REQUIRE(r.num_frames == target);
    SkeletonSequence c = crop_frames(r, crop, CropMode::random, &aug);
    REQUIRE(c.num_frames == crop);
    for (double v : c.frames) CHECK(std::isfinite(v));
  }
}

TEST_CASE("manifest round trip and validation") {
  const fs::path dir = temp_dir("manifest");
  DatasetManifest m;
  m.class_names = {"alpha", "beta"};
  m.entries = {{"a.skel.json", 0, "train"}, {"b.skel.json", 1, "test"}};
  save_manifest(dir / "manifest.csv", m);
  DatasetManifest back = load_manifest(dir / "manifest.csv");
  CHECK(back.class_names == m.class_names);
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[1].path == "b.skel.json");
  CHECK(back.entries[1].label == 1);
  CHECK(back.entries[1].split == "test");

  std::ofstream bad(dir / "bad.csv");
  bad << "# classes: a\nfile.skel.json,3,train\n";
  bad.close();
  CHECK_THROWS_WITH(load_manifest(dir / "bad.csv"),
                    Catch::Matchers::ContainsSubstring("outside the class table"));

  std::ofstream bad2(dir / "bad2.csv");
  bad2 << "# classes: a\nfile.skel.json,0,dev\n";
  bad2.close();
  CHECK_THROWS_WITH(load_manifest(dir / "bad2.csv"),
                    Catch::Matchers::ContainsSubstring("bad split"));
  fs::remove_all(dir);
}

TEST_CASE("synthetic generator") {
  SynthSpec spec;
  spec.classes = 4;
  spec.per_class = 6;
  spec.joints = 6;
  spec.frames = 16;
  spec.noise = 0.0;
  spec.seed = 11;

  SECTION("same seed gives byte-identical datasets") {
    const fs::path d1 = temp_dir("synth_a");
    const fs::path d2 = temp_dir("synth_b");
    synth_generate(spec, d1);
    synth_generate(spec, d2);
    for (const auto& entry : fs::directory_iterator(d1)) {
      const fs::path other = d2 / entry.path().filename();
      REQUIRE(fs::exists(other));
      CHECK(file_bytes(entry.path()) == file_bytes(other));
    }
    fs::remove_all(d1);
    fs::remove_all(d2);
  }

  SECTION("at noise zero, same-class samples differ only by a rigid phase shift") {
    const fs::path dir = temp_dir("synth_phase");
    DatasetManifest m = synth_generate(spec, dir);
    SkeletonSequence a = load_skeleton_file(dir / m.entries[0].path);
    SkeletonSequence b = load_skeleton_file(dir / m.entries[1].path);
    REQUIRE(a.label == b.label);
    // The difference is a per-frame constant across joints (a translation).
    for (std::size_t t = 0; t < a.num_frames; ++t)
      for (std::size_t c = 0; c < 3; ++c) {
        const double base = a.at(t, 0, c) - b.at(t, 0, c);
        for (std::size_t j = 1; j < a.num_joints(); ++j)
          CHECK(a.at(t, j, c) - b.at(t, j, c) == Catch::Approx(base).margin(1e-12));
      }
    fs::remove_all(dir);
  }

  SECTION("a generated sample loads back equal to its in-memory source") {
    const fs::path dir = temp_dir("synth_load");
    Rng rng(spec.seed);
    auto classes = detail::synth_classes(spec, rng);
    SkeletonSequence mem = synth_sample(spec, classes[0], 0, "pose0_0000", rng);
    save_skeleton_file(dir / "s.skel.json", mem);
    SkeletonSequence back = load_skeleton_file(dir / "s.skel.json");
    CHECK(back.frames == mem.frames);
    CHECK(back.bones == mem.bones);
    fs::remove_all(dir);
  }

  SECTION("nearest-centroid on raw coordinates separates pose but not motion classes") {
    SynthSpec big = spec;
    big.per_class = 30;
    big.noise = 0.05;
    big.joints = 10;
    big.frames = 32;
    const fs::path dir = temp_dir("synth_ncc");
    DatasetManifest m = synth_generate(big, dir);

    std::map<int, std::vector<double>> centroid;
    std::map<int, std::size_t> count;
    const std::size_t dim = big.joints * big.frames * 3;
    std::vector<std::pair<int, std::vector<double>>> test_samples;
    for (const auto& e : m.entries) {
      SkeletonSequence s = load_skeleton_file(dir / e.path);
      if (e.split == "train") {
        auto& c = centroid[e.label];
        c.resize(dim, 0.0);
        for (std::size_t i = 0; i < dim; ++i) c[i] += s.frames[i];
        count[e.label]++;
      } else {
        test_samples.emplace_back(e.label, s.frames);
      }
    }
    for (auto& [label, c] : centroid)
      for (double& v : c) v /= static_cast<double>(count[label]);

    std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // correct, total
    for (const auto& [label, x] : test_samples) {
      int best = -1;
      double best_d = 1e300;
      for (const auto& [cl, c] : centroid) {
        double d = 0.0;
        for (std::size_t i = 0; i < dim; ++i) d += (x[i] - c[i]) * (x[i] - c[i]);
        if (d < best_d) {
          best_d = d;
          best = cl;
        }
      }
      per_class[label].second++;
      if (best == label) per_class[label].first++;
    }
    auto acc = [&](int label) {
      return static_cast<double>(per_class[label].first) /
             static_cast<double>(per_class[label].second);
    };
    // Labels 0,1 are pose classes; 2,3 are motion classes.
    CHECK(acc(0) >= 0.9);
    CHECK(acc(1) >= 0.9);
    CHECK((acc(2) + acc(3)) / 2.0 <= 0.7);
    fs::remove_all(dir);
  }
}
