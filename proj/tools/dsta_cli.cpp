// Command-line front end: synth, decouple, train, eval (with fusion),
// bench, export-attn. Exit codes: 0 success, 1 user error, 2 internal error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsta/bench.hpp"
#include "dsta/datapipe.hpp"
#include "dsta/network.hpp"
#include "dsta/trainer.hpp"

namespace fs = std::filesystem;

namespace {

std::uint64_t resolve_seed(bool seed_given, std::uint64_t seed_value) {
  if (seed_given) return seed_value;
  if (const char* env = std::getenv("DSTA_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw std::invalid_argument("DSTA_SEED is not a valid integer: " + std::string(env));
    }
  }
  return 1;
}

struct SynthOpts {
  std::size_t classes = 4, per_class = 50, joints = 10, frames = 32;
  double noise = 0.05, train_fraction = 0.8;
  std::uint64_t seed = 1;
  bool seed_given = false;
  std::string out;
};

int run_synth(const SynthOpts& o) {
  dsta::SynthSpec spec;
  spec.classes = o.classes;
  spec.per_class = o.per_class;
  spec.joints = o.joints;
  spec.frames = o.frames;
  spec.noise = o.noise;
  spec.train_fraction = o.train_fraction;
  spec.seed = resolve_seed(o.seed_given, o.seed);
  dsta::DatasetManifest m = dsta::synth_generate(spec, o.out);
  std::size_t train = 0, test = 0;
  for (const auto& e : m.entries) (e.split == "train" ? train : test)++;
  std::cout << "classes: " << m.class_names.size() << "\n"
            << "samples: " << m.entries.size() << " (train " << train << ", test " << test
            << ")\n"
            << "manifest: " << (fs::path(o.out) / "manifest.csv").string() << "\n";
  return 0;
}

struct DecoupleOpts {
  std::string in, stream = "st", out;
  std::size_t fast_stride = 1, slow_stride = 2;
};

int run_decouple(const DecoupleOpts& o) {
  dsta::SkeletonSequence seq = dsta::load_skeleton_file(o.in);
  dsta::StreamKind kind = dsta::parse_stream_tag(o.stream);
  dsta::SkeletonSequence out = dsta::stream_view(seq, kind, o.fast_stride, o.slow_stride);
  dsta::save_skeleton_file(o.out, out);
  std::cout << "stream: " << dsta::stream_tag(kind) << "\n"
            << "frames: " << out.num_frames << "\n";
  return 0;
}

struct TrainOpts {
  std::string config, data, stream = "st", ckpt, out;
  std::uint64_t seed = 1;
  bool seed_given = false;
  dsta::TrainConfig tc;
  std::vector<std::size_t> drops = {60, 90};
};

int run_train(TrainOpts& o) {
  dsta::NetworkConfig ncfg = dsta::load_network_config(o.config);
  dsta::LoadedDataset data = dsta::LoadedDataset::load(o.data);
  const std::uint64_t seed = resolve_seed(o.seed_given, o.seed);
  o.tc.seed = seed;
  o.tc.stream = dsta::parse_stream_tag(o.stream);
  o.tc.lr_drop_epochs = o.drops;
  o.tc.validate();

  dsta::Network net(ncfg, seed);
  std::optional<fs::path> ckpt;
  if (!o.ckpt.empty()) ckpt = fs::path(o.ckpt);

  dsta::TrainResult result;
  if (!o.out.empty()) {
    std::ofstream log(o.out, std::ios::binary | std::ios::trunc);
    if (!log) throw dsta::ParseError("cannot open log for writing: " + o.out);
    result = dsta::train(net, data, o.tc, &log, ckpt);
  } else {
    result = dsta::train(net, data, o.tc, &std::cout, ckpt);
  }
  std::cout << "final_train_acc: " << dsta::detail::format_double(result.log.back().train_acc)
            << "\n";
  if (ckpt) std::cout << "checkpoint: " << ckpt->string() << "\n";
  return 0;
}

struct EvalOpts {
  std::string ckpt, data, stream = "st", split = "test", out;
  std::vector<std::string> fuse;
  std::size_t fast_stride = 1, slow_stride = 2;
};

int run_eval(const EvalOpts& o) {
  if (!o.fuse.empty()) {
    if (o.fuse.size() < 2) {
      throw std::invalid_argument("--fuse needs at least two score tables");
    }
    std::vector<dsta::ScoreTable> tables;
    for (const auto& p : o.fuse) tables.push_back(dsta::load_score_table(p));
    dsta::ScoreTable fused = dsta::fuse_scores(tables);
    for (const auto& t : tables) {
      std::cout << "stream " << t.stream
                << " accuracy: " << dsta::detail::format_double(t.accuracy()) << "\n";
    }
    std::cout << "fused accuracy: " << dsta::detail::format_double(fused.accuracy()) << "\n";
    if (!o.out.empty()) dsta::save_score_table(o.out, fused);
    return 0;
  }
  if (o.ckpt.empty() || o.data.empty()) {
    throw std::invalid_argument("eval needs --ckpt and --data (or --fuse)");
  }
  dsta::Network net = dsta::Network::load(o.ckpt);
  dsta::LoadedDataset data = dsta::LoadedDataset::load(o.data);
  dsta::TrainConfig tc;
  tc.stream = dsta::parse_stream_tag(o.stream);
  tc.fast_stride = o.fast_stride;
  tc.slow_stride = o.slow_stride;
  dsta::EvalResult result = dsta::evaluate(net, data, o.split, tc);
  std::cout << "split " << o.split << " stream " << dsta::stream_tag(tc.stream)
            << " accuracy: " << dsta::detail::format_double(result.accuracy) << "\n";
  if (!o.out.empty()) dsta::save_score_table(o.out, result.table);
  return 0;
}

struct BenchOpts {
  std::string strategy = "c";
  std::size_t n = 25, t = 128, c = 64, repeat = 3;
  std::uint64_t seed = 1;
  bool seed_given = false;
};

int run_bench(const BenchOpts& o) {
  const std::uint64_t seed = resolve_seed(o.seed_given, o.seed);
  const auto inputs = dsta::bench::ScoreInputs::make(o.n, o.t, o.c, seed);
  const std::uint64_t analytic = dsta::flop_estimate(o.strategy, o.n, o.t, o.c);
  const auto run = dsta::bench::instrumented_scores(o.strategy, inputs);
  const double wall = dsta::bench::median_seconds(o.strategy, inputs, o.repeat);
  const double flat_ratio = static_cast<double>(dsta::flop_estimate_flat(o.n, o.t, o.c)) /
                            static_cast<double>(analytic);
  std::cout << "strategy,N,T,C,analytic_madds,measured_madds,wall_seconds_median,"
               "flat_over_strategy_analytic\n";
  std::cout << o.strategy << ',' << o.n << ',' << o.t << ',' << o.c << ',' << analytic << ','
            << run.madds << ',' << dsta::detail::format_double(wall) << ','
            << dsta::detail::format_double(flat_ratio) << "\n";
  return 0;
}

struct ExportAttnOpts {
  std::string ckpt, sample, out, stream = "st";
  std::size_t fast_stride = 1, slow_stride = 2;
};

int run_export_attn(const ExportAttnOpts& o) {
  dsta::Network net = dsta::Network::load(o.ckpt);
  dsta::SkeletonSequence seq = dsta::load_skeleton_file(o.sample);
  dsta::TrainConfig tc;
  tc.stream = dsta::parse_stream_tag(o.stream);
  tc.fast_stride = o.fast_stride;
  tc.slow_stride = o.slow_stride;
  dsta::Tensor x = dsta::detail::preprocess_sample(seq, net.config(), tc, false, nullptr);
  const auto maps = net.export_attention(x);
  std::ofstream out(o.out, std::ios::binary | std::ios::trunc);
  if (!out) throw dsta::ParseError("cannot open output for writing: " + o.out);
  dsta::write_attention_csv(out, maps);
  std::cout << "maps: " << maps.size() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decoupled spatial-temporal attention toolkit for skeleton sequences"};
  app.require_subcommand(1);

  SynthOpts synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic gesture dataset");
  synth_cmd->add_option("--classes", synth.classes, "Number of classes");
  synth_cmd->add_option("--per-class", synth.per_class, "Samples per class");
  synth_cmd->add_option("--joints", synth.joints, "Joints per skeleton");
  synth_cmd->add_option("--frames", synth.frames, "Frames per sample");
  synth_cmd->add_option("--noise", synth.noise, "Coordinate noise stddev");
  synth_cmd->add_option("--train-fraction", synth.train_fraction, "Train split fraction");
  auto* synth_seed = synth_cmd->add_option("--seed", synth.seed, "RNG seed");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();

  DecoupleOpts dec;
  CLI::App* dec_cmd = app.add_subcommand("decouple", "Write one decoupled stream of a sample");
  dec_cmd->add_option("--in", dec.in, "Input skeleton file")->required();
  dec_cmd->add_option("--stream", dec.stream, "Stream tag: st, s, ft or sl");
  dec_cmd->add_option("--fast-stride", dec.fast_stride, "Fast-temporal stride");
  dec_cmd->add_option("--slow-stride", dec.slow_stride, "Slow-temporal stride");
  dec_cmd->add_option("--out", dec.out, "Output skeleton file")->required();

  TrainOpts tr;
  CLI::App* train_cmd = app.add_subcommand("train", "Train one stream model");
  train_cmd->add_option("--config", tr.config, "Network config JSON")->required();
  train_cmd->add_option("--data", tr.data, "Dataset manifest")->required();
  train_cmd->add_option("--stream", tr.stream, "Stream tag: st, s, ft or sl");
  train_cmd->add_option("--ckpt", tr.ckpt, "Checkpoint output path");
  auto* train_seed = train_cmd->add_option("--seed", tr.seed, "RNG seed");
  train_cmd->add_option("--out", tr.out, "Epoch log output path (default stdout)");
  train_cmd->add_option("--epochs", tr.tc.epochs, "Training epochs");
  train_cmd->add_option("--batch-size", tr.tc.batch_size, "Batch size");
  train_cmd->add_option("--base-lr", tr.tc.base_lr, "Initial learning rate");
  train_cmd->add_option("--lr-drop-epochs", tr.drops, "Epochs at which lr divides")
      ->delimiter(',');
  train_cmd->add_option("--lr-drop-factor", tr.tc.lr_drop_factor, "LR division factor");
  train_cmd->add_option("--momentum", tr.tc.momentum, "Nesterov momentum");
  train_cmd->add_option("--weight-decay", tr.tc.weight_decay, "Weight decay");
  train_cmd->add_option("--fast-stride", tr.tc.fast_stride, "Fast-temporal stride");
  train_cmd->add_option("--slow-stride", tr.tc.slow_stride, "Slow-temporal stride");

  EvalOpts ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint or fuse score tables");
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint path");
  eval_cmd->add_option("--data", ev.data, "Dataset manifest");
  eval_cmd->add_option("--stream", ev.stream, "Stream tag: st, s, ft or sl");
  eval_cmd->add_option("--split", ev.split, "Dataset split: train or test");
  eval_cmd->add_option("--out", ev.out, "Score table output path");
  eval_cmd->add_option("--fuse", ev.fuse, "Score tables to fuse")->delimiter(',');
  eval_cmd->add_option("--fast-stride", ev.fast_stride, "Fast-temporal stride");
  eval_cmd->add_option("--slow-stride", ev.slow_stride, "Slow-temporal stride");

  BenchOpts be;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Score-computation cost benchmark");
  bench_cmd->add_option("--strategy", be.strategy, "a, b, c or flat")
      ->check(CLI::IsMember({"a", "b", "c", "flat"}));
  bench_cmd->add_option("--N", be.n, "Joints")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--T", be.t, "Frames")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--C", be.c, "Embedding width")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--repeat", be.repeat, "Wall-clock repeats")->check(CLI::PositiveNumber);
  auto* bench_seed = bench_cmd->add_option("--seed", be.seed, "RNG seed");

  ExportAttnOpts ex;
  CLI::App* export_cmd = app.add_subcommand("export-attn", "Export attention maps as CSV");
  export_cmd->add_option("--ckpt", ex.ckpt, "Checkpoint path")->required();
  export_cmd->add_option("--sample", ex.sample, "Skeleton sample file")->required();
  export_cmd->add_option("--out", ex.out, "CSV output path")->required();
  export_cmd->add_option("--stream", ex.stream, "Stream tag fed to the network");
  export_cmd->add_option("--fast-stride", ex.fast_stride, "Fast-temporal stride");
  export_cmd->add_option("--slow-stride", ex.slow_stride, "Slow-temporal stride");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  try {
    synth.seed_given = synth_seed->count() > 0;
    tr.seed_given = train_seed->count() > 0;
    be.seed_given = bench_seed->count() > 0;
    if (app.got_subcommand(synth_cmd)) return run_synth(synth);
    if (app.got_subcommand(dec_cmd)) return run_decouple(dec);
    if (app.got_subcommand(train_cmd)) return run_train(tr);
    if (app.got_subcommand(eval_cmd)) return run_eval(ev);
    if (app.got_subcommand(bench_cmd)) return run_bench(be);
    if (app.got_subcommand(export_cmd)) return run_export_attn(ex);
    std::cerr << "no subcommand selected\n";
    return 1;
  } catch (const dsta::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const dsta::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
