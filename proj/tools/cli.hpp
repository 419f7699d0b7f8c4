#pragma once

// Command-line front end. `dispatch` is separate from main() so tests can run
// subcommands in-process and inspect their output.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dsta/adapter.hpp"
#include "dsta/errors.hpp"
#include "dsta/io.hpp"
#include "dsta/pipeline.hpp"
#include "dsta/synth.hpp"
#include "dsta/tal_eval.hpp"

namespace dsta::cli {

using nlohmann::json;
using namespace dsta::synth;
namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2 };

namespace detail {

inline void require_file(const std::string& flag, const std::string& path) {
  if (path.empty()) throw ConfigError(flag + " is required");
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    throw IoError(flag + ": input file not found: " + path);
  }
}

// Creates the directory that will hold `path` (or `path` itself when it is a
// directory target) before any work runs.
inline void prepare_output(const std::string& flag, const std::string& path, bool is_dir) {
  if (path.empty()) return;
  const fs::path target = is_dir ? fs::path(path) : fs::path(path).parent_path();
  if (target.empty()) return;
  std::error_code ec;
  fs::create_directories(target, ec);
  if (ec || !fs::is_directory(target)) {
    throw IoError(flag + ": cannot create output directory " + target.string());
  }
}

inline std::vector<Variant> parse_variants(const std::vector<std::string>& names) {
  std::vector<Variant> out;
  for (const auto& n : names) out.push_back(parse_variant(n));
  if (out.empty()) throw ConfigError("--variants: at least one variant is required");
  return out;
}

inline std::string join(const std::vector<std::string>& items) {
  std::string s;
  for (const auto& it : items) s += (s.empty() ? "" : ",") + it;
  return s;
}

}  // namespace detail

// Flags shared by every subcommand.
struct Common {
  bool json = false;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct AdapterFlags {
  std::size_t C = 768, N = 64, k = 3, m = 0;
  double alpha = 0.5;
  std::string variant = "thw";

  AdapterConfig resolve() const {
    AdapterConfig cfg = AdapterConfig::make(C, N, parse_variant(variant), alpha);
    cfg.k = k;
    if (m != 0) cfg.m = m;
    cfg.validate();
    return cfg;
  }
  json to_json() const {
    return {{"C", C}, {"N", N}, {"alpha", alpha}, {"k", k}, {"m", m == 0 ? N : m},
            {"variant", variant_name(parse_variant(variant))}};
  }
};

class Runner {
 public:
  Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(int argc, const char* const* argv) {
    CLI::App app{"Decoupled spatio-temporal adapters: data preparation, evaluation and experiments",
                 "dsta"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    const auto add_common = [this](CLI::App* sub) {
      sub->add_flag("--json", common_.json, "Emit machine-readable JSON");
      sub->add_option("--seed", common_.seed, "Seed for every random draw");
      sub->add_option("--threads", common_.threads, "Worker threads")->check(CLI::PositiveNumber);
    };
    const auto add_adapter = [this](CLI::App* sub, std::size_t C, std::size_t N) {
      AdapterFlags& a = adapters_[sub->get_name()];
      a.C = C;
      a.N = N;
      sub->add_option("--C", a.C, "Input channels");
      sub->add_option("--N", a.N, "Bottleneck width");
      sub->add_option("--alpha", a.alpha, "Channel split ratio");
      sub->add_option("--k", a.k, "Temporal kernel size (odd)");
      sub->add_option("--m", a.m, "Temporal conv groups (0 = depthwise, m = N)");
      sub->add_option("--variant", a.variant, "tia, t, th or thw");
    };

    // convert ------------------------------------------------------------
    auto* convert = app.add_subcommand("convert", "Stroke timestamps to interval annotations");
    add_common(convert);
    convert->add_option("--strokes", paths_["strokes"], "Stroke events (JSONL)")->required();
    convert->add_option("--meta", paths_["meta"], "Video metadata (JSON or JSONL)")->required();
    convert->add_option("--out", paths_["out"], "Output intervals (JSONL)")->required();
    convert->add_option("--window", pipe_.window, "Half-width around each stroke, frames");
    convert->add_option("--fps", pipe_.fps, "Target frame rate");
    convert->add_option("--min-frames", pipe_.min_frames, "Drop intervals shorter than this");

    // segment ------------------------------------------------------------
    auto* segment = app.add_subcommand("segment", "Split annotated videos into clips at idle gaps");
    add_common(segment);
    segment->add_option("--intervals", paths_["intervals"], "Interval annotations (JSONL)")
        ->required();
    segment->add_option("--meta", paths_["meta"], "Video metadata used to clamp clip ends");
    segment->add_option("--out", paths_["out"], "Output clip manifest (JSON)")->required();
    segment->add_option("--gap-threshold", pipe_.gap_threshold,
                        "Split when the idle gap exceeds this many frames");
    segment->add_option("--context", pipe_.context, "Frames of padding on each clip side");
    segment->add_option("--fps", pipe_.fps, "Frame rate of the intervals; clamps use resampled lengths");

    // stats --------------------------------------------------------------
    auto* stats = app.add_subcommand("stats", "Class frequency groups and plot data");
    add_common(stats);
    stats->add_option("--manifest", paths_["manifest"], "Clip manifest (JSON)")->required();
    stats->add_option("--out-dir", paths_["out_dir"], "Directory for the CSV plot data");

    // eval ---------------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "mAP of proposals against ground truth");
    add_common(eval);
    eval->add_option("--gt", paths_["gt"], "Ground-truth intervals (JSONL)")->required();
    eval->add_option("--pred", paths_["pred"], "Scored proposals (JSONL)")->required();
    eval->add_option("--thresholds", thresholds_, "tIoU thresholds")->delimiter(',');
    eval->add_option("--out", paths_["out"], "Write the result row as CSV");
    eval->add_option("--name", eval_name_, "Row label in the CSV output");

    // gradcheck ----------------------------------------------------------
    auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of adapter gradients");
    add_common(grad);
    add_adapter(grad, 4, 2);
    grad->add_option("--T", dims_[0], "Frames");
    grad->add_option("--H", dims_[1], "Height");
    grad->add_option("--W", dims_[2], "Width");
    grad->add_option("--step", grad_h_, "Finite-difference step");
    grad->add_option("--tol", grad_tol_, "Pass threshold on the max relative error");

    // count-params / count-flops ----------------------------------------
    auto* params = app.add_subcommand("count-params", "Trainable parameters of one adapter");
    add_common(params);
    add_adapter(params, 768, 64);
    auto* flops = app.add_subcommand("count-flops", "Forward FLOPs of one adapter");
    add_common(flops);
    add_adapter(flops, 768, 64);
    flops_dims_ = {768, 14, 14};
    flops->add_option("--T", flops_dims_[0], "Tokens along time");
    flops->add_option("--H", flops_dims_[1], "Tokens along height");
    flops->add_option("--W", flops_dims_[2], "Tokens along width");

    // train / experiment -------------------------------------------------
    auto* trainc = app.add_subcommand("train", "Train one adapter on the synthetic clips");
    add_common(trainc);
    add_adapter(trainc, 16, 8);
    add_train_flags(trainc);
    trainc->add_option("--out", paths_["out_dir"], "Directory for checkpoint, curve and scores");

    auto* exp = app.add_subcommand("experiment", "Paired comparison of adapter variants");
    add_common(exp);
    add_train_flags(exp);
    exp->add_option("--variants", variant_names_, "Variants to compare")->delimiter(',');
    exp->add_option("--alpha", exp_.alpha, "Split ratio for the variant comparison");
    exp->add_option("--alpha-sweep", exp_.alpha_sweep, "Split ratios for the sweep (full variant)")
        ->delimiter(',');
    exp->add_option("--seeds", exp_.seeds, "Number of seeds, starting at --seed")->check(CLI::PositiveNumber);
    exp->add_option("--out", paths_["out_dir"], "Directory for tables, curves and checkpoints")
        ->required();

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      // --help and --version are reported as "errors" with a zero exit code.
      const int rc = app.exit(e, out_, err_);
      return rc == 0 ? kOk : kValidation;
    }

    try {
      if (*convert) return do_convert();
      if (*segment) return do_segment();
      if (*stats) return do_stats();
      if (*eval) return do_eval();
      if (*grad) return do_gradcheck();
      if (*params) return do_count_params();
      if (*flops) return do_count_flops();
      if (*trainc) return do_train();
      if (*exp) return do_experiment();
    } catch (const ConfigError& e) {
      err_ << "error: " << e.what() << "\n";
      return kValidation;
    } catch (const ShapeError& e) {
      err_ << "error: " << e.what() << "\n";
      return kValidation;
    } catch (const IoError& e) {
      err_ << "error: " << e.what() << "\n";
      return kValidation;
    } catch (const std::exception& e) {
      err_ << "runtime error: " << e.what() << "\n";
      return kRuntime;
    }
    return kValidation;
  }

 private:
  void add_train_flags(CLI::App* sub) {
    TrainConfig& t = exp_.train;
    sub->add_option("--epochs", t.epochs, "Training epochs");
    sub->add_option("--lr", t.lr, "Adam learning rate");
    sub->add_option("--batch-size", t.batch_size, "Clips per optimizer step");
    sub->add_option("--gamma", t.gamma, "Focal loss focusing exponent");
    sub->add_option("--focal-weight", t.focal_weight, "Focal loss weight on positives");
    sub->add_option("--decode-threshold", t.decode_threshold, "Frame probability threshold");
    sub->add_option("--merge-gap", t.merge_gap, "Merge runs separated by at most this many frames");
    sub->add_option("--clips", exp_.data.clips, "Training clips per seed");
    sub->add_option("--test-clips", exp_.test_clips, "Test clips per seed");
    sub->add_option("--noise", exp_.data.noise, "Background noise amplitude");
  }

  json common_json() const {
    return {{"seed", common_.seed}, {"threads", common_.threads}, {"json", common_.json}};
  }

  // Prints the resolved configuration before any work starts.
  void announce(const std::string& command, json config) {
    config["seed"] = common_.seed;
    config["threads"] = common_.threads;
    config_ = {{"command", command}, {"config", config}};
    if (!common_.json) {
      out_ << "command: " << command << "\n";
      for (const auto& [k, v] : config.items()) out_ << "  " << k << " = " << v.dump() << "\n";
    }
  }

  void finish(json result, const std::string& text) {
    if (common_.json) {
      json doc = config_;
      doc["result"] = std::move(result);
      out_ << doc.dump(2) << "\n";
    } else {
      out_ << text;
    }
  }

  std::map<std::string, std::int64_t> video_lengths(const std::vector<VideoMeta>& metas,
                                                    double fps_dst) const {
    std::map<std::string, std::int64_t> len;
    for (const auto& m : metas) {
      len[m.video_id] = resample_frame(m.frame_count - 1, m.fps, fps_dst) + 1;
    }
    return len;
  }

  int do_convert() {
    detail::require_file("--strokes", paths_["strokes"]);
    detail::require_file("--meta", paths_["meta"]);
    detail::prepare_output("--out", paths_["out"], false);
    announce("convert", {{"strokes", paths_["strokes"]},
                         {"meta", paths_["meta"]},
                         {"out", paths_["out"]},
                         {"window", pipe_.window},
                         {"fps", pipe_.fps},
                         {"min_frames", pipe_.min_frames}});
    if (pipe_.window < 0) throw ConfigError("--window must be >= 0");
    const auto metas = io::read_video_meta(paths_["meta"]);
    std::map<std::string, double> fps;
    for (const auto& m : metas) fps[m.video_id] = m.fps;
    auto strokes = io::read_strokes(paths_["strokes"]);
    for (std::size_t i = 0; i < strokes.size(); ++i) {
      const auto it = fps.find(strokes[i].video_id);
      if (it == fps.end()) {
        throw ConfigError("--strokes record " + std::to_string(i) + ": no metadata for video '" +
                          strokes[i].video_id + "' in " + paths_["meta"]);
      }
      strokes[i].t = resample_frame(strokes[i].t, it->second, pipe_.fps);
    }
    const auto res = convert_strokes(strokes, video_lengths(metas, pipe_.fps), pipe_.window,
                                     pipe_.min_frames);
    io::write_jsonl(paths_["out"], res.intervals);
    std::ostringstream text;
    text << "intervals: " << res.intervals.size() << "\n"
         << "dropped_degenerate: " << res.dropped_degenerate << "\n";
    finish({{"intervals", res.intervals.size()}, {"dropped_degenerate", res.dropped_degenerate}},
           text.str());
    return kOk;
  }

  int do_segment() {
    detail::require_file("--intervals", paths_["intervals"]);
    if (!paths_["meta"].empty()) detail::require_file("--meta", paths_["meta"]);
    detail::prepare_output("--out", paths_["out"], false);
    announce("segment", {{"intervals", paths_["intervals"]},
                         {"meta", paths_["meta"]},
                         {"out", paths_["out"]},
                         {"gap_threshold", pipe_.gap_threshold},
                         {"context", pipe_.context},
                         {"fps", pipe_.fps}});
    std::map<std::string, std::int64_t> len;
    if (!paths_["meta"].empty()) len = video_lengths(io::read_video_meta(paths_["meta"]), pipe_.fps);
    const auto clips = segment_dataset(io::read_intervals(paths_["intervals"]), len,
                                       pipe_.gap_threshold, pipe_.context);
    io::write_manifest(paths_["out"], clips);
    std::size_t anns = 0;
    for (const auto& c : clips) anns += c.annotations.size();
    std::ostringstream text;
    text << "clips: " << clips.size() << "\nannotations: " << anns << "\n";
    finish({{"clips", clips.size()}, {"annotations", anns}}, text.str());
    return kOk;
  }

  int do_stats() {
    detail::require_file("--manifest", paths_["manifest"]);
    detail::prepare_output("--out-dir", paths_["out_dir"], true);
    announce("stats", {{"manifest", paths_["manifest"]}, {"out_dir", paths_["out_dir"]}});
    const auto st = compute_stats(io::read_manifest(paths_["manifest"]));
    for (const auto& w : st.warnings) err_ << "warning: " << w << "\n";
    if (!paths_["out_dir"].empty()) export_plot_data(st, paths_["out_dir"]);
    json classes = json::array();
    std::ostringstream text;
    text << "annotations: " << st.total_annotations << "\nlabel,count,sigma,group\n";
    for (const auto& [c, k] : st.class_counts) {
      classes.push_back({{"label", c},
                         {"count", k},
                         {"sigma", st.class_sigma.at(c)},
                         {"group", group_name(st.class_group.at(c))}});
      text << c << "," << k << "," << st.class_sigma.at(c) << ","
           << group_name(st.class_group.at(c)) << "\n";
    }
    finish({{"annotations", st.total_annotations}, {"classes", classes}, {"warnings", st.warnings}},
           text.str());
    return kOk;
  }

  int do_eval() {
    detail::require_file("--gt", paths_["gt"]);
    detail::require_file("--pred", paths_["pred"]);
    detail::prepare_output("--out", paths_["out"], false);
    announce("eval", {{"gt", paths_["gt"]},
                      {"pred", paths_["pred"]},
                      {"thresholds", thresholds_},
                      {"out", paths_["out"]}});
    const auto rep = evaluate(io::read_intervals(paths_["gt"]), io::read_proposals(paths_["pred"]),
                              thresholds_);
    for (int c : rep.classes_without_predictions) {
      err_ << "warning: class " << c << " has ground truth but no predictions\n";
    }
    if (!paths_["out"].empty()) io::write_report_csv(paths_["out"], rep, eval_name_);
    finish(io::report_to_json(rep), io::report_csv_header(rep.thresholds) + "\n" +
                                        io::report_csv_row(rep, eval_name_) + "\n");
    return kOk;
  }

  int do_gradcheck() {
    const AdapterFlags& af = adapters_.at("gradcheck");
    const AdapterConfig cfg = af.resolve();
    json conf = af.to_json();
    conf["T"] = dims_[0];
    conf["H"] = dims_[1];
    conf["W"] = dims_[2];
    conf["step"] = grad_h_;
    conf["tol"] = grad_tol_;
    announce("gradcheck", conf);
    if (dims_[0] == 0 || dims_[1] == 0 || dims_[2] == 0) throw ConfigError("--T, --H, --W must be >= 1");
    const auto rep = gradcheck_adapter(cfg, dims_[0], dims_[1], dims_[2], common_.seed, grad_h_);
    const bool pass = rep.max_rel_error < grad_tol_;
    std::ostringstream text;
    text << "checked: " << rep.checked << "\nmax_rel_error: " << rep.max_rel_error
         << "\nworst: " << rep.worst_param << "[" << rep.worst_index << "]\n"
         << (pass ? "PASS" : "FAIL") << "\n";
    finish({{"checked", rep.checked},
            {"max_rel_error", rep.max_rel_error},
            {"worst_param", rep.worst_param},
            {"worst_index", rep.worst_index},
            {"pass", pass}},
           text.str());
    return pass ? kOk : kRuntime;
  }

  int do_count_params() {
    const AdapterFlags& af = adapters_.at("count-params");
    const AdapterConfig cfg = af.resolve();
    announce("count-params", af.to_json());
    const ParamCount pc = count_params(cfg);
    std::ostringstream text;
    text << "down: " << pc.down << "\nmid: " << pc.mid << "\ndwconv: " << pc.dwconv
         << "\nbranches: " << pc.branches << "\nup: " << pc.up << "\nscale: " << pc.scale
         << "\ntotal: " << pc.total() << "\n";
    finish({{"down", pc.down},
            {"mid", pc.mid},
            {"dwconv", pc.dwconv},
            {"branches", pc.branches},
            {"up", pc.up},
            {"scale", pc.scale},
            {"total", pc.total()}},
           text.str());
    return kOk;
  }

  int do_count_flops() {
    const AdapterFlags& af = adapters_.at("count-flops");
    const AdapterConfig cfg = af.resolve();
    json conf = af.to_json();
    conf["T"] = flops_dims_[0];
    conf["H"] = flops_dims_[1];
    conf["W"] = flops_dims_[2];
    announce("count-flops", conf);
    const FlopCount f = count_flops(cfg, flops_dims_[0], flops_dims_[1], flops_dims_[2]);
    std::ostringstream text;
    text << "down: " << f.down << "\nmid: " << f.mid << "\ndwconv: " << f.dwconv
         << "\nbranches: " << f.branches << "\nup: " << f.up << "\nactivation: " << f.activation
         << "\nresidual: " << f.residual << "\nscale: " << f.scale << "\ntotal: " << f.total()
         << "\n";
    finish({{"down", f.down},
            {"mid", f.mid},
            {"dwconv", f.dwconv},
            {"branches", f.branches},
            {"up", f.up},
            {"activation", f.activation},
            {"residual", f.residual},
            {"scale", f.scale},
            {"total", f.total()}},
           text.str());
    return kOk;
  }

  json train_json() const {
    const TrainConfig& t = exp_.train;
    return {{"epochs", t.epochs},
            {"lr", t.lr},
            {"batch_size", t.batch_size},
            {"gamma", t.gamma},
            {"focal_weight", t.focal_weight},
            {"decode_threshold", t.decode_threshold},
            {"merge_gap", t.merge_gap},
            {"clips", exp_.data.clips},
            {"test_clips", exp_.test_clips},
            {"T", exp_.data.T},
            {"H", exp_.data.H},
            {"W", exp_.data.W},
            {"noise", exp_.data.noise}};
  }

  int do_train() {
    const AdapterFlags& af = adapters_.at("train");
    detail::prepare_output("--out", paths_["out_dir"], true);
    ExperimentConfig cfg = exp_;
    cfg.features = af.C;
    cfg.bottleneck = af.N;
    AdapterConfig acfg = af.resolve();
    acfg.beta_init = 0.0;
    json conf = af.to_json();
    conf.update(train_json());
    conf["out"] = paths_["out_dir"];
    announce("train", conf);
    cfg.data.validate();
    cfg.train.validate();

    const SeedSetup setup = make_seed_setup(cfg, common_.seed);
    Adapter adapter(acfg, common_.seed ^ 0xada97e11ULL);
    Head head = setup.head;
    TrainConfig tc = cfg.train;
    tc.seed = common_.seed;
    const TrainResult tr = train(&adapter, head, setup.train, tc);
    const auto preds = predict(setup.test, &adapter, head, tc.decode_threshold, tc.merge_gap);
    const EvalReport rep = evaluate(setup.test.gts, preds);

    const std::string& dir = paths_["out_dir"];
    if (!dir.empty()) {
      save_adapter((fs::path(dir) / "adapter.ckpt").string(), adapter);
      io::write_jsonl((fs::path(dir) / "predictions.jsonl").string(), preds);
      io::write_report_csv((fs::path(dir) / "scores.csv").string(), rep, variant_label(acfg.variant));
      std::ofstream os(fs::path(dir) / "loss_curve.csv");
      if (!os) throw IoError("cannot open for writing: " + (fs::path(dir) / "loss_curve.csv").string());
      os << "epoch,loss\n" << std::setprecision(10) << "0," << tr.initial_loss << "\n";
      for (std::size_t e = 0; e < tr.epoch_loss.size(); ++e) {
        os << e + 1 << "," << tr.epoch_loss[e] << "\n";
      }
    }
    std::ostringstream text;
    text << "initial_loss: " << tr.initial_loss << "\nfinal_loss: "
         << (tr.epoch_loss.empty() ? tr.initial_loss : tr.epoch_loss.back()) << "\n"
         << io::report_csv_header(rep.thresholds) << "\n"
         << io::report_csv_row(rep, variant_label(acfg.variant)) << "\n";
    json result = {{"initial_loss", tr.initial_loss},
                   {"epoch_loss", tr.epoch_loss},
                   {"report", io::report_to_json(rep)}};
    finish(result, text.str());
    return kOk;
  }

  int do_experiment() {
    const std::string& dir = paths_["out_dir"];
    detail::prepare_output("--out", dir, true);
    ExperimentConfig cfg = exp_;
    cfg.variants = detail::parse_variants(variant_names_);
    cfg.threads = common_.threads;
    cfg.checkpoint_dir = (fs::path(dir) / "checkpoints").string();
    cfg.first_seed = common_.seed;
    std::vector<std::string> names;
    for (Variant v : cfg.variants) names.push_back(variant_name(v));
    json conf = train_json();
    conf["variants"] = detail::join(names);
    conf["alpha"] = cfg.alpha;
    conf["alpha_sweep"] = cfg.alpha_sweep;
    conf["seeds"] = cfg.seeds;
    conf["out"] = dir;
    announce("experiment", conf);

    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentResult res = run_experiment(cfg);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const auto vrows = variant_table(res, cfg.variants);
    write_table_csv((fs::path(dir) / "variants.csv").string(), "method", vrows);
    if (!cfg.alpha_sweep.empty()) {
      write_table_csv((fs::path(dir) / "alpha_sweep.csv").string(), "alpha",
                      alpha_table(res, cfg.alpha_sweep));
    }
    write_runs_csv((fs::path(dir) / "runs.csv").string(), res);
    write_loss_curves_csv((fs::path(dir) / "loss_curves.csv").string(), res);

    std::ostringstream text;
    text << std::fixed << std::setprecision(2) << "method,Avg\n";
    json rows = json::array();
    for (const auto& r : vrows) {
      text << r.label << "," << 100.0 * r.mean.back() << "±" << 100.0 * r.stddev.back() << "\n";
      rows.push_back({{"label", r.label}, {"mean", r.mean}, {"stddev", r.stddev}});
    }
    text << "runs: " << res.runs.size() << "\n";
    err_ << "elapsed: " << std::fixed << std::setprecision(1) << seconds << " s\n";
    finish({{"variants", rows}, {"runs", res.runs.size()}}, text.str());
    return kOk;
  }

  std::ostream& out_;
  std::ostream& err_;
  Common common_;
  std::map<std::string, AdapterFlags> adapters_;
  PipelineConfig pipe_;
  std::map<std::string, std::string> paths_;
  std::vector<double> thresholds_ = kDefaultThresholds;
  std::string eval_name_ = "result";
  std::size_t dims_[3] = {6, 3, 3};
  double grad_h_ = 1e-5;
  double grad_tol_ = 1e-4;
  std::array<std::uint64_t, 3> flops_dims_{768, 14, 14};
  ExperimentConfig exp_;
  std::vector<std::string> variant_names_ = {"tia", "t", "th", "thw"};
  json config_;
};

inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  return Runner(out, err).run(argc, argv);
}

}  // namespace dsta::cli
