// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
//   acceptance --out DIR [--skip-experiment]

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "ap_oracle.hpp"
#include "dsta/adapter.hpp"
#include "dsta/io.hpp"
#include "dsta/pipeline.hpp"
#include "dsta/synth.hpp"
#include "dsta/tal_eval.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace dsta;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

// Collects failures with a short description of the first few.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (ok) return;
    ++failed_;
    if (failed_ <= 3) notes_ += (notes_.empty() ? "" : "; ") + what;
  }
  Verdict verdict(const std::string& summary) const {
    if (failed_ == 0) return {true, summary};
    return {false, std::to_string(failed_) + "/" + std::to_string(total_) + " checks failed: " + notes_};
  }

 private:
  std::size_t total_ = 0, failed_ = 0;
  std::string notes_;
};

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

// ---------------------------------------------------------------------------

Verdict gradient_suite() {
  std::mt19937_64 rng(2024);
  const double t0 = cpu_seconds();
  double worst = 0.0;
  std::string worst_where;
  Check chk;
  for (int i = 0; i < 50; ++i) {
    const Variant v = kAllVariants[static_cast<std::size_t>(i) % 4];
    const AdapterConfig cfg = testing::random_config(rng, v, 8, 4);
    std::uniform_int_distribution<std::size_t> td(1, 6), sd(1, 4);
    const std::size_t T = td(rng), H = sd(rng), W = sd(rng);
    const GradcheckReport rep = gradcheck_adapter(cfg, T, H, W, rng(), 1e-5);
    std::ostringstream where;
    where << variant_name(v) << " C=" << cfg.C << " N=" << cfg.N << " alpha=" << cfg.alpha
          << " k=" << cfg.k << " m=" << cfg.m << " " << rep.worst_param << "[" << rep.worst_index
          << "]";
    if (rep.max_rel_error >= worst) {
      worst = rep.max_rel_error;
      worst_where = where.str();
    }
    chk.expect(rep.max_rel_error < 1e-4, where.str() + " err " + fmt(rep.max_rel_error));
    chk.expect(rep.checked == count_params(cfg).total(), where.str() + " did not check every parameter");
  }
  const double secs = cpu_seconds() - t0;
  chk.expect(secs < 60.0, "runtime " + fmt(secs) + " s CPU");
  return chk.verdict("50 configs over 4 variants, max rel err " + fmt(worst) + " < 1e-4 (" +
                     worst_where + "), " + fmt(secs) + " s CPU < 60 s");
}

Verdict identity_suite() {
  std::mt19937_64 rng(2025);
  Check chk;
  for (int i = 0; i < 100; ++i) {
    const Variant v = kAllVariants[static_cast<std::size_t>(i) % 4];
    const AdapterConfig cfg = testing::random_config(rng, v, 8, 4);
    AdapterParams p = AdapterParams::zeros(cfg);
    for (ParamTensor* t : p.all()) testing::randomize(*t, rng, 0.7);
    p.beta.value[0] = 0.0;
    const Tensor4 x = testing::random_tensor({cfg.C, 5, 3, 2}, rng, 2.0);
    chk.expect(adapter_forward(x, p, cfg) == x, "beta=0 " + variant_name(v));

    AdapterParams z = AdapterParams::zeros(cfg);
    z.beta.value[0] = 1.5;
    chk.expect(adapter_forward(x, z, cfg) == x, "zero weights " + variant_name(v));
  }
  for (int i = 0; i < 20; ++i) {
    const Tensor4 x = testing::random_tensor(testing::random_dims(rng), rng);
    const std::size_t C = x.channels();
    ParamTensor k("k", {C, 3});
    for (std::size_t c = 0; c < C; ++c) k.value[c * 3 + 1] = 1.0;
    const ParamTensor b("b", {C});
    for (Axis a : {Axis::Time, Axis::Height, Axis::Width}) {
      chk.expect(conv_axis_depthwise(x, a, k, b) == x, std::string("conv identity ") + axis_name(a));
    }
    ParamTensor dk("dk", {C, 1, 3});
    for (std::size_t c = 0; c < C; ++c) dk.value[c * 3 + 1] = 1.0;
    chk.expect(dwconv_temporal(x, dk, b, 3, C) == x, "grouped temporal conv identity");
    ParamTensor eye("W", {C, C});
    for (std::size_t c = 0; c < C; ++c) eye.value[c * C + c] = 1.0;
    chk.expect(fc_channel(x, eye, b) == x, "channel fc identity");
  }
  return chk.verdict("beta=0 and zero-weight adapters (200 cases) and identity kernels (100 cases) are exact");
}

std::uint64_t enumerate_params(const AdapterParams& p) {
  std::uint64_t n = 0;
  for (const ParamTensor* t : p.all()) {
    std::uint64_t e = 1;
    for (std::size_t s : t->shape) e *= s;
    n += std::min<std::uint64_t>(e, t->value.size());
  }
  return n;
}

Verdict param_count_suite() {
  std::mt19937_64 rng(2026);
  Check chk;
  std::size_t ordered = 0;
  for (int i = 0; i < 200; ++i) {
    const Variant v = kAllVariants[static_cast<std::size_t>(i) % 4];
    AdapterConfig cfg = testing::random_config(rng, v, 64, 24);
    chk.expect(count_params(cfg).total() == enumerate_params(AdapterParams::zeros(cfg)),
               variant_name(v) + " C=" + std::to_string(cfg.C) + " N=" + std::to_string(cfg.N));
    if (cfg.branch_channels() >= 1) {
      ++ordered;
      std::uint64_t prev = 0;
      for (Variant w : kAllVariants) {
        cfg.variant = w;
        const std::uint64_t n = count_params(cfg).total();
        chk.expect(n > prev, "ordering at " + variant_name(w));
        prev = n;
      }
    }
  }
  const AdapterConfig example = AdapterConfig::make(4, 2, Variant::ConvTHW, 0.5);
  chk.expect(count_params(example).total() == 49, "C=4 N=2 thw example");
  return chk.verdict("200 configs equal enumeration; TIA < T < TH < THW on " +
                     std::to_string(ordered) + " configs with alpha*N >= 1");
}

Verdict eval_oracle_suite(const std::string& fixtures) {
  std::mt19937_64 rng(2027);
  Check chk;
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    // Two classes per instance; each class has up to 4 GT and 4 predictions.
    auto a = testing::random_micro_instance(rng, 0);
    auto b = testing::random_micro_instance(rng, 1);
    std::vector<IntervalAnnotation> gts = a.gts;
    gts.insert(gts.end(), b.gts.begin(), b.gts.end());
    std::vector<Proposal> preds = a.preds;
    preds.insert(preds.end(), b.preds.begin(), b.preds.end());
    const EvalReport rep = evaluate(gts, preds);
    for (std::size_t t = 0; t < kDefaultThresholds.size(); ++t) {
      const double thr = kDefaultThresholds[t];
      const double oa = testing::oracle_ap(a.gts, a.preds, thr);
      const double ob = testing::oracle_ap(b.gts, b.preds, thr);
      const double d = std::max({std::abs(rep.per_class_ap.at(0)[t] - oa),
                                 std::abs(rep.per_class_ap.at(1)[t] - ob),
                                 std::abs(rep.map_per_threshold[t] - 0.5 * (oa + ob))});
      worst = std::max(worst, d);
      chk.expect(d < 1e-12, "instance " + std::to_string(i) + " thr " + fmt(thr));
    }
  }
  const EvalReport shifted = evaluate(io::read_intervals(fixtures + "/shifted_gt.jsonl"),
                                      io::read_proposals(fixtures + "/shifted_pred.jsonl"));
  chk.expect(shifted.map_per_threshold == std::vector<double>{1.0, 0.0, 0.0, 0.0, 0.0},
             "shifted fixture row");
  chk.expect(shifted.average_map == 0.2, "shifted fixture average " + fmt(shifted.average_map, 17));
  const EvalReport perfect = evaluate(io::read_intervals(fixtures + "/perfect_gt.jsonl"),
                                      io::read_proposals(fixtures + "/perfect_pred.jsonl"));
  chk.expect(perfect.map_per_threshold == std::vector<double>(5, 1.0) && perfect.average_map == 1.0,
             "perfect fixture row");
  return chk.verdict("500 two-class micro-instances, max |delta| " + fmt(worst) +
                     " < 1e-12; fixture rows (1,0,0,0,0) avg 0.2 and all-1.0 exact");
}

Verdict pipeline_suite() {
  Check chk;
  const auto iv = [](std::int64_t t) { return point_to_interval({"v", t, 0}, 1000); };
  chk.expect(iv(50).start == 41 && iv(50).end == 59, "t=50");
  chk.expect(iv(3).start == 0 && iv(3).end == 12, "t=3");
  chk.expect(iv(995).start == 986 && iv(995).end == 999, "t=995");

  const auto two = segment_by_inactivity({{"v", 90, 100, 0}, {"v", 300, 310, 1}}, 1000);
  chk.expect(two.size() == 2, "gap 199 splits");
  if (two.size() == 2) {
    chk.expect(two[0].source_start == 80 && two[0].source_end == 110, "first clip [80,110]");
    chk.expect(two[1].source_start == 290 && two[1].source_end == 320, "second clip [290,320]");
    chk.expect(two[0].annotations[0].start == 10 && two[0].annotations[0].end == 20, "A rebased");
  }
  chk.expect(segment_by_inactivity({{"v", 0, 10, 0}, {"v", 160, 170, 0}}, std::nullopt).size() == 1,
             "gap 150 does not split");
  chk.expect(segment_by_inactivity({{"v", 0, 10, 0}, {"v", 161, 171, 0}}, std::nullopt).size() == 2,
             "gap 151 splits");
  const auto one = segment_by_inactivity({{"v", 50, 60, 0}}, std::nullopt);
  chk.expect(one.size() == 1 && one[0].source_start == 40 && one[0].source_end == 70, "single action");

  chk.expect(frequency_group(0.8) == FrequencyGroup::High, "sigma 0.8");
  chk.expect(frequency_group(0.7) == FrequencyGroup::High, "sigma 0.7");
  chk.expect(frequency_group(0.0) == FrequencyGroup::Intermediate, "sigma 0");
  chk.expect(frequency_group(-0.7) == FrequencyGroup::Low, "sigma -0.7");
  chk.expect(frequency_group(std::nextafter(-0.7, -1.0)) == FrequencyGroup::Rare, "below -0.7");

  chk.expect(resample_frame(100, 50, 25) == 50, "50 to 25 fps");
  chk.expect(resample_frame(3, 30, 25) == 3, "30 to 25 fps half-up");
  return chk.verdict("stroke windows, strict >150 split with +-10 context, sigma boundaries 0.7/0/-0.7");
}

Verdict flop_suite() {
  std::mt19937_64 rng(2028);
  Check chk;
  for (int i = 0; i < 100; ++i) {
    AdapterConfig cfg = testing::random_config(rng, kAllVariants[static_cast<std::size_t>(i) % 4], 64, 24);
    std::uniform_int_distribution<std::uint64_t> d(1, 32);
    const std::uint64_t T = d(rng), H = d(rng), W = d(rng);
    chk.expect(count_flops(cfg, 2 * T, H, W).total() == 2 * count_flops(cfg, T, H, W).total(),
               "doubling T " + variant_name(cfg.variant));

    const std::uint64_t P = T * H * W, c1 = cfg.branch_channels();
    const std::uint64_t branch = 2 * 3 * c1 * P + c1 * P;  // width-3 depthwise conv + bias
    cfg.variant = Variant::ConvT;
    const auto ft = count_flops(cfg, T, H, W);
    cfg.variant = Variant::ConvTH;
    const auto fth = count_flops(cfg, T, H, W);
    cfg.variant = Variant::ConvTHW;
    const auto fthw = count_flops(cfg, T, H, W);
    cfg.variant = Variant::TIA;
    const auto ftia = count_flops(cfg, T, H, W);
    chk.expect(fth.total() - ft.total() == branch, "TH - T");
    chk.expect(fthw.total() - fth.total() == branch, "THW - TH");
    // T adds the mid fc, one branch, and the two N-wide adds over TIA.
    const std::uint64_t N = cfg.N;
    chk.expect(ft.total() - ftia.total() == 2 * N * N * P + N * P + branch + 2 * N * P, "T - TIA");
  }
  return chk.verdict("T doubling exact on 100 configs; branch deltas equal 7*c1*T*H*W exactly");
}

// ---------------------------------------------------------------------------

Verdict experiment_suite(const fs::path& out) {
  using namespace dsta::synth;
  ExperimentConfig cfg;
  cfg.seeds = 3;
  cfg.first_seed = 0;
  cfg.data.clips = 64;
  cfg.data.T = 64;
  cfg.data.H = 16;
  cfg.data.W = 16;
  cfg.alpha_sweep = {0.1, 0.3, 0.5, 0.7, 0.9};
  cfg.checkpoint_dir = (out / "checkpoints").string();
  fs::create_directories(out);

  const auto wall0 = std::chrono::steady_clock::now();
  const double cpu0 = cpu_seconds();
  const ExperimentResult res = run_experiment(cfg);
  const double cpu = cpu_seconds() - cpu0;
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();

  const auto vrows = variant_table(res, cfg.variants);
  const auto arows = alpha_table(res, cfg.alpha_sweep);
  write_table_csv((out / "variants.csv").string(), "method", vrows);
  write_table_csv((out / "alpha_sweep.csv").string(), "alpha", arows);
  write_runs_csv((out / "runs.csv").string(), res);
  write_loss_curves_csv((out / "loss_curves.csv").string(), res);

  std::cout << "  experiment table (average mAP, mean over seeds 0-2):\n";
  for (const auto& r : vrows) {
    std::cout << "    " << std::left << std::setw(22) << r.label << std::right << std::fixed
              << std::setprecision(2) << 100.0 * r.mean.back() << " +- " << 100.0 * r.stddev.back()
              << "\n";
  }
  for (const auto& r : arows) {
    std::cout << "    alpha " << std::left << std::setw(16) << r.label << std::right
              << 100.0 * r.mean.back() << " +- " << 100.0 * r.stddev.back() << "\n";
  }
  std::cout.unsetf(std::ios::floatfield);

  const double tia = vrows[0].mean.back(), t = vrows[1].mean.back(), thw = vrows[3].mean.back();
  Check chk;
  chk.expect(thw >= t, "ConvTHW " + fmt(100 * thw) + " < ConvT " + fmt(100 * t));
  chk.expect(t >= tia - 0.02, "ConvT " + fmt(100 * t) + " regresses more than 2 pts vs TIA " + fmt(100 * tia));
  chk.expect(thw - tia >= 0.02, "ConvTHW - TIA = " + fmt(100 * (thw - tia)) + " pts < 2");
  chk.expect(cpu < 900.0, "runtime " + fmt(cpu) + " s CPU >= 900");
  chk.expect(vrows.size() == 4 && arows.size() == 5, "table row counts");
  for (const auto& r : vrows) chk.expect(r.mean.size() == 6 && r.runs == 3, "variant row shape " + r.label);
  for (const auto& r : arows) chk.expect(r.mean.size() == 6 && r.runs == 3, "alpha row shape " + r.label);
  return chk.verdict("avg mAP THW " + fmt(100 * thw, 4) + " >= T " + fmt(100 * t, 4) + " >= TIA " +
                     fmt(100 * tia, 4) + " - 2; THW - TIA = " + fmt(100 * (thw - tia), 3) +
                     " pts >= 2; " + fmt(cpu, 4) + " s CPU (" + fmt(wall, 4) +
                     " s wall) < 900 s; tables in " + out.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string out = "acceptance_out";
  std::string fixtures = DSTA_FIXTURES;
  bool skip_experiment = false;
  app.add_option("--out", out, "Directory for experiment tables");
  app.add_option("--fixtures", fixtures, "Directory holding the evaluation fixtures");
  app.add_flag("--skip-experiment", skip_experiment, "Omit the training experiment");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient-suite", gradient_suite},
      {"identity-suite", identity_suite},
      {"param-count-suite", param_count_suite},
      {"eval-oracle", [&] { return eval_oracle_suite(fixtures); }},
      {"pipeline-fixtures", pipeline_suite},
      {"directional-experiment", [&] { return experiment_suite(out); }},
      {"flop-model", flop_suite},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (skip_experiment && name == "directional-experiment") {
      std::cout << "SKIP " << name << "\n";
      continue;
    }
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
    failed += v.pass ? 0 : 1;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
