#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <tuple>
#include <sstream>

#include "dsta/pipeline.hpp"

using namespace dsta;

namespace {

IntervalAnnotation ann(std::int64_t s, std::int64_t e, int label = 0, std::string vid = "v") {
  return {std::move(vid), s, e, label};
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(is, line);) out.push_back(line);
  return out;
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / ("dsta_pipeline_" + name);
  std::filesystem::remove_all(d);
  return d;
}

}  // namespace

TEST(PointToInterval, WorkedExamples) {
  const auto a = point_to_interval({"v", 50, 4}, 1000);
  EXPECT_EQ(a.start, 41);
  EXPECT_EQ(a.end, 59);
  EXPECT_EQ(a.label, 4);
  EXPECT_EQ(a.frames(), 19);
  const auto b = point_to_interval({"v", 3, 0}, 1000);
  EXPECT_EQ(b.start, 0);
  EXPECT_EQ(b.end, 12);
  const auto c = point_to_interval({"v", 995, 0}, 1000);
  EXPECT_EQ(c.start, 986);
  EXPECT_EQ(c.end, 999);
}

TEST(PointToInterval, OutOfRangeNamesRecord) {
  EXPECT_THROW(point_to_interval({"v", 1000, 0}, 1000), ConfigError);
  EXPECT_THROW(point_to_interval({"v", -1, 0}, 1000), ConfigError);
  try {
    convert_strokes({{"v", 5, 0}, {"v", 2000, 0}}, {{"v", 1000}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("record 1"), std::string::npos);
  }
  EXPECT_THROW(convert_strokes({{"w", 5, 0}}, {{"v", 1000}}), ConfigError);
}

TEST(PointToInterval, BoundsProperty) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 2000; ++i) {
    const std::int64_t len = 1 + static_cast<std::int64_t>(rng() % 200);
    const std::int64_t t = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(len));
    const auto a = point_to_interval({"v", t, 0}, len);
    EXPECT_GE(a.start, 0);
    EXPECT_LE(a.end, len - 1);
    if (t >= 9 && t + 9 <= len - 1) {
      EXPECT_EQ(a.end - a.start, 18);
    }
  }
}

TEST(ConvertStrokes, DropsDegenerate) {
  // Window 1 at the first frame gives [0,1], two inclusive frames.
  const auto r = convert_strokes({{"v", 0, 0}, {"v", 5, 0}}, {{"v", 10}}, 1);
  EXPECT_EQ(r.dropped_degenerate, 1u);
  ASSERT_EQ(r.intervals.size(), 1u);
  EXPECT_EQ(r.intervals[0].start, 4);
  EXPECT_EQ(r.intervals[0].end, 6);
}

TEST(Resample, WorkedExamples) {
  EXPECT_EQ(resample_frame(100, 50, 25), 50);
  for (std::int64_t f : {0, 1, 7, 123, 99999}) EXPECT_EQ(resample_frame(f, 25, 25), f);
  EXPECT_EQ(resample_frame(3, 30, 25), 3);
  EXPECT_THROW(resample_frame(3, 0, 25), ConfigError);
  EXPECT_THROW(resample_frame(3, 25, -1), ConfigError);
}

TEST(Resample, MonotoneOnSortedInput) {
  std::mt19937_64 rng(8);
  for (double src : {23.976, 29.97, 30.0, 50.0, 59.94, 60.0}) {
    std::vector<StrokeEvent> ev;
    std::int64_t t = 0;
    for (int i = 0; i < 300; ++i) ev.push_back({"v", t += static_cast<std::int64_t>(rng() % 5), 0});
    const auto out = resample_timestamps(ev, src);
    for (std::size_t i = 1; i < out.size(); ++i) EXPECT_LE(out[i - 1].t, out[i].t);
  }
}

TEST(Resample, IntervalsKeepOrder) {
  const auto out = resample_timestamps(std::vector<IntervalAnnotation>{ann(30, 60), ann(90, 120)}, 30);
  EXPECT_EQ(out[0].start, 25);
  EXPECT_EQ(out[0].end, 50);
  EXPECT_EQ(out[1].start, 75);
  EXPECT_EQ(out[1].end, 100);
}

TEST(Segment, WorkedExample) {
  const auto clips = segment_by_inactivity({ann(90, 100), ann(300, 310)}, 1000);
  ASSERT_EQ(clips.size(), 2u);
  EXPECT_EQ(clips[0].source_start, 80);
  EXPECT_EQ(clips[0].source_end, 110);
  EXPECT_EQ(clips[1].source_start, 290);
  EXPECT_EQ(clips[1].source_end, 320);
  EXPECT_EQ(clips[0].annotations[0].start, 10);
  EXPECT_EQ(clips[0].annotations[0].end, 20);
  EXPECT_EQ(clips[1].annotations[0].start, 10);
}

TEST(Segment, GapOfExactly150DoesNotSplit) {
  EXPECT_EQ(segment_by_inactivity({ann(0, 10), ann(160, 170)}, std::nullopt).size(), 1u);
  EXPECT_EQ(segment_by_inactivity({ann(0, 10), ann(161, 171)}, std::nullopt).size(), 2u);
}

TEST(Segment, SingleActionAndEmpty) {
  const auto clips = segment_by_inactivity({ann(50, 60)}, std::nullopt);
  ASSERT_EQ(clips.size(), 1u);
  EXPECT_EQ(clips[0].source_start, 40);
  EXPECT_EQ(clips[0].source_end, 70);
  EXPECT_TRUE(segment_by_inactivity({}, std::nullopt).empty());
}

TEST(Segment, ClampsToVideo) {
  const auto clips = segment_by_inactivity({ann(3, 8), ann(990, 998)}, 1000);
  ASSERT_EQ(clips.size(), 2u);
  EXPECT_EQ(clips[0].source_start, 0);
  EXPECT_EQ(clips[0].annotations[0].start, 3);
  EXPECT_EQ(clips[1].source_end, 999);
}

TEST(Segment, Errors) {
  EXPECT_THROW(segment_by_inactivity({ann(10, 20), ann(5, 8)}, std::nullopt), ConfigError);
  EXPECT_THROW(segment_by_inactivity({ann(10, 20), ann(30, 40, 0, "w")}, std::nullopt),
               ConfigError);
  EXPECT_THROW(segment_by_inactivity({ann(0, 1)}, std::nullopt, 10, 10), ConfigError);
}

TEST(Segment, ConservationAndRebasingProperty) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<IntervalAnnotation> all;
    std::map<std::string, std::int64_t> lens;
    for (int v = 0; v < 3; ++v) {
      const std::string vid = "vid" + std::to_string(v);
      std::int64_t t = static_cast<std::int64_t>(rng() % 30);
      const int n = static_cast<int>(rng() % 12);
      for (int i = 0; i < n; ++i) {
        const std::int64_t len = 2 + static_cast<std::int64_t>(rng() % 20);
        all.push_back({vid, t, t + len, static_cast<int>(rng() % 4)});
        t += static_cast<std::int64_t>(rng() % 320);
      }
      lens[vid] = t + 40;
    }
    std::shuffle(all.begin(), all.end(), rng);
    const auto clips = segment_dataset(all, lens);

    std::size_t total = 0;
    std::map<std::string, std::int64_t> last_end;
    std::multiset<std::tuple<std::string, std::int64_t, std::int64_t, int>> seen;
    for (const auto& c : clips) {
      total += c.annotations.size();
      if (const auto it = last_end.find(c.video_id); it != last_end.end()) {
        EXPECT_LT(it->second, c.source_start);
      }
      last_end[c.video_id] = c.source_end;
      for (const auto& a : c.annotations) {
        EXPECT_GE(a.start, 0);
        EXPECT_LE(a.end, c.source_end - c.source_start);
        seen.insert({c.video_id, a.start + c.source_start, a.end + c.source_start, a.label});
      }
    }
    EXPECT_EQ(total, all.size());
    std::multiset<std::tuple<std::string, std::int64_t, std::int64_t, int>> orig;
    for (const auto& a : all) orig.insert({a.video_id, a.start, a.end, a.label});
    EXPECT_EQ(seen, orig);
  }
}

TEST(Stats, GroupBoundaries) {
  EXPECT_EQ(frequency_group(0.8), FrequencyGroup::High);
  EXPECT_EQ(frequency_group(0.7), FrequencyGroup::High);
  EXPECT_EQ(frequency_group(0.0), FrequencyGroup::Intermediate);
  EXPECT_EQ(frequency_group(-0.7), FrequencyGroup::Low);
  EXPECT_EQ(frequency_group(std::nextafter(-0.7, -1.0)), FrequencyGroup::Rare);
  EXPECT_EQ(frequency_group(std::nextafter(0.0, -1.0)), FrequencyGroup::Low);
}

TEST(Stats, PopulationSigma) {
  // Counts 1, 2, 3: mean 2, population sd sqrt(2/3).
  ClipManifest c{"c", "v", 0, 100, {}};
  c.annotations = {ann(0, 1, 0), ann(0, 2, 1), ann(0, 2, 1), ann(0, 3, 2), ann(0, 3, 2), ann(0, 3, 2)};
  const auto st = compute_stats({c});
  const double sd = std::sqrt(2.0 / 3.0);
  EXPECT_NEAR(st.class_sigma.at(0), -1.0 / sd, 1e-15);
  EXPECT_EQ(st.class_sigma.at(1), 0.0);
  EXPECT_NEAR(st.class_sigma.at(2), 1.0 / sd, 1e-15);
  EXPECT_EQ(st.class_group.at(0), FrequencyGroup::Rare);
  EXPECT_EQ(st.class_group.at(1), FrequencyGroup::Intermediate);
  EXPECT_EQ(st.class_group.at(2), FrequencyGroup::High);
  EXPECT_EQ(st.duration_hist.at(2), 1u);
  EXPECT_EQ(st.duration_hist.at(4), 3u);
  EXPECT_EQ(st.labels_per_clip.at(6), 1u);
  EXPECT_TRUE(st.warnings.empty());
}

TEST(Stats, SingleClassWarns) {
  ClipManifest c{"c", "v", 0, 100, {ann(0, 5, 3), ann(7, 9, 3)}};
  const auto st = compute_stats({c});
  EXPECT_EQ(st.class_group.at(3), FrequencyGroup::Intermediate);
  EXPECT_EQ(st.warnings.size(), 1u);
  EXPECT_THROW(compute_stats({}), ConfigError);
}

TEST(Export, HeaderOnlyForEmptyStats) {
  const auto dir = temp_dir("empty");
  const auto p = export_plot_data(DatasetStats{}, dir);
  EXPECT_EQ(read_lines(p.durations), (std::vector<std::string>{"duration_frames,count"}));
  EXPECT_EQ(read_lines(p.labels_per_clip), (std::vector<std::string>{"labels_per_clip,clips"}));
  EXPECT_EQ(read_lines(p.class_counts), (std::vector<std::string>{"label,count,sigma,group"}));
  std::filesystem::remove_all(dir);
}

TEST(Export, RowCountsAndConservation) {
  std::mt19937_64 rng(10);
  std::vector<ClipManifest> clips;
  for (int i = 0; i < 20; ++i) {
    ClipManifest c{"c" + std::to_string(i), "v", 0, 500, {}};
    const int n = 1 + static_cast<int>(rng() % 6);
    for (int k = 0; k < n; ++k) {
      const std::int64_t s = static_cast<std::int64_t>(rng() % 100);
      c.annotations.push_back(ann(s, s + 2 + static_cast<std::int64_t>(rng() % 30),
                                  static_cast<int>(rng() % 7)));
    }
    clips.push_back(c);
  }
  const auto st = compute_stats(clips);
  const auto dir = temp_dir("rows");
  const auto p = export_plot_data(st, dir);
  EXPECT_EQ(read_lines(p.class_counts).size(), st.class_counts.size() + 1);
  std::size_t hist_total = 0;
  const auto rows = read_lines(p.durations);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    hist_total += std::stoul(rows[i].substr(rows[i].find(',') + 1));
  }
  EXPECT_EQ(hist_total, st.total_annotations);
  std::size_t clip_total = 0;
  for (const auto& line : read_lines(p.labels_per_clip)) {
    if (line.rfind("labels", 0) == 0) continue;
    clip_total += std::stoul(line.substr(line.find(',') + 1));
  }
  EXPECT_EQ(clip_total, clips.size());
  std::filesystem::remove_all(dir);
}

TEST(Export, UnwritableDirectoryNamesPath) {
  const auto dir = temp_dir("blocked");
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "file") << "x";
  try {
    export_plot_data(DatasetStats{}, dir / "file" / "sub");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("file"), std::string::npos);
  }
  std::filesystem::remove_all(dir);
}
