#pragma once

// Annotation preprocessing: stroke points to intervals, frame-rate
// resampling, inactivity-gap segmentation into clips, and dataset statistics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsta/errors.hpp"
#include "dsta/tal_eval.hpp"

namespace dsta {

struct StrokeEvent {
  std::string video_id;
  std::int64_t t = 0;
  int label = 0;
};

struct VideoMeta {
  std::string video_id;
  double fps = 25.0;
  std::int64_t frame_count = 0;
};

struct ClipManifest {
  std::string clip_id;
  std::string video_id;
  std::int64_t source_start = 0;
  std::int64_t source_end = 0;  // inclusive
  std::vector<IntervalAnnotation> annotations;  // clip-local frames
};

struct PipelineConfig {
  std::int64_t window = 9;
  std::int64_t gap_threshold = 150;
  std::int64_t context = 10;
  double fps = 25.0;
  std::int64_t min_frames = 3;  // shorter converted intervals are dropped
};

// ---------------------------------------------------------------------------

// [t - window, t + window] clipped to [0, video_len - 1].
inline IntervalAnnotation point_to_interval(const StrokeEvent& e, std::int64_t video_len,
                                            std::int64_t window = 9) {
  if (e.t < 0 || e.t >= video_len) {
    throw ConfigError("stroke at frame " + std::to_string(e.t) + " lies outside video " +
                      e.video_id + " of length " + std::to_string(video_len));
  }
  return {e.video_id, std::max<std::int64_t>(0, e.t - window),
          std::min<std::int64_t>(video_len - 1, e.t + window), e.label};
}

struct ConversionResult {
  std::vector<IntervalAnnotation> intervals;
  std::size_t dropped_degenerate = 0;
};

// Converts every stroke; `video_len` maps video id to frame count. Errors name
// the offending record index.
inline ConversionResult convert_strokes(const std::vector<StrokeEvent>& events,
                                        const std::map<std::string, std::int64_t>& video_len,
                                        std::int64_t window = 9, std::int64_t min_frames = 3) {
  ConversionResult out;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto it = video_len.find(events[i].video_id);
    if (it == video_len.end()) {
      throw ConfigError("record " + std::to_string(i) + ": no metadata for video '" +
                        events[i].video_id + "'");
    }
    IntervalAnnotation iv;
    try {
      iv = point_to_interval(events[i], it->second, window);
    } catch (const ConfigError& e) {
      throw ConfigError("record " + std::to_string(i) + ": " + e.what());
    }
    if (iv.frames() < min_frames) {
      ++out.dropped_degenerate;
      continue;
    }
    out.intervals.push_back(iv);
  }
  return out;
}

// round-half-up(frame * fps_dst / fps_src)
inline std::int64_t resample_frame(std::int64_t frame, double fps_src, double fps_dst = 25.0) {
  if (!(fps_src > 0.0) || !(fps_dst > 0.0)) throw ConfigError("resample: fps must be positive");
  if (fps_src == fps_dst) return frame;
  const double scaled = static_cast<double>(frame) * fps_dst / fps_src;
  // The epsilon keeps exact halves such as 2.5 from landing on 2.4999...
  return static_cast<std::int64_t>(std::floor(scaled + 0.5 + 1e-9));
}

inline std::vector<StrokeEvent> resample_timestamps(std::vector<StrokeEvent> events,
                                                    double fps_src, double fps_dst = 25.0) {
  for (auto& e : events) e.t = resample_frame(e.t, fps_src, fps_dst);
  return events;
}

inline std::vector<IntervalAnnotation> resample_timestamps(std::vector<IntervalAnnotation> items,
                                                           double fps_src, double fps_dst = 25.0) {
  for (auto& a : items) {
    a.start = resample_frame(a.start, fps_src, fps_dst);
    a.end = resample_frame(a.end, fps_src, fps_dst);
  }
  return items;
}

// ---------------------------------------------------------------------------

// Splits one video's annotations wherever next.start - prev.end > gap_threshold
// and pads each clip by `context` frames, clamped to the video.
inline std::vector<ClipManifest> segment_by_inactivity(
    const std::vector<IntervalAnnotation>& annotations, std::optional<std::int64_t> video_len,
    std::int64_t gap_threshold = 150, std::int64_t context = 10) {
  if (gap_threshold < 0 || context < 0) {
    throw ConfigError("segment: gap threshold and context must be non-negative");
  }
  if (gap_threshold < 2 * context) {
    throw ConfigError("segment: gap threshold " + std::to_string(gap_threshold) +
                      " smaller than twice the context " + std::to_string(context) +
                      " would make clips overlap");
  }
  std::vector<ClipManifest> clips;
  if (annotations.empty()) return clips;
  for (std::size_t i = 1; i < annotations.size(); ++i) {
    if (annotations[i].start < annotations[i - 1].start) {
      throw ConfigError("segment: annotations must be sorted by start frame");
    }
    if (annotations[i].video_id != annotations[0].video_id) {
      throw ConfigError("segment: annotations span several videos");
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> groups;  // [first, last)
  std::size_t first = 0;
  std::int64_t run_end = annotations[0].end;
  for (std::size_t i = 1; i < annotations.size(); ++i) {
    if (annotations[i].start - run_end > gap_threshold) {
      groups.emplace_back(first, i);
      first = i;
    }
    run_end = std::max(run_end, annotations[i].end);
  }
  groups.emplace_back(first, annotations.size());

  const std::string& vid = annotations[0].video_id;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto [b, e] = groups[g];
    std::int64_t lo = annotations[b].start;
    std::int64_t hi = annotations[b].end;
    for (std::size_t i = b; i < e; ++i) hi = std::max(hi, annotations[i].end);
    ClipManifest clip;
    clip.video_id = vid;
    clip.clip_id = vid + "_clip" + std::to_string(g);
    clip.source_start = std::max<std::int64_t>(0, lo - context);
    clip.source_end = hi + context;
    if (video_len) clip.source_end = std::min(clip.source_end, *video_len - 1);
    for (std::size_t i = b; i < e; ++i) {
      IntervalAnnotation a = annotations[i];
      a.video_id = clip.clip_id;
      a.start -= clip.source_start;
      a.end -= clip.source_start;
      clip.annotations.push_back(a);
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

// Groups annotations by video (sorted by id, then start) and segments each.
inline std::vector<ClipManifest> segment_dataset(
    std::vector<IntervalAnnotation> annotations,
    const std::map<std::string, std::int64_t>& video_len, std::int64_t gap_threshold = 150,
    std::int64_t context = 10) {
  std::map<std::string, std::vector<IntervalAnnotation>> by_video;
  for (auto& a : annotations) by_video[a.video_id].push_back(std::move(a));
  std::vector<ClipManifest> all;
  for (auto& [vid, items] : by_video) {
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& x, const auto& y) { return x.start < y.start; });
    std::optional<std::int64_t> len;
    if (const auto it = video_len.find(vid); it != video_len.end()) len = it->second;
    for (auto& c : segment_by_inactivity(items, len, gap_threshold, context)) {
      all.push_back(std::move(c));
    }
  }
  return all;
}

// ---------------------------------------------------------------------------

enum class FrequencyGroup { High, Intermediate, Low, Rare };

inline const char* group_name(FrequencyGroup g) {
  switch (g) {
    case FrequencyGroup::High: return "high";
    case FrequencyGroup::Intermediate: return "intermediate";
    case FrequencyGroup::Low: return "low";
    case FrequencyGroup::Rare: return "rare";
  }
  return "?";
}

// sigma >= 0.7 high; [0, 0.7) intermediate; [-0.7, 0) low; < -0.7 rare.
inline FrequencyGroup frequency_group(double sigma) {
  if (sigma >= 0.7) return FrequencyGroup::High;
  if (sigma >= 0.0) return FrequencyGroup::Intermediate;
  if (sigma >= -0.7) return FrequencyGroup::Low;
  return FrequencyGroup::Rare;
}

struct DatasetStats {
  std::map<int, std::size_t> class_counts;
  std::map<int, double> class_sigma;
  std::map<int, FrequencyGroup> class_group;
  std::map<std::int64_t, std::size_t> duration_hist;  // inclusive frames -> instances
  std::map<std::size_t, std::size_t> labels_per_clip;  // annotations in a clip -> clips
  std::size_t total_annotations = 0;
  std::vector<std::string> warnings;
};

inline DatasetStats compute_stats(const std::vector<ClipManifest>& clips) {
  DatasetStats st;
  for (const auto& c : clips) {
    ++st.labels_per_clip[c.annotations.size()];
    for (const auto& a : c.annotations) {
      ++st.class_counts[a.label];
      ++st.duration_hist[a.frames()];
      ++st.total_annotations;
    }
  }
  if (st.total_annotations == 0) throw ConfigError("compute_stats: dataset has no annotations");

  const double n = static_cast<double>(st.class_counts.size());
  double mean = 0.0;
  for (const auto& [c, k] : st.class_counts) mean += static_cast<double>(k);
  mean /= n;
  double var = 0.0;
  for (const auto& [c, k] : st.class_counts) var += (static_cast<double>(k) - mean) * (static_cast<double>(k) - mean);
  const double sd = std::sqrt(var / n);
  if (sd == 0.0) {
    st.warnings.push_back("all classes have equal counts (stddev 0); every class is intermediate");
  }
  for (const auto& [c, k] : st.class_counts) {
    const double sigma = sd == 0.0 ? 0.0 : (static_cast<double>(k) - mean) / sd;
    st.class_sigma[c] = sigma;
    st.class_group[c] = frequency_group(sigma);
  }
  return st;
}

struct PlotDataPaths {
  std::filesystem::path durations, labels_per_clip, class_counts;
};

// Writes durations.csv, labels_per_clip.csv and class_counts.csv into `dir`.
inline PlotDataPaths export_plot_data(const DatasetStats& st, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  PlotDataPaths paths{dir / "durations.csv", dir / "labels_per_clip.csv", dir / "class_counts.csv"};
  const auto open = [](const std::filesystem::path& p) {
    std::ofstream os(p);
    if (!os) throw IoError("cannot open for writing: " + p.string());
    return os;
  };
  {
    auto os = open(paths.durations);
    os << "duration_frames,count\n";
    for (const auto& [d, k] : st.duration_hist) os << d << "," << k << "\n";
  }
  {
    auto os = open(paths.labels_per_clip);
    os << "labels_per_clip,clips\n";
    for (const auto& [n, k] : st.labels_per_clip) os << n << "," << k << "\n";
  }
  {
    auto os = open(paths.class_counts);
    os.precision(6);
    os << std::fixed << "label,count,sigma,group\n";
    for (const auto& [c, k] : st.class_counts) {
      os << c << "," << k << "," << st.class_sigma.at(c) << "," << group_name(st.class_group.at(c))
         << "\n";
    }
  }
  return paths;
}

}  // namespace dsta
