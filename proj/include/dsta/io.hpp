#pragma once

// Line-delimited JSON readers/writers for annotations, proposals, video
// metadata and clip manifests, plus EvalReport serialization.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dsta/errors.hpp"
#include "dsta/pipeline.hpp"
#include "dsta/tal_eval.hpp"

namespace dsta::io {

using nlohmann::json;

namespace detail {

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open for reading: " + path);
  return is;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  return os;
}

// Calls fn(record, line_number) for each non-blank line.
template <class Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
  auto is = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line), lineno);
    } catch (const json::exception& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace detail

inline std::vector<StrokeEvent> read_strokes(const std::string& path) {
  std::vector<StrokeEvent> out;
  detail::for_each_jsonl(path, [&](const json& j, std::size_t) {
    out.push_back({j.at("video_id").get<std::string>(), j.at("t").get<std::int64_t>(),
                   j.at("label").get<int>()});
  });
  return out;
}

inline std::vector<IntervalAnnotation> read_intervals(const std::string& path) {
  std::vector<IntervalAnnotation> out;
  detail::for_each_jsonl(path, [&](const json& j, std::size_t lineno) {
    IntervalAnnotation a{j.at("video_id").get<std::string>(), j.at("start").get<std::int64_t>(),
                         j.at("end").get<std::int64_t>(), j.at("label").get<int>()};
    if (a.start > a.end || a.start < 0) {
      throw IoError(path + ":" + std::to_string(lineno) + ": invalid interval");
    }
    out.push_back(std::move(a));
  });
  return out;
}

// Score defaults to 1.0 when absent.
inline std::vector<Proposal> read_proposals(const std::string& path) {
  std::vector<Proposal> out;
  detail::for_each_jsonl(path, [&](const json& j, std::size_t lineno) {
    Proposal p{j.at("video_id").get<std::string>(), j.at("start").get<double>(),
               j.at("end").get<double>(), j.at("label").get<int>(), j.value("score", 1.0)};
    if (p.start > p.end) throw IoError(path + ":" + std::to_string(lineno) + ": start > end");
    out.push_back(std::move(p));
  });
  return out;
}

// Accepts a JSON array of {video_id, fps, frame_count}, a single such object,
// or the same records one per line.
inline std::vector<VideoMeta> read_video_meta(const std::string& path) {
  std::stringstream buf;
  buf << detail::open_in(path).rdbuf();
  const std::string text = buf.str();
  std::vector<json> records;
  try {
    const json doc = json::parse(text);
    if (doc.is_array()) {
      records.assign(doc.begin(), doc.end());
    } else {
      records.push_back(doc);
    }
  } catch (const json::parse_error&) {
    detail::for_each_jsonl(path, [&](const json& j, std::size_t) { records.push_back(j); });
  }
  std::vector<VideoMeta> out;
  try {
    for (const auto& j : records) {
      VideoMeta m{j.at("video_id").get<std::string>(), j.at("fps").get<double>(),
                  j.at("frame_count").get<std::int64_t>()};
      if (!(m.fps > 0.0) || m.frame_count <= 0) {
        throw IoError(path + ": video " + m.video_id + " has non-positive fps or frame_count");
      }
      out.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  return out;
}

inline json to_json(const IntervalAnnotation& a) {
  return {{"video_id", a.video_id}, {"start", a.start}, {"end", a.end}, {"label", a.label}};
}

inline json to_json(const Proposal& p) {
  return {{"video_id", p.video_id}, {"start", p.start}, {"end", p.end},
          {"label", p.label},       {"score", p.score}};
}

template <class T>
void write_jsonl(const std::string& path, const std::vector<T>& items) {
  auto os = detail::open_out(path);
  for (const auto& it : items) os << to_json(it).dump() << "\n";
  if (!os) throw IoError("write failed: " + path);
}

inline json to_json(const ClipManifest& c) {
  json anns = json::array();
  for (const auto& a : c.annotations) {
    anns.push_back({{"start", a.start}, {"end", a.end}, {"label", a.label}});
  }
  return {{"clip_id", c.clip_id},           {"video_id", c.video_id},
          {"source_start", c.source_start}, {"source_end", c.source_end},
          {"annotations", anns}};
}

inline void write_manifest(const std::string& path, const std::vector<ClipManifest>& clips) {
  json doc = json::array();
  for (const auto& c : clips) doc.push_back(to_json(c));
  auto os = detail::open_out(path);
  os << doc.dump(2) << "\n";
  if (!os) throw IoError("write failed: " + path);
}

inline std::vector<ClipManifest> read_manifest(const std::string& path) {
  auto is = detail::open_in(path);
  std::vector<ClipManifest> out;
  try {
    const json doc = json::parse(is);
    for (const auto& j : doc) {
      ClipManifest c;
      c.clip_id = j.at("clip_id").get<std::string>();
      c.video_id = j.at("video_id").get<std::string>();
      c.source_start = j.at("source_start").get<std::int64_t>();
      c.source_end = j.at("source_end").get<std::int64_t>();
      for (const auto& a : j.at("annotations")) {
        c.annotations.push_back({c.clip_id, a.at("start").get<std::int64_t>(),
                                 a.at("end").get<std::int64_t>(), a.at("label").get<int>()});
      }
      out.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------

inline std::string threshold_column(double thr) {
  std::ostringstream os;
  os << "mAP@" << thr;
  return os.str();
}

inline json report_to_json(const EvalReport& r) {
  json per_class = json::object();
  for (const auto& [c, aps] : r.per_class_ap) per_class[std::to_string(c)] = aps;
  return {{"thresholds", r.thresholds},
          {"map_per_threshold", r.map_per_threshold},
          {"average_map", r.average_map},
          {"per_class_ap", per_class},
          {"classes_without_predictions", r.classes_without_predictions},
          {"num_gt", r.num_gt},
          {"num_pred", r.num_pred}};
}

// Header plus one row, values in percent: mAP@0.3,...,mAP@0.7,Avg
inline std::string report_csv_header(const std::vector<double>& thresholds,
                                     const std::string& first_column = "method") {
  std::string h = first_column;
  for (double t : thresholds) h += "," + threshold_column(t);
  return h + ",Avg";
}

inline std::string report_csv_row(const EvalReport& r, const std::string& name) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << name;
  for (double m : r.map_per_threshold) os << "," << 100.0 * m;
  os << "," << 100.0 * r.average_map;
  return os.str();
}

inline void write_report_csv(const std::string& path, const EvalReport& r,
                             const std::string& name = "result") {
  auto os = detail::open_out(path);
  os << report_csv_header(r.thresholds) << "\n" << report_csv_row(r, name) << "\n";
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace dsta::io
