#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vetime/common.hpp"
#include "vetime/image.hpp"
#include "vetime/series.hpp"
#include "vetime/synthetic.hpp"

namespace vetime {

using json = nlohmann::json;

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---- CSV ------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace detail

/// Reads `t,value[,label]` or `t,v0,...,vK[,label]`. The t column is assumed
/// already ordered; values are taken row by row.
inline MultiSeries read_series_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "empty csv: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  require(header.size() >= 2 && header[0] == "t",
          "csv header must start with 't': " + path);
  const bool has_label = header.back() == "label";
  const std::size_t n_vars = header.size() - 1 - (has_label ? 1 : 0);
  require(n_vars >= 1, "csv has no value columns: " + path);

  MultiSeries ms;
  ms.variables.resize(n_vars);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    require(cells.size() == header.size(), "ragged csv row in " + path);
    for (std::size_t v = 0; v < n_vars; ++v)
      ms.variables[v].values.push_back(std::stod(cells[1 + v]));
    if (has_label)
      ms.labels.push_back(
          static_cast<std::uint8_t>(std::stoi(cells.back()) != 0));
  }
  ms.validate();
  return ms;
}

inline LabeledSeries read_labeled_csv(const std::string& path) {
  MultiSeries ms = read_series_csv(path);
  require(ms.n_variables() == 1, "expected univariate csv: " + path);
  LabeledSeries ls;
  ls.series = std::move(ms.variables[0]);
  ls.labels = std::move(ms.labels);
  return ls;
}

inline void write_labeled_csv(const std::string& path, const LabeledSeries& ls) {
  std::ofstream out(path);
  require(out.good(), "cannot write " + path);
  out << (ls.has_labels() ? "t,value,label\n" : "t,value\n");
  for (std::size_t t = 0; t < ls.series.length(); ++t) {
    out << t << ',' << fmt_double(ls.series.values[t]);
    if (ls.has_labels()) out << ',' << int(ls.labels[t]);
    out << '\n';
  }
}

inline std::vector<double> read_scores_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "empty csv: " + path);
  std::vector<double> scores;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    require(cells.size() >= 2, "score csv rows need >= 2 columns");
    scores.push_back(std::stod(cells[1]));
  }
  return scores;
}

inline void write_scores_csv(const std::string& path,
                             const std::vector<double>& scores,
                             const std::vector<double>* recon = nullptr) {
  std::ofstream out(path);
  require(out.good(), "cannot write " + path);
  out << (recon ? "t,score,recon\n" : "t,score\n");
  for (std::size_t t = 0; t < scores.size(); ++t) {
    out << t << ',' << fmt_double(scores[t]);
    if (recon) out << ',' << fmt_double((*recon)[t]);
    out << '\n';
  }
}

// ---- fold plan / canvas serialization --------------------------------------

inline json fold_plan_to_json(const FoldPlan& p) {
  json scales = json::array();
  for (const auto& var : p.var_scales) {
    json ch = json::array();
    for (int c = 0; c < 3; ++c)
      ch.push_back({{"min", var[c].min},
                    {"max", var[c].max},
                    {"constant", var[c].constant}});
    scales.push_back(ch);
  }
  return json{{"t_fold", p.t_fold},
              {"n_cols", p.n_cols},
              {"pad_len_fold", p.pad_len_fold},
              {"length", p.length},
              {"canvas", p.canvas},
              {"n_variables", p.n_variables},
              {"gammas", p.gammas},
              {"vertical_mode",
               p.v_mode == VerticalMode::replicate ? "replicate" : "pool"},
              {"line_plot", p.line_plot},
              {"channel_scales", scales}};
}

inline FoldPlan fold_plan_from_json(const json& j) {
  FoldPlan p;
  p.t_fold = j.at("t_fold");
  p.n_cols = j.at("n_cols");
  p.pad_len_fold = j.at("pad_len_fold");
  p.length = j.at("length");
  p.canvas = j.at("canvas");
  p.n_variables = j.at("n_variables");
  p.gammas = j.at("gammas").get<std::vector<double>>();
  p.v_mode = j.at("vertical_mode") == "replicate" ? VerticalMode::replicate
                                                  : VerticalMode::pool;
  p.line_plot = j.at("line_plot");
  for (const auto& var : j.at("channel_scales")) {
    std::array<ChannelScale, 3> ch;
    for (int c = 0; c < 3; ++c) {
      ch[c].min = var[c].at("min");
      ch[c].max = var[c].at("max");
      ch[c].constant = var[c].at("constant");
    }
    p.var_scales.push_back(ch);
  }
  // geometry tables are cheap to rebuild and excluded from the dump
  return p;
}

/// Float tensor dump: shape plus row-major (y, x, channel) values, with the
/// fold plan alongside.
inline json canvas_to_json(const CanvasImage& img) {
  return json{{"shape", {kCanvas, kCanvas, 3}},
              {"data", img.pixels},
              {"fold_plan", fold_plan_to_json(img.plan)}};
}

inline void write_canvas_json(const std::string& path, const CanvasImage& img) {
  std::ofstream out(path);
  require(out.good(), "cannot write " + path);
  out << canvas_to_json(img) << '\n';
}

// ---- PNG (8-bit quantization, inspection only) ------------------------------

namespace detail {

inline void png_append_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back((x >> 24) & 0xff);
  v.push_back((x >> 16) & 0xff);
  v.push_back((x >> 8) & 0xff);
  v.push_back(x & 0xff);
}

inline void png_append_chunk(std::vector<std::uint8_t>& out, const char* tag,
                             const std::vector<std::uint8_t>& payload) {
  png_append_u32(out, static_cast<std::uint32_t>(payload.size()));
  std::vector<std::uint8_t> body(tag, tag + 4);
  body.insert(body.end(), payload.begin(), payload.end());
  out.insert(out.end(), body.begin(), body.end());
  const auto crc =
      ::crc32(0, body.data(), static_cast<uInt>(body.size()));
  png_append_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace detail

inline void write_png(const std::string& path, const CanvasImage& img) {
  const int w = kCanvas, h = kCanvas;
  std::vector<std::uint8_t> raw;
  raw.reserve(std::size_t(h) * (1 + std::size_t(w) * 3));
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);  // filter: none
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        const double v = std::clamp(img.at(y, x, ch), 0.0, 255.0);
        raw.push_back(static_cast<std::uint8_t>(std::lround(v)));
      }
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(bound);
  require(compress2(compressed.data(), &bound, raw.data(),
                    static_cast<uLong>(raw.size()), 9) == Z_OK,
          "png deflate failed");
  compressed.resize(bound);

  std::vector<std::uint8_t> out{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  detail::png_append_u32(ihdr, w);
  detail::png_append_u32(ihdr, h);
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  detail::png_append_chunk(out, "IHDR", ihdr);
  detail::png_append_chunk(out, "IDAT", compressed);
  detail::png_append_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  require(f.good(), "cannot write " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
}

// ---- dataset generation ------------------------------------------------------

namespace synth {

inline json generator_config_to_json(const GeneratorConfig& cfg) {
  json kinds = json::array();
  for (auto k : cfg.anomaly_kinds) kinds.push_back(anomaly_kind_name(k));
  return json{{"n_series", cfg.n_series},
              {"length_range", {cfg.min_length, cfg.max_length}},
              {"amplitude_range", {cfg.amplitude_min, cfg.amplitude_max}},
              {"period_range", {cfg.period_min, cfg.period_max}},
              {"trend_slope_max", cfg.trend_slope_max},
              {"noise_sigma_range", {cfg.noise_sigma_min, cfg.noise_sigma_max}},
              {"anomaly_rate", cfg.anomaly_rate},
              {"anomaly_kinds", kinds},
              {"seed", cfg.seed}};
}

inline GeneratorConfig generator_config_from_json(const json& j) {
  GeneratorConfig cfg;
  cfg.n_series = j.value("n_series", cfg.n_series);
  if (j.contains("length_range")) {
    cfg.min_length = j["length_range"][0];
    cfg.max_length = j["length_range"][1];
  }
  if (j.contains("amplitude_range")) {
    cfg.amplitude_min = j["amplitude_range"][0];
    cfg.amplitude_max = j["amplitude_range"][1];
  }
  if (j.contains("period_range")) {
    cfg.period_min = j["period_range"][0];
    cfg.period_max = j["period_range"][1];
  }
  cfg.trend_slope_max = j.value("trend_slope_max", cfg.trend_slope_max);
  if (j.contains("noise_sigma_range")) {
    cfg.noise_sigma_min = j["noise_sigma_range"][0];
    cfg.noise_sigma_max = j["noise_sigma_range"][1];
  }
  cfg.anomaly_rate = j.value("anomaly_rate", cfg.anomaly_rate);
  if (j.contains("anomaly_kinds")) {
    cfg.anomaly_kinds.clear();
    for (const auto& k : j["anomaly_kinds"])
      cfg.anomaly_kinds.push_back(anomaly_kind_from_name(k));
  }
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

/// Writes one CSV per series plus manifest.json (paths, seeds, anomaly
/// inventory). Regeneration with the same config is byte-identical.
inline json generate_dataset(const GeneratorConfig& cfg,
                             const std::string& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  json entries = json::array();
  for (int i = 0; i < cfg.n_series; ++i) {
    const GeneratedSeries gs = generate_series(cfg, i);
    char name[32];
    std::snprintf(name, sizeof(name), "series_%04d.csv", i);
    write_labeled_csv((std::filesystem::path(out_dir) / name).string(),
                      gs.labeled);
    json events = json::array();
    std::int64_t label_count = 0;
    for (auto l : gs.labeled.labels) label_count += l;
    for (const auto& e : gs.events)
      events.push_back({{"kind", anomaly_kind_name(e.kind)},
                        {"start", e.start},
                        {"end", e.end}});
    entries.push_back({{"file", name},
                       {"index", i},
                       {"length", gs.labeled.series.length()},
                       {"label_count", label_count},
                       {"events", events}});
  }
  json manifest{{"config", generator_config_to_json(cfg)},
                {"series", entries}};
  std::ofstream out(std::filesystem::path(out_dir) / "manifest.json");
  require(out.good(), "cannot write manifest in " + out_dir);
  out << manifest.dump(2) << '\n';
  return manifest;
}

}  // namespace synth

/// Loads every series listed in a dataset directory's manifest.
inline std::vector<LabeledSeries> load_dataset(const std::string& dir) {
  std::ifstream in(std::filesystem::path(dir) / "manifest.json");
  require(in.good(), "cannot open manifest.json in " + dir);
  json manifest;
  in >> manifest;
  std::vector<LabeledSeries> out;
  for (const auto& entry : manifest.at("series"))
    out.push_back(read_labeled_csv(
        (std::filesystem::path(dir) / entry.at("file").get<std::string>())
            .string()));
  return out;
}

}  // namespace vetime
