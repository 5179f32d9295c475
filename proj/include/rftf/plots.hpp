// Copyright 2026 The RFTF Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Metrics CSV files and hand-rolled SVG line plots. Both are plain string
// assembly with fixed formatting, so identical inputs produce byte-identical
// files.

#ifndef RFTF_PLOTS_HPP_
#define RFTF_PLOTS_HPP_

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rftf/errors.hpp"
#include "rftf/rftf_finetune.hpp"
#include "rftf/value_model.hpp"

namespace rftf {

inline std::string format_double(double v, int precision = 10) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
  return buf;
}

// ---------------------------------------------------------------------------
// CSV.

inline void write_csv(const std::string& path, const std::string& header,
                      const std::vector<std::vector<double>>& rows) {
  const std::size_t n_cols =
      1 + std::count(header.begin(), header.end(), ',');
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << header << "\n";
  for (const std::vector<double>& row : rows) {
    if (row.size() != n_cols)
      throw UsageError("csv row width " + std::to_string(row.size()) +
                       " does not match header: " + header);
    for (std::size_t i = 0; i < row.size(); ++i)
      out << (i > 0 ? "," : "") << format_double(row[i]);
    out << "\n";
  }
  if (!out) throw IoError("short write: " + path);
}

inline std::vector<std::vector<double>> read_csv(
    const std::string& path, const std::string& expected_header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty csv: " + path);
  if (line != expected_header)
    throw IoError("csv header mismatch in " + path + ": got '" + line +
                  "', want '" + expected_header + "'");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError("bad csv cell '" + cell + "' in " + path);
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline constexpr const char* kValueMetricsHeader =
    "epoch,mean_loss,holdout_pairwise_accuracy";
inline constexpr const char* kFinetuneMetricsHeader =
    "iter,episodes,success_rate,mean_ep_len,mean_kl,clip_frac,beta,"
    "mean_advantage";
inline constexpr const char* kStateValuesHeader = "t,value,smoothed";

inline void write_value_metrics_csv(const std::string& path,
                                    const std::vector<ValueEpochMetrics>& m) {
  std::vector<std::vector<double>> rows;
  for (const ValueEpochMetrics& e : m)
    rows.push_back({static_cast<double>(e.epoch), e.mean_loss,
                    e.holdout_pairwise_accuracy});
  write_csv(path, kValueMetricsHeader, rows);
}

inline void write_finetune_metrics_csv(
    const std::string& path, const std::vector<FinetuneIterMetrics>& m) {
  std::vector<std::vector<double>> rows;
  for (const FinetuneIterMetrics& it : m)
    rows.push_back({static_cast<double>(it.iter),
                    static_cast<double>(it.episodes), it.success_rate,
                    it.mean_ep_len, it.mean_kl, it.clip_frac, it.beta,
                    it.mean_advantage});
  write_csv(path, kFinetuneMetricsHeader, rows);
}

inline void write_state_values_csv(const std::string& path,
                                   const std::vector<double>& values,
                                   int window = 5) {
  const std::vector<double> smoothed = smooth_values(values, window);
  std::vector<std::vector<double>> rows;
  for (std::size_t t = 0; t < values.size(); ++t)
    rows.push_back({static_cast<double>(t), values[t], smoothed[t]});
  write_csv(path, kStateValuesHeader, rows);
}

// ---------------------------------------------------------------------------
// SVG line plots.

struct PlotSeries {
  std::string name;
  std::vector<double> xs;
  std::vector<double> ys;
};

namespace detail {

inline void plot_range(const std::vector<PlotSeries>& series, bool y_axis,
                       double* lo, double* hi) {
  bool seen = false;
  for (const PlotSeries& s : series) {
    const std::vector<double>& v = y_axis ? s.ys : s.xs;
    for (double x : v) {
      if (!seen) {
        *lo = *hi = x;
        seen = true;
      }
      *lo = std::min(*lo, x);
      *hi = std::max(*hi, x);
    }
  }
  if (!seen) throw UsageError("plot has no data points");
  if (*hi == *lo) {
    *lo -= 1.0;
    *hi += 1.0;
  } else {
    const double pad = 0.05 * (*hi - *lo);
    *lo -= pad;
    *hi += pad;
  }
}

inline std::string svg_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace detail

// Fixed 640x400 canvas, light styling, up to four series with a small legend.
// Pure string assembly; byte-stable for identical inputs.
inline void render_line_plot(const std::string& path, const std::string& title,
                             const std::string& x_label,
                             const std::string& y_label,
                             const std::vector<PlotSeries>& series) {
  if (series.empty()) throw UsageError("no series to plot");
  for (const PlotSeries& s : series)
    if (s.xs.size() != s.ys.size() || s.xs.empty())
      throw UsageError("malformed plot series: " + s.name);
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                   "#9467bd"};
  const double x0 = 64.0, x1 = 614.0, y0 = 352.0, y1 = 44.0;  // y flipped
  double xlo, xhi, ylo, yhi;
  detail::plot_range(series, false, &xlo, &xhi);
  detail::plot_range(series, true, &ylo, &yhi);
  const auto map_x = [&](double x) {
    return x0 + (x - xlo) / (xhi - xlo) * (x1 - x0);
  };
  const auto map_y = [&](double y) {
    return y0 + (y - ylo) / (yhi - ylo) * (y1 - y0);
  };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 640 400\" "
         "font-family=\"sans-serif\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"400\" "
         "fill=\"#ffffff\"/>\n";
  svg += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-size=\"15\" "
         "fill=\"#222222\">" + title + "</text>\n";
  // Axes.
  svg += "<line x1=\"" + detail::svg_coord(x0) + "\" y1=\"" +
         detail::svg_coord(y0) + "\" x2=\"" + detail::svg_coord(x1) +
         "\" y2=\"" + detail::svg_coord(y0) +
         "\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
  svg += "<line x1=\"" + detail::svg_coord(x0) + "\" y1=\"" +
         detail::svg_coord(y0) + "\" x2=\"" + detail::svg_coord(x0) +
         "\" y2=\"" + detail::svg_coord(y1) +
         "\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
  // Ticks and grid.
  for (int t = 0; t <= 4; ++t) {
    const double fx = xlo + (xhi - xlo) * t / 4.0;
    const double px = map_x(fx);
    svg += "<line x1=\"" + detail::svg_coord(px) + "\" y1=\"" +
           detail::svg_coord(y0) + "\" x2=\"" + detail::svg_coord(px) +
           "\" y2=\"" + detail::svg_coord(y0 + 4) +
           "\" stroke=\"#444444\"/>\n";
    svg += "<text x=\"" + detail::svg_coord(px) + "\" y=\"" +
           detail::svg_coord(y0 + 18) +
           "\" text-anchor=\"middle\" font-size=\"11\" fill=\"#444444\">" +
           format_double(fx, 4) + "</text>\n";
    const double fy = ylo + (yhi - ylo) * t / 4.0;
    const double py = map_y(fy);
    svg += "<line x1=\"" + detail::svg_coord(x0) + "\" y1=\"" +
           detail::svg_coord(py) + "\" x2=\"" + detail::svg_coord(x1) +
           "\" y2=\"" + detail::svg_coord(py) +
           "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
    svg += "<text x=\"" + detail::svg_coord(x0 - 6) + "\" y=\"" +
           detail::svg_coord(py + 4) +
           "\" text-anchor=\"end\" font-size=\"11\" fill=\"#444444\">" +
           format_double(fy, 4) + "</text>\n";
  }
  // Axis labels.
  svg += "<text x=\"" + detail::svg_coord((x0 + x1) / 2) +
         "\" y=\"388\" text-anchor=\"middle\" font-size=\"12\" "
         "fill=\"#222222\">" + x_label + "</text>\n";
  svg += "<text x=\"16\" y=\"" + detail::svg_coord((y0 + y1) / 2) +
         "\" text-anchor=\"middle\" font-size=\"12\" fill=\"#222222\" "
         "transform=\"rotate(-90 16 " + detail::svg_coord((y0 + y1) / 2) +
         ")\">" + y_label + "</text>\n";
  // Series.
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % 4];
    svg += "<polyline fill=\"none\" stroke=\"";
    svg += color;
    svg += "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < series[i].xs.size(); ++k) {
      if (k > 0) svg += " ";
      svg += detail::svg_coord(map_x(series[i].xs[k])) + "," +
             detail::svg_coord(map_y(series[i].ys[k]));
    }
    svg += "\"/>\n";
    // Legend entry.
    const double ly = 44.0 + 16.0 * static_cast<double>(i);
    svg += "<line x1=\"470\" y1=\"" + detail::svg_coord(ly) +
           "\" x2=\"494\" y2=\"" + detail::svg_coord(ly) + "\" stroke=\"";
    svg += color;
    svg += "\" stroke-width=\"1.5\"/>\n";
    svg += "<text x=\"500\" y=\"" + detail::svg_coord(ly + 4) +
           "\" font-size=\"11\" fill=\"#222222\">" + series[i].name +
           "</text>\n";
  }
  svg += "</svg>\n";

  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << svg;
  if (!out) throw IoError("short write: " + path);
}

// Renders every plot whose input CSV path is non-empty into out_dir. Missing
// input files surface as I/O errors naming the path.
inline std::vector<std::string> emit_plots(
    const std::string& value_metrics_csv,
    const std::string& finetune_metrics_csv,
    const std::string& state_values_csv, const std::string& out_dir) {
  std::vector<std::string> written;
  std::filesystem::create_directories(out_dir);
  if (!value_metrics_csv.empty()) {
    const auto rows = read_csv(value_metrics_csv, kValueMetricsHeader);
    PlotSeries loss{"mean loss", {}, {}};
    PlotSeries acc{"holdout accuracy", {}, {}};
    for (const auto& r : rows) {
      loss.xs.push_back(r[0]);
      loss.ys.push_back(r[1]);
      acc.xs.push_back(r[0]);
      acc.ys.push_back(r[2]);
    }
    const std::string loss_path = out_dir + "/value_loss.svg";
    render_line_plot(loss_path, "Value model training loss", "epoch",
                     "pairwise loss", {loss});
    written.push_back(loss_path);
    const std::string acc_path = out_dir + "/value_accuracy.svg";
    render_line_plot(acc_path, "Held-out pairwise ordering accuracy", "epoch",
                     "accuracy", {acc});
    written.push_back(acc_path);
  }
  if (!finetune_metrics_csv.empty()) {
    const auto rows = read_csv(finetune_metrics_csv, kFinetuneMetricsHeader);
    PlotSeries rate{"success rate", {}, {}};
    PlotSeries kl{"mean KL", {}, {}};
    for (const auto& r : rows) {
      rate.xs.push_back(r[1]);  // episodes
      rate.ys.push_back(r[2]);
      kl.xs.push_back(r[1]);
      kl.ys.push_back(r[4]);
    }
    const std::string rate_path = out_dir + "/success_rate.svg";
    render_line_plot(rate_path, "Fine-tuning success rate", "episodes",
                     "success rate", {rate});
    written.push_back(rate_path);
    const std::string kl_path = out_dir + "/mean_kl.svg";
    render_line_plot(kl_path, "Policy divergence from reference", "episodes",
                     "mean KL", {kl});
    written.push_back(kl_path);
  }
  if (!state_values_csv.empty()) {
    const auto rows = read_csv(state_values_csv, kStateValuesHeader);
    PlotSeries raw{"value", {}, {}};
    PlotSeries smoothed{"smoothed (window 5)", {}, {}};
    for (const auto& r : rows) {
      raw.xs.push_back(r[0]);
      raw.ys.push_back(r[1]);
      smoothed.xs.push_back(r[0]);
      smoothed.ys.push_back(r[2]);
    }
    const std::string path = out_dir + "/state_value_curve.svg";
    render_line_plot(path, "State values along one episode", "step",
                     "predicted value", {raw, smoothed});
    written.push_back(path);
  }
  if (written.empty())
    throw UsageError("no input csv given; nothing to plot");
  return written;
}

}  // namespace rftf

#endif  // RFTF_PLOTS_HPP_
