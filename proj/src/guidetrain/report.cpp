// Copyright 2026 The guidetrain Authors
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

// SVG report. Every figure is drawn from CSV files on disk, never from
// in-memory results, so regenerating from the same CSVs is byte-identical.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>

#include "guidetrain/csv.hpp"
#include "guidetrain/pipeline.hpp"

namespace guidetrain::pipeline {

namespace {

namespace fs = std::filesystem;

constexpr const char* kPolicies[] = {"baseline", "GOnly", "GPlusH"};
constexpr const char* kPolicyColors[] = {"#7f7f7f", "#1f77b4", "#d62728"};
constexpr const char* kMetrics[] = {"completion_time", "frechet", "sal"};
constexpr const char* kMetricLabels[] = {"completion time (s)", "Frechet error (m)",
                                         "spectral arc length"};

std::string Fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  // Avoid "-0.00".
  if (std::string(buf).find_first_not_of("-0.") == std::string::npos) {
    std::snprintf(buf, sizeof(buf), "%.*f", digits, 0.0);
  }
  return buf;
}

std::string Escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += ch;
    }
  }
  return out;
}

// 1-2-5 tick spacing giving roughly `target` intervals.
double TickStep(double span, int target = 5) {
  if (!(span > 0.0)) return 1.0;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (raw <= m * mag) return m * mag;
  }
  return 10.0 * mag;
}

struct Range1 {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void Add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  // Padded, never empty.
  Range1 Padded(double fraction = 0.05) const {
    Range1 r = *this;
    if (!std::isfinite(r.lo)) r = {0.0, 1.0};
    if (r.hi - r.lo < 1e-9) {
      r.lo -= 0.5;
      r.hi += 0.5;
    }
    const double pad = (r.hi - r.lo) * fraction;
    return {r.lo - pad, r.hi + pad};
  }
};

// One plot area inside an SVG document.
class Panel {
 public:
  Panel(double x, double y, double w, double h, Range1 xr, Range1 yr)
      : x_(x), y_(y), w_(w), h_(h), xr_(xr), yr_(yr) {}

  double X(double v) const { return x_ + (v - xr_.lo) / (xr_.hi - xr_.lo) * w_; }
  double Y(double v) const { return y_ + h_ - (v - yr_.lo) / (yr_.hi - yr_.lo) * h_; }

  void Axes(std::ostringstream& out, const std::string& xlabel, const std::string& ylabel,
            bool x_ticks = true) const {
    out << "<rect x=\"" << Fixed(x_) << "\" y=\"" << Fixed(y_) << "\" width=\"" << Fixed(w_)
        << "\" height=\"" << Fixed(h_) << "\" fill=\"none\" stroke=\"#000\"/>\n";
    const double ys = TickStep(yr_.hi - yr_.lo);
    for (double v = std::ceil(yr_.lo / ys) * ys; v <= yr_.hi + 1e-12; v += ys) {
      out << "<line x1=\"" << Fixed(x_ - 4) << "\" y1=\"" << Fixed(Y(v)) << "\" x2=\""
          << Fixed(x_) << "\" y2=\"" << Fixed(Y(v)) << "\" stroke=\"#000\"/>\n";
      out << "<text x=\"" << Fixed(x_ - 6) << "\" y=\"" << Fixed(Y(v) + 4)
          << "\" font-size=\"10\" text-anchor=\"end\">" << Label(v, ys) << "</text>\n";
    }
    if (x_ticks) {
      const double xs = TickStep(xr_.hi - xr_.lo);
      for (double v = std::ceil(xr_.lo / xs) * xs; v <= xr_.hi + 1e-12; v += xs) {
        out << "<line x1=\"" << Fixed(X(v)) << "\" y1=\"" << Fixed(y_ + h_) << "\" x2=\""
            << Fixed(X(v)) << "\" y2=\"" << Fixed(y_ + h_ + 4) << "\" stroke=\"#000\"/>\n";
        out << "<text x=\"" << Fixed(X(v)) << "\" y=\"" << Fixed(y_ + h_ + 16)
            << "\" font-size=\"10\" text-anchor=\"middle\">" << Label(v, xs) << "</text>\n";
      }
    }
    out << "<text x=\"" << Fixed(x_ + w_ / 2) << "\" y=\"" << Fixed(y_ + h_ + 32)
        << "\" font-size=\"12\" text-anchor=\"middle\">" << Escape(xlabel) << "</text>\n";
    out << "<text x=\"" << Fixed(x_ - 44) << "\" y=\"" << Fixed(y_ + h_ / 2)
        << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 "
        << Fixed(x_ - 44) << ' ' << Fixed(y_ + h_ / 2) << ")\">" << Escape(ylabel)
        << "</text>\n";
  }

  void Polyline(std::ostringstream& out, const std::vector<double>& xs,
                const std::vector<double>& ys, const std::string& color, bool dashed,
                double width = 1.5) const {
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << Fixed(width)
        << '"' << (dashed ? " stroke-dasharray=\"6 4\"" : "") << " points=\"";
    bool first = true;
    for (size_t i = 0; i < xs.size(); ++i) {
      if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) continue;
      out << (first ? "" : " ") << Fixed(X(xs[i])) << ',' << Fixed(Y(ys[i]));
      first = false;
    }
    out << "\"/>\n";
  }

  double x() const { return x_; }
  double y() const { return y_; }
  double w() const { return w_; }
  double h() const { return h_; }

 private:
  static std::string Label(double v, double step) {
    const int digits = step >= 1.0 ? 0 : static_cast<int>(std::ceil(-std::log10(step) - 1e-9));
    return Fixed(v, std::min(digits, 6));
  }

  double x_, y_, w_, h_;
  Range1 xr_, yr_;
};

std::string SvgOpen(int width, int height, const std::string& title) {
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">"
      << Escape(title) << "</text>\n";
  return out.str();
}

void Legend(std::ostringstream& out, double x, double y,
            const std::vector<std::pair<std::string, std::string>>& entries,
            const std::vector<bool>& dashed = {}) {
  for (size_t i = 0; i < entries.size(); ++i) {
    const double yy = y + 14.0 * static_cast<double>(i);
    const bool d = i < dashed.size() && dashed[i];
    out << "<line x1=\"" << Fixed(x) << "\" y1=\"" << Fixed(yy) << "\" x2=\"" << Fixed(x + 18)
        << "\" y2=\"" << Fixed(yy) << "\" stroke=\"" << entries[i].second
        << "\" stroke-width=\"2\"" << (d ? " stroke-dasharray=\"6 4\"" : "") << "/>\n";
    out << "<text x=\"" << Fixed(x + 22) << "\" y=\"" << Fixed(yy + 4) << "\" font-size=\"10\">"
        << Escape(entries[i].first) << "</text>\n";
  }
}

double Quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct BoxStats {
  size_t count = 0;
  double q1 = 0, median = 0, q3 = 0, whisker_lo = 0, whisker_hi = 0;
  std::vector<double> outliers;
};

// Tukey box: whiskers reach the extreme samples within 1.5 IQR.
BoxStats Box(const std::vector<double>& v) {
  BoxStats b;
  b.count = v.size();
  if (v.empty()) return b;
  b.q1 = Quantile(v, 0.25);
  b.median = Quantile(v, 0.5);
  b.q3 = Quantile(v, 0.75);
  const double iqr = b.q3 - b.q1;
  b.whisker_lo = b.q1;
  b.whisker_hi = b.q3;
  for (double x : v) {
    if (x < b.q1 - 1.5 * iqr || x > b.q3 + 1.5 * iqr) {
      b.outliers.push_back(x);
    } else {
      b.whisker_lo = std::min(b.whisker_lo, x);
      b.whisker_hi = std::max(b.whisker_hi, x);
    }
  }
  std::sort(b.outliers.begin(), b.outliers.end());
  return b;
}

struct Index {
  std::ostringstream csv;
  Index() { csv << "file,source,description\n"; }
  void Add(const std::string& file, const std::string& source, const std::string& what) {
    csv << file << ',' << source << ',' << what << '\n';
  }
};

void BoxPlots(const std::string& eval_dir, const std::string& out_dir, Index& index) {
  const CsvTable t = CsvTable::Load((fs::path(eval_dir) / "episodes.csv").string());
  const size_t c_policy = t.Column("policy");
  std::ostringstream stats;
  stats << "metric,policy,count,q1,median,q3,whisker_lo,whisker_hi,outliers\n";
  for (int m = 0; m < 3; ++m) {
    const size_t col = t.Column(kMetrics[m]);
    std::vector<BoxStats> boxes;
    Range1 yr;
    for (const char* p : kPolicies) {
      std::vector<double> v;
      for (size_t r = 0; r < t.rows(); ++r) {
        if (t.Text(r, c_policy) == p) v.push_back(t.Number(r, col));
      }
      boxes.push_back(Box(v));
      for (double x : v) yr.Add(x);
    }
    const Panel panel(70, 40, 360, 260, {0.0, 3.0}, yr.Padded());
    std::ostringstream svg;
    svg << SvgOpen(460, 350, kMetricLabels[m]);
    panel.Axes(svg, "policy", kMetricLabels[m], false);
    for (int k = 0; k < 3; ++k) {
      const BoxStats& b = boxes[k];
      stats << kMetrics[m] << ',' << kPolicies[k] << ',' << b.count << ','
            << FormatG9(b.q1) << ',' << FormatG9(b.median) << ',' << FormatG9(b.q3) << ','
            << FormatG9(b.whisker_lo) << ',' << FormatG9(b.whisker_hi) << ','
            << b.outliers.size() << '\n';
      const double cx = panel.X(k + 0.5);
      svg << "<text x=\"" << Fixed(cx) << "\" y=\"" << Fixed(panel.y() + panel.h() + 16)
          << "\" font-size=\"10\" text-anchor=\"middle\">" << kPolicies[k] << "</text>\n";
      if (b.count == 0) continue;
      const double half = 40.0;
      const char* color = kPolicyColors[k];
      svg << "<line x1=\"" << Fixed(cx) << "\" y1=\"" << Fixed(panel.Y(b.whisker_lo))
          << "\" x2=\"" << Fixed(cx) << "\" y2=\"" << Fixed(panel.Y(b.whisker_hi))
          << "\" stroke=\"" << color << "\"/>\n";
      for (double w : {b.whisker_lo, b.whisker_hi}) {
        svg << "<line x1=\"" << Fixed(cx - half / 2) << "\" y1=\"" << Fixed(panel.Y(w))
            << "\" x2=\"" << Fixed(cx + half / 2) << "\" y2=\"" << Fixed(panel.Y(w))
            << "\" stroke=\"" << color << "\"/>\n";
      }
      svg << "<rect x=\"" << Fixed(cx - half) << "\" y=\"" << Fixed(panel.Y(b.q3))
          << "\" width=\"" << Fixed(2 * half) << "\" height=\""
          << Fixed(std::max(0.0, panel.Y(b.q1) - panel.Y(b.q3))) << "\" fill=\"" << color
          << "\" fill-opacity=\"0.3\" stroke=\"" << color << "\"/>\n";
      svg << "<line x1=\"" << Fixed(cx - half) << "\" y1=\"" << Fixed(panel.Y(b.median))
          << "\" x2=\"" << Fixed(cx + half) << "\" y2=\"" << Fixed(panel.Y(b.median))
          << "\" stroke=\"#000\" stroke-width=\"2\"/>\n";
      for (double o : b.outliers) {
        svg << "<circle cx=\"" << Fixed(cx) << "\" cy=\"" << Fixed(panel.Y(o))
            << "\" r=\"2\" fill=\"none\" stroke=\"" << color << "\"/>\n";
      }
    }
    svg << "</svg>\n";
    const std::string file = std::string("box_") + kMetrics[m] + ".svg";
    WriteFile((fs::path(out_dir) / file).string(), svg.str());
    index.Add(file, "evaluation/episodes.csv", std::string("box plot of ") + kMetrics[m]);
  }
  WriteFile((fs::path(out_dir) / "box_stats.csv").string(), stats.str());
  index.Add("box_stats.csv", "evaluation/episodes.csv", "box plot statistics");
}

void Overlays(const std::string& eval_dir, const std::string& out_dir, Index& index) {
  const CsvTable traj = CsvTable::Load((fs::path(eval_dir) / "trajectories.csv").string());
  const size_t c_policy = traj.Column("policy"), c_path = traj.Column("path"),
               c_user = traj.Column("user"), c_trial = traj.Column("trial"),
               c_rx = traj.Column("rx"), c_ry = traj.Column("ry"), c_hx = traj.Column("hx"),
               c_hy = traj.Column("hy");
  // The first user and trial listed represent each path.
  std::vector<std::string> paths;
  std::string user;
  for (size_t r = 0; r < traj.rows(); ++r) {
    if (user.empty()) user = traj.Text(r, c_user);
    const std::string& p = traj.Text(r, c_path);
    if (std::find(paths.begin(), paths.end(), p) == paths.end()) paths.push_back(p);
  }
  for (const std::string& path : paths) {
    const CsvTable goal =
        CsvTable::Load((fs::path(eval_dir) / "goals" / (path + ".csv")).string());
    const size_t gx = goal.Column("x"), gy = goal.Column("y");
    std::vector<double> goal_x, goal_y;
    Range1 xr, yr;
    // Goals are stored densely; every 10th point plus the end is plenty.
    for (size_t r = 0; r < goal.rows(); ++r) {
      if (r % 10 != 0 && r + 1 != goal.rows()) continue;
      goal_x.push_back(goal.Number(r, gx));
      goal_y.push_back(goal.Number(r, gy));
      xr.Add(goal_x.back());
      yr.Add(goal_y.back());
    }
    std::vector<std::vector<double>> rx(3), ry(3), hx(3), hy(3);
    for (size_t r = 0; r < traj.rows(); ++r) {
      if (traj.Text(r, c_path) != path || traj.Text(r, c_user) != user ||
          traj.Text(r, c_trial) != "0") {
        continue;
      }
      for (int k = 0; k < 3; ++k) {
        if (traj.Text(r, c_policy) != kPolicies[k]) continue;
        rx[k].push_back(traj.Number(r, c_rx));
        ry[k].push_back(traj.Number(r, c_ry));
        hx[k].push_back(traj.Number(r, c_hx));
        hy[k].push_back(traj.Number(r, c_hy));
        xr.Add(rx[k].back());
        xr.Add(hx[k].back());
        yr.Add(ry[k].back());
        yr.Add(hy[k].back());
      }
    }
    // Equal axis scale in every panel.
    Range1 xp = xr.Padded(), yp = yr.Padded();
    const double span = std::max(xp.hi - xp.lo, yp.hi - yp.lo);
    const double cx = (xp.lo + xp.hi) / 2, cy = (yp.lo + yp.hi) / 2;
    xp = {cx - span / 2, cx + span / 2};
    yp = {cy - span / 2, cy + span / 2};
    std::ostringstream svg;
    svg << SvgOpen(960, 380, "path " + path + ", user " + user + ", trial 0");
    for (int k = 0; k < 3; ++k) {
      const Panel panel(70 + 310.0 * k, 50, 250, 250, xp, yp);
      panel.Axes(svg, std::string("x (m), ") + kPolicies[k], k == 0 ? "y (m)" : "");
      panel.Polyline(svg, goal_x, goal_y, "#000", true);
      panel.Polyline(svg, rx[k], ry[k], "#1f77b4", false);
      panel.Polyline(svg, hx[k], hy[k], "#d62728", false);
    }
    Legend(svg, 80, 350, {{"goal", "#000"}, {"robot", "#1f77b4"}}, {true, false});
    Legend(svg, 200, 350, {{"human", "#d62728"}});
    svg << "</svg>\n";
    const std::string file = "overlay_" + path + ".svg";
    WriteFile((fs::path(out_dir) / file).string(), svg.str());
    index.Add(file, "evaluation/trajectories.csv", "goal, robot and human paths for " + path);
  }
}

void DecelerationCurves(const std::string& eval_dir, const std::string& out_dir,
                        Index& index) {
  const CsvTable t = CsvTable::Load((fs::path(eval_dir) / "deceleration.csv").string());
  const CsvTable onset = CsvTable::Load((fs::path(eval_dir) / "deceleration_onset.csv").string());
  const size_t c_policy = t.Column("policy"), c_offset = t.Column("offset");
  for (const char* who : {"robot", "human"}) {
    const size_t col = t.Column(std::string(who) + "_speed");
    std::vector<std::vector<double>> xs(3), ys(3);
    Range1 yr;
    yr.Add(0.0);
    for (size_t r = 0; r < t.rows(); ++r) {
      for (int k = 0; k < 3; ++k) {
        if (t.Text(r, c_policy) != kPolicies[k]) continue;
        xs[k].push_back(t.Number(r, c_offset));
        ys[k].push_back(t.Number(r, col));
        yr.Add(ys[k].back());
      }
    }
    const Panel panel(70, 40, 420, 260, {-static_cast<double>(kDecelerationWindow), 0.0},
                      yr.Padded());
    std::ostringstream svg;
    svg << SvgOpen(620, 350, std::string("mean ") + who + " speed before the stop");
    panel.Axes(svg, "steps before stop", std::string(who) + " speed (m/s)");
    std::vector<std::pair<std::string, std::string>> legend;
    for (int k = 0; k < 3; ++k) {
      panel.Polyline(svg, xs[k], ys[k], kPolicyColors[k], false, 2.0);
      legend.push_back({kPolicies[k], kPolicyColors[k]});
    }
    if (std::string(who) == "robot") {
      const size_t oc = onset.Column("robot_onset_index");
      for (size_t r = 0; r < onset.rows(); ++r) {
        for (int k = 0; k < 3; ++k) {
          if (onset.Text(r, 0) != kPolicies[k] || onset.Integer(r, oc) < 0) continue;
          const double x = panel.X(onset.Integer(r, oc) - kDecelerationWindow);
          svg << "<line x1=\"" << Fixed(x) << "\" y1=\"" << Fixed(panel.y()) << "\" x2=\""
              << Fixed(x) << "\" y2=\"" << Fixed(panel.y() + panel.h()) << "\" stroke=\""
              << kPolicyColors[k] << "\" stroke-dasharray=\"2 3\"/>\n";
        }
      }
    }
    Legend(svg, 505, 60, legend);
    svg << "</svg>\n";
    const std::string file = std::string("deceleration_") + who + ".svg";
    WriteFile((fs::path(out_dir) / file).string(), svg.str());
    index.Add(file, "evaluation/deceleration.csv", std::string("final-window ") + who + " speed");
  }
}

void Convergence(const RunContext& ctx, const std::string& out_dir, Index& index) {
  const metrics::RewardKind kinds[] = {metrics::RewardKind::kGOnly,
                                       metrics::RewardKind::kGPlusH};
  for (int k = 0; k < 2; ++k) {
    const std::string source = PolicyDirName(kinds[k]) + "/history.csv";
    const std::string path = ctx.Path(source);
    if (!fs::exists(path)) continue;
    const CsvTable t = CsvTable::Load(path);
    const size_t cg = t.Column("generation"), cb = t.Column("best"), cm = t.Column("mean");
    std::vector<double> g, best, mean;
    Range1 xr, yr;
    for (size_t r = 0; r < t.rows(); ++r) {
      g.push_back(t.Number(r, cg));
      best.push_back(t.Number(r, cb));
      mean.push_back(t.Number(r, cm));
      xr.Add(g.back());
      yr.Add(best.back());
      yr.Add(mean.back());
    }
    const Panel panel(80, 40, 420, 260, xr.Padded(0.0), yr.Padded());
    const std::string name = metrics::RewardKindName(kinds[k]);
    std::ostringstream svg;
    svg << SvgOpen(640, 350, "CMA-ES convergence, " + name);
    panel.Axes(svg, "generation", "cumulative reward");
    panel.Polyline(svg, g, best, kPolicyColors[k + 1], false, 2.0);
    panel.Polyline(svg, g, mean, kPolicyColors[k + 1], true);
    Legend(svg, 515, 60, {{"best so far", kPolicyColors[k + 1]}, {"generation mean",
                                                                  kPolicyColors[k + 1]}},
           {false, true});
    svg << "</svg>\n";
    const std::string file = "convergence_" + name + ".svg";
    WriteFile((fs::path(out_dir) / file).string(), svg.str());
    index.Add(file, source, "reward per generation");
  }
}

}  // namespace

void RunReport(const RunContext& ctx) {
  const std::string eval_dir = ctx.Path("evaluation");
  for (const char* f : {"episodes.csv", "trajectories.csv", "deceleration.csv",
                        "deceleration_onset.csv"}) {
    const std::string p = (fs::path(eval_dir) / f).string();
    if (!fs::exists(p)) Fail(ErrorCode::kMissingArtifact, "missing artifact: " + p);
  }
  const std::string out_dir = ctx.Path("report");
  std::error_code ec;
  fs::remove_all(out_dir, ec);
  fs::create_directories(out_dir, ec);
  if (ec) Fail(ErrorCode::kIo, "cannot create " + out_dir + ": " + ec.message());
  Index index;
  BoxPlots(eval_dir, out_dir, index);
  Overlays(eval_dir, out_dir, index);
  DecelerationCurves(eval_dir, out_dir, index);
  Convergence(ctx, out_dir, index);
  WriteFile((fs::path(out_dir) / "index.csv").string(), index.csv.str());
  ctx.Log("report: written to " + out_dir);
}

}  // namespace guidetrain::pipeline
