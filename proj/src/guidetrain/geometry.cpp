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

#include "guidetrain/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "guidetrain/common.hpp"

namespace guidetrain::geometry {

double WrapAngle(double angle) {
  double r = std::remainder(angle, 2.0 * std::numbers::pi);
  if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
  return r;
}

Pose2 Compose(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.theta);
  const double s = std::sin(a.theta);
  return Pose2(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y,
               a.theta + b.theta);
}

Pose2 Inverse(const Pose2& a) {
  const double c = std::cos(a.theta);
  const double s = std::sin(a.theta);
  return Pose2(-c * a.x - s * a.y, s * a.x - c * a.y, -a.theta);
}

Pose2 Between(const Pose2& a, const Pose2& b) {
  return Compose(Inverse(a), b);
}

Point2 ToFrame(const Point2& p, const Pose2& frame) {
  const double c = std::cos(frame.theta);
  const double s = std::sin(frame.theta);
  const double dx = p.x() - frame.x;
  const double dy = p.y() - frame.y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

Point2 FromFrame(const Point2& p, const Pose2& frame) {
  const double c = std::cos(frame.theta);
  const double s = std::sin(frame.theta);
  return {frame.x + c * p.x() - s * p.y(), frame.y + s * p.x() + c * p.y()};
}

double Path::Length() const {
  double total = 0.0;
  for (size_t i = 1; i < points.size(); ++i) {
    total += (points[i] - points[i - 1]).norm();
  }
  return total;
}

Path ResamplePath(const Path& path, double ds) {
  Require(path.points.size() >= 2, "ResamplePath: path needs at least 2 points");
  Require(ds > 0.0, "ResamplePath: ds must be positive");
  if (path.Length() <= 0.0) {
    Fail(ErrorCode::kInvalidArgument, "ResamplePath: degenerate path");
  }

  const auto& pts = path.points;
  Path out;
  out.resolution = ds;
  out.points.push_back(pts.front());

  Point2 cur = pts.front();
  size_t seg = 0;
  double t0 = 0.0;
  const double ds2 = ds * ds;
  while (seg + 1 < pts.size()) {
    const Point2 a = pts[seg];
    const Point2 e = pts[seg + 1] - a;
    const double ee = e.squaredNorm();
    if (ee == 0.0 || (pts[seg + 1] - cur).squaredNorm() < ds2) {
      ++seg;
      t0 = 0.0;
      continue;
    }
    // Exit root of |a + t e - cur| = ds on this segment.
    const Point2 d = a - cur;
    const double b = d.dot(e);
    const double c = d.squaredNorm() - ds2;
    const double disc = std::max(0.0, b * b - ee * c);
    const double t = std::max(t0, (-b + std::sqrt(disc)) / ee);
    cur = a + t * e;
    out.points.push_back(cur);
    t0 = t;
  }

  const Point2& end = pts.back();
  if ((end - out.points.back()).norm() <= 1e-9 * ds && out.points.size() > 1) {
    out.points.back() = end;
  } else {
    out.points.push_back(end);
  }
  return out;
}

std::vector<ArcSegment> GoalPathSegments(const GoalPathSpec& spec) {
  Require(spec.total_length > 0.0, "GoalPathSpec: total_length must be > 0");
  Require(spec.num_curvature_changes >= 0 && spec.num_curvature_changes <= 3,
          "GoalPathSpec: num_curvature_changes must be in 0..3");
  Require(spec.curvature_min > 0.0 && spec.curvature_max >= spec.curvature_min,
          "GoalPathSpec: invalid curvature range");

  constexpr double kMinSegment = 0.5;
  const int count = spec.num_curvature_changes + 1;
  if (count == 1) return {{spec.total_length, 0.0}};
  Require(spec.total_length >= kMinSegment * count,
          "GoalPathSpec: path too short for the requested segments");

  Rng rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> cuts(count - 1);
  for (double& c : cuts) c = unit(rng);
  std::sort(cuts.begin(), cuts.end());
  const double free_length = spec.total_length - kMinSegment * count;

  std::vector<ArcSegment> segments(count);
  double prev = 0.0;
  for (int i = 0; i < count; ++i) {
    const double next = i + 1 < count ? cuts[i] : 1.0;
    segments[i].length = kMinSegment + free_length * (next - prev);
    prev = next;
  }
  // Pin the sum to total_length exactly.
  double others = 0.0;
  for (int i = 0; i + 1 < count; ++i) others += segments[i].length;
  segments.back().length = spec.total_length - others;

  std::uniform_real_distribution<double> magnitude(spec.curvature_min,
                                                   spec.curvature_max);
  double sign = unit(rng) < 0.5 ? 1.0 : -1.0;
  for (int i = 1; i < count; ++i) {
    const double m = spec.curvature_min == spec.curvature_max
                         ? spec.curvature_min
                         : magnitude(rng);
    segments[i].curvature = sign * m;
    sign = -sign;
  }
  return segments;
}

Path IntegrateArcs(std::span<const ArcSegment> segments, double step) {
  Require(!segments.empty(), "IntegrateArcs: no segments");
  Require(step > 0.0, "IntegrateArcs: step must be positive");

  // Start pose and arc-length offset of every segment.
  std::vector<Pose2> starts;
  std::vector<double> offsets;
  Pose2 pose;
  double total = 0.0;
  for (const ArcSegment& seg : segments) {
    Require(seg.length > 0.0, "IntegrateArcs: segment length must be > 0");
    starts.push_back(pose);
    offsets.push_back(total);
    const double k = seg.curvature;
    const double u = seg.length;
    if (std::abs(k) < 1e-12) {
      pose = Pose2(pose.x + u * std::cos(pose.theta),
                   pose.y + u * std::sin(pose.theta), pose.theta);
    } else {
      const double th = pose.theta + k * u;
      pose = Pose2(pose.x + (std::sin(th) - std::sin(pose.theta)) / k,
                   pose.y - (std::cos(th) - std::cos(pose.theta)) / k, th);
    }
    total += seg.length;
  }

  const auto count = static_cast<int64_t>(std::max(1.0, std::round(total / step)));
  Path out;
  out.resolution = total / static_cast<double>(count);
  out.points.reserve(count + 1);
  size_t seg = 0;
  for (int64_t i = 0; i <= count; ++i) {
    const double s = i == count ? total : total * static_cast<double>(i) /
                                              static_cast<double>(count);
    while (seg + 1 < segments.size() && s > offsets[seg + 1]) ++seg;
    const Pose2& p0 = starts[seg];
    const double u = s - offsets[seg];
    const double k = segments[seg].curvature;
    if (std::abs(k) < 1e-12) {
      out.points.emplace_back(p0.x + u * std::cos(p0.theta),
                              p0.y + u * std::sin(p0.theta));
    } else {
      const double th = p0.theta + k * u;
      out.points.emplace_back(p0.x + (std::sin(th) - std::sin(p0.theta)) / k,
                              p0.y - (std::cos(th) - std::cos(p0.theta)) / k);
    }
  }
  return out;
}

Path GenerateGoalPath(const GoalPathSpec& spec) {
  const auto segments = GoalPathSegments(spec);
  Path path = IntegrateArcs(segments, kGoalGenerationStep);
  if (spec.mirrored) {
    for (Point2& p : path.points) p.y() = -p.y();
  }
  return path;
}

std::vector<NamedPath> EvaluationGoalFamily(double total_length) {
  std::vector<NamedPath> family;
  GoalPathSpec straight;
  straight.total_length = total_length;
  family.push_back({"P0", GenerateGoalPath(straight)});
  for (int changes = 1; changes <= 3; ++changes) {
    GoalPathSpec spec;
    spec.total_length = total_length;
    spec.num_curvature_changes = changes;
    spec.curvature_min = kEvaluationCurvature;
    spec.curvature_max = kEvaluationCurvature;
    spec.seed = kEvaluationFamilySeed + static_cast<uint64_t>(changes);
    family.push_back({"P" + std::to_string(changes), GenerateGoalPath(spec)});
    spec.mirrored = true;
    family.push_back(
        {"P" + std::to_string(changes) + "m", GenerateGoalPath(spec)});
  }
  return family;
}

void WritePathCsv(std::ostream& out, const Path& path) {
  out << "x,y\n";
  for (const Point2& p : path.points) {
    out << FormatG9(p.x()) << ',' << FormatG9(p.y()) << '\n';
  }
}

Path ReadPathCsv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "x,y") {
    Fail(ErrorCode::kIo, "path CSV: expected header 'x,y'");
  }
  Path path;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      Fail(ErrorCode::kIo, "path CSV: malformed row '" + line + "'");
    }
    path.points.emplace_back(std::stod(line.substr(0, comma)),
                             std::stod(line.substr(comma + 1)));
  }
  return path;
}

}  // namespace guidetrain::geometry
