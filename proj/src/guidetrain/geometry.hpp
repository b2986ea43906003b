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

#ifndef GUIDETRAIN_GEOMETRY_HPP_
#define GUIDETRAIN_GEOMETRY_HPP_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace guidetrain::geometry {

using Point2 = Eigen::Vector2d;

// Wraps an angle to (-pi, pi].
double WrapAngle(double angle);

// Planar rigid pose. theta is kept wrapped to (-pi, pi].
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Pose2() = default;
  Pose2(double x_in, double y_in, double theta_in)
      : x(x_in), y(y_in), theta(WrapAngle(theta_in)) {}

  Point2 translation() const { return {x, y}; }
};

// Pose of frame b expressed in a's parent frame.
Pose2 Compose(const Pose2& a, const Pose2& b);
Pose2 Inverse(const Pose2& a);
// Pose b expressed in frame a, i.e. Inverse(a) * b.
Pose2 Between(const Pose2& a, const Pose2& b);

// World point -> frame-local coordinates.
Point2 ToFrame(const Point2& p, const Pose2& frame);
// Frame-local point -> world coordinates.
Point2 FromFrame(const Point2& p, const Pose2& frame);

struct Path {
  std::vector<Point2> points;
  // Spacing the points were produced at, 0 if irregular.
  double resolution = 0.0;

  double Length() const;
  bool empty() const { return points.empty(); }
  size_t size() const { return points.size(); }
};

// Walks the polyline with a compass of radius ds: every emitted point lies on
// the input polyline and consecutive points are exactly ds apart, except the
// final segment which ends on the original endpoint.
Path ResamplePath(const Path& path, double ds);

inline constexpr double kDefaultPathResolution = 0.1;
// Sampling step used for generated goal paths before any resampling.
inline constexpr double kGoalGenerationStep = 0.001;

struct GoalPathSpec {
  double total_length = 4.0;
  int num_curvature_changes = 0;
  double curvature_min = 0.3;
  double curvature_max = 0.9;
  bool mirrored = false;
  uint64_t seed = 0;
};

struct ArcSegment {
  double length = 0.0;
  double curvature = 0.0;
};

// Piecewise constant-curvature path starting at the origin heading +x. The
// first segment is straight, each later segment is an arc whose curvature
// alternates in sign, so a spec with n changes has n curved parts.
std::vector<ArcSegment> GoalPathSegments(const GoalPathSpec& spec);
Path IntegrateArcs(std::span<const ArcSegment> segments, double step);
Path GenerateGoalPath(const GoalPathSpec& spec);

inline constexpr uint64_t kEvaluationFamilySeed = 0x6e7ab1e5;
inline constexpr double kEvaluationCurvature = 0.6;

struct NamedPath {
  std::string id;
  Path path;
};

// The fixed seven-path evaluation set: straight, then 1..3 curvature changes
// each in original and mirrored form.
std::vector<NamedPath> EvaluationGoalFamily(double total_length = 4.0);

void WritePathCsv(std::ostream& out, const Path& path);
Path ReadPathCsv(std::istream& in);

}  // namespace guidetrain::geometry

#endif  // GUIDETRAIN_GEOMETRY_HPP_
