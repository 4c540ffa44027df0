#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "icpguard/geometry.hpp"

namespace icpguard::sim {

enum class SceneCase { Clean, Noise, BadInit, Occlusion };

std::string to_string(SceneCase c);
SceneCase scene_case_from_string(const std::string& s);

// ---- objects --------------------------------------------------------------

/// Canonical frame: base on z = 0, origin under the object.
TriangleMesh make_box(double sx, double sy, double sz);
TriangleMesh make_cylinder(double radius, double height, int segments);
TriangleMesh make_l_bracket();
TriangleMesh make_mug();

/// Library lookup by name: box, cylinder, bracket, mug.
TriangleMesh object_mesh(const std::string& name);
std::vector<std::string> object_names();
/// Shapes without rotational symmetry, used by default generation.
std::vector<std::string> default_objects();

// ---- cameras --------------------------------------------------------------

struct Viewpoint {
  double radius = 0.8;
  double azimuth = 0.0;                  // radians
  double elevation = 0.7853981633974483;  // radians, in (0, pi/2]
  Point3 look_at = Point3::Zero();

  Point3 position() const;
  void validate() const;
};

/// 16 azimuth steps at each elevation, listed elevation-major.
std::vector<Viewpoint> hemisphere_candidates(std::size_t n_azimuth = 16,
                                             const std::vector<double>& elevations = {0.7853981633974483,
                                                                                      1.2217304763960306},
                                             double radius = 0.8);

// ---- scenes and rendering -------------------------------------------------

struct OccluderBox {
  Point3 center = Point3::Zero();
  Eigen::Vector3d half_extents = Eigen::Vector3d::Constant(0.01);
  double yaw = 0.0;

  TriangleMesh mesh() const;
};

struct SceneObject {
  TriangleMesh mesh;  // world frame
  int tag = 0;
};

struct SceneGeometry {
  std::vector<SceneObject> objects;
};

struct TaggedCloud {
  PointCloud cloud;
  std::vector<int> tags;

  std::size_t count(int tag) const;
  PointCloud select(int tag) const;
};

struct Workspace {
  Point3 min = Point3(-0.5, -0.5, -0.25);
  Point3 max = Point3(0.5, 0.5, 0.25);

  bool contains(const Point3& p) const;
};

struct RenderConfig {
  std::size_t n_rays = 160000;        // jittered square grid
  double half_fov = 0.6108652381980153;  // 35 degrees
  double jitter_sigma = 0.001;        // meters, per coordinate
  Workspace workspace;
};

struct RayHit {
  double distance = 0.0;
  int tag = -1;
};

/// Nearest intersection of the ray (origin + s * dir, s > 0) with the scene.
std::optional<RayHit> cast_ray(const SceneGeometry& scene, const Point3& origin,
                               const Eigen::Vector3d& dir);

/// Ray-cast depth render from the viewpoint: nearest hit per ray, tagged by
/// object, jittered, and cropped to the workspace. Deterministic per seed.
TaggedCloud render_visible(const SceneGeometry& scene, const Viewpoint& view,
                           const RenderConfig& config, std::uint64_t seed);

// ---- corruption -----------------------------------------------------------

struct CorruptionSpec {
  std::size_t n_patches = 8;
  double radius_min = 0.03, radius_max = 0.045;       // meters
  double magnitude_min = 0.008, magnitude_max = 0.02;  // meters
  /// When set, each patch moves along the ray from this point through its
  /// anchor (away from the sensor), tilted by up to max_tilt radians.
  /// Otherwise directions are uniform on the sphere.
  std::optional<Point3> view_origin;
  double max_tilt = 0.35;

  void validate() const;
};

/// Anchors are seeded point indices; every point within an anchor's radius
/// moves by that patch's translation (the first matching patch wins). Count
/// and order are preserved.
PointCloud corrupt(const PointCloud& clean, const CorruptionSpec& spec, std::uint64_t seed);

struct PatchRecord {
  std::size_t anchor = 0;
  double radius = 0.0;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};
std::vector<PatchRecord> corruption_patches(const PointCloud& clean, const CorruptionSpec& spec,
                                            std::uint64_t seed);
PointCloud apply_patches(const PointCloud& clean, const std::vector<PatchRecord>& patches);

// ---- scene generation -----------------------------------------------------

struct GenerateConfig {
  RenderConfig render;
  Viewpoint camera;
  std::size_t mesh_points = 1500;
  double near_max_offset = 0.008;          // meters, Clean/Noise/Occlusion
  double near_max_yaw = 0.06981317007977318;  // 4 degrees
  double badinit_offset_min = 0.15, badinit_offset_max = 0.4;
  double badinit_yaw_min = 0.5235987755982988, badinit_yaw_max = 3.141592653589793;
  CorruptionSpec corruption;
  double occlusion_min = 0.1, occlusion_max = 0.5;
  int max_retries = 50;
  std::size_t visibility_samples = 2000;

  void validate() const;
};

struct SceneSample {
  SceneCase label = SceneCase::Clean;
  std::string object;
  std::uint64_t seed = 0;
  PointCloud observed;    // P
  PointCloud clean;       // P_gt, target only
  PointCloud mesh_cloud;  // P_M, canonical frame
  RigidTransform gt_pose;
  RigidTransform hypothesis;
  Viewpoint camera;
  std::vector<OccluderBox> occluders;
  double visible_fraction = 1.0;  // target points seen / seen without occluders
};

inline constexpr int kTargetTag = 0;

SceneGeometry scene_geometry(const std::string& object, const RigidTransform& pose,
                             const std::vector<OccluderBox>& occluders);
SceneGeometry scene_geometry(const SceneSample& sample);

/// Throws GenerationFailure when occluder placement misses the visibility
/// window (or leaves no better candidate view) after max_retries attempts.
SceneSample generate(SceneCase c, const std::string& object, std::uint64_t seed,
                     const GenerateConfig& config = {});

// ---- visibility and next-best-view ----------------------------------------

/// Fraction of front-facing target surface samples whose segment to the
/// camera is not blocked by another object.
double visibility(const SceneGeometry& scene, int target_tag, const Viewpoint& view,
                  std::size_t n_samples, std::uint64_t seed = 0);

struct ViewChoice {
  std::size_t index = 0;
  Viewpoint view;
  std::vector<double> scores;
  TaggedCloud cloud;
};

/// Argmax visibility over candidates (first wins ties), then re-render.
/// Throws NoView when every candidate scores zero.
ViewChoice next_best_view(const SceneGeometry& scene, int target_tag,
                          const std::vector<Viewpoint>& candidates, std::size_t n_samples,
                          const RenderConfig& render, std::uint64_t seed);

}  // namespace icpguard::sim
