#include "icpguard/simscene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "icpguard/errors.hpp"
#include "icpguard/rng.hpp"

namespace icpguard::sim {

using Eigen::Vector2d;
using Eigen::Vector3d;

namespace {
constexpr std::array<const char*, 4> kCaseNames = {"clean", "noise", "badinit", "occlusion"};
}

std::string to_string(SceneCase c) { return kCaseNames[static_cast<std::size_t>(c)]; }

SceneCase scene_case_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kCaseNames.size(); ++i) {
    if (s == kCaseNames[i]) return static_cast<SceneCase>(i);
  }
  throw InvalidInput("unknown scene case '" + s + "' (expected clean, noise, badinit, occlusion)");
}

// ---- objects --------------------------------------------------------------

namespace {

TriangleMesh box_between(const Point3& lo, const Point3& hi) {
  TriangleMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(),
                            (i & 4) ? hi.z() : lo.z());
  }
  m.faces = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
             {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return m;
}

// Extrudes a counter-clockwise (x, z) profile along y in [-depth/2, depth/2].
TriangleMesh extrude_xz(const std::vector<Vector2d>& profile,
                        const std::vector<std::array<int, 3>>& cap, double depth) {
  TriangleMesh m;
  const int n = static_cast<int>(profile.size());
  for (double y : {-depth / 2, depth / 2}) {
    for (const auto& p : profile) m.vertices.emplace_back(p.x(), y, p.y());
  }
  for (const auto& t : cap) {
    m.faces.push_back({t[0], t[1], t[2]});
    m.faces.push_back({n + t[0], n + t[2], n + t[1]});
  }
  for (int k = 0; k < n; ++k) {
    const int a = k, b = (k + 1) % n;
    m.faces.push_back({a, n + b, b});
    m.faces.push_back({a, n + a, n + b});
  }
  return m;
}

}  // namespace

TriangleMesh make_box(double sx, double sy, double sz) {
  if (!(sx > 0 && sy > 0 && sz > 0)) throw InvalidInput("make_box: sizes must be positive");
  return box_between({-sx / 2, -sy / 2, 0.0}, {sx / 2, sy / 2, sz});
}

TriangleMesh make_cylinder(double radius, double height, int segments) {
  if (!(radius > 0 && height > 0) || segments < 3) throw InvalidInput("make_cylinder: bad parameters");
  TriangleMesh m;
  for (int i = 0; i < segments; ++i) {
    const double a = 2.0 * std::numbers::pi * i / segments;
    m.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), 0.0);
  }
  for (int i = 0; i < segments; ++i) {
    const double a = 2.0 * std::numbers::pi * i / segments;
    m.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), height);
  }
  const int cb = 2 * segments, ct = 2 * segments + 1;
  m.vertices.emplace_back(0.0, 0.0, 0.0);
  m.vertices.emplace_back(0.0, 0.0, height);
  for (int i = 0; i < segments; ++i) {
    const int j = (i + 1) % segments;
    m.faces.push_back({i, j, segments + j});
    m.faces.push_back({i, segments + j, segments + i});
    m.faces.push_back({cb, j, i});
    m.faces.push_back({ct, segments + i, segments + j});
  }
  return m;
}

TriangleMesh make_l_bracket() {
  const std::vector<Vector2d> profile = {{-0.06, 0.0},   {0.06, 0.0},   {0.06, 0.025},
                                         {-0.035, 0.025}, {-0.035, 0.09}, {-0.06, 0.09}};
  return extrude_xz(profile, {{0, 1, 2}, {0, 2, 3}, {0, 3, 5}, {3, 4, 5}}, 0.06);
}

TriangleMesh make_mug() {
  const auto body = make_cylinder(0.04, 0.095, 32);
  const auto handle = box_between({0.039, -0.008, 0.02}, {0.07, 0.008, 0.075});
  return merge_meshes(body, handle);
}

TriangleMesh object_mesh(const std::string& name) {
  if (name == "box") return make_box(0.10, 0.06, 0.04);
  if (name == "cylinder") return make_cylinder(0.035, 0.10, 24);
  if (name == "bracket") return make_l_bracket();
  if (name == "mug") return make_mug();
  throw InvalidInput("unknown object '" + name + "' (expected box, cylinder, bracket, mug)");
}

std::vector<std::string> object_names() { return {"box", "cylinder", "bracket", "mug"}; }

std::vector<std::string> default_objects() { return {"bracket", "mug"}; }

// ---- cameras --------------------------------------------------------------

Point3 Viewpoint::position() const {
  return look_at + radius * Vector3d(std::cos(elevation) * std::cos(azimuth),
                                     std::cos(elevation) * std::sin(azimuth), std::sin(elevation));
}

void Viewpoint::validate() const {
  if (!(radius > 0.0)) throw InvalidInput("Viewpoint: radius must be positive");
  if (!(elevation > 0.0 && elevation <= std::numbers::pi / 2 + 1e-12)) {
    throw InvalidInput("Viewpoint: elevation must lie in (0, pi/2]");
  }
  if (!std::isfinite(azimuth) || !look_at.allFinite()) throw InvalidInput("Viewpoint: non-finite");
}

std::vector<Viewpoint> hemisphere_candidates(std::size_t n_azimuth, const std::vector<double>& elevations,
                                             double radius) {
  std::vector<Viewpoint> out;
  for (double el : elevations) {
    for (std::size_t k = 0; k < n_azimuth; ++k) {
      Viewpoint v;
      v.radius = radius;
      v.elevation = el;
      v.azimuth = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_azimuth);
      v.validate();
      out.push_back(v);
    }
  }
  return out;
}

// ---- rendering ------------------------------------------------------------

TriangleMesh OccluderBox::mesh() const {
  const auto local = box_between(-half_extents, half_extents);
  return transform_mesh(from_euler(center.x(), center.y(), center.z(), 0, 0, yaw), local);
}

std::size_t TaggedCloud::count(int tag) const {
  return static_cast<std::size_t>(std::count(tags.begin(), tags.end(), tag));
}

PointCloud TaggedCloud::select(int tag) const {
  PointCloud out;
  out.frame_tag = cloud.frame_tag;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == tag) out.points.push_back(cloud[i]);
  }
  return out;
}

bool Workspace::contains(const Point3& p) const {
  return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
}

namespace {

struct Aabb {
  Vector3d lo, hi;
};

struct PreparedScene {
  const SceneGeometry* scene;
  std::vector<Aabb> boxes;

  explicit PreparedScene(const SceneGeometry& s) : scene(&s) {
    for (const auto& obj : s.objects) {
      Aabb b{Vector3d::Constant(std::numeric_limits<double>::infinity()),
             Vector3d::Constant(-std::numeric_limits<double>::infinity())};
      for (const auto& v : obj.mesh.vertices) {
        b.lo = b.lo.cwiseMin(v);
        b.hi = b.hi.cwiseMax(v);
      }
      boxes.push_back(b);
    }
  }
};

bool ray_hits_box(const Aabb& b, const Point3& o, const Vector3d& inv_dir, double t_max) {
  double t0 = 0.0, t1 = t_max;
  for (int a = 0; a < 3; ++a) {
    double tn = (b.lo[a] - o[a]) * inv_dir[a];
    double tf = (b.hi[a] - o[a]) * inv_dir[a];
    if (std::isnan(tn) || std::isnan(tf)) {
      // Ray parallel to the slab and starting on its boundary plane.
      if (o[a] < b.lo[a] || o[a] > b.hi[a]) return false;
      continue;
    }
    if (tn > tf) std::swap(tn, tf);
    t0 = std::max(t0, tn);
    t1 = std::min(t1, tf);
    if (t0 > t1) return false;
  }
  return true;
}

// Moller-Trumbore; returns the ray parameter of the hit, if any.
std::optional<double> ray_triangle(const Point3& o, const Vector3d& d, const Point3& a,
                                   const Point3& b, const Point3& c) {
  constexpr double kEps = 1e-14;
  const Vector3d e1 = b - a, e2 = c - a;
  const Vector3d p = d.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < kEps) return std::nullopt;
  const double inv = 1.0 / det;
  const Vector3d s = o - a;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vector3d q = s.cross(e1);
  const double v = d.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(q) * inv;
  if (t <= 1e-12) return std::nullopt;
  return t;
}

// Nearest hit with parameter below t_max, skipping objects with skip_tag.
std::optional<RayHit> cast(const PreparedScene& ps, const Point3& o, const Vector3d& d, double t_max,
                           int skip_tag = std::numeric_limits<int>::min()) {
  const Vector3d inv = d.cwiseInverse();
  std::optional<RayHit> best;
  double best_t = t_max;
  for (std::size_t k = 0; k < ps.scene->objects.size(); ++k) {
    const auto& obj = ps.scene->objects[k];
    if (obj.tag == skip_tag) continue;
    if (!ray_hits_box(ps.boxes[k], o, inv, best_t)) continue;
    const auto& V = obj.mesh.vertices;
    for (const auto& f : obj.mesh.faces) {
      const auto t = ray_triangle(o, d, V[static_cast<std::size_t>(f[0])],
                                  V[static_cast<std::size_t>(f[1])], V[static_cast<std::size_t>(f[2])]);
      if (t && *t < best_t) {
        best_t = *t;
        best = RayHit{*t, obj.tag};
      }
    }
  }
  return best;
}

struct CameraFrame {
  Point3 origin;
  Vector3d forward, right, up;
};

CameraFrame camera_frame(const Viewpoint& view) {
  view.validate();
  CameraFrame f;
  f.origin = view.position();
  f.forward = (view.look_at - f.origin).normalized();
  Vector3d right = f.forward.cross(Vector3d::UnitZ());
  if (right.norm() < 1e-9) right = Vector3d::UnitY().cross(f.forward);
  f.right = right.normalized();
  f.up = f.right.cross(f.forward);
  return f;
}

}  // namespace

std::optional<RayHit> cast_ray(const SceneGeometry& scene, const Point3& origin, const Vector3d& dir) {
  if (!(dir.norm() > 0.0)) throw InvalidInput("cast_ray: zero direction");
  const PreparedScene ps(scene);
  const Vector3d d = dir.normalized();
  return cast(ps, origin, d, std::numeric_limits<double>::infinity());
}

TaggedCloud render_visible(const SceneGeometry& scene, const Viewpoint& view,
                           const RenderConfig& config, std::uint64_t seed) {
  if (config.n_rays == 0) throw InvalidInput("render_visible: n_rays must be positive");
  if (!(config.half_fov > 0.0 && config.half_fov < std::numbers::pi / 2)) {
    throw InvalidInput("render_visible: half_fov must lie in (0, pi/2)");
  }
  const CameraFrame cam = camera_frame(view);
  const PreparedScene ps(scene);
  const auto g = static_cast<std::size_t>(
      std::max(1.0, std::round(std::sqrt(static_cast<double>(config.n_rays)))));
  const double span = std::tan(config.half_fov);
  Rng rng(seed);
  TaggedCloud out;
  for (std::size_t i = 0; i < g; ++i) {
    for (std::size_t j = 0; j < g; ++j) {
      const double s = (static_cast<double>(i) + rng.uniform()) / static_cast<double>(g);
      const double t = (static_cast<double>(j) + rng.uniform()) / static_cast<double>(g);
      const Vector3d d =
          (cam.forward + (2 * s - 1) * span * cam.right + (2 * t - 1) * span * cam.up).normalized();
      const auto hit = cast(ps, cam.origin, d, std::numeric_limits<double>::infinity());
      if (!hit) continue;
      Point3 p = cam.origin + hit->distance * d;
      if (config.jitter_sigma > 0.0) {
        p += Vector3d(rng.normal(0.0, config.jitter_sigma), rng.normal(0.0, config.jitter_sigma),
                      rng.normal(0.0, config.jitter_sigma));
      }
      if (!config.workspace.contains(p)) continue;
      out.cloud.points.push_back(p);
      out.tags.push_back(hit->tag);
    }
  }
  return out;
}

// ---- corruption -----------------------------------------------------------

void CorruptionSpec::validate() const {
  if (!(radius_min > 0.0 && radius_min <= radius_max)) {
    throw InvalidInput("CorruptionSpec: radius range must be positive and ordered");
  }
  if (!(magnitude_min >= 0.0 && magnitude_min <= magnitude_max)) {
    throw InvalidInput("CorruptionSpec: magnitude range must be non-negative and ordered");
  }
  if (!(max_tilt >= 0.0 && max_tilt < std::numbers::pi / 2)) {
    throw InvalidInput("CorruptionSpec: max_tilt must lie in [0, pi/2)");
  }
}

namespace {

Vector3d random_unit(Rng& rng) {
  Vector3d v;
  do {
    v = Vector3d(rng.normal(), rng.normal(), rng.normal());
  } while (v.norm() < 1e-12);
  return v.normalized();
}

}  // namespace

std::vector<PatchRecord> corruption_patches(const PointCloud& clean, const CorruptionSpec& spec,
                                            std::uint64_t seed) {
  spec.validate();
  if (clean.empty()) throw InvalidInput("corrupt: empty cloud");
  Rng rng(seed);
  std::vector<PatchRecord> patches;
  for (std::size_t k = 0; k < spec.n_patches; ++k) {
    PatchRecord p;
    p.anchor = rng.index(clean.size());
    p.radius = rng.uniform(spec.radius_min, spec.radius_max);
    const double magnitude = rng.uniform(spec.magnitude_min, spec.magnitude_max);
    Vector3d dir;
    if (spec.view_origin) {
      Vector3d ray = clean[p.anchor] - *spec.view_origin;
      if (ray.norm() < 1e-12) ray = Vector3d::UnitZ();
      ray.normalize();
      Vector3d perp = random_unit(rng);
      perp -= perp.dot(ray) * ray;
      if (perp.norm() < 1e-9) perp = ray.unitOrthogonal();
      perp.normalize();
      const double tilt = rng.uniform(0.0, spec.max_tilt);
      dir = std::cos(tilt) * ray + std::sin(tilt) * perp;
    } else {
      dir = random_unit(rng);
    }
    p.translation = magnitude * dir;
    patches.push_back(p);
  }
  return patches;
}

PointCloud apply_patches(const PointCloud& clean, const std::vector<PatchRecord>& patches) {
  PointCloud out = clean;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    for (const auto& p : patches) {
      if ((clean[i] - clean[p.anchor]).norm() <= p.radius) {
        out.points[i] += p.translation;
        break;
      }
    }
  }
  return out;
}

PointCloud corrupt(const PointCloud& clean, const CorruptionSpec& spec, std::uint64_t seed) {
  return apply_patches(clean, corruption_patches(clean, spec, seed));
}

// ---- visibility -----------------------------------------------------------

double visibility(const SceneGeometry& scene, int target_tag, const Viewpoint& view,
                  std::size_t n_samples, std::uint64_t seed) {
  if (n_samples == 0) throw InvalidInput("visibility: n_samples must be positive");
  const SceneObject* target = nullptr;
  for (const auto& obj : scene.objects) {
    if (obj.tag == target_tag) target = &obj;
  }
  if (!target) throw InvalidInput("visibility: no object with the target tag");
  const auto& mesh = target->mesh;
  std::vector<double> cdf;
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    total += mesh.triangle_area(f);
    cdf.push_back(total);
  }
  if (!(total > 0.0)) throw InvalidInput("visibility: target has no surface");

  const PreparedScene ps(scene);
  const Point3 cam = view.position();
  Rng rng(seed);
  std::size_t facing = 0, seen = 0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const double r = rng.uniform() * total;
    std::size_t f = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
    f = std::min(f, mesh.faces.size() - 1);
    const double su = std::sqrt(rng.uniform());
    const double v = rng.uniform();
    const auto& F = mesh.faces[f];
    const Point3& A = mesh.vertices[static_cast<std::size_t>(F[0])];
    const Point3& B = mesh.vertices[static_cast<std::size_t>(F[1])];
    const Point3& C = mesh.vertices[static_cast<std::size_t>(F[2])];
    const Point3 p = (1 - su) * A + su * (1 - v) * B + su * v * C;
    const Vector3d to_cam = cam - p;
    if (mesh.face_normal(f).dot(to_cam) <= 0.0) continue;
    ++facing;
    const double len = to_cam.norm();
    if (!cast(ps, p, to_cam / len, len, target_tag)) ++seen;
  }
  return facing == 0 ? 0.0 : static_cast<double>(seen) / static_cast<double>(facing);
}

ViewChoice next_best_view(const SceneGeometry& scene, int target_tag,
                          const std::vector<Viewpoint>& candidates, std::size_t n_samples,
                          const RenderConfig& render, std::uint64_t seed) {
  if (candidates.empty()) throw InvalidInput("next_best_view: no candidate viewpoints");
  ViewChoice choice;
  double best = -1.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double v = visibility(scene, target_tag, candidates[i], n_samples, seed);
    choice.scores.push_back(v);
    if (v > best) {
      best = v;
      choice.index = i;
    }
  }
  if (!(best > 0.0)) throw NoView("next_best_view: target invisible from every candidate");
  choice.view = candidates[choice.index];
  choice.cloud = render_visible(scene, choice.view, render, seed);
  return choice;
}

// ---- generation -----------------------------------------------------------

void GenerateConfig::validate() const {
  camera.validate();
  corruption.validate();
  if (mesh_points == 0) throw InvalidInput("GenerateConfig: mesh_points must be positive");
  if (!(near_max_offset >= 0.0 && near_max_offset < 0.01)) {
    throw InvalidInput("GenerateConfig: near_max_offset must lie in [0, 0.01)");
  }
  if (!(near_max_yaw >= 0.0 && near_max_yaw < 5.0 * std::numbers::pi / 180.0)) {
    throw InvalidInput("GenerateConfig: near_max_yaw must lie in [0, 5 degrees)");
  }
  if (!(badinit_offset_min > 0.0 && badinit_offset_min <= badinit_offset_max)) {
    throw InvalidInput("GenerateConfig: bad-init offset range must be positive and ordered");
  }
  if (!(badinit_yaw_min >= 0.0 && badinit_yaw_min <= badinit_yaw_max &&
        badinit_yaw_max <= std::numbers::pi)) {
    throw InvalidInput("GenerateConfig: bad-init yaw range must be ordered within [0, pi]");
  }
  if (!(occlusion_min > 0.0 && occlusion_min < occlusion_max && occlusion_max < 1.0)) {
    throw InvalidInput("GenerateConfig: occlusion window must satisfy 0 < min < max < 1");
  }
  if (max_retries < 1) throw InvalidInput("GenerateConfig: max_retries must be at least 1");
}

SceneGeometry scene_geometry(const std::string& object, const RigidTransform& pose,
                             const std::vector<OccluderBox>& occluders) {
  SceneGeometry g;
  g.objects.push_back({transform_mesh(pose, object_mesh(object)), kTargetTag});
  for (std::size_t i = 0; i < occluders.size(); ++i) {
    g.objects.push_back({occluders[i].mesh(), static_cast<int>(i) + 1});
  }
  return g;
}

SceneGeometry scene_geometry(const SceneSample& sample) {
  return scene_geometry(sample.object, sample.gt_pose, sample.occluders);
}

namespace {

RigidTransform near_pose(Rng& rng, const GenerateConfig& cfg) {
  const double r = cfg.near_max_offset * std::sqrt(rng.uniform());
  const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double yaw = rng.uniform(-cfg.near_max_yaw, cfg.near_max_yaw);
  return from_euler(r * std::cos(a), r * std::sin(a), 0.0, 0.0, 0.0, yaw);
}

RigidTransform far_pose(Rng& rng, const GenerateConfig& cfg) {
  const double r = rng.uniform(cfg.badinit_offset_min, cfg.badinit_offset_max);
  const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
  double yaw = rng.uniform(cfg.badinit_yaw_min, cfg.badinit_yaw_max);
  if (rng.uniform() < 0.5) yaw = -yaw;
  return from_euler(r * std::cos(a), r * std::sin(a), 0.0, 0.0, 0.0, yaw);
}

OccluderBox sample_occluder(Rng& rng, const SceneGeometry& target_only, const Point3& camera) {
  Vector3d lo = Vector3d::Constant(std::numeric_limits<double>::infinity());
  Vector3d hi = -lo;
  for (const auto& v : target_only.objects.front().mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const Point3 center = 0.5 * (lo + hi);
  Vector3d toward = camera - center;
  toward.z() = 0.0;
  if (toward.norm() < 1e-9) toward = Vector3d::UnitX();
  toward.normalize();
  const Vector3d side = Vector3d::UnitZ().cross(toward);

  const double dist = rng.uniform(0.12, 0.2);
  const double lateral = rng.uniform(-0.06, 0.06);
  const double width = rng.uniform(0.06, 0.16);
  const double height = rng.uniform(0.08, 0.22);
  OccluderBox box;
  box.half_extents = Vector3d(0.005, width / 2, height / 2);
  box.center = center + dist * toward + lateral * side;
  box.center.z() = height / 2;
  box.yaw = std::atan2(toward.y(), toward.x());
  return box;
}

}  // namespace

SceneSample generate(SceneCase c, const std::string& object, std::uint64_t seed,
                     const GenerateConfig& config) {
  config.validate();
  SceneSample s;
  s.label = c;
  s.object = object;
  s.seed = seed;
  s.camera = config.camera;
  s.hypothesis = RigidTransform::identity();
  const auto mesh = object_mesh(object);
  s.mesh_cloud = sample_mesh(mesh, config.mesh_points, mix_seed(seed, 1));
  s.mesh_cloud.frame_tag = "mesh";

  Rng rng(mix_seed(seed, 2 + static_cast<std::uint64_t>(c)));
  const RigidTransform offset = c == SceneCase::BadInit ? far_pose(rng, config) : near_pose(rng, config);
  s.gt_pose = compose(s.hypothesis, offset);

  const std::uint64_t render_seed = mix_seed(seed, 10);
  const auto target_only = scene_geometry(object, s.gt_pose, {});
  const auto clean_render = render_visible(target_only, s.camera, config.render, render_seed);
  s.clean = clean_render.select(kTargetTag);
  if (s.clean.size() < 3) throw GenerationFailure("generate: target not visible from the camera");

  switch (c) {
    case SceneCase::Clean:
    case SceneCase::BadInit:
      s.observed = s.clean;
      break;
    case SceneCase::Noise: {
      auto spec = config.corruption;
      spec.view_origin = s.camera.position();
      s.observed = corrupt(s.clean, spec, mix_seed(seed, 11));
      break;
    }
    case SceneCase::Occlusion: {
      const auto candidates = hemisphere_candidates();
      bool placed = false;
      for (int attempt = 0; attempt < config.max_retries && !placed; ++attempt) {
        const auto box = sample_occluder(rng, target_only, s.camera.position());
        const auto geom = scene_geometry(object, s.gt_pose, {box});
        const auto render = render_visible(geom, s.camera, config.render, render_seed);
        const double fraction =
            static_cast<double>(render.count(kTargetTag)) / static_cast<double>(s.clean.size());
        if (fraction < config.occlusion_min || fraction > config.occlusion_max) continue;
        const std::uint64_t vis_seed = mix_seed(seed, 12);
        const double here = visibility(geom, kTargetTag, s.camera, config.visibility_samples, vis_seed);
        bool headroom = false;
        for (const auto& v : candidates) {
          if (visibility(geom, kTargetTag, v, config.visibility_samples, vis_seed) > here) {
            headroom = true;
            break;
          }
        }
        if (!headroom) continue;
        s.occluders = {box};
        s.observed = render.cloud;
        s.visible_fraction = fraction;
        placed = true;
      }
      if (!placed) {
        throw GenerationFailure("generate: occluder placement missed the visibility window after " +
                                std::to_string(config.max_retries) + " attempts (seed " +
                                std::to_string(seed) + ")");
      }
      break;
    }
  }
  return s;
}

}  // namespace icpguard::sim
