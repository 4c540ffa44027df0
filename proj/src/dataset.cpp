#include "icpguard/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "icpguard/errors.hpp"
#include "icpguard/io.hpp"
#include "icpguard/rng.hpp"

namespace icpguard::dataset {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::array<const char*, 3> kCloudNames = {"observed", "clean", "mesh"};

const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw FormatError(where + ": missing field '" + key + "'");
  }
  return j.at(key);
}

json point_json(const Point3& p) { return json::array({p.x(), p.y(), p.z()}); }

Point3 point_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw FormatError(where + ": expected 3 numbers");
  return Point3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json viewpoint_json(const sim::Viewpoint& v) {
  return {{"radius", v.radius},
          {"azimuth", v.azimuth},
          {"elevation", v.elevation},
          {"look_at", point_json(v.look_at)}};
}

sim::Viewpoint viewpoint_from(const json& j, const std::string& where) {
  sim::Viewpoint v;
  v.radius = require(j, "radius", where).get<double>();
  v.azimuth = require(j, "azimuth", where).get<double>();
  v.elevation = require(j, "elevation", where).get<double>();
  v.look_at = point_from(require(j, "look_at", where), where + ".look_at");
  return v;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << text;
  if (!out) throw InvalidInput("write failed: " + path.string());
}

}  // namespace

std::string sample_id(sim::SceneCase c, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu", index);
  return sim::to_string(c) + "_" + buf;
}

json transform_to_json(const RigidTransform& t) {
  json r = json::array();
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) r.push_back(t.rotation(i, k));
  }
  return {{"rotation", r}, {"translation", point_json(t.translation)}};
}

RigidTransform transform_from_json(const json& j) {
  const auto& r = require(j, "rotation", "transform");
  if (!r.is_array() || r.size() != 9) throw FormatError("transform: rotation needs 9 numbers");
  RigidTransform t;
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) t.rotation(i, k) = r[3 * i + k].get<double>();
  }
  t.translation = point_from(require(j, "translation", "transform"), "transform.translation");
  if (!t.is_valid(1e-6)) throw FormatError("transform: rotation is not orthonormal");
  return t;
}

json sample_record(const Entry& e, const std::string& cloud_prefix) {
  const auto& s = e.sample;
  json occ = json::array();
  for (const auto& o : s.occluders) {
    occ.push_back({{"center", point_json(o.center)},
                   {"half_extents", point_json(o.half_extents)},
                   {"yaw", o.yaw}});
  }
  json clouds = json::object();
  for (const char* name : kCloudNames) clouds[name] = cloud_prefix + name + ".xyz";
  return {{"id", e.id},
          {"case", sim::to_string(s.label)},
          {"object", s.object},
          {"seed", s.seed},
          {"gt_pose", transform_to_json(s.gt_pose)},
          {"hypothesis", transform_to_json(s.hypothesis)},
          {"camera", viewpoint_json(s.camera)},
          {"occluders", occ},
          {"visible_fraction", s.visible_fraction},
          {"clouds", clouds}};
}

Entry entry_from_record(const json& j, const fs::path& base_dir) {
  try {
    Entry e;
    e.id = require(j, "id", "sample").get<std::string>();
    const std::string where = "sample '" + e.id + "'";
    auto& s = e.sample;
    s.label = sim::scene_case_from_string(require(j, "case", where).get<std::string>());
    s.object = require(j, "object", where).get<std::string>();
    s.seed = require(j, "seed", where).get<std::uint64_t>();
    s.gt_pose = transform_from_json(require(j, "gt_pose", where));
    s.hypothesis = transform_from_json(require(j, "hypothesis", where));
    s.camera = viewpoint_from(require(j, "camera", where), where + ".camera");
    for (const auto& o : require(j, "occluders", where)) {
      sim::OccluderBox box;
      box.center = point_from(require(o, "center", where), where + ".occluders.center");
      box.half_extents = point_from(require(o, "half_extents", where), where + ".occluders.half_extents");
      box.yaw = require(o, "yaw", where).get<double>();
      s.occluders.push_back(box);
    }
    s.visible_fraction = require(j, "visible_fraction", where).get<double>();
    const auto& clouds = require(j, "clouds", where);
    s.observed = read_xyz(base_dir / require(clouds, "observed", where).get<std::string>());
    s.clean = read_xyz(base_dir / require(clouds, "clean", where).get<std::string>());
    s.mesh_cloud = read_xyz(base_dir / require(clouds, "mesh", where).get<std::string>());
    s.mesh_cloud.frame_tag = "mesh";
    return e;
  } catch (const json::exception& ex) {
    throw FormatError(std::string("sample record: ") + ex.what());
  }
}

void write_dataset(const fs::path& dir, const std::vector<Entry>& entries) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InvalidInput("cannot create output directory " + dir.string());
  std::ostringstream manifest;
  for (const auto& e : entries) {
    const fs::path sub = dir / e.id;
    fs::create_directories(sub, ec);
    if (ec) throw InvalidInput("cannot create " + sub.string());
    write_xyz(sub / "observed.xyz", e.sample.observed);
    write_xyz(sub / "clean.xyz", e.sample.clean);
    write_xyz(sub / "mesh.xyz", e.sample.mesh_cloud);
    write_text(sub / "sample.json", sample_record(e, "").dump(2) + "\n");
    manifest << sample_record(e, e.id + "/").dump() << "\n";
  }
  write_text(dir / kManifestName, manifest.str());
}

std::vector<Entry> read_dataset(const fs::path& dir) {
  const fs::path path = dir / kManifestName;
  std::ifstream in(path);
  if (!in) throw InvalidDataset("dataset manifest not found: " + path.string());
  std::vector<Entry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& ex) {
      throw ParseError(path.string(), line_no, ex.what());
    }
    out.push_back(entry_from_record(j, dir));
  }
  if (out.empty()) throw InvalidDataset("dataset manifest is empty: " + path.string());
  return out;
}

sim::SceneSample read_sample(const fs::path& sample_json) {
  std::ifstream in(sample_json);
  if (!in) throw InvalidInput("sample file not found: " + sample_json.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& ex) {
    throw FormatError(sample_json.string() + ": " + ex.what());
  }
  return entry_from_record(j, sample_json.parent_path()).sample;
}

std::vector<sim::SceneSample> samples(const std::vector<Entry>& entries) {
  std::vector<sim::SceneSample> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.sample);
  return out;
}

std::vector<Entry> generate(const GenerateRequest& request, std::size_t jobs) {
  request.scene.validate();
  if (request.cases.empty()) throw InvalidInput("generate: no cases requested");
  if (request.objects.empty()) throw InvalidInput("generate: no objects requested");
  for (const auto& o : request.objects) sim::object_mesh(o);
  if (request.max_seed_attempts < 1) throw InvalidInput("generate: max_seed_attempts must be >= 1");

  struct Slot {
    sim::SceneCase c;
    std::size_t index;
  };
  std::vector<Slot> slots;
  for (auto c : request.cases) {
    for (std::size_t i = 0; i < request.per_case; ++i) slots.push_back({c, i});
  }
  std::vector<Entry> out(slots.size());

  auto make = [&](std::size_t k) {
    const auto [c, i] = slots[k];
    const std::uint64_t slot_seed =
        mix_seed(mix_seed(request.seed, static_cast<std::uint64_t>(c) + 1), i);
    const auto& object = request.objects[i % request.objects.size()];
    for (int a = 0; a < request.max_seed_attempts; ++a) {
      const std::uint64_t seed = a == 0 ? slot_seed : mix_seed(slot_seed, static_cast<std::uint64_t>(a));
      try {
        out[k] = {sample_id(c, i), sim::generate(c, object, seed, request.scene)};
        return;
      } catch (const GenerationFailure&) {
      }
    }
    throw GenerationFailure("generate: slot " + sample_id(c, i) + " failed for " +
                            std::to_string(request.max_seed_attempts) + " seeds");
  };

  const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, slots.size()));
  if (n_threads == 1) {
    for (std::size_t k = 0; k < slots.size(); ++k) make(k);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t k = t; k < slots.size(); k += n_threads) make(k);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::string AuditReport::to_text() const {
  std::ostringstream os;
  for (const auto& [c, n] : counts) os << sim::to_string(c) << ": " << n << "\n";
  os << "badinit offsets checked: " << badinit_checked << "\n";
  for (const auto& v : violations) os << "VIOLATION " << v << "\n";
  os << (ok() ? "audit ok" : "audit failed") << "\n";
  return os.str();
}

AuditReport audit(const std::vector<Entry>& entries, const sim::GenerateConfig& config,
                  std::size_t expected_per_case) {
  AuditReport rep;
  std::array<std::size_t, 4> counts{};
  constexpr double kTol = 1e-9;
  for (const auto& e : entries) {
    const auto& s = e.sample;
    ++counts[static_cast<std::size_t>(s.label)];
    if (s.label != sim::SceneCase::BadInit) continue;
    ++rep.badinit_checked;
    const RigidTransform offset = compose(invert(s.hypothesis), s.gt_pose);
    const double r = std::hypot(offset.translation.x(), offset.translation.y());
    const double yaw = std::abs(to_euler(offset).yaw);
    if (r < config.badinit_offset_min - kTol || r > config.badinit_offset_max + kTol) {
      rep.violations.push_back(e.id + ": offset " + std::to_string(r) + " m outside [" +
                               std::to_string(config.badinit_offset_min) + ", " +
                               std::to_string(config.badinit_offset_max) + "]");
    }
    if (std::abs(offset.translation.z()) > kTol) {
      rep.violations.push_back(e.id + ": offset has a vertical component");
    }
    if (yaw < config.badinit_yaw_min - kTol || yaw > config.badinit_yaw_max + kTol) {
      rep.violations.push_back(e.id + ": yaw " + std::to_string(yaw) + " rad outside [" +
                               std::to_string(config.badinit_yaw_min) + ", " +
                               std::to_string(config.badinit_yaw_max) + "]");
    }
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) continue;
    const auto sc = static_cast<sim::SceneCase>(c);
    rep.counts.emplace_back(sc, counts[c]);
    if (expected_per_case > 0 && counts[c] != expected_per_case) {
      rep.violations.push_back(sim::to_string(sc) + ": " + std::to_string(counts[c]) + " samples, expected " +
                               std::to_string(expected_per_case));
    }
  }
  return rep;
}

}  // namespace icpguard::dataset
