#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "icpguard/simscene.hpp"

namespace icpguard::dataset {

/// Layout: DIR/manifest.jsonl with one record per line, and DIR/<id>/ holding
/// sample.json plus observed.xyz, clean.xyz and mesh.xyz. Manifest records
/// reference clouds relative to DIR; sample.json relative to its own folder.
inline constexpr const char* kManifestName = "manifest.jsonl";

struct Entry {
  std::string id;
  sim::SceneSample sample;
};

std::string sample_id(sim::SceneCase c, std::size_t index);

/// Rotation as 9 row-major reals, then 3 translation reals.
nlohmann::json transform_to_json(const RigidTransform& t);
RigidTransform transform_from_json(const nlohmann::json& j);

/// Everything except the clouds, which are referenced as prefix + "<name>.xyz".
nlohmann::json sample_record(const Entry& e, const std::string& cloud_prefix);
/// Reads the referenced clouds relative to base_dir.
Entry entry_from_record(const nlohmann::json& j, const std::filesystem::path& base_dir);

void write_dataset(const std::filesystem::path& dir, const std::vector<Entry>& entries);
/// Throws InvalidDataset when the manifest is missing or empty.
std::vector<Entry> read_dataset(const std::filesystem::path& dir);
sim::SceneSample read_sample(const std::filesystem::path& sample_json);

std::vector<sim::SceneSample> samples(const std::vector<Entry>& entries);

struct GenerateRequest {
  std::vector<sim::SceneCase> cases;
  std::size_t per_case = 20;
  std::vector<std::string> objects = sim::default_objects();
  std::uint64_t seed = 1;
  sim::GenerateConfig scene;
  int max_seed_attempts = 20;
};

/// Slot i of case c uses object objects[i % n] and seed mix_seed(mix_seed(seed, c + 1), i);
/// when the generator rejects it, attempt k uses mix_seed(slot seed, k).
/// Output is case-major and independent of jobs.
std::vector<Entry> generate(const GenerateRequest& request, std::size_t jobs = 1);

struct AuditReport {
  std::vector<std::pair<sim::SceneCase, std::size_t>> counts;
  std::size_t badinit_checked = 0;
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
  std::string to_text() const;
};

/// Recounts per-case buckets and checks every BadInit offset (translation
/// norm and yaw of hypothesis^-1 * gt_pose) against the configured bounds.
AuditReport audit(const std::vector<Entry>& entries, const sim::GenerateConfig& config,
                  std::size_t expected_per_case = 0);

}  // namespace icpguard::dataset
