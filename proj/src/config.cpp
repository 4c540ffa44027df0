#include "icpguard/config.hpp"

#include <fstream>
#include <set>

#include "icpguard/errors.hpp"

namespace icpguard::config {

using nlohmann::json;

namespace {

// Strict object reader: every key must be consumed exactly by name.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw InvalidInput(where_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  void opt(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw InvalidInput(path(key) + ": " + e.what());
    }
  }

  const json* sub(const std::string& key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw InvalidInput("unknown configuration key '" + path(it.key()) + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json icp_to_json(const IcpConfig& c) {
  return {{"max_iterations", c.max_iterations},
          {"correspondence_max_dist", c.correspondence_max_dist},
          {"convergence_tol", c.convergence_tol},
          {"min_correspondences", c.min_correspondences}};
}

IcpConfig icp_from_json(const json& j, const std::string& where) {
  IcpConfig c;
  Reader r(j, where);
  r.opt("max_iterations", c.max_iterations);
  r.opt("correspondence_max_dist", c.correspondence_max_dist);
  r.opt("convergence_tol", c.convergence_tol);
  r.opt("min_correspondences", c.min_correspondences);
  r.finish();
  return c;
}

std::vector<std::string> case_names(const std::vector<sim::SceneCase>& cases) {
  std::vector<std::string> out;
  for (auto c : cases) out.push_back(sim::to_string(c));
  return out;
}

json scene_to_json(const sim::GenerateConfig& g) {
  const auto& c = g.corruption;
  return {{"mesh_points", g.mesh_points},
          {"n_rays", g.render.n_rays},
          {"jitter_sigma", g.render.jitter_sigma},
          {"near_max_offset", g.near_max_offset},
          {"near_max_yaw", g.near_max_yaw},
          {"badinit_offset_min", g.badinit_offset_min},
          {"badinit_offset_max", g.badinit_offset_max},
          {"badinit_yaw_min", g.badinit_yaw_min},
          {"badinit_yaw_max", g.badinit_yaw_max},
          {"corruption",
           {{"n_patches", c.n_patches},
            {"radius_min", c.radius_min},
            {"radius_max", c.radius_max},
            {"magnitude_min", c.magnitude_min},
            {"magnitude_max", c.magnitude_max},
            {"max_tilt", c.max_tilt}}},
          {"occlusion_min", g.occlusion_min},
          {"occlusion_max", g.occlusion_max},
          {"max_retries", g.max_retries},
          {"visibility_samples", g.visibility_samples}};
}

sim::GenerateConfig scene_from_json(const json& j, const std::string& where) {
  sim::GenerateConfig g;
  Reader r(j, where);
  r.opt("mesh_points", g.mesh_points);
  r.opt("n_rays", g.render.n_rays);
  r.opt("jitter_sigma", g.render.jitter_sigma);
  r.opt("near_max_offset", g.near_max_offset);
  r.opt("near_max_yaw", g.near_max_yaw);
  r.opt("badinit_offset_min", g.badinit_offset_min);
  r.opt("badinit_offset_max", g.badinit_offset_max);
  r.opt("badinit_yaw_min", g.badinit_yaw_min);
  r.opt("badinit_yaw_max", g.badinit_yaw_max);
  if (const json* c = r.sub("corruption")) {
    Reader rc(*c, r.path("corruption"));
    rc.opt("n_patches", g.corruption.n_patches);
    rc.opt("radius_min", g.corruption.radius_min);
    rc.opt("radius_max", g.corruption.radius_max);
    rc.opt("magnitude_min", g.corruption.magnitude_min);
    rc.opt("magnitude_max", g.corruption.magnitude_max);
    rc.opt("max_tilt", g.corruption.max_tilt);
    rc.finish();
  }
  r.opt("occlusion_min", g.occlusion_min);
  r.opt("occlusion_max", g.occlusion_max);
  r.opt("max_retries", g.max_retries);
  r.opt("visibility_samples", g.visibility_samples);
  r.finish();
  return g;
}

}  // namespace

json train_config_to_json(const nnet::TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"epochs", t.epochs},
          {"batch_size", t.batch_size},       {"momentum", t.momentum},
          {"weight_decay", t.weight_decay},   {"grad_clip", t.grad_clip}};
}

nnet::TrainConfig train_config_from_json(const json& j, const std::string& where, nnet::TrainConfig t) {
  Reader r(j, where);
  r.opt("learning_rate", t.learning_rate);
  r.opt("epochs", t.epochs);
  r.opt("batch_size", t.batch_size);
  r.opt("momentum", t.momentum);
  r.opt("weight_decay", t.weight_decay);
  r.opt("grad_clip", t.grad_clip);
  r.finish();
  return t;
}

void RunConfig::validate() const {
  if (jobs < 1) throw InvalidInput("config: jobs must be >= 1");
  if (generate.cases.empty()) throw InvalidInput("config: generate.cases must not be empty");
  if (generate.objects.empty()) throw InvalidInput("config: generate.objects must not be empty");
  for (const auto& o : generate.objects) sim::object_mesh(o);
  generate.scene.validate();
  failure.train.validate();
  attribution.train.validate();
  reconstruction.hyper.validate();
  reconstruction.train.validate();
  const auto& p = pipeline;
  p.icp.validate();
  p.bo_scoring.validate();
  p.bo_bounds.validate();
  p.bo.validate();
  if (!(p.decision_threshold > 0.0 && p.decision_threshold < 1.0)) {
    throw InvalidInput("config: pipeline.decision_threshold must lie in (0, 1)");
  }
  if (!(p.success_threshold > 0.0)) throw InvalidInput("config: pipeline.success_threshold must be > 0");
  if (p.max_mitigation_rounds < 0) throw InvalidInput("config: pipeline.max_mitigation_rounds must be >= 0");
}

pipeline::PipelineConfig RunConfig::pipeline_config() const {
  pipeline::PipelineConfig p;
  p.icp = pipeline.icp;
  p.decision_threshold = pipeline.decision_threshold;
  p.success_threshold = pipeline.success_threshold;
  p.bo_bounds = pipeline.bo_bounds;
  p.bo = pipeline.bo;
  p.bo.seed = seeds.bench;
  p.bo_scoring = pipeline.bo_scoring;
  p.nbv_visibility_samples = pipeline.nbv_visibility_samples;
  p.render = generate.scene.render;
  p.max_mitigation_rounds = pipeline.max_mitigation_rounds;
  return p;
}

json to_json(const RunConfig& c) {
  json j;
  j["format_version"] = kConfigFormatVersion;
  j["paths"] = {{"dataset", c.paths.dataset}, {"models", c.paths.models}, {"reports", c.paths.reports}};
  j["seeds"] = {{"generate", c.seeds.generate}, {"train", c.seeds.train}, {"bench", c.seeds.bench}};
  j["jobs"] = c.jobs;
  j["generate"] = {{"cases", case_names(c.generate.cases)},
                   {"per_case", c.generate.per_case},
                   {"objects", c.generate.objects},
                   {"scene", scene_to_json(c.generate.scene)}};
  j["failure"] = {{"hidden", c.failure.hidden}, {"train", train_config_to_json(c.failure.train)}};
  j["attribution"] = {{"encoder_dims", c.attribution.encoder_dims},
                      {"head_hidden", c.attribution.head_hidden},
                      {"n_points", c.attribution.n_points},
                      {"train", train_config_to_json(c.attribution.train)}};
  const auto& h = c.reconstruction.hyper;
  j["reconstruction"] = {{"I", h.n_centers},      {"J", h.n_proxies},          {"m", h.patch_size},
                         {"K", h.n_interp},       {"d", h.feature_dim},        {"edge_k", h.edge_k},
                         {"hidden", h.hidden},    {"coord_scale", h.coord_scale},
                         {"train", train_config_to_json(c.reconstruction.train)}};
  const auto& p = c.pipeline;
  j["pipeline"] = {{"icp", icp_to_json(p.icp)},
                   {"decision_threshold", p.decision_threshold},
                   {"success_threshold", p.success_threshold},
                   {"bo_bounds", {{"min", p.bo_bounds.lo}, {"max", p.bo_bounds.hi}}},
                   {"bo",
                    {{"n_initial_random", p.bo.n_initial_random},
                     {"n_iterations", p.bo.n_iterations},
                     {"length_scales", p.bo.length_scales},
                     {"noise", p.bo.noise},
                     {"n_acquisition_candidates", p.bo.n_acquisition_candidates},
                     {"xi", p.bo.xi},
                     {"normalize_rmse", p.bo.normalize_rmse},
                     {"refine", p.bo.refine ? icp_to_json(*p.bo.refine) : json()}}},
                   {"bo_scoring", icp_to_json(p.bo_scoring)},
                   {"nbv_visibility_samples", p.nbv_visibility_samples},
                   {"max_mitigation_rounds", p.max_mitigation_rounds}};
  return j;
}

RunConfig from_json(const json& j) {
  RunConfig c;
  Reader r(j, "config");
  int version = -1;
  r.opt("format_version", version);
  if (!r.has("format_version")) throw InvalidInput("config: missing format_version");
  if (version != kConfigFormatVersion) {
    throw InvalidInput("config: unsupported format_version " + std::to_string(version));
  }
  if (const json* s = r.sub("paths")) {
    Reader rs(*s, "config.paths");
    rs.opt("dataset", c.paths.dataset);
    rs.opt("models", c.paths.models);
    rs.opt("reports", c.paths.reports);
    rs.finish();
  }
  if (const json* s = r.sub("seeds")) {
    Reader rs(*s, "config.seeds");
    rs.opt("generate", c.seeds.generate);
    rs.opt("train", c.seeds.train);
    rs.opt("bench", c.seeds.bench);
    rs.finish();
  }
  r.opt("jobs", c.jobs);
  if (const json* s = r.sub("generate")) {
    Reader rs(*s, "config.generate");
    std::vector<std::string> names;
    rs.opt("cases", names);
    if (rs.has("cases")) {
      c.generate.cases.clear();
      for (const auto& n : names) c.generate.cases.push_back(sim::scene_case_from_string(n));
    }
    rs.opt("per_case", c.generate.per_case);
    rs.opt("objects", c.generate.objects);
    if (const json* sc = rs.sub("scene")) c.generate.scene = scene_from_json(*sc, "config.generate.scene");
    rs.finish();
  }
  if (const json* s = r.sub("failure")) {
    Reader rs(*s, "config.failure");
    rs.opt("hidden", c.failure.hidden);
    if (const json* t = rs.sub("train")) {
      c.failure.train = train_config_from_json(*t, "config.failure.train", c.failure.train);
      c.failure.train.loss = nnet::LossKind::BinaryCrossEntropy;
    }
    rs.finish();
  }
  if (const json* s = r.sub("attribution")) {
    Reader rs(*s, "config.attribution");
    rs.opt("encoder_dims", c.attribution.encoder_dims);
    rs.opt("head_hidden", c.attribution.head_hidden);
    rs.opt("n_points", c.attribution.n_points);
    if (const json* t = rs.sub("train")) {
      c.attribution.train = train_config_from_json(*t, "config.attribution.train", c.attribution.train);
      c.attribution.train.loss = nnet::LossKind::CrossEntropy;
    }
    rs.finish();
  }
  if (const json* s = r.sub("reconstruction")) {
    Reader rs(*s, "config.reconstruction");
    auto& h = c.reconstruction.hyper;
    rs.opt("I", h.n_centers);
    rs.opt("J", h.n_proxies);
    rs.opt("m", h.patch_size);
    rs.opt("K", h.n_interp);
    rs.opt("d", h.feature_dim);
    rs.opt("edge_k", h.edge_k);
    rs.opt("hidden", h.hidden);
    rs.opt("coord_scale", h.coord_scale);
    if (const json* t = rs.sub("train")) {
      c.reconstruction.train = train_config_from_json(*t, "config.reconstruction.train", c.reconstruction.train);
      c.reconstruction.train.loss = nnet::LossKind::Chamfer;
    }
    rs.finish();
  }
  if (const json* s = r.sub("pipeline")) {
    Reader rs(*s, "config.pipeline");
    auto& p = c.pipeline;
    if (const json* t = rs.sub("icp")) p.icp = icp_from_json(*t, "config.pipeline.icp");
    rs.opt("decision_threshold", p.decision_threshold);
    rs.opt("success_threshold", p.success_threshold);
    if (const json* b = rs.sub("bo_bounds")) {
      Reader rb(*b, "config.pipeline.bo_bounds");
      rb.opt("min", p.bo_bounds.lo);
      rb.opt("max", p.bo_bounds.hi);
      rb.finish();
    }
    if (const json* b = rs.sub("bo")) {
      Reader rb(*b, "config.pipeline.bo");
      rb.opt("n_initial_random", p.bo.n_initial_random);
      rb.opt("n_iterations", p.bo.n_iterations);
      rb.opt("length_scales", p.bo.length_scales);
      rb.opt("noise", p.bo.noise);
      rb.opt("n_acquisition_candidates", p.bo.n_acquisition_candidates);
      rb.opt("xi", p.bo.xi);
      rb.opt("normalize_rmse", p.bo.normalize_rmse);
      if (const json* rf = rb.sub("refine")) {
        if (rf->is_null()) {
          p.bo.refine.reset();
        } else {
          p.bo.refine = icp_from_json(*rf, "config.pipeline.bo.refine");
        }
      }
      rb.finish();
    }
    if (const json* t = rs.sub("bo_scoring")) p.bo_scoring = icp_from_json(*t, "config.pipeline.bo_scoring");
    rs.opt("nbv_visibility_samples", p.nbv_visibility_samples);
    rs.opt("max_mitigation_rounds", p.max_mitigation_rounds);
    rs.finish();
  }
  r.finish();
  c.validate();
  return c;
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw InvalidInput("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

void save(const std::filesystem::path& path, const RunConfig& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << to_json(c).dump(2) << '\n';
}

}  // namespace icpguard::config
