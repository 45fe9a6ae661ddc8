#include "scdm/errors.hpp"
#include "scdm/pipeline.hpp"

#include <cstdio>
#include <set>

namespace scdm::pipeline {

namespace {

// Reads fields of one JSON object and rejects whatever it did not read.
class Section {
 public:
  Section(const io::Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected a JSON object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return j_.contains(key); }

  const io::Json* raw(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    const io::Json* v = raw(key);
    if (v == nullptr) return;
    try {
      out = v->get<T>();
    } catch (const io::Json::exception& e) {
      throw ConfigError(key_path(key), std::string("wrong type: ") + e.what());
    }
  }

  template <typename F>
  void read_with(const std::string& key, F&& convert) {
    const io::Json* v = raw(key);
    if (v == nullptr) return;
    try {
      convert(*v);
    } catch (const ConfigError&) {
      throw;
    } catch (const io::Json::exception& e) {
      throw ConfigError(key_path(key), std::string("wrong type: ") + e.what());
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(key_path(it.key()), "unknown key");
    }
  }

 private:
  const io::Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Enum parsers throw ConfigError with their own key; rewrap with the path.
template <typename F>
auto parse_enum(const std::string& key_path, const io::Json& v, F&& from_string) {
  const auto text = v.get<std::string>();
  try {
    return from_string(text);
  } catch (const ConfigError&) {
    throw ConfigError(key_path, "unknown value '" + text + "'");
  }
}

synth::AugmentationSpec parse_augmentation(const io::Json& j, const std::string& path) {
  Section s(j, path);
  synth::AugmentationSpec a;
  s.read("jitter_sigma", a.jitter_sigma);
  s.read("nuisance_resample", a.nuisance_resample);
  s.read("rotation_max_radians", a.rotation_max_radians);
  s.finish();
  return a;
}

void parse_ssl(const io::Json& j, SslSection& out) {
  if (j.is_string()) {
    if (j.get<std::string>() != "skip") throw ConfigError("ssl", "expected an object or \"skip\"");
    out.skip = true;
    return;
  }
  Section s(j, "ssl");
  auto& c = out.contrastive;
  s.read("skip", out.skip);
  s.read_with("mode", [&](const io::Json& v) { c.mode = parse_enum("ssl.mode", v, ssl::contrastive_mode_from_string); });
  s.read("feature_dim", c.feature_dim);
  s.read("hidden", c.hidden);
  s.read("temperature", c.temperature);
  s.read("queue_size", c.queue_size);
  s.read("encoder_momentum", c.encoder_momentum);
  s.read("epochs", c.epochs);
  s.read("batch_size", c.batch_size);
  s.read("lr", c.lr);
  s.read("sgd_momentum", c.sgd_momentum);
  s.read("weight_decay", c.weight_decay);
  s.read_with("augmentation", [&](const io::Json& v) { out.augmentation = parse_augmentation(v, "ssl.augmentation"); });
  s.finish();
}

void parse_cluster(const io::Json& j, ClusterSection& c) {
  Section s(j, "cluster");
  s.read_with("k", [&](const io::Json& v) {
    c.k = v.is_array() ? v.get<std::vector<std::size_t>>() : std::vector<std::size_t>{v.get<std::size_t>()};
  });
  s.read_with("source", [&](const io::Json& v) { c.source = parse_enum("cluster.source", v, cluster_source_from_string); });
  s.read("n_init", c.n_init);
  s.read("max_iters", c.max_iters);
  s.read("tol", c.tol);
  s.read_with("prior", [&](const io::Json& v) {
    const auto p = v.get<std::string>();
    if (p == "empirical") c.prior = PriorKind::empirical;
    else if (p == "uniform") c.prior = PriorKind::uniform;
    else throw ConfigError("cluster.prior", "unknown prior '" + p + "'");
  });
  s.finish();
}

diffusion::SamplerConfig parse_sampler(const io::Json& j, const std::string& path) {
  Section s(j, path);
  diffusion::SamplerConfig c;
  s.read_with("kind", [&](const io::Json& v) { c.kind = parse_enum(path + ".kind", v, diffusion::sampler_kind_from_string); });
  s.read("order", c.order);
  s.read("steps", c.steps);
  s.read("t_end", c.t_end);
  s.finish();
  return c;
}

void parse_diffusion(const io::Json& j, DiffusionSection& d) {
  Section s(j, "diffusion");
  s.read("hidden", d.hidden);
  s.read("embed_dim", d.embed_dim);
  s.read("n_frequencies", d.n_frequencies);
  s.read("beta_min", d.schedule.beta_min);
  s.read("beta_max", d.schedule.beta_max);
  auto& t = d.train;
  s.read("steps", t.steps);
  s.read("batch_size", t.batch_size);
  s.read("lr", t.lr);
  s.read("adam_beta1", t.adam_beta1);
  s.read("adam_beta2", t.adam_beta2);
  s.read("adam_eps", t.adam_eps);
  s.read("t_min_train", t.t_min_train);
  s.read("eval_every", t.eval_every);
  s.finish();
}

void parse_eval(const io::Json& j, EvalSection& e) {
  Section s(j, "eval");
  s.read("n_samples", e.n_samples);
  s.read("checkpoint_samples", e.checkpoint_samples);
  s.read_with("checkpoint_sampler", [&](const io::Json& v) { e.checkpoint_sampler = parse_sampler(v, "eval.checkpoint_sampler"); });
  s.read("mmd", e.mmd);
  s.read("mmd_bandwidth", e.mmd_bandwidth);
  s.read("mmd_max_points", e.mmd_max_points);
  s.read("fd_feat", e.fd_feat);
  s.finish();
}

AblationSection parse_ablation(const io::Json& j) {
  Section s(j, "ablation");
  AblationSection a;
  s.read_with("axis", [&](const io::Json& v) { a.axis = parse_enum("ablation.axis", v, ablation_axis_from_string); });
  s.read_with("values", [&](const io::Json& v) {
    a.values.clear();
    for (const auto& e : v) a.values.push_back(e.is_string() ? e.get<std::string>() : e.dump());
  });
  s.read("seeds", a.seeds);
  s.finish();
  return a;
}

}  // namespace

std::string to_string(ClusterSource s) { return s == ClusterSource::encoder ? "encoder" : "raw"; }

ClusterSource cluster_source_from_string(const std::string& s) {
  if (s == "encoder") return ClusterSource::encoder;
  if (s == "raw") return ClusterSource::raw;
  throw ConfigError("cluster.source", "unknown cluster source '" + s + "'");
}

std::string to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::k_sweep: return "K_sweep";
    case AblationAxis::cluster_source: return "cluster_source";
    case AblationAxis::ssl_method: return "ssl_method";
  }
  return "?";
}

AblationAxis ablation_axis_from_string(const std::string& s) {
  if (s == "K_sweep") return AblationAxis::k_sweep;
  if (s == "cluster_source") return AblationAxis::cluster_source;
  if (s == "ssl_method") return AblationAxis::ssl_method;
  throw ConfigError("ablation.axis", "unknown ablation axis '" + s + "'");
}

RunConfig parse_run_config(const io::Json& j) {
  RunConfig cfg;
  Section s(j, "");
  s.read("run_id", cfg.run_id);
  s.read("seed", cfg.seed);
  s.read_with("mode", [&](const io::Json& v) { cfg.mode = parse_enum("mode", v, diffusion::train_mode_from_string); });
  s.read_with("dataset", [&](const io::Json& v) {
    Section d(v, "dataset");
    d.read("name", cfg.dataset.name);
    d.read("n", cfg.dataset.n);
    d.read("n_reference", cfg.dataset.n_reference);
    d.finish();
  });
  s.read_with("ssl", [&](const io::Json& v) { parse_ssl(v, cfg.ssl); });
  s.read_with("cluster", [&](const io::Json& v) { parse_cluster(v, cfg.cluster); });
  s.read_with("diffusion", [&](const io::Json& v) { parse_diffusion(v, cfg.diffusion); });
  s.read_with("samplers", [&](const io::Json& v) {
    if (!v.is_array()) throw ConfigError("samplers", "expected an array");
    cfg.samplers.clear();
    for (std::size_t i = 0; i < v.size(); ++i) cfg.samplers.push_back(parse_sampler(v[i], "samplers[" + std::to_string(i) + "]"));
  });
  s.read_with("eval", [&](const io::Json& v) { parse_eval(v, cfg.eval); });
  s.read_with("ablation", [&](const io::Json& v) { cfg.ablation = parse_ablation(v); });
  s.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  io::Json j;
  try {
    j = io::read_json(path);
  } catch (const io::Json::exception& e) {
    throw ConfigError("<file>", path.string() + ": " + e.what());
  } catch (const IoError& e) {
    throw ConfigError("<file>", e.what());
  }
  return parse_run_config(j);
}

ClusterSource RunConfig::effective_cluster_source() const {
  return ssl.skip ? ClusterSource::raw : cluster.source;
}

bool RunConfig::runs_clustering() const { return mode == diffusion::TrainMode::cluster_conditional; }

bool RunConfig::runs_ssl() const { return runs_clustering() && effective_cluster_source() == ClusterSource::encoder; }

std::string RunConfig::effective_run_id() const {
  if (!run_id.empty()) return run_id;
  return dataset.name + "-" + diffusion::to_string(mode) + "-s" + std::to_string(seed);
}

void RunConfig::validate() const {
  bool known = false;
  for (const auto& n : synth::dataset_names()) known = known || n == dataset.name;
  if (!known) throw ConfigError("dataset.name", "unknown dataset '" + dataset.name + "'");
  if (dataset.n == 0) throw ConfigError("dataset.n", "must be > 0");
  if (dataset.n_reference < 2) throw ConfigError("dataset.n_reference", "must be ≥ 2");
  if (runs_ssl()) {
    ssl.contrastive.validate();
    if (ssl.augmentation && !(ssl.augmentation->jitter_sigma >= 0.0 && ssl.augmentation->rotation_max_radians >= 0.0)) {
      throw ConfigError("ssl.augmentation", "jitter_sigma and rotation_max_radians must be ≥ 0");
    }
  }
  if (cluster.k.empty()) throw ConfigError("cluster.k", "must list at least one K");
  for (auto k : cluster.k)
    if (k == 0) throw ConfigError("cluster.k", "K must be > 0");
  if (cluster.n_init == 0) throw ConfigError("cluster.n_init", "must be > 0");
  if (!ablation || ablation->axis != AblationAxis::k_sweep) {
    if (runs_clustering() && cluster.k.size() != 1) {
      throw ConfigError("cluster.k", "a single run takes one K; use an ablation with axis K_sweep for a list");
    }
  }
  if (diffusion.hidden.empty()) throw ConfigError("diffusion.hidden", "must be non-empty");
  if (diffusion.embed_dim == 0) throw ConfigError("diffusion.embed_dim", "must be > 0");
  if (diffusion.n_frequencies == 0) throw ConfigError("diffusion.n_frequencies", "must be > 0");
  try {
    diffusion.schedule.validate();
  } catch (const Error& e) {
    throw ConfigError("diffusion.beta_min", e.what());
  }
  diffusion.train.validate();
  if (samplers.empty()) throw ConfigError("samplers", "must list at least one sampler");
  for (const auto& sc : samplers) sc.validate();
  eval.checkpoint_sampler.validate();
  if (eval.checkpoint_sampler.kind != diffusion::SamplerKind::euler_maruyama) {
    throw ConfigError("eval.checkpoint_sampler.kind", "checkpoint selection uses euler_maruyama");
  }
  if (eval.n_samples < 2) throw ConfigError("eval.n_samples", "must be ≥ 2");
  if (eval.checkpoint_samples < 2) throw ConfigError("eval.checkpoint_samples", "must be ≥ 2");
  if (eval.mmd && !(eval.mmd_bandwidth > 0.0)) throw ConfigError("eval.mmd_bandwidth", "must be > 0");
  if (ablation && ablation->seeds.empty()) throw ConfigError("ablation.seeds", "must be non-empty");
}

io::Json to_json(const RunConfig& cfg) {
  const auto& c = cfg.ssl.contrastive;
  io::Json ssl = {{"skip", cfg.ssl.skip},
                  {"mode", ssl::to_string(c.mode)},
                  {"feature_dim", c.feature_dim},
                  {"hidden", c.hidden},
                  {"temperature", c.temperature},
                  {"queue_size", c.queue_size},
                  {"encoder_momentum", c.encoder_momentum},
                  {"epochs", c.epochs},
                  {"batch_size", c.batch_size},
                  {"lr", c.lr},
                  {"sgd_momentum", c.sgd_momentum},
                  {"weight_decay", c.weight_decay}};
  if (cfg.ssl.augmentation) {
    ssl["augmentation"] = {{"jitter_sigma", cfg.ssl.augmentation->jitter_sigma},
                           {"nuisance_resample", cfg.ssl.augmentation->nuisance_resample},
                           {"rotation_max_radians", cfg.ssl.augmentation->rotation_max_radians}};
  }
  const auto& t = cfg.diffusion.train;
  io::Json samplers = io::Json::array();
  for (const auto& s : cfg.samplers) samplers.push_back(diffusion::to_json(s));
  io::Json j = {
      {"run_id", cfg.run_id},
      {"seed", cfg.seed},
      {"mode", diffusion::to_string(cfg.mode)},
      {"dataset", {{"name", cfg.dataset.name}, {"n", cfg.dataset.n}, {"n_reference", cfg.dataset.n_reference}}},
      {"ssl", ssl},
      {"cluster",
       {{"k", cfg.cluster.k},
        {"source", to_string(cfg.cluster.source)},
        {"n_init", cfg.cluster.n_init},
        {"max_iters", cfg.cluster.max_iters},
        {"tol", cfg.cluster.tol},
        {"prior", cfg.cluster.prior == PriorKind::empirical ? "empirical" : "uniform"}}},
      {"diffusion",
       {{"hidden", cfg.diffusion.hidden},
        {"embed_dim", cfg.diffusion.embed_dim},
        {"n_frequencies", cfg.diffusion.n_frequencies},
        {"beta_min", cfg.diffusion.schedule.beta_min},
        {"beta_max", cfg.diffusion.schedule.beta_max},
        {"steps", t.steps},
        {"batch_size", t.batch_size},
        {"lr", t.lr},
        {"adam_beta1", t.adam_beta1},
        {"adam_beta2", t.adam_beta2},
        {"adam_eps", t.adam_eps},
        {"t_min_train", t.t_min_train},
        {"eval_every", t.eval_every}}},
      {"samplers", samplers},
      {"eval",
       {{"n_samples", cfg.eval.n_samples},
        {"checkpoint_samples", cfg.eval.checkpoint_samples},
        {"checkpoint_sampler", diffusion::to_json(cfg.eval.checkpoint_sampler)},
        {"mmd", cfg.eval.mmd},
        {"mmd_bandwidth", cfg.eval.mmd_bandwidth},
        {"mmd_max_points", cfg.eval.mmd_max_points},
        {"fd_feat", cfg.eval.fd_feat}}},
  };
  if (cfg.ablation) {
    j["ablation"] = {{"axis", to_string(cfg.ablation->axis)},
                     {"values", cfg.ablation->values},
                     {"seeds", cfg.ablation->seeds}};
  }
  return j;
}

std::uint64_t stage_seed(const RunConfig& cfg, const std::string& stage, const std::string& axis_value) {
  return numkit::derive_seed(cfg.seed, stage, axis_value);
}

std::string config_hash(std::string_view canonical_config_text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(numkit::fnv1a64(canonical_config_text)));
  return buf;
}

synth::AugmentationSpec augmentation_for(const RunConfig& cfg) {
  return cfg.ssl.augmentation ? *cfg.ssl.augmentation : synth::default_augmentation(cfg.dataset.name);
}

ssl::ContrastiveConfig ssl_config_for(const RunConfig& cfg) {
  ssl::ContrastiveConfig c = cfg.ssl.contrastive;
  c.seed = stage_seed(cfg, "ssl");
  return c;
}

diffusion::TrainConfig train_config_for(const RunConfig& cfg) {
  diffusion::TrainConfig t = cfg.diffusion.train;
  t.mode = cfg.mode;
  t.seed = stage_seed(cfg, "diffusion");
  return t;
}

diffusion::ScoreNetShape score_net_shape_for(const RunConfig& cfg, std::size_t data_dim, std::size_t k) {
  diffusion::ScoreNetShape s;
  s.data_dim = data_dim;
  s.k = k;
  s.hidden = cfg.diffusion.hidden;
  s.embed_dim = cfg.diffusion.embed_dim;
  s.n_frequencies = cfg.diffusion.n_frequencies;
  return s;
}

theory::TheoryBatchConfig parse_theory_config(const io::Json& j) {
  theory::TheoryBatchConfig c;
  Section s(j, "");
  s.read("n_instances", c.n_instances);
  s.read("separations", c.separations);
  s.read("dims", c.dims);
  s.read("ks", c.ks);
  s.read("n_mc", c.n_mc);
  s.read("seed", c.seed);
  s.read_with("family", [&](const io::Json& v) { c.policy = parse_enum("family", v, theory::family_policy_from_string); });
  s.read_with("cov_mode", [&](const io::Json& v) { c.cov_mode = parse_enum("cov_mode", v, theory::covariance_mode_from_string); });
  s.finish();
  if (c.n_mc < 1000) throw ConfigError("n_mc", "must be ≥ 1000");
  if (c.dims.empty()) throw ConfigError("dims", "must be non-empty");
  if (c.ks.empty()) throw ConfigError("ks", "must be non-empty");
  return c;
}

}  // namespace scdm::pipeline
