#include "scdm/clusterer.hpp"
#include "scdm/errors.hpp"
#include "scdm/evalmetrics.hpp"
#include "scdm/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <iostream>
#include <limits>

namespace scdm::pipeline {

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

double fd_against(const numkit::ConstMatrixRef& samples, const eval::GaussStats& ref) {
  if (!numkit::all_finite(samples)) return std::numeric_limits<double>::infinity();
  const double fd = eval::frechet_distance(eval::fit_gaussian(samples), ref);
  return std::isfinite(fd) ? fd : std::numeric_limits<double>::infinity();
}

void write_sample_meta(const fs::path& csv, const RunConfig& cfg, std::size_t d_informative) {
  io::write_json(synth::sidecar_path(csv),
                 {{"name", cfg.dataset.name}, {"seed", cfg.seed}, {"d_informative", d_informative}});
}

}  // namespace

DataArtifacts generate_data(const RunConfig& cfg) {
  return {synth::make_dataset(cfg.dataset.name, stage_seed(cfg, "data"), cfg.dataset.n),
          synth::make_dataset(cfg.dataset.name, stage_seed(cfg, "reference"), cfg.dataset.n_reference)};
}

void write_assignments_csv(const fs::path& path, const std::vector<int>& assignments) {
  std::string text = "index,cluster\n";
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    text += std::to_string(i) + "," + std::to_string(assignments[i]) + "\n";
  }
  io::write_text(path, text);
}

std::vector<int> read_assignments_csv(const fs::path& path) {
  const io::CsvTable t = io::read_csv(path);
  if (t.header.size() != 2 || t.header[1] != "cluster") throw IoError(path.string() + ": expected index,cluster");
  std::vector<int> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows) out.push_back(static_cast<int>(io::parse_int(r[1])));
  return out;
}

std::vector<eval::MetricRow> evaluate_samples(const RunConfig& cfg, const std::string& run_id, std::size_t step,
                                              const std::string& tag, const numkit::ConstMatrixRef& samples,
                                              const numkit::ConstMatrixRef& reference, const nn::Mlp* encoder) {
  std::vector<eval::MetricRow> rows;
  rows.push_back({run_id, step, "fd_raw/" + tag, fd_against(samples, eval::fit_gaussian(reference)), 0.0});
  const bool finite = numkit::all_finite(samples);
  if (cfg.eval.mmd) {
    const auto m = static_cast<Eigen::Index>(cfg.eval.mmd_max_points);
    const double v = finite ? eval::mmd_rbf(samples.topRows(std::min(m, samples.rows())),
                                            reference.topRows(std::min(m, reference.rows())), cfg.eval.mmd_bandwidth)
                            : std::numeric_limits<double>::infinity();
    rows.push_back({run_id, step, "mmd/" + tag, v, 0.0});
  }
  if (cfg.eval.fd_feat && encoder != nullptr) {
    const double v = finite ? fd_against(ssl::encode(*encoder, samples), eval::fit_gaussian(ssl::encode(*encoder, reference)))
                            : std::numeric_limits<double>::infinity();
    rows.push_back({run_id, step, "fd_feat/" + tag, v, 0.0});
  }
  return rows;
}

RunResult run_pipeline(const RunConfig& cfg_in, const fs::path& out_dir, const RunOptions& opts) {
  cfg_in.validate();
  RunConfig cfg = cfg_in;
  cfg.ablation.reset();
  const std::string run_id = cfg.effective_run_id();
  const std::string config_text = to_json(cfg).dump(2) + "\n";
  const std::string hash = config_hash(config_text);
  const fs::path manifest_path = out_dir / "manifest.json";

  if (opts.reuse_completed && fs::exists(manifest_path)) {
    const io::Json old = io::read_json(manifest_path);
    if (old.value("status", "") == "completed" && old.value("config_hash", "") == hash) {
      RunResult r{out_dir, old, {}};
      for (auto it = old.at("metrics").begin(); it != old.at("metrics").end(); ++it) r.metrics[it.key()] = it->is_null() ? std::numeric_limits<double>::infinity() : it->get<double>();
      return r;
    }
  }

  fs::create_directories(out_dir);
  fs::remove(out_dir / "metrics.csv");
  io::write_text(out_dir / "config.json", config_text);

  io::Json manifest = {{"run_id", run_id},
                       {"config_hash", hash},
                       {"config_path", "config.json"},
                       {"status", "running"},
                       {"started_at", utc_now()},
                       {"stages", io::Json::object()},
                       {"artifacts", io::Json::object()},
                       {"metrics", io::Json::object()}};
  auto log = [&](const std::string& msg) {
    if (opts.verbose) std::cerr << "[" << run_id << "] " << msg << "\n";
  };
  auto stage_begin = [&](const std::string& name) {
    manifest["stages"][name] = {{"started_at", utc_now()}};
    log("stage " + name);
  };
  auto stage_end = [&](const std::string& name) { manifest["stages"][name]["finished_at"] = utc_now(); };
  auto artifact = [&](const std::string& name, const std::string& rel) { manifest["artifacts"][name] = rel; };

  RunResult result;
  result.out_dir = out_dir;
  std::vector<eval::MetricRow> metric_rows;

  try {
    stage_begin("data");
    const DataArtifacts data = generate_data(cfg);
    synth::write_pointset(out_dir / "data.csv", data.data);
    synth::write_pointset(out_dir / "reference.csv", data.reference);
    artifact("data", "data.csv");
    artifact("data_meta", "data.meta.json");
    artifact("reference", "reference.csv");
    artifact("reference_meta", "reference.meta.json");
    stage_end("data");

    std::optional<nn::Mlp> encoder;
    if (cfg.runs_ssl()) {
      stage_begin("ssl");
      const ssl::ContrastiveConfig scfg = ssl_config_for(cfg);
      const ssl::EncoderTrainResult enc = ssl::train_encoder(data.data, augmentation_for(cfg), scfg);
      io::write_json(out_dir / "encoder.json", ssl::encoder_checkpoint(enc, scfg));
      std::string trace = "epoch,loss\n";
      for (std::size_t e = 0; e < enc.epoch_loss.size(); ++e) trace += std::to_string(e) + "," + io::format_double(enc.epoch_loss[e]) + "\n";
      io::write_text(out_dir / "ssl_loss.csv", trace);
      artifact("encoder", "encoder.json");
      artifact("ssl_loss", "ssl_loss.csv");
      metric_rows.push_back({run_id, enc.epoch_loss.size(), "ssl_final_loss", enc.final_loss, 0.0});
      encoder = enc.params;
      stage_end("ssl");
    }

    std::vector<int> conditions(data.data.size(), diffusion::kNullCondition);
    std::size_t k = 0;
    diffusion::ConditionPrior prior = diffusion::ConditionPrior::null();
    if (cfg.mode == diffusion::TrainMode::label_conditional) {
      if (!data.data.labels) throw ConfigError("mode", "label_conditional needs a labelled dataset");
      conditions = *data.data.labels;
      for (int c : conditions) k = std::max(k, static_cast<std::size_t>(c) + 1);
      prior = diffusion::ConditionPrior::categorical(cluster::empirical_prior(conditions, k));
    } else if (cfg.runs_clustering()) {
      stage_begin("cluster");
      k = cfg.cluster.k.front();
      const numkit::Matrix features = encoder ? ssl::encode(*encoder, data.data.x) : data.data.x;
      numkit::Rng crng(stage_seed(cfg, "cluster"));
      cluster::ClusterModel model =
          cluster::fit_kmeans(crng, features, k, cfg.cluster.n_init, cfg.cluster.max_iters, cfg.cluster.tol);
      model.feature_source = encoder ? "encoder" : "raw";
      conditions = cluster::assign(model, features);
      io::write_json(out_dir / "clusters.json", cluster::to_json(model));
      write_assignments_csv(out_dir / "assignments.csv", conditions);
      artifact("clusters", "clusters.json");
      artifact("assignments", "assignments.csv");
      if (data.data.labels) {
        metric_rows.push_back({run_id, 0, "ari", cluster::adjusted_rand_index(conditions, *data.data.labels), 0.0});
      }
      metric_rows.push_back({run_id, model.iterations, "inertia", model.inertia, 0.0});
      prior = cfg.cluster.prior == PriorKind::uniform ? diffusion::ConditionPrior::uniform(k)
                                                      : diffusion::ConditionPrior::categorical(model.prior);
      stage_end("cluster");
    }

    stage_begin("diffusion");
    const diffusion::NoiseSchedule& sched = cfg.diffusion.schedule;
    const diffusion::TrainConfig tcfg = train_config_for(cfg);
    const eval::GaussStats ref_stats = eval::fit_gaussian(data.reference.x);
    const std::string ckpt_tag = cfg.eval.checkpoint_sampler.label();
    const std::uint64_t ckpt_seed = stage_seed(cfg, "checkpoint_eval");
    auto metric = [&](const diffusion::ScoreNetParams& p, std::size_t step) {
      numkit::Rng r(ckpt_seed);
      const diffusion::Samples s = diffusion::sample(r, p, sched, prior, cfg.eval.checkpoint_samples, cfg.eval.checkpoint_sampler);
      const double fd = fd_against(s.x, ref_stats);
      log("step " + std::to_string(step) + " fd_raw/" + ckpt_tag + " = " + io::format_double(fd));
      return fd;
    };
    const diffusion::TrainResult trained =
        diffusion::train_dm(data.data.x, conditions, score_net_shape_for(cfg, data.data.dim(), k), sched, tcfg, metric);
    io::write_json(out_dir / "checkpoint_final.json",
                   diffusion::checkpoint_to_json(trained.final_params, sched, tcfg, tcfg.steps, "loss_trace.csv"));
    io::write_json(out_dir / "checkpoint_best.json",
                   diffusion::checkpoint_to_json(trained.best_params, sched, tcfg, trained.best_step, "loss_trace.csv"));
    std::string loss_csv = "step,loss\n";
    for (std::size_t i = 0; i < trained.loss_trace.size(); ++i) loss_csv += std::to_string(i) + "," + io::format_double(trained.loss_trace[i]) + "\n";
    io::write_text(out_dir / "loss_trace.csv", loss_csv);
    std::string eval_csv = "step,fd_raw/" + ckpt_tag + "\n";
    for (const auto& [step, v] : trained.eval_trace) eval_csv += std::to_string(step) + "," + io::format_double(v) + "\n";
    io::write_text(out_dir / "eval_trace.csv", eval_csv);
    artifact("checkpoint_final", "checkpoint_final.json");
    artifact("checkpoint_best", "checkpoint_best.json");
    artifact("loss_trace", "loss_trace.csv");
    artifact("eval_trace", "eval_trace.csv");
    manifest["best_checkpoint"] = {{"path", "checkpoint_best.json"},
                                   {"step", trained.best_step},
                                   {"metric", "fd_raw/" + ckpt_tag},
                                   {"value", trained.best_metric}};
    if (!trained.loss_trace.empty()) {
      metric_rows.push_back({run_id, trained.loss_trace.size(), "dsm_final_loss", trained.loss_trace.back(), 0.0});
    }
    metric_rows.push_back({run_id, trained.best_step, "checkpoint_fd_raw/" + ckpt_tag, trained.best_metric, 0.0});
    stage_end("diffusion");

    stage_begin("sampling");
    for (const auto& scfg : cfg.samplers) {
      const std::string tag = scfg.label();
      numkit::Rng r(stage_seed(cfg, "sample", tag));
      const diffusion::Samples s = diffusion::sample(r, trained.best_params, sched, prior, cfg.eval.n_samples, scfg);
      const std::string rel = "samples_" + tag + ".csv";
      diffusion::write_samples_csv((out_dir / rel).string(), s);
      write_sample_meta(out_dir / rel, cfg, data.data.d_informative);
      artifact("samples_" + tag, rel);
      const auto rows = evaluate_samples(cfg, run_id, trained.best_step, tag, s.x, data.reference.x,
                                         encoder ? &*encoder : nullptr);
      metric_rows.insert(metric_rows.end(), rows.begin(), rows.end());
      log("fd_raw/" + tag + " = " + io::format_double(rows.front().value));
    }
    stage_end("sampling");

    eval::append_metrics_csv(out_dir / "metrics.csv", metric_rows);
    artifact("metrics", "metrics.csv");
    for (const auto& row : metric_rows) {
      manifest["metrics"][row.metric] = row.value;
      result.metrics[row.metric] = row.value;
    }
    manifest["status"] = "completed";
    manifest["finished_at"] = utc_now();
    io::write_json(manifest_path, manifest);
  } catch (const std::exception& e) {
    manifest["status"] = "failed";
    manifest["error"] = e.what();
    manifest["finished_at"] = utc_now();
    io::write_json(manifest_path, manifest);
    throw;
  }
  result.manifest = manifest;
  return result;
}

RunConfig apply_axis_value(const RunConfig& base, AblationAxis axis, const std::string& value) {
  RunConfig c = base;
  c.ablation.reset();
  switch (axis) {
    case AblationAxis::k_sweep: {
      if (c.mode != diffusion::TrainMode::cluster_conditional) {
        throw ConfigError("mode", "K_sweep needs mode cluster_conditional");
      }
      std::size_t pos = 0;
      unsigned long k = 0;
      try {
        k = std::stoul(value, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != value.size() || k == 0) throw ConfigError("ablation.values", "K must be a positive integer, got '" + value + "'");
      c.cluster.k = {k};
      break;
    }
    case AblationAxis::cluster_source:
      c.cluster.source = cluster_source_from_string(value);
      c.ssl.skip = c.cluster.source == ClusterSource::raw;
      break;
    case AblationAxis::ssl_method:
      c.ssl.contrastive.mode = ssl::contrastive_mode_from_string(value);
      c.ssl.skip = false;
      c.cluster.source = ClusterSource::encoder;
      break;
  }
  c.validate();
  return c;
}

void write_ablation_csv(const fs::path& path, const std::vector<AblationRow>& rows) {
  std::string text = "axis,value,metric,value,stderr,seed\n";
  for (const auto& r : rows) {
    text += r.axis + "," + r.value + "," + r.metric + "," + io::format_double(r.metric_value) + "," +
            (r.std_err ? io::format_double(*r.std_err) : std::string{}) + "," + std::to_string(r.seed) + "\n";
  }
  io::write_text(path, text);
}

AblationResult run_ablation(const RunConfig& cfg, const fs::path& out_dir, const RunOptions& opts) {
  if (!cfg.ablation) throw ConfigError("ablation", "missing ablation section");
  const AblationSection& ab = *cfg.ablation;
  std::vector<std::string> values = ab.values;
  if (values.empty()) {
    switch (ab.axis) {
      case AblationAxis::k_sweep:
        for (auto k : cfg.cluster.k) values.push_back(std::to_string(k));
        break;
      case AblationAxis::cluster_source: values = {"encoder", "raw"}; break;
      case AblationAxis::ssl_method: values = {"in_batch", "momentum_queue"}; break;
    }
  }
  const std::string axis = to_string(ab.axis);
  AblationResult out;
  for (std::uint64_t seed : ab.seeds) {
    for (const auto& v : values) {
      RunConfig c = apply_axis_value(cfg, ab.axis, v);
      c.seed = seed;
      c.run_id = (cfg.run_id.empty() ? cfg.dataset.name : cfg.run_id) + "-" + axis + "=" + v + "-s" + std::to_string(seed);
      const RunResult r = run_pipeline(c, out_dir / (axis + "=" + v) / ("seed_" + std::to_string(seed)), opts);
      for (const auto& [metric, value] : r.metrics) out.rows.push_back({axis, v, metric, value, std::nullopt, seed});
    }
  }
  out.csv_path = out_dir / "comparison.csv";
  out.svg_path = out_dir / "comparison.svg";
  write_ablation_csv(out.csv_path, out.rows);
  io::write_text(out.svg_path, ablation_svg(out.rows, "fd_raw/" + cfg.samplers.front().label()));
  return out;
}

}  // namespace scdm::pipeline
