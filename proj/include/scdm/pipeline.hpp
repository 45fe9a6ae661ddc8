#pragma once

#include "scdm/diffusion.hpp"
#include "scdm/io.hpp"
#include "scdm/ssl_encoder.hpp"
#include "scdm/synthdata.hpp"
#include "scdm/theory_oracle.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace scdm::pipeline {

namespace fs = std::filesystem;

struct DatasetSection {
  std::string name = "mog8";
  std::size_t n = 10000;
  std::size_t n_reference = 10000;
};

struct SslSection {
  bool skip = false;  // "pixel" mode: cluster raw coordinates
  ssl::ContrastiveConfig contrastive;
  std::optional<synth::AugmentationSpec> augmentation;  // dataset default when absent
};

enum class ClusterSource { encoder, raw };
std::string to_string(ClusterSource s);
ClusterSource cluster_source_from_string(const std::string& s);

enum class PriorKind { empirical, uniform };

struct ClusterSection {
  std::vector<std::size_t> k = {8};
  ClusterSource source = ClusterSource::encoder;
  std::size_t n_init = 4;
  std::size_t max_iters = 300;
  double tol = 1e-6;
  PriorKind prior = PriorKind::empirical;
};

struct DiffusionSection {
  std::vector<std::size_t> hidden = {128, 128, 128};
  std::size_t embed_dim = 32;
  std::size_t n_frequencies = 16;
  diffusion::NoiseSchedule schedule;
  diffusion::TrainConfig train;  // mode and seed are filled from the run
};

struct EvalSection {
  std::size_t n_samples = 5000;
  std::size_t checkpoint_samples = 2000;
  diffusion::SamplerConfig checkpoint_sampler{diffusion::SamplerKind::euler_maruyama, 1, 200, 1e-3};
  bool mmd = false;
  double mmd_bandwidth = 1.0;
  std::size_t mmd_max_points = 2000;
  bool fd_feat = false;
};

enum class AblationAxis { k_sweep, cluster_source, ssl_method };
std::string to_string(AblationAxis a);
AblationAxis ablation_axis_from_string(const std::string& s);

struct AblationSection {
  AblationAxis axis = AblationAxis::k_sweep;
  std::vector<std::string> values;  // K_sweep defaults to cluster.k
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
};

struct RunConfig {
  std::string run_id;  // derived from mode/dataset/seed when empty
  std::uint64_t seed = 1;
  diffusion::TrainMode mode = diffusion::TrainMode::cluster_conditional;
  DatasetSection dataset;
  SslSection ssl;
  ClusterSection cluster;
  DiffusionSection diffusion;
  std::vector<diffusion::SamplerConfig> samplers = {
      {diffusion::SamplerKind::euler_maruyama, 1, 1000, 1e-3},
      {diffusion::SamplerKind::dpm_solver, 2, 50, 1e-3},
  };
  EvalSection eval;
  std::optional<AblationSection> ablation;

  // Stage graph checks: e.g. an encoder cluster source needs the SSL stage.
  void validate() const;
  ClusterSource effective_cluster_source() const;
  bool runs_ssl() const;
  bool runs_clustering() const;
  std::string effective_run_id() const;
};

// Strict parse: every key must be known (ConfigError names the offending
// key path, e.g. "diffusion.stpes"). Missing keys keep their defaults.
RunConfig parse_run_config(const io::Json& j);
RunConfig load_run_config(const fs::path& path);
// Fully expanded form; parse_run_config(to_json(c)) reproduces c.
io::Json to_json(const RunConfig& cfg);

// Stage seeds: derive_seed(cfg.seed, stage). Stages: "data", "reference",
// "ssl", "cluster", "diffusion", "checkpoint_eval", "sample" (axis value =
// sampler label).
std::uint64_t stage_seed(const RunConfig& cfg, const std::string& stage, const std::string& axis_value = {});

std::string config_hash(std::string_view canonical_config_text);

struct RunOptions {
  bool reuse_completed = false;  // skip a run whose manifest matches the config hash
  bool verbose = false;
};

struct RunResult {
  fs::path out_dir;
  io::Json manifest;
  std::map<std::string, double> metrics;  // e.g. "fd_raw/em1000", "ari"
};

// Full three-stage pipeline into out_dir. On failure the manifest is
// written with status "failed" and the error is rethrown.
RunResult run_pipeline(const RunConfig& cfg, const fs::path& out_dir, const RunOptions& opts = {});

struct AblationRow {
  std::string axis;
  std::string value;
  std::string metric;
  double metric_value = 0.0;
  std::optional<double> std_err;
  std::uint64_t seed = 0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  fs::path csv_path;
  fs::path svg_path;
};

// Overrides one setting per axis value; every run shares the other
// settings and the master seed. Writes comparison.csv and comparison.svg.
RunConfig apply_axis_value(const RunConfig& base, AblationAxis axis, const std::string& value);
AblationResult run_ablation(const RunConfig& cfg, const fs::path& out_dir, const RunOptions& opts = {});
void write_ablation_csv(const fs::path& path, const std::vector<AblationRow>& rows);

// ---- individual stages (CLI subcommands) ----

struct DataArtifacts {
  synth::PointSet data;
  synth::PointSet reference;
};
DataArtifacts generate_data(const RunConfig& cfg);

synth::AugmentationSpec augmentation_for(const RunConfig& cfg);
ssl::ContrastiveConfig ssl_config_for(const RunConfig& cfg);
diffusion::TrainConfig train_config_for(const RunConfig& cfg);
diffusion::ScoreNetShape score_net_shape_for(const RunConfig& cfg, std::size_t data_dim, std::size_t k);

// Condition vectors written next to cluster output.
void write_assignments_csv(const fs::path& path, const std::vector<int>& assignments);
std::vector<int> read_assignments_csv(const fs::path& path);

// Metrics of one sample set against reference data.
std::vector<eval::MetricRow> evaluate_samples(const RunConfig& cfg, const std::string& run_id, std::size_t step,
                                              const std::string& tag, const numkit::ConstMatrixRef& samples,
                                              const numkit::ConstMatrixRef& reference,
                                              const nn::Mlp* encoder = nullptr);

// ---- plotting ----

// 800×800 scatter of dims 0 and 1, coloured by label/condition with a fixed
// palette. UnsupportedDim unless d_informative == 2.
std::string scatter_svg(const numkit::ConstMatrixRef& x, const std::vector<int>& labels, std::size_t d_informative,
                        const std::string& title);
// Mean metric per axis value with the per-seed points.
std::string ablation_svg(const std::vector<AblationRow>& rows, const std::string& metric);

struct PlotInput {
  numkit::Matrix x;
  std::vector<int> labels;
  std::size_t d_informative = 0;
};
// Reads a PointSet CSV (with sidecar) or a samples CSV.
PlotInput read_plot_input(const fs::path& csv_path);

// ---- theory ----

theory::TheoryBatchConfig parse_theory_config(const io::Json& j);

}  // namespace scdm::pipeline
