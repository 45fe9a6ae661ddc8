#include "scdm/clusterer.hpp"
#include "scdm/errors.hpp"
#include "scdm/evalmetrics.hpp"
#include "scdm/pipeline.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <optional>

namespace fs = std::filesystem;
using namespace scdm;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  bool verbose = false;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--config", c.config, "Run configuration (JSON)");
  cmd->add_option("--seed", c.seed, "Override the master seed");
  auto* o = cmd->add_option("--out", c.out, "Output directory");
  if (out_required) o->required();
  cmd->add_flag("--verbose", c.verbose, "Log progress to stderr");
}

pipeline::RunConfig load(const Common& c) {
  pipeline::RunConfig cfg = c.config.empty() ? pipeline::RunConfig{} : pipeline::load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

diffusion::ConditionPrior prior_for_checkpoint(const diffusion::Checkpoint& ck, const std::string& clusters_path,
                                               const std::string& data_path, bool uniform) {
  const std::size_t k = ck.params.k;
  if (k == 0) return diffusion::ConditionPrior::null();
  if (uniform) return diffusion::ConditionPrior::uniform(k);
  if (!clusters_path.empty()) {
    const cluster::ClusterModel m = cluster::cluster_model_from_json(io::read_json(clusters_path));
    if (m.k != k) throw ConfigError("clusters", "cluster count differs from the checkpoint's K");
    return diffusion::ConditionPrior::categorical(m.prior);
  }
  if (!data_path.empty()) {
    const synth::PointSet set = synth::read_pointset(data_path);
    if (!set.labels) throw ConfigError("data", "data file has no labels for the condition prior");
    return diffusion::ConditionPrior::categorical(cluster::empirical_prior(*set.labels, k));
  }
  throw ConfigError("prior", "a conditional checkpoint needs --clusters, --data or --uniform-prior");
}

std::vector<pipeline::AblationRow> read_ablation_csv(const fs::path& path) {
  const io::CsvTable t = io::read_csv(path);
  if (t.header.size() != 6 || t.header[0] != "axis") throw IoError(path.string() + ": not an ablation comparison CSV");
  std::vector<pipeline::AblationRow> rows;
  for (const auto& r : t.rows) {
    pipeline::AblationRow row{r[0], r[1], r[2], io::parse_double(r[3]), std::nullopt,
                              static_cast<std::uint64_t>(io::parse_int(r[5]))};
    if (!r[4].empty()) row.std_err = io::parse_double(r[4]);
    rows.push_back(row);
  }
  return rows;
}

void plot_csv(const fs::path& in, const fs::path& out) {
  const pipeline::PlotInput p = pipeline::read_plot_input(in);
  io::write_text(out, pipeline::scatter_svg(p.x, p.labels, p.d_informative, in.stem().string()));
  std::cout << out.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-conditioned diffusion models at desk scale"};
  app.require_subcommand(1);

  Common gen;
  auto* cmd_gen = app.add_subcommand("generate-data", "Write the training and reference point sets");
  add_common(cmd_gen, gen);

  Common tssl;
  std::string tssl_data;
  auto* cmd_ssl = app.add_subcommand("train-ssl", "Train the contrastive encoder");
  add_common(cmd_ssl, tssl);
  cmd_ssl->add_option("--data", tssl_data, "PointSet CSV")->required();

  Common clu;
  std::string clu_data, clu_encoder;
  auto* cmd_cluster = app.add_subcommand("cluster", "k-means on encoder features or raw coordinates");
  add_common(cmd_cluster, clu);
  cmd_cluster->add_option("--data", clu_data, "PointSet CSV")->required();
  cmd_cluster->add_option("--encoder", clu_encoder, "Encoder checkpoint; raw coordinates when omitted");

  Common tdm;
  std::string tdm_data, tdm_assign, tdm_reference;
  auto* cmd_dm = app.add_subcommand("train-dm", "Train the score network");
  add_common(cmd_dm, tdm);
  cmd_dm->add_option("--data", tdm_data, "PointSet CSV")->required();
  cmd_dm->add_option("--assignments", tdm_assign, "Cluster assignments CSV (cluster_conditional mode)");
  cmd_dm->add_option("--reference", tdm_reference, "Reference CSV for best-checkpoint selection");

  Common smp;
  std::string smp_ckpt, smp_clusters, smp_data;
  bool smp_uniform = false;
  std::optional<std::size_t> smp_n;
  auto* cmd_sample = app.add_subcommand("sample", "Draw samples from a checkpoint with every configured sampler");
  add_common(cmd_sample, smp);
  cmd_sample->add_option("--checkpoint", smp_ckpt, "Score-network checkpoint")->required();
  cmd_sample->add_option("--clusters", smp_clusters, "Cluster model supplying the condition prior");
  cmd_sample->add_option("--data", smp_data, "Labelled PointSet supplying the condition prior");
  cmd_sample->add_flag("--uniform-prior", smp_uniform, "Sample conditions uniformly");
  cmd_sample->add_option("--n", smp_n, "Number of samples (default eval.n_samples)");

  Common evl;
  std::string evl_samples, evl_reference, evl_encoder, evl_run_id = "evaluate";
  auto* cmd_eval = app.add_subcommand("evaluate", "Metrics of a sample file against reference data");
  add_common(cmd_eval, evl);
  cmd_eval->add_option("--samples", evl_samples, "Samples CSV")->required();
  cmd_eval->add_option("--reference", evl_reference, "Reference PointSet CSV")->required();
  cmd_eval->add_option("--encoder", evl_encoder, "Encoder checkpoint for fd_feat");
  cmd_eval->add_option("--run-id", evl_run_id, "run_id column value");

  Common run;
  bool run_resume = false;
  auto* cmd_run = app.add_subcommand("run-pipeline", "SSL, clustering and diffusion training end to end");
  add_common(cmd_run, run);
  cmd_run->add_flag("--resume", run_resume, "Reuse a completed run with the same config hash");

  Common abl;
  bool abl_resume = false;
  auto* cmd_ablate = app.add_subcommand("ablate", "One pipeline run per axis value and seed");
  add_common(cmd_ablate, abl);
  cmd_ablate->add_flag("--resume", abl_resume, "Reuse completed runs with matching config hashes");

  Common thy;
  std::vector<std::size_t> thy_k, thy_d;
  std::vector<double> thy_sep;
  std::optional<std::size_t> thy_n, thy_mc;
  std::string thy_family, thy_cov;
  auto* cmd_theory = app.add_subcommand("verify-theory", "Conditional vs unconditional Gaussian-family KL on random mixtures");
  add_common(cmd_theory, thy);
  cmd_theory->add_option("--k", thy_k, "Component counts to draw from");
  cmd_theory->add_option("--d", thy_d, "Dimensions to draw from");
  cmd_theory->add_option("--separations", thy_sep, "Separation ratios (one batch each)");
  cmd_theory->add_option("--n-instances", thy_n, "Instances per separation");
  cmd_theory->add_option("--n-mc", thy_mc, "Monte-Carlo draws per KL estimate");
  cmd_theory->add_option("--family", thy_family, "shared_covariance or free_covariance");
  cmd_theory->add_option("--cov-mode", thy_cov, "shared or per_component component covariances");

  std::string plot_in, plot_out;
  auto* cmd_plot = app.add_subcommand("plot", "SVG scatter plots of point sets, samples, or an ablation");
  cmd_plot->add_option("--input", plot_in, "CSV file, run directory, or ablation directory")->required();
  cmd_plot->add_option("--out", plot_out, "SVG file (CSV input) or directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (cmd_gen->parsed()) {
      const auto cfg = load(gen);
      const auto data = pipeline::generate_data(cfg);
      synth::write_pointset(fs::path(gen.out) / "data.csv", data.data);
      synth::write_pointset(fs::path(gen.out) / "reference.csv", data.reference);
    } else if (cmd_ssl->parsed()) {
      const auto cfg = load(tssl);
      const synth::PointSet data = synth::read_pointset(tssl_data);
      const auto scfg = pipeline::ssl_config_for(cfg);
      const auto res = ssl::train_encoder(data, pipeline::augmentation_for(cfg), scfg, [&](std::size_t e, double l) {
        if (tssl.verbose) std::cerr << "epoch " << e << " loss " << l << "\n";
      });
      io::write_json(fs::path(tssl.out) / "encoder.json", ssl::encoder_checkpoint(res, scfg));
      std::cout << "final_loss " << io::format_double(res.final_loss) << "\n";
    } else if (cmd_cluster->parsed()) {
      const auto cfg = load(clu);
      const synth::PointSet data = synth::read_pointset(clu_data);
      numkit::Matrix features = data.x;
      std::string source = "raw";
      if (!clu_encoder.empty()) {
        features = ssl::encode(ssl::encoder_from_checkpoint(io::read_json(clu_encoder)), data.x);
        source = "encoder";
      }
      numkit::Rng rng(pipeline::stage_seed(cfg, "cluster"));
      auto model = cluster::fit_kmeans(rng, features, cfg.cluster.k.front(), cfg.cluster.n_init, cfg.cluster.max_iters,
                                       cfg.cluster.tol);
      model.feature_source = source;
      const auto assignments = cluster::assign(model, features);
      io::write_json(fs::path(clu.out) / "clusters.json", cluster::to_json(model));
      pipeline::write_assignments_csv(fs::path(clu.out) / "assignments.csv", assignments);
      if (data.labels) std::cout << "ari " << io::format_double(cluster::adjusted_rand_index(assignments, *data.labels)) << "\n";
    } else if (cmd_dm->parsed()) {
      const auto cfg = load(tdm);
      const synth::PointSet data = synth::read_pointset(tdm_data);
      std::vector<int> conditions(data.size(), diffusion::kNullCondition);
      std::size_t k = 0;
      diffusion::ConditionPrior prior = diffusion::ConditionPrior::null();
      if (cfg.mode == diffusion::TrainMode::label_conditional) {
        if (!data.labels) throw ConfigError("mode", "label_conditional needs labels in --data");
        conditions = *data.labels;
      } else if (cfg.mode == diffusion::TrainMode::cluster_conditional) {
        if (tdm_assign.empty()) throw ConfigError("assignments", "cluster_conditional needs --assignments");
        conditions = pipeline::read_assignments_csv(tdm_assign);
        if (conditions.size() != data.size()) throw ConfigError("assignments", "one assignment per data row required");
      }
      for (int c : conditions) k = std::max(k, static_cast<std::size_t>(c + 1));
      if (k > 0) prior = diffusion::ConditionPrior::categorical(cluster::empirical_prior(conditions, k));
      const auto tcfg = pipeline::train_config_for(cfg);
      const auto& sched = cfg.diffusion.schedule;
      diffusion::CheckpointMetric metric;
      std::optional<eval::GaussStats> ref;
      if (!tdm_reference.empty()) {
        ref = eval::fit_gaussian(synth::read_pointset(tdm_reference).x);
        metric = [&](const diffusion::ScoreNetParams& p, std::size_t step) {
          numkit::Rng r(pipeline::stage_seed(cfg, "checkpoint_eval"));
          const auto s = diffusion::sample(r, p, sched, prior, cfg.eval.checkpoint_samples, cfg.eval.checkpoint_sampler);
          const double fd = eval::frechet_distance(eval::fit_gaussian(s.x), *ref);
          if (tdm.verbose) std::cerr << "step " << step << " fd_raw " << fd << "\n";
          return std::isfinite(fd) ? fd : std::numeric_limits<double>::infinity();
        };
      }
      const auto res = diffusion::train_dm(data.x, conditions, pipeline::score_net_shape_for(cfg, data.dim(), k), sched,
                                           tcfg, metric);
      const fs::path out(tdm.out);
      io::write_json(out / "checkpoint_final.json",
                     diffusion::checkpoint_to_json(res.final_params, sched, tcfg, tcfg.steps, "loss_trace.csv"));
      io::write_json(out / "checkpoint_best.json",
                     diffusion::checkpoint_to_json(res.best_params, sched, tcfg, res.best_step, "loss_trace.csv"));
      std::string loss_csv = "step,loss\n";
      for (std::size_t i = 0; i < res.loss_trace.size(); ++i) loss_csv += std::to_string(i) + "," + io::format_double(res.loss_trace[i]) + "\n";
      io::write_text(out / "loss_trace.csv", loss_csv);
    } else if (cmd_sample->parsed()) {
      const auto cfg = load(smp);
      const auto ck = diffusion::checkpoint_from_json(io::read_json(smp_ckpt));
      const auto prior = prior_for_checkpoint(ck, smp_clusters, smp_data, smp_uniform);
      for (const auto& scfg : cfg.samplers) {
        numkit::Rng r(pipeline::stage_seed(cfg, "sample", scfg.label()));
        const auto s = diffusion::sample(r, ck.params, ck.schedule, prior, smp_n.value_or(cfg.eval.n_samples), scfg);
        const fs::path path = fs::path(smp.out) / ("samples_" + scfg.label() + ".csv");
        diffusion::write_samples_csv(path.string(), s);
        std::cout << path.string() << "\n";
      }
    } else if (cmd_eval->parsed()) {
      const auto cfg = load(evl);
      const auto s = diffusion::read_samples_csv(evl_samples);
      const auto ref = synth::read_pointset(evl_reference);
      std::optional<nn::Mlp> enc;
      if (!evl_encoder.empty()) enc = ssl::encoder_from_checkpoint(io::read_json(evl_encoder));
      auto rows = pipeline::evaluate_samples(cfg, evl_run_id, 0, fs::path(evl_samples).stem().string(), s.x, ref.x,
                                             enc ? &*enc : nullptr);
      eval::append_metrics_csv(fs::path(evl.out) / "metrics.csv", rows);
      for (const auto& r : rows) std::cout << r.metric << " " << io::format_double(r.value) << "\n";
    } else if (cmd_run->parsed()) {
      const auto cfg = load(run);
      const auto res = pipeline::run_pipeline(cfg, run.out, {run_resume, run.verbose});
      for (const auto& [m, v] : res.metrics) std::cout << m << " " << io::format_double(v) << "\n";
    } else if (cmd_ablate->parsed()) {
      const auto cfg = load(abl);
      const auto res = pipeline::run_ablation(cfg, abl.out, {abl_resume, abl.verbose});
      std::cout << res.csv_path.string() << "\n" << res.svg_path.string() << "\n";
    } else if (cmd_theory->parsed()) {
      theory::TheoryBatchConfig tc = thy.config.empty() ? theory::TheoryBatchConfig{}
                                                        : pipeline::parse_theory_config(io::read_json(thy.config));
      if (thy.seed) tc.seed = *thy.seed;
      if (!thy_k.empty()) tc.ks = thy_k;
      if (!thy_d.empty()) tc.dims = thy_d;
      if (!thy_sep.empty()) tc.separations = thy_sep;
      if (thy_n) tc.n_instances = *thy_n;
      if (thy_mc) tc.n_mc = *thy_mc;
      if (!thy_family.empty()) tc.policy = theory::family_policy_from_string(thy_family);
      if (!thy_cov.empty()) tc.cov_mode = theory::covariance_mode_from_string(thy_cov);
      if (tc.n_mc < 1000) throw ConfigError("n_mc", "must be ≥ 1000");
      const auto rows = theory::run_theory_batch(tc);
      const fs::path path = fs::path(thy.out) / "theory.csv";
      theory::write_theory_csv(path, rows);
      std::size_t holds = 0;
      for (const auto& r : rows) holds += r.report.holds ? 1 : 0;
      std::cout << "holds " << holds << "/" << rows.size() << "\n" << path.string() << "\n";
    } else if (cmd_plot->parsed()) {
      const fs::path in(plot_in);
      if (fs::is_directory(in)) {
        const fs::path out(plot_out);
        fs::create_directories(out);
        if (fs::exists(in / "comparison.csv")) {
          const auto rows = read_ablation_csv(in / "comparison.csv");
          std::string metric = rows.empty() ? "fd_raw" : rows.front().metric;
          for (const auto& r : rows) {
            if (r.metric.rfind("fd_raw/", 0) == 0) {
              metric = r.metric;
              break;
            }
          }
          io::write_text(out / "comparison.svg", pipeline::ablation_svg(rows, metric));
          std::cout << (out / "comparison.svg").string() << "\n";
        } else {
          std::vector<fs::path> inputs;
          for (const auto& e : fs::directory_iterator(in)) {
            const auto name = e.path().filename().string();
            if (e.path().extension() == ".csv" && (name == "data.csv" || name == "reference.csv" || name.rfind("samples_", 0) == 0)) {
              inputs.push_back(e.path());
            }
          }
          std::sort(inputs.begin(), inputs.end());
          if (inputs.empty()) throw IoError(in.string() + ": no point-set or sample CSV files");
          for (const auto& p : inputs) plot_csv(p, out / (p.stem().string() + ".svg"));
        }
      } else {
        plot_csv(in, plot_out);
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
