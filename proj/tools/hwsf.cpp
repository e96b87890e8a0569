#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>

#include "hwsf/bounds.hpp"
#include "hwsf/config.hpp"
#include "hwsf/fqi.hpp"
#include "hwsf/sim.hpp"

namespace fs = std::filesystem;
using namespace hwsf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitCertification = 4;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

TransitionDataset rollouts_to_dataset(const ExperimentConfig& cfg,
                                      const std::vector<RolloutRecord>& records) {
  const Eigen::Matrix4d Qw = cfg.env.lqr_state_weights.asDiagonal();
  const Eigen::Matrix2d Rw = cfg.env.lqr_input_weights.asDiagonal();
  int total = 0;
  for (const auto& r : records) total += static_cast<int>(r.steps.size());
  TransitionDataset data;
  data.states.resize(total, 4);
  data.actions.resize(total, 2);
  data.rewards.resize(total);
  data.next_states.resize(total, 4);
  int row = 0;
  for (const auto& rec : records) {
    for (size_t k = 0; k < rec.steps.size(); ++k) {
      const StepLog& s = rec.steps[k];
      EnvState state{s.p, s.v, s.t};
      const Eigen::Vector4d e = tracking_error(state, reference_at(cfg.env, s.t));
      Eigen::Vector4d ep;
      if (k + 1 < rec.steps.size()) {
        const StepLog& nxt = rec.steps[k + 1];
        EnvState next{nxt.p, nxt.v, nxt.t};
        ep = tracking_error(next, reference_at(cfg.env, nxt.t));
      } else {
        ep = tracking_error(rec.final_state, reference_at(cfg.env, rec.final_state.t));
      }
      data.states.row(row) = e.transpose();
      data.actions.row(row) = s.u.transpose();
      data.rewards(row) = -(e.dot(Qw * e) + s.u.dot(Rw * s.u));
      data.next_states.row(row) = ep.transpose();
      ++row;
    }
  }
  return data;
}

int cmd_collect(const ExperimentConfig& cfg, const std::string& dataset_path) {
  const LqrQModel q_eval = make_lqr_model(cfg.env);
  std::vector<RolloutRecord> records;
  for (int r = 0; r < cfg.collect.rollouts; ++r) {
    RolloutOptions opts;
    opts.kind = FilterKind::None;
    opts.explore_noise = cfg.collect.explore_noise;
    opts.seed = cfg.seed + static_cast<std::uint64_t>(r);
    records.push_back(rollout(cfg.env, q_eval, opts));
  }
  const TransitionDataset data = rollouts_to_dataset(cfg, records);
  data.save_csv(dataset_path);
  std::cout << "collect: wrote " << data.size() << " transitions to " << dataset_path << "\n";
  std::cout << "  state bounds: [" << data.states.colwise().minCoeff() << "] .. ["
            << data.states.colwise().maxCoeff() << "]\n";
  std::cout << "  action bounds: [" << data.actions.colwise().minCoeff() << "] .. ["
            << data.actions.colwise().maxCoeff() << "]\n";
  return kExitOk;
}

FqiConfig make_fqi_config(const ExperimentConfig& cfg, const TransitionDataset& data) {
  FqiConfig fc;
  fc.gamma = cfg.fqi.gamma;
  fc.alpha = cfg.fqi.alpha;
  fc.beta = cfg.fqi.beta;
  fc.tau = cfg.fqi.tau;
  fc.epsilon = cfg.fqi.epsilon;
  fc.d_radius = cfg.fqi.d_radius;
  fc.theta_tol = cfg.fqi.theta_tol;
  fc.max_iters = cfg.fqi.max_iters;
  fc.action_lo = cfg.env.action_lo;
  fc.action_hi = cfg.env.action_hi;
  fc.grid = StateGrid::from_data(data.states, cfg.fqi.grid_per_dim, cfg.fqi.grid_cap,
                                 cfg.fqi.grid_seed);
  return fc;
}

Eigen::MatrixXd make_rbf_centers(const ExperimentConfig& cfg, const TransitionDataset& data) {
  const int n = data.state_dim(), m = data.action_dim();
  Eigen::VectorXd lo(n + m), hi(n + m);
  lo.head(n) = data.states.colwise().minCoeff().transpose();
  hi.head(n) = data.states.colwise().maxCoeff().transpose();
  lo.tail(m) = cfg.env.action_lo;
  hi.tail(m) = cfg.env.action_hi;
  Eigen::MatrixXd centers(n + m, cfg.fqi.rbf_count);
  std::mt19937_64 rng(cfg.fqi.grid_seed ^ 0x5bfULL);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int c = 0; c < cfg.fqi.rbf_count; ++c)
    for (int d = 0; d < n + m; ++d) centers(d, c) = lo(d) + u01(rng) * (hi(d) - lo(d));
  return centers;
}

int cmd_fit(const ExperimentConfig& cfg, const std::string& dataset_path,
            const std::string& model_path, const std::string& trace_path) {
  const TransitionDataset data = TransitionDataset::load_csv(dataset_path);
  const FqiConfig fc = make_fqi_config(cfg, data);
  const Eigen::MatrixXd centers = make_rbf_centers(cfg, data);
  const FeatureQModel init = initial_model(data.state_dim(), data.action_dim(),
                                           cfg.fqi.poly_degree, centers, cfg.fqi.rbf_width,
                                           fc.grid);
  const FitResult res = fit(data, fc, init);
  write_text(model_path, to_json(res.model));
  std::ostringstream trace;
  trace << "iter,delta_theta,objective\n";
  trace.precision(17);
  for (size_t k = 0; k < res.delta_theta.size(); ++k)
    trace << (k + 1) << ',' << res.delta_theta[k] << ',' << res.objective[k] << '\n';
  write_text(trace_path, trace.str());
  std::cout << "fit: " << (res.converged ? "converged" : "max_iters reached") << " after "
            << res.iterations << " iterations; model written to " << model_path << "\n";
  return res.converged ? kExitOk : kExitNumerical;
}

int cmd_verify(const ExperimentConfig& cfg, const std::string& report_path) {
  CertifyOptions opts;
  opts.instances = cfg.bounds.instances;
  opts.seed = cfg.bounds.seed;
  opts.tol = cfg.bounds.tol;
  opts.d_scale = cfg.bounds.d_radius;
  const auto records = certify_all(opts);
  write_text(report_path, cert_report_json(records));
  const std::string csv_path =
      report_path.size() > 5 && report_path.substr(report_path.size() - 5) == ".json"
          ? report_path.substr(0, report_path.size() - 5) + ".csv"
          : report_path + ".csv";
  write_text(csv_path, cert_report_csv(records));
  const CertSummary s = summarize(records);
  std::cout << "verify: " << s.total << " instances, " << s.in_premise << " in premise, "
            << s.violations << " violations\n";
  return s.violations == 0 ? kExitOk : kExitCertification;
}

int cmd_simulate(const ExperimentConfig& cfg) {
  const LqrQModel q_eval = make_lqr_model(cfg.env);
  std::unique_ptr<FeatureQModel> learned;
  WSource source = cfg.simulate.w_source == "learned" ? WSource::Learned : WSource::Analytic;
  if (source == WSource::Learned) {
    if (cfg.simulate.model_file.empty())
      throw ConfigError("simulate: learned w_source requires simulate.model_file");
    std::ifstream in(cfg.simulate.model_file);
    if (!in) throw ConfigError("simulate: cannot open " + cfg.simulate.model_file);
    std::stringstream buf;
    buf << in.rdbuf();
    learned = std::make_unique<FeatureQModel>(feature_qmodel_from_json(buf.str()));
  }

  std::vector<RolloutRecord> records;
  for (const auto& name : cfg.simulate.filters) {
    RolloutOptions opts;
    opts.kind = filter_kind_from_string(name);
    opts.w_source = source;
    opts.learned = learned.get();
    opts.seed = cfg.seed;
    RolloutRecord rec = rollout(cfg.env, q_eval, opts);
    const std::string path = cfg.output_dir + "/rollout_" + name + ".csv";
    write_rollout_csv(rec, path);
    write_text(cfg.output_dir + "/rollout_" + name + ".json", rollout_summary_json(rec));
    std::cout << "simulate: " << name << " min_h=" << rec.min_h
              << (rec.safety_fault ? " FAULT" : "") << " -> " << path << "\n";
    records.push_back(std::move(rec));
  }

  int baseline_idx = 0;
  for (size_t i = 0; i < cfg.simulate.filters.size(); ++i)
    if (cfg.simulate.filters[i] == "euclidean") baseline_idx = static_cast<int>(i);
  const MetricsSummary summary = compare_metrics(records, records[baseline_idx]);
  write_metrics_csv(summary, cfg.output_dir + "/summary.csv");
  write_qdiff_csv(summary, cfg.output_dir + "/qdiff.csv");
  std::cout << "simulate: summary written to " << cfg.output_dir << "/summary.csv\n";
  return kExitOk;
}

int cmd_bench(const ExperimentConfig& cfg) {
  const std::vector<FilterKind> kinds{FilterKind::Euclidean, FilterKind::Weighted,
                                      FilterKind::QMax};
  std::ofstream out(cfg.output_dir + "/bench.csv");
  if (!out) throw std::runtime_error("bench: cannot write bench.csv");
  out << "filter,scenario,steps,median_us,mean_us,p95_us,min_h\n";
  out.precision(17);
  for (int sc = 0; sc < cfg.bench.scenarios; ++sc) {
    const EnvConfig env = scenario_variant(cfg.env, cfg.seed + static_cast<std::uint64_t>(sc));
    const LqrQModel q_eval = make_lqr_model(env);
    for (FilterKind kind : kinds) {
      RolloutOptions opts;
      opts.kind = kind;
      opts.seed = cfg.seed;
      const RolloutRecord rec = rollout(env, q_eval, opts);
      std::vector<double> times;
      double mean = 0.0;
      for (const auto& s : rec.steps) {
        times.push_back(s.solve_us);
        mean += s.solve_us;
      }
      if (!times.empty()) mean /= static_cast<double>(times.size());
      std::sort(times.begin(), times.end());
      const double median = times.empty() ? 0.0 : times[times.size() / 2];
      const double p95 = times.empty() ? 0.0 : times[static_cast<size_t>(0.95 * (times.size() - 1))];
      out << to_string(kind) << ',' << sc << ',' << rec.steps.size() << ',' << median << ','
          << mean << ',' << p95 << ',' << rec.min_h << '\n';
    }
  }
  std::cout << "bench: wrote " << cfg.output_dir << "/bench.csv\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hessian-weighted safety filtering experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "experiment config (JSON)");
  app.add_option("--out", out_dir, "output directory (overrides config)");
  app.add_option("--seed", seed, "seed (overrides config)")->each([&](const std::string&) {
    seed_set = true;
  });
  app.add_option("--set", overrides, "dotted-path config override, e.g. env.dt=0.05");

  std::string dataset_path, model_path, trace_path, report_path;
  auto* collect = app.add_subcommand("collect", "generate a transition dataset");
  collect->add_option("--dataset", dataset_path, "output CSV path");
  auto* fit_cmd = app.add_subcommand("fit", "fit the Q model with regularized FQI");
  fit_cmd->add_option("--dataset", dataset_path, "input CSV path");
  fit_cmd->add_option("--model-out", model_path, "fitted model JSON path");
  fit_cmd->add_option("--trace", trace_path, "iteration trace CSV path");
  auto* verify = app.add_subcommand("verify", "run the bound-certification harness");
  verify->add_option("--report", report_path, "report JSON path");
  auto* simulate = app.add_subcommand("simulate", "head-to-head closed-loop comparison");
  simulate->add_option("--model", model_path, "fitted model for the learned weight source");
  auto* bench = app.add_subcommand("bench", "solve-time sweep across scenarios");

  CLI11_PARSE(app, argc, argv);

  try {
    std::string text = "{}";
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot open config file " + config_path);
      std::stringstream buf;
      buf << in.rdbuf();
      text = buf.str();
    }
    for (const auto& ov : overrides) apply_override(text, ov);
    ExperimentConfig cfg = config_from_json_text(text);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (seed_set) cfg.seed = seed;
    if (!model_path.empty() && simulate->parsed()) cfg.simulate.model_file = model_path;
    fs::create_directories(cfg.output_dir);

    if (collect->parsed()) {
      if (dataset_path.empty()) dataset_path = cfg.output_dir + "/dataset.csv";
      return cmd_collect(cfg, dataset_path);
    }
    if (fit_cmd->parsed()) {
      if (dataset_path.empty()) dataset_path = cfg.output_dir + "/dataset.csv";
      if (model_path.empty()) model_path = cfg.output_dir + "/model.json";
      if (trace_path.empty()) trace_path = cfg.output_dir + "/fit_trace.csv";
      return cmd_fit(cfg, dataset_path, model_path, trace_path);
    }
    if (verify->parsed()) {
      if (report_path.empty()) report_path = cfg.output_dir + "/certification.json";
      return cmd_verify(cfg, report_path);
    }
    if (simulate->parsed()) return cmd_simulate(cfg);
    if (bench->parsed()) return cmd_bench(cfg);
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SolverStalledError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const NonConcaveError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
