#include "sbtm/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "sbtm/diagnostics.hpp"

namespace sbtm {
namespace {

namespace fs = std::filesystem;

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::vector<double> parse_number_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    char* end = nullptr;
    const double x = std::strtod(cell.c_str(), &end);
    require(end != cell.c_str(), what + ": expected numbers, got '" + cell + "'");
    out.push_back(x);
  }
  require(!out.empty(), what + ": empty list");
  return out;
}

struct CommonOpts {
  std::string preset_name;
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> sets;
  std::string seed_text;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--preset", o.preset_name, "start from a named preset");
  cmd->add_option("--config", o.config_path,
                  "key = value config file layered over the preset; a manifest.json "
                  "restores that run's full config");
  cmd->add_option("--set", o.sets, "inline key=value override (repeatable)");
  cmd->add_option("--seed", o.seed_text, "override run.seed");
  cmd->add_option("--out-dir", o.out_dir, "override out.dir");
}

RunConfig assemble(const CommonOpts& o) {
  RunConfig cfg =
      o.preset_name.empty() ? run_config_defaults() : preset(o.preset_name);
  if (!o.config_path.empty()) {
    if (fs::path(o.config_path).extension() == ".json")
      cfg = read_manifest_config(o.config_path);
    else
      cfg = parse_config_file(o.config_path, std::move(cfg));
  }
  for (const std::string& kv : o.sets) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos, "--set expects key=value, got '" + kv + "'");
    set_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!o.seed_text.empty()) set_key(cfg, "run.seed", o.seed_text);
  if (!o.out_dir.empty()) set_key(cfg, "out.dir", o.out_dir);
  return cfg;
}

std::string snapshot_name(size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s_%04zu.csv", k);
  return buf;
}

void write_run_outputs(const std::string& dir, const RunResult& res) {
  write_diagnostics_csv(dir + "/diagnostics.csv", res.records);
  if (res.timeline.size() > 0) res.timeline.save_dir(dir + "/checkpoints");
  if (!res.snapshots.empty()) {
    fs::create_directories(dir + "/snapshots");
    std::ofstream tf(dir + "/snapshots/times.csv");
    require(tf.good(), "cannot open " + dir + "/snapshots/times.csv");
    tf << "k,t\n";
    for (size_t k = 0; k < res.snapshots.size(); ++k) {
      tf << k << "," << fmt(res.snapshot_times[k]) << "\n";
      write_samples_csv(dir + "/snapshots/" + snapshot_name(k), res.snapshots[k]);
    }
  }
  write_samples_csv(dir + "/samples_final.csv", res.ensemble.X);
}

int do_run(const std::string& mode, const CommonOpts& o) {
  BuiltRun br = build_run(assemble(o));
  fs::create_directories(br.out_dir);
  write_manifest(br.out_dir, br.resolved, "incomplete", 0.0);

  const auto t0 = std::chrono::steady_clock::now();
  RunResult res;
  if (mode == "solve")
    res = run_sequential_sbtm(br.sys, std::move(br.model), br.engine, br.hooks);
  else if (mode == "sde")
    res = sde_euler_maruyama(br.sys, br.engine, br.hooks);
  else if (mode == "noisefree")
    res = noise_free_run(br.sys, br.engine);
  else
    res = train_on_sde_baseline(br.sys, std::move(br.model), br.engine, br.hooks);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_run_outputs(br.out_dir, res);
  const std::string status =
      res.abort_reason.empty() ? "complete" : "aborted: " + res.abort_reason;
  write_manifest(br.out_dir, br.resolved, status, wall);
  if (!res.abort_reason.empty()) {
    std::cerr << "run aborted: " << res.abort_reason << " (outputs in " << br.out_dir << ")\n";
    return 1;
  }
  return 0;
}

int do_oracle(const CommonOpts& o) {
  BuiltRun br = build_run(assemble(o));
  require(br.harmonic_oracle || br.ou_oracle,
          "oracle: system '" + br.resolved.str("system.name") + "' has no closed-form solution");
  fs::create_directories(br.out_dir);
  write_manifest(br.out_dir, br.resolved, "incomplete", 0.0);
  const auto t0 = std::chrono::steady_clock::now();

  const double dt = br.engine.plan.dt;
  const double T = br.engine.plan.T;
  std::ofstream out(br.out_dir + "/oracle.csv");
  require(out.good(), "cannot open " + br.out_dir + "/oracle.csv");
  if (br.ou_oracle) {
    out << "t,m,C,H\n";
    for (int k = 0; k * dt <= T + 1e-12; ++k) {
      const double t = std::min(k * dt, T);
      const GaussianState st = br.ou_oracle->at(t);
      out << fmt(t) << "," << fmt(st.m[0]) << "," << fmt(st.C(0, 0)) << ","
          << fmt(gaussian_entropy(st)) << "\n";
    }
  } else {
    out << "t,H,dHdt,cov_trace,mbar_x,mbar_y\n";
    for (int k = 0; k * dt <= T + 1e-12; ++k) {
      const double t = std::min(k * dt, T);
      const SymmetricMoments st = br.harmonic_oracle->at(t);
      out << fmt(t) << "," << fmt(br.harmonic_oracle->entropy(t)) << ","
          << fmt(br.harmonic_oracle->entropy_rate(t)) << ","
          << fmt(br.harmonic_oracle->cov_trace(t)) << "," << fmt(st.mbar[0]) << ","
          << fmt(st.mbar[1]) << "\n";
    }
  }
  out.close();
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(br.out_dir, br.resolved, "complete", wall);
  return 0;
}

struct DensityOpts {
  std::string run_dir;
  std::string point_text;
  double t = 0.0;
  double dt = 1e-3;
  bool euler = false;
  std::string div = "exact_fd";
  double fd_step = 1e-5;
  double alpha = 1e-3;
  int m_draws = 8;
};

int do_density(const DensityOpts& d) {
  RunConfig cfg = read_manifest_config(d.run_dir + "/manifest.json");
  BuiltRun br = build_run(cfg);
  const ScoreTimeline tl = ScoreTimeline::load_dir(d.run_dir + "/checkpoints");
  const FlowField flow = flow_from_timeline(br.sys, tl);

  const std::vector<double> coords = parse_number_list(d.point_text, "--point");
  require(static_cast<Index>(coords.size()) == br.sys.dim,
          "--point: expected " + std::to_string(br.sys.dim) + " coordinates");
  Matrix pts = Eigen::Map<const Vector>(coords.data(), br.sys.dim);

  GaussianState rho0;
  rho0.t = 0.0;
  rho0.m = br.engine.mean0.size() > 0 ? br.engine.mean0 : Vector::Zero(br.sys.dim);
  rho0.C = br.engine.sigma0 * br.engine.sigma0 * Matrix::Identity(br.sys.dim, br.sys.dim);

  DensityOptions opt;
  opt.dt = d.dt;
  opt.rk4 = !d.euler;
  if (d.div == "exact_fd")
    opt.div_mode = DivMode::ExactFd;
  else if (d.div == "doubling")
    opt.div_mode = DivMode::Doubling;
  else
    throw std::invalid_argument("--div: expected exact_fd|doubling, got '" + d.div + "'");
  opt.fd_step = d.fd_step;
  opt.alpha = d.alpha;
  opt.m_draws = d.m_draws;
  opt.seed = br.engine.seed;

  const DensityResult r = density_eval(flow, rho0, pts, d.t, opt)[0];
  std::cout << fmt(d.t);
  for (Index i = 0; i < pts.rows(); ++i) std::cout << "," << fmt(pts(i, 0));
  std::cout << "," << fmt(r.rho) << "," << fmt(r.log_rho) << "\n";
  return 0;
}

struct KdeOpts {
  std::string samples_path;
  std::string out_path;
  Index nx = 64, ny = 64;
  Index xcoord = 0, ycoord = 1;
  double xmin = kNaN, xmax = kNaN, ymin = kNaN, ymax = kNaN;
  double bandwidth_scale = 1.0;
};

int do_kde(const KdeOpts& k) {
  const Matrix X = read_samples_csv(k.samples_path);
  require(k.xcoord >= 0 && k.xcoord < X.rows() && k.ycoord >= 0 && k.ycoord < X.rows(),
          "kde: coordinate index out of range");
  Matrix pts(2, X.cols());
  pts.row(0) = X.row(k.xcoord);
  pts.row(1) = X.row(k.ycoord);

  const auto axis_range = [](const Eigen::RowVectorXd& v, double lo, double hi) {
    if (std::isnan(lo) || std::isnan(hi)) {
      lo = v.minCoeff();
      hi = v.maxCoeff();
      const double pad = std::max(0.05 * (hi - lo), 1e-3);
      lo -= pad;
      hi += pad;
    }
    return std::pair<double, double>(lo, hi);
  };
  const auto [xmin, xmax] = axis_range(pts.row(0), k.xmin, k.xmax);
  const auto [ymin, ymax] = axis_range(pts.row(1), k.ymin, k.ymax);

  const KdeGrid grid =
      kde_grid(pts, k.nx, k.ny, xmin, xmax, ymin, ymax, k.bandwidth_scale);
  write_kde_csv(k.out_path, grid);
  return 0;
}

int do_diagnose(const std::string& run_dir) {
  RunConfig cfg = read_manifest_config(run_dir + "/manifest.json");
  BuiltRun br = build_run(cfg);
  const ScoreTimeline tl = ScoreTimeline::load_dir(run_dir + "/checkpoints");
  const FlowField flow = flow_from_timeline(br.sys, tl);

  std::ifstream tf(run_dir + "/snapshots/times.csv");
  require(tf.good(), "diagnose: missing " + run_dir + "/snapshots/times.csv");
  std::string line;
  std::getline(tf, line);  // header
  std::vector<DiagnosticsRecord> rows;
  while (std::getline(tf, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    require(comma != std::string::npos, "diagnose: malformed times.csv line '" + line + "'");
    const size_t k = std::stoul(line.substr(0, comma));
    const double t = std::stod(line.substr(comma + 1));

    const Matrix X = read_samples_csv(run_dir + "/snapshots/" + snapshot_name(k));
    const Matrix S = tl.nearest(t).score_full(X);
    const Matrix V = flow.velocity(t, X);

    DiagnosticsRecord r;
    r.t = t;
    r.dHdt = entropy_rate(S, V);
    r.cov_trace = empirical_moments(X).cov.trace();
    if (br.hooks.score) {
      const Matrix Sref = br.hooks.score(t, X);
      const double denom = Sref.squaredNorm();
      if (denom > 0) r.fisher_train = (S - Sref).squaredNorm() / denom;
    }
    rows.push_back(r);
  }
  write_diagnostics_csv(run_dir + "/diagnostics_recomputed.csv", rows);
  return 0;
}

}  // namespace

void write_samples_csv(const std::string& path, const Matrix& X) {
  std::ofstream out(path);
  require(out.good(), "cannot open " + path);
  for (Index b = 0; b < X.cols(); ++b) {
    for (Index i = 0; i < X.rows(); ++i) {
      if (i) out << ",";
      out << fmt(X(i, b));
    }
    out << "\n";
  }
}

Matrix read_samples_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rows.push_back(parse_number_list(line, path));
    require(rows.back().size() == rows.front().size(), path + ": ragged rows");
  }
  require(!rows.empty(), path + ": no samples");
  Matrix X(static_cast<Index>(rows.front().size()), static_cast<Index>(rows.size()));
  for (size_t b = 0; b < rows.size(); ++b)
    for (size_t i = 0; i < rows[b].size(); ++i)
      X(static_cast<Index>(i), static_cast<Index>(b)) = rows[b][i];
  return X;
}

int run_main(int argc, const char* const* argv) {
  CLI::App app{"Deterministic particle transport for Fokker-Planck equations"};
  app.require_subcommand(1);

  CommonOpts common;
  CLI::App* solve = app.add_subcommand("solve", "transport with a score learned step by step");
  CLI::App* sde = app.add_subcommand("sde", "Euler-Maruyama stochastic reference");
  CLI::App* noisefree = app.add_subcommand("noisefree", "drift-only transport (no diffusion term)");
  CLI::App* baseline = app.add_subcommand(
      "baseline-sde-train", "train the score on SDE samples, transport with it");
  CLI::App* oracle = app.add_subcommand("oracle", "closed-form Gaussian trajectory tables");
  for (CLI::App* cmd : {solve, sde, noisefree, baseline, oracle}) add_common(cmd, common);

  DensityOpts density;
  CLI::App* density_cmd =
      app.add_subcommand("density", "pointwise transported density from a stored run");
  density_cmd->add_option("--checkpoint-dir", density.run_dir, "run output directory")->required();
  density_cmd->add_option("--point", density.point_text, "comma-separated coordinates")->required();
  density_cmd->add_option("--time", density.t, "query time")->required();
  density_cmd->add_option("--dt", density.dt, "backward-flow step");
  density_cmd->add_flag("--euler", density.euler, "use Euler for the backward flow");
  density_cmd->add_option("--div", density.div, "divergence estimator: exact_fd|doubling");
  density_cmd->add_option("--fd-step", density.fd_step, "finite-difference step");
  density_cmd->add_option("--alpha", density.alpha, "doubling scale");
  density_cmd->add_option("--m-draws", density.m_draws, "doubling draws per stage");

  KdeOpts kde;
  CLI::App* kde_cmd = app.add_subcommand("kde", "kernel density grid from a samples CSV");
  kde_cmd->add_option("--samples", kde.samples_path, "samples CSV (one row per sample)")
      ->required();
  kde_cmd->add_option("--out", kde.out_path, "output grid CSV")->required();
  kde_cmd->add_option("--nx", kde.nx, "grid points in x");
  kde_cmd->add_option("--ny", kde.ny, "grid points in y");
  kde_cmd->add_option("--xcoord", kde.xcoord, "sample coordinate for the x axis");
  kde_cmd->add_option("--ycoord", kde.ycoord, "sample coordinate for the y axis");
  kde_cmd->add_option("--xmin", kde.xmin, "x range (default: data range + 5%)");
  kde_cmd->add_option("--xmax", kde.xmax, "");
  kde_cmd->add_option("--ymin", kde.ymin, "");
  kde_cmd->add_option("--ymax", kde.ymax, "");
  kde_cmd->add_option("--bandwidth-scale", kde.bandwidth_scale, "multiplier on Scott's rule");

  std::string diagnose_dir;
  CLI::App* diagnose_cmd =
      app.add_subcommand("diagnose", "recompute diagnostics from stored snapshots");
  diagnose_cmd->add_option("--dir", diagnose_dir, "run output directory")->required();

  CLI::App* presets_cmd = app.add_subcommand("presets", "list the named presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (app.got_subcommand(solve)) return do_run("solve", common);
    if (app.got_subcommand(sde)) return do_run("sde", common);
    if (app.got_subcommand(noisefree)) return do_run("noisefree", common);
    if (app.got_subcommand(baseline)) return do_run("baseline-sde-train", common);
    if (app.got_subcommand(oracle)) return do_oracle(common);
    if (app.got_subcommand(density_cmd)) return do_density(density);
    if (app.got_subcommand(kde_cmd)) return do_kde(kde);
    if (app.got_subcommand(diagnose_cmd)) return do_diagnose(diagnose_dir);
    if (app.got_subcommand(presets_cmd)) {
      for (const std::string& name : preset_names()) std::cout << name << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 1;
}

}  // namespace sbtm
