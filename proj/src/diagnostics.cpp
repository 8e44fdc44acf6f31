#include "sbtm/diagnostics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sbtm {
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_diagnostics_csv(const std::string& path, const std::vector<DiagnosticsRecord>& rows) {
  std::ofstream out(path);
  require(out.good(), "write_diagnostics_csv: cannot open " + path);
  out << "t,H,dHdt,kl_inc,kl_total,fisher_train,fisher_sde,cov_trace,loss,opt_steps\n";
  for (const auto& r : rows) {
    out << fmt(r.t) << ',' << fmt(r.H) << ',' << fmt(r.dHdt) << ',' << fmt(r.kl_inc) << ','
        << fmt(r.kl_total) << ',' << fmt(r.fisher_train) << ',' << fmt(r.fisher_sde) << ','
        << fmt(r.cov_trace) << ',' << fmt(r.loss) << ',' << r.opt_steps << '\n';
  }
}

std::vector<DiagnosticsRecord> read_diagnostics_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "read_diagnostics_csv: cannot open " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<DiagnosticsRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    require(cells.size() == 10, "read_diagnostics_csv: malformed row");
    DiagnosticsRecord r;
    r.t = std::stod(cells[0]);
    r.H = std::stod(cells[1]);
    r.dHdt = std::stod(cells[2]);
    r.kl_inc = std::stod(cells[3]);
    r.kl_total = std::stod(cells[4]);
    r.fisher_train = std::stod(cells[5]);
    r.fisher_sde = std::stod(cells[6]);
    r.cov_trace = std::stod(cells[7]);
    r.loss = std::stod(cells[8]);
    r.opt_steps = std::stoi(cells[9]);
    rows.push_back(r);
  }
  return rows;
}

EmpiricalMoments empirical_moments(const Matrix& X) {
  require(X.cols() >= 2, "empirical_moments: need at least two samples");
  EmpiricalMoments em;
  em.mean = X.rowwise().mean();
  Matrix U = X;
  U.colwise() -= em.mean;
  em.cov = (U * U.transpose()) / static_cast<double>(X.cols() - 1);
  return em;
}

std::vector<double> entropy_trace_from_rates(double H0, const std::vector<double>& t,
                                             const std::vector<double>& rates) {
  require(t.size() == rates.size() && !t.empty(), "entropy_trace_from_rates: shape mismatch");
  std::vector<double> H(t.size());
  H[0] = H0;
  for (size_t k = 1; k < t.size(); ++k)
    H[k] = H[k - 1] + 0.5 * (rates[k - 1] + rates[k]) * (t[k] - t[k - 1]);
  return H;
}

double entropy_rate(const Matrix& S_full, const Matrix& V) {
  require(S_full.rows() == V.rows() && S_full.cols() == V.cols(), "entropy_rate: shape mismatch");
  return -(S_full.array() * V.array()).sum() / static_cast<double>(S_full.cols());
}

double kl_bound_increment(const Matrix& S_full, const Matrix& G_full, const Matrix& sigma,
                          double dt) {
  require(S_full.rows() == G_full.rows() && S_full.cols() == G_full.cols(),
          "kl_bound_increment: shape mismatch");
  const Matrix diff = sigma.transpose() * (S_full - G_full);
  return 0.5 * diff.squaredNorm() / static_cast<double>(S_full.cols()) * dt;
}

Matrix FlowField::velocity(double t, const Matrix& X) const {
  const Matrix B = sys->drift(t, X);
  const Matrix S = score(t, X);
  if (static_cast<Index>(coords.size()) == sys->dim) return B - sys->D * S;
  return B - sys->D * scatter_rows(S, coords, sys->dim);
}

FlowField flow_from_timeline(const SystemSpec& sys, const ScoreTimeline& tl) {
  FlowField f;
  f.sys = &sys;
  f.coords = tl.nearest(0.0).score_coords();
  f.score = [&tl](double t, const Matrix& X) { return tl.nearest(t).score(X); };
  return f;
}

FlowField flow_from_gaussian_path(const SystemSpec& sys, const GaussianPath& path) {
  FlowField f;
  f.sys = &sys;
  f.coords.resize(static_cast<size_t>(sys.dim));
  for (Index i = 0; i < sys.dim; ++i) f.coords[static_cast<size_t>(i)] = i;
  f.score = [&path](double t, const Matrix& X) { return path.score(t, X); };
  return f;
}

namespace {

// divergence of the flow velocity at each column of Y, batched over columns
Vector velocity_divergence(const FlowField& flow, double t, const Matrix& Y,
                           const DensityOptions& opt, std::uint64_t stage_key) {
  const Index d = Y.rows(), B = Y.cols();
  if (opt.div_mode == DivMode::ExactFd) {
    require(d <= 4, "density_eval: exact divergence restricted to dim <= 4, use doubling");
    const double h = opt.fd_step;
    Matrix pts(d, 2 * d * B);
    for (Index a = 0; a < d; ++a) {
      pts.middleCols(2 * a * B, B) = Y;
      pts.middleCols(2 * a * B, B).row(a).array() += h;
      pts.middleCols((2 * a + 1) * B, B) = Y;
      pts.middleCols((2 * a + 1) * B, B).row(a).array() -= h;
    }
    const Matrix V = flow.velocity(t, pts);
    Vector div = Vector::Zero(B);
    for (Index a = 0; a < d; ++a)
      div += ((V.middleCols(2 * a * B, B).row(a) - V.middleCols((2 * a + 1) * B, B).row(a)) /
              (2.0 * h))
                 .transpose();
    return div;
  }
  // doubling estimator averaged over m_draws frozen draws per stage
  require(opt.m_draws >= 1, "density_eval: m_draws >= 1");
  const rng::CounterRng gen(opt.seed, rng::Stream::Divergence, stage_key);
  Vector div = Vector::Zero(B);
  for (int m = 0; m < opt.m_draws; ++m) {
    const Matrix Xi =
        gen.normal_matrix(d, B, static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(d * B));
    Matrix pts(d, 2 * B);
    pts.leftCols(B) = Y + opt.alpha * Xi;
    pts.rightCols(B) = Y - opt.alpha * Xi;
    const Matrix V = flow.velocity(t, pts);
    div += ((V.leftCols(B) - V.rightCols(B)).array() * Xi.array()).colwise().sum().matrix().transpose() /
           (2.0 * opt.alpha);
  }
  return div / static_cast<double>(opt.m_draws);
}

}  // namespace

std::vector<DensityResult> density_eval(const FlowField& flow, const GaussianState& rho0,
                                        const Matrix& points, double t,
                                        const DensityOptions& opt) {
  require(points.rows() == flow.sys->dim, "density_eval: point dim mismatch");
  require(t >= 0.0, "density_eval: t >= 0");
  require(opt.dt > 0.0, "density_eval: dt > 0");
  const Index B = points.cols();
  Matrix Y = points;
  Vector A = Vector::Zero(B);  // integral of div v along tau from t down to 0
  double tau = t;
  std::uint64_t stage = 0;
  while (tau > 1e-12) {
    const double h = -std::min(opt.dt, tau);
    if (!opt.rk4) {
      const Matrix V = flow.velocity(tau, Y);
      A += h * velocity_divergence(flow, tau, Y, opt, stage++);
      Y += h * V;
    } else {
      // RK4 on the augmented state (Y, A), Adot = div v(tau, Y)
      const Matrix k1 = flow.velocity(tau, Y);
      const Vector a1 = velocity_divergence(flow, tau, Y, opt, stage++);
      const Matrix Y2 = Y + (h / 2) * k1;
      const Matrix k2 = flow.velocity(tau + h / 2, Y2);
      const Vector a2 = velocity_divergence(flow, tau + h / 2, Y2, opt, stage++);
      const Matrix Y3 = Y + (h / 2) * k2;
      const Matrix k3 = flow.velocity(tau + h / 2, Y3);
      const Vector a3 = velocity_divergence(flow, tau + h / 2, Y3, opt, stage++);
      const Matrix Y4 = Y + h * k3;
      const Matrix k4 = flow.velocity(tau + h, Y4);
      const Vector a4 = velocity_divergence(flow, tau + h, Y4, opt, stage++);
      Y += (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
      A += (h / 6) * (a1 + 2 * a2 + 2 * a3 + a4);
    }
    tau += h;
    if (!Y.allFinite()) throw std::runtime_error("density_eval: backward flow left numerical range");
  }
  std::vector<DensityResult> out(static_cast<size_t>(B));
  for (Index b = 0; b < B; ++b) {
    DensityResult& r = out[static_cast<size_t>(b)];
    r.x0 = Y.col(b);
    r.div_integral = -A[b];  // A integrated from t to 0 equals minus the forward integral
    r.log_rho = gaussian_logpdf(rho0, r.x0) - r.div_integral;
    r.rho = std::exp(r.log_rho);
  }
  return out;
}

Matrix probability_current(const FlowField& flow, const GaussianState& rho0, const Matrix& points,
                           double t, const DensityOptions& opt) {
  const auto dens = density_eval(flow, rho0, points, t, opt);
  Matrix J = flow.velocity(t, points);
  for (Index b = 0; b < points.cols(); ++b) J.col(b) *= dens[static_cast<size_t>(b)].rho;
  return J;
}

KdeGrid kde_grid(const Matrix& pts, Index nx, Index ny, double xmin, double xmax, double ymin,
                 double ymax, double bandwidth_scale) {
  require(pts.rows() == 2, "kde_grid: expects 2 x n points");
  require(nx >= 2 && ny >= 2 && xmax > xmin && ymax > ymin, "kde_grid: bad grid spec");
  const Index n = pts.cols();
  require(n >= 1, "kde_grid: empty sample set");
  // Scott's rule per coordinate
  const double scott = std::pow(static_cast<double>(n), -1.0 / 6.0);
  double hx, hy;
  if (n >= 2) {
    const EmpiricalMoments em = empirical_moments(pts);
    hx = std::sqrt(em.cov(0, 0)) * scott * bandwidth_scale;
    hy = std::sqrt(em.cov(1, 1)) * scott * bandwidth_scale;
  } else {
    hx = hy = bandwidth_scale;
  }
  require(hx > 0 && hy > 0, "kde_grid: degenerate bandwidth");
  KdeGrid g;
  g.xmin = xmin;
  g.xmax = xmax;
  g.ymin = ymin;
  g.ymax = ymax;
  g.nx = nx;
  g.ny = ny;
  // separable product kernel: density = KX * KY^T / n
  Matrix KX(nx, n), KY(ny, n);
  const double cx = 1.0 / (std::sqrt(2.0 * M_PI) * hx);
  const double cy = 1.0 / (std::sqrt(2.0 * M_PI) * hy);
  for (Index i = 0; i < nx; ++i) {
    const double gx = xmin + (xmax - xmin) * static_cast<double>(i) / static_cast<double>(nx - 1);
    KX.row(i) = (-0.5 * ((pts.row(0).array() - gx) / hx).square()).exp() * cx;
  }
  for (Index j = 0; j < ny; ++j) {
    const double gy = ymin + (ymax - ymin) * static_cast<double>(j) / static_cast<double>(ny - 1);
    KY.row(j) = (-0.5 * ((pts.row(1).array() - gy) / hy).square()).exp() * cy;
  }
  g.density = (KX * KY.transpose()) / static_cast<double>(n);
  return g;
}

void write_kde_csv(const std::string& path, const KdeGrid& grid) {
  std::ofstream out(path);
  require(out.good(), "write_kde_csv: cannot open " + path);
  out << fmt(grid.xmin) << ',' << fmt(grid.xmax) << ',' << fmt(grid.ymin) << ',' << fmt(grid.ymax)
      << ',' << grid.nx << ',' << grid.ny << '\n';
  for (Index i = 0; i < grid.nx; ++i) {
    for (Index j = 0; j < grid.ny; ++j) {
      out << fmt(grid.density(i, j)) << (j + 1 < grid.ny ? ',' : '\n');
    }
  }
}

KdeGrid read_kde_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "read_kde_csv: cannot open " + path);
  std::string line;
  std::getline(in, line);
  std::stringstream hs(line);
  std::string cell;
  std::vector<std::string> head;
  while (std::getline(hs, cell, ',')) head.push_back(cell);
  require(head.size() == 6, "read_kde_csv: malformed header");
  KdeGrid g;
  g.xmin = std::stod(head[0]);
  g.xmax = std::stod(head[1]);
  g.ymin = std::stod(head[2]);
  g.ymax = std::stod(head[3]);
  g.nx = std::stoi(head[4]);
  g.ny = std::stoi(head[5]);
  g.density.resize(g.nx, g.ny);
  for (Index i = 0; i < g.nx; ++i) {
    require(static_cast<bool>(std::getline(in, line)), "read_kde_csv: truncated grid");
    std::stringstream ss(line);
    for (Index j = 0; j < g.ny; ++j) {
      require(static_cast<bool>(std::getline(ss, cell, ',')), "read_kde_csv: malformed row");
      g.density(i, j) = std::stod(cell);
    }
  }
  return g;
}

double kde_l1_distance(const KdeGrid& a, const KdeGrid& b) {
  require(a.nx == b.nx && a.ny == b.ny, "kde_l1_distance: grid shape mismatch");
  return (a.density - b.density).array().abs().mean();
}

}  // namespace sbtm
