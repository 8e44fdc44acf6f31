#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "sbtm/diagnostics.hpp"

using namespace sbtm;

namespace {

// dense analytic path of the 1-D relaxation Gamma = 1, D = 1, C0 = 0.25
GaussianPath scalar_relaxation_path(double T, double dt) {
  OuProblem pb;
  pb.Gamma = Matrix::Identity(1, 1);
  pb.D = Matrix::Identity(1, 1);
  pb.b = [](double) -> Vector { return Vector::Zero(1); };
  GaussianState init;
  init.m = Vector::Zero(1);
  init.C = Matrix::Constant(1, 1, 0.25);
  const int n = static_cast<int>(std::lround(T / dt));
  std::vector<double> times;
  for (int k = 0; k <= n; ++k) times.push_back(k * dt);
  return GaussianPath(ou_moments_integrate(pb, init, times, dt));
}

SystemSpec scalar_ou_system() {
  const Matrix eye = Matrix::Identity(1, 1);
  const Vector zero = Vector::Zero(1);
  return ou_system(eye, zero, eye);
}

}  // namespace

TEST_CASE("diagnostics csv: NaN-faithful round-trip") {
  std::vector<DiagnosticsRecord> rows(2);
  rows[0].t = 0.0;
  rows[0].H = 0.72579135264472738;
  rows[0].kl_inc = 0.0;
  rows[0].kl_total = 0.0;
  rows[0].opt_steps = 3;
  rows[1].t = 1e-3;
  rows[1].dHdt = -0.123456789012345678;
  rows[1].fisher_train = 2.5e-4;
  rows[1].cov_trace = 4.5;
  rows[1].loss = -3.9;

  const std::string path = "/tmp/sbtm_test_diag.csv";
  write_diagnostics_csv(path, rows);
  const auto back = read_diagnostics_csv(path);
  REQUIRE(back.size() == 2);
  for (size_t k = 0; k < 2; ++k) {
    const auto same = [](double a, double b) {
      return (std::isnan(a) && std::isnan(b)) || a == b;
    };
    CHECK(same(back[k].t, rows[k].t));
    CHECK(same(back[k].H, rows[k].H));
    CHECK(same(back[k].dHdt, rows[k].dHdt));
    CHECK(same(back[k].kl_inc, rows[k].kl_inc));
    CHECK(same(back[k].kl_total, rows[k].kl_total));
    CHECK(same(back[k].fisher_train, rows[k].fisher_train));
    CHECK(same(back[k].fisher_sde, rows[k].fisher_sde));
    CHECK(same(back[k].cov_trace, rows[k].cov_trace));
    CHECK(same(back[k].loss, rows[k].loss));
    CHECK(back[k].opt_steps == rows[k].opt_steps);
  }
  CHECK_THROWS(read_diagnostics_csv("/tmp/sbtm_does_not_exist.csv"));
}

TEST_CASE("empirical moments: unbiased covariance on a hand case") {
  Matrix X(2, 3);
  X << 1, 2, 3, 0, 2, 4;
  const EmpiricalMoments em = empirical_moments(X);
  CHECK(em.mean[0] == 2.0);
  CHECK(em.mean[1] == 2.0);
  CHECK(em.cov(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(em.cov(1, 1) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(em.cov(0, 1) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK_THROWS(empirical_moments(Matrix::Zero(2, 1)));
}

TEST_CASE("entropy and KL step utilities on hand values") {
  const std::vector<double> t{0.0, 1.0, 3.0};
  const std::vector<double> rates{2.0, 4.0, 6.0};
  const auto H = entropy_trace_from_rates(1.0, t, rates);
  CHECK(H[0] == 1.0);
  CHECK(H[1] == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(H[2] == doctest::Approx(14.0).epsilon(1e-14));
  CHECK_THROWS(entropy_trace_from_rates(0.0, t, {1.0}));

  Matrix S(1, 2), V(1, 2);
  S << 1, 2;
  V << 3, -1;
  CHECK(entropy_rate(S, V) == doctest::Approx(-0.5).epsilon(1e-14));

  Matrix G(1, 2);
  G << 0.5, 3;
  const Matrix sigma = Matrix::Constant(1, 1, 2.0);
  // sigma^T (S - G) = (1, -2): 0.5 * mean(1, 4) * dt
  CHECK(kl_bound_increment(S, G, sigma, 0.1) == doctest::Approx(0.125).epsilon(1e-14));

  // analytic entropy trace of the scalar relaxation via the trapezoid rule
  std::vector<double> tt, rr;
  for (int k = 0; k <= 1000; ++k) {
    const double tk = k * 1e-3;
    const double C = 1.0 - 0.75 * std::exp(-2.0 * tk);
    tt.push_back(tk);
    rr.push_back(0.5 * (-2.0 * C + 2.0) / C);
  }
  const auto trace = entropy_trace_from_rates(gaussian_entropy(Matrix::Constant(1, 1, 0.25)), tt, rr);
  const double exact = gaussian_entropy(Matrix::Constant(1, 1, 1.0 - 0.75 * std::exp(-2.0)));
  CHECK(std::abs(trace.back() - exact) < 1e-5);
}

TEST_CASE("flow field: exact stationary score cancels the drift") {
  const SystemSpec sys = scalar_ou_system();
  GaussianState stat;
  stat.m = Vector::Zero(1);
  stat.C = Matrix::Identity(1, 1);
  stat.t = 0.0;
  std::vector<GaussianState> traj{stat, stat};
  traj[1].t = 1.0;
  const GaussianPath path(traj);
  const FlowField flow = flow_from_gaussian_path(sys, path);
  const Matrix X = rng::CounterRng(61, rng::Stream::Scratch).normal_matrix(1, 32);
  CHECK(flow.velocity(0.3, X).norm() == 0.0);  // b - D s = -x + x

  // stationary current vanishes with the velocity
  DensityOptions opt;
  opt.dt = 1e-2;
  const Matrix pts = (Matrix(1, 3) << -0.5, 0.0, 1.0).finished();
  const Matrix J = probability_current(flow, stat, pts, 0.5, opt);
  CHECK(J.norm() == 0.0);
}

TEST_CASE("flow field from a score timeline uses nearest checkpoints") {
  const SystemSpec sys = scalar_ou_system();
  ScoreTimeline tl;
  for (int k = 0; k < 2; ++k) {
    GaussianState st;
    st.m = Vector::Constant(1, 2.0 * k);
    st.C = Matrix::Identity(1, 1);
    tl.add(static_cast<double>(k), GaussianScore(st));
  }
  const FlowField flow = flow_from_timeline(sys, tl);
  REQUIRE(flow.coords.size() == 1);
  Matrix X(1, 1);
  X << 1.0;
  // v = -x - s = -m with s = -(x - m): t near 0 gives m=0, near 1 gives m=2
  CHECK(flow.velocity(0.1, X)(0, 0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(flow.velocity(0.9, X)(0, 0) == doctest::Approx(-2.0).epsilon(1e-14));
}

TEST_CASE("density evaluation: pointwise values against the closed form") {
  const SystemSpec sys = scalar_ou_system();
  const GaussianPath path = scalar_relaxation_path(1.0, 1e-3);
  const FlowField flow = flow_from_gaussian_path(sys, path);
  GaussianState rho0;
  rho0.m = Vector::Zero(1);
  rho0.C = Matrix::Constant(1, 1, 0.25);

  DensityOptions opt;  // rk4 + exact divergence
  const Matrix pts = (Matrix(1, 3) << 0.0, 0.7, -1.3).finished();
  const auto res = density_eval(flow, rho0, pts, 1.0, opt);
  REQUIRE(res.size() == 3);

  const double C1 = 1.0 - 0.75 * std::exp(-2.0);
  CHECK(res[0].rho == doctest::Approx(0.42087330324257899).epsilon(1e-5));
  for (size_t b = 0; b < 3; ++b) {
    const double x = pts(0, static_cast<Index>(b));
    const double exact = std::exp(-0.5 * x * x / C1) / std::sqrt(2.0 * M_PI * C1);
    CHECK(res[b].rho == doctest::Approx(exact).epsilon(1e-5));
    // backward endpoint must land on the exact preimage x0 = x sqrt(C0/C1)
    CHECK(res[b].x0[0] == doctest::Approx(x * std::sqrt(0.25 / C1)).epsilon(1e-6));
  }

  // t = 0 is the initial law itself, with no divergence accumulated
  const auto at0 = density_eval(flow, rho0, pts, 0.0, opt);
  CHECK(at0[1].div_integral == 0.0);
  CHECK(at0[1].log_rho == gaussian_logpdf(rho0, pts.col(1)));

  // frozen-draw doubling agrees with the exact divergence on this flow
  DensityOptions dopt = opt;
  dopt.div_mode = DivMode::Doubling;
  dopt.m_draws = 64;
  dopt.alpha = 1e-3;
  dopt.seed = 7;
  const auto dres = density_eval(flow, rho0, pts, 1.0, dopt);
  CHECK(dres[0].rho == doctest::Approx(res[0].rho).epsilon(3e-2));

  // exact divergence is a low-dimensional tool
  const SystemSpec big = harmonic_system(3, 0.5, 0.25, TrapPath{});
  GaussianState stat6;
  stat6.m = Vector::Zero(6);
  stat6.C = Matrix::Identity(6, 6);
  std::vector<GaussianState> traj{stat6, stat6};
  traj[1].t = 1.0;
  const GaussianPath path6(traj);
  const FlowField flow6 = flow_from_gaussian_path(big, path6);
  CHECK_THROWS(density_eval(flow6, stat6, Matrix::Zero(6, 1), 0.5, opt));
}

TEST_CASE("density integrates to one over a wide grid") {
  const SystemSpec sys = scalar_ou_system();
  const GaussianPath path = scalar_relaxation_path(1.0, 1e-3);
  const FlowField flow = flow_from_gaussian_path(sys, path);
  GaussianState rho0;
  rho0.m = Vector::Zero(1);
  rho0.C = Matrix::Constant(1, 1, 0.25);
  DensityOptions opt;
  opt.dt = 2e-3;

  const Index m = 201;
  Matrix grid(1, m);
  const double lo = -5.0, hi = 5.0, dx = (hi - lo) / (m - 1);
  for (Index k = 0; k < m; ++k) grid(0, k) = lo + k * dx;
  const auto res = density_eval(flow, rho0, grid, 1.0, opt);
  double mass = 0.0;
  for (Index k = 0; k < m; ++k)
    mass += res[static_cast<size_t>(k)].rho * ((k == 0 || k == m - 1) ? 0.5 : 1.0) * dx;
  CHECK(std::abs(mass - 1.0) < 1e-2);
}

TEST_CASE("kde: kernel values, normalization, file round-trip") {
  // single sample at the origin: the grid reads off the product kernel
  Matrix one(2, 1);
  one.setZero();
  const double h = 0.5;
  const KdeGrid g1 = kde_grid(one, 3, 3, -1, 1, -1, 1, h);
  const double center = 1.0 / (2.0 * M_PI * h * h);
  CHECK(g1.density(1, 1) == doctest::Approx(center).epsilon(1e-12));
  CHECK(g1.density(0, 1) == doctest::Approx(center * std::exp(-0.5 * (1.0 / h) * (1.0 / h)))
                                .epsilon(1e-12));

  // standard normal cloud: value at the origin near 1/(2 pi), unit mass
  const Matrix pts = rng::CounterRng(71, rng::Stream::Scratch).normal_matrix(2, 20000);
  const KdeGrid g = kde_grid(pts, 81, 81, -4, 4, -4, 4);
  const Index c = 40;
  CHECK(std::abs(g.density(c, c) - 1.0 / (2.0 * M_PI)) < 0.1 / (2.0 * M_PI));
  const double cell = (8.0 / 80) * (8.0 / 80);
  CHECK(std::abs(g.density.sum() * cell - 1.0) < 0.05);

  const std::string path = "/tmp/sbtm_test_kde.csv";
  write_kde_csv(path, g);
  const KdeGrid back = read_kde_csv(path);
  CHECK(back.nx == g.nx);
  CHECK(back.xmin == g.xmin);
  CHECK((back.density - g.density).norm() == 0.0);
  CHECK(kde_l1_distance(g, back) == 0.0);

  KdeGrid shifted = g;
  shifted.density.array() += 0.01;
  CHECK(kde_l1_distance(g, shifted) == doctest::Approx(0.01).epsilon(1e-12));
  KdeGrid other = kde_grid(pts, 11, 11, -4, 4, -4, 4);
  CHECK_THROWS(kde_l1_distance(g, other));

  CHECK_THROWS(kde_grid(Matrix::Zero(3, 4), 5, 5, -1, 1, -1, 1));
  CHECK_THROWS(kde_grid(pts, 1, 5, -1, 1, -1, 1));
}
