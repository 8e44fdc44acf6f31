#include <cmath>

#include "doctest.h"
#include "sbtm/losses.hpp"

using namespace sbtm;

namespace {

// the exact score of N(0,1), exposed as a paramless model
GaussianScore standard_normal_score() {
  GaussianState st;
  st.m = Vector::Zero(1);
  st.C = Matrix::Identity(1, 1);
  return GaussianScore(st);
}

double fd_loss_grad_entry(const std::function<double()>& loss_value, double& param, double h) {
  const double keep = param;
  param = keep + h;
  const double fp = loss_value();
  param = keep - h;
  const double fm = loss_value();
  param = keep;
  return (fp - fm) / (2.0 * h);
}

// compare every entry of the analytic parameter gradient against central
// differences of the loss value under the same frozen noise
void check_loss_grads(ScoreModel& model, const std::function<LossValue()>& eval, double h,
                      double tol) {
  const LossValue base = eval();
  const auto params = model.params();
  REQUIRE(params.size() == base.grads.size());
  for (size_t p = 0; p < params.size(); ++p)
    for (size_t l = 0; l < params[p]->layers.size(); ++l) {
      Matrix& W = params[p]->layers[l].W;
      for (Index j = 0; j < W.cols(); ++j)
        for (Index i = 0; i < W.rows(); ++i) {
          const double fd =
              fd_loss_grad_entry([&] { return eval().loss; }, W(i, j), h);
          CHECK(std::abs(base.grads[p].layers[l].W(i, j) - fd) <=
                tol * std::max(1.0, std::abs(fd)));
        }
      Vector& b = params[p]->layers[l].b;
      for (Index i = 0; i < b.size(); ++i) {
        const double fd = fd_loss_grad_entry([&] { return eval().loss; }, b[i], h);
        CHECK(std::abs(base.grads[p].layers[l].b[i] - fd) <= tol * std::max(1.0, std::abs(fd)));
      }
    }
}

}  // namespace

TEST_CASE("loss enums parse and reject unknown names") {
  CHECK(loss_kind_from_string("denoising") == LossConfig::Kind::Denoising);
  CHECK(loss_kind_from_string("explicit") == LossConfig::Kind::Explicit);
  CHECK_THROWS(loss_kind_from_string("implicit"));
  CHECK(loss_div_from_string("doubling") == LossConfig::Div::Doubling);
  CHECK(loss_div_from_string("exact_fd") == LossConfig::Div::ExactFd);
  CHECK_THROWS(loss_div_from_string("hutchinson"));
}

TEST_CASE("doubling divergence: cubic bias is exactly alpha^2 at unit probe") {
  const auto cubic = [](const Vector& x) { return Vector(x.array().cube().matrix()); };
  const Vector x = Vector::Constant(1, 1.0);
  const Vector xi = Vector::Constant(1, 1.0);
  for (double alpha : {0.1, 0.05, 0.025}) {
    const double est = divergence_doubling(cubic, x, alpha, xi);
    // [(1+a)^3 - (1-a)^3]/(2a) = 3 + a^2: the bias is alpha^2 on the dot
    CHECK(std::abs(est - 3.0 - alpha * alpha) < 1e-12);
  }
  CHECK_THROWS(divergence_doubling(cubic, x, 0.0, xi));
  CHECK_THROWS(divergence_doubling(cubic, x, 0.1, Vector::Zero(2)));
}

TEST_CASE("doubling divergence: unbiased for linear fields") {
  Matrix A(2, 2);
  A << 1.5, -0.3, 0.7, 2.0;
  const auto lin = [&A](const Vector& x) { return Vector(A * x); };
  const Vector x = (Vector(2) << 0.4, -1.1).finished();
  const rng::CounterRng gen(71, rng::Stream::Scratch);
  const int n = 20000;
  double sum = 0.0, sumsq = 0.0;
  for (int k = 0; k < n; ++k) {
    const Vector xi = gen.normal_vector(2, static_cast<std::uint64_t>(2 * k));
    const double est = divergence_doubling(lin, x, 0.1, xi);
    // single draw is xi^T A xi; exact for this xi up to rounding
    CHECK(est == doctest::Approx(xi.dot(A * xi)).epsilon(1e-10));
    sum += est;
    sumsq += est * est;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sumsq / n - mean * mean) / n);
  CHECK(std::abs(mean - A.trace()) < 5.0 * se);
}

TEST_CASE("central-difference divergence on a polynomial field") {
  const auto field = [](const Vector& x) {
    return (Vector(2) << x[0] * x[0] * x[1], x[0] * x[1] * x[1] * x[1]).finished();
  };
  const Vector x = (Vector(2) << 1.5, -0.7).finished();
  const double exact = 2.0 * x[0] * x[1] + 3.0 * x[0] * x[1] * x[1];
  CHECK(exact_divergence_fd(field, x, 1e-5) == doctest::Approx(exact).epsilon(1e-8));
  CHECK_THROWS(exact_divergence_fd(field, Vector::Zero(11), 1e-5));
  CHECK_THROWS(exact_divergence_fd(field, x, 0.0));
}

TEST_CASE("denoising loss value matches the hand-written objective") {
  GaussianScore model = standard_normal_score();
  const rng::CounterRng data(81, rng::Stream::InitSamples);
  const rng::CounterRng noise(82, rng::Stream::LossNoise);
  const Matrix X = data.normal_matrix(1, 64);
  const Matrix Xi = noise.normal_matrix(1, 64);  // same counters the loss uses
  LossConfig cfg;
  cfg.alpha = 0.2;

  // antithetic: mean over the +/- pair of |s(x +- a xi) +- xi/a|^2 with s = -x
  double expect = 0.0;
  for (Index b = 0; b < 64; ++b) {
    const double xp = X(0, b) + cfg.alpha * Xi(0, b), xm = X(0, b) - cfg.alpha * Xi(0, b);
    const double rp = -xp + Xi(0, b) / cfg.alpha, rm = -xm - Xi(0, b) / cfg.alpha;
    expect += rp * rp + rm * rm;
  }
  expect /= 2.0 * 64;
  const LossValue out = denoising_loss_and_grad(model, X, cfg, noise);
  CHECK(out.loss == doctest::Approx(expect).epsilon(1e-12));
  CHECK(out.grads.empty());

  cfg.antithetic = false;
  double one = 0.0;
  for (Index b = 0; b < 64; ++b) {
    const double rp = -(X(0, b) + cfg.alpha * Xi(0, b)) + Xi(0, b) / cfg.alpha;
    one += rp * rp;
  }
  one /= 64;
  CHECK(denoising_loss_and_grad(model, X, cfg, noise).loss == doctest::Approx(one).epsilon(1e-12));
}

TEST_CASE("denoising loss: linear minimizer shows the alpha^2 shrinkage") {
  // population minimizer over linear scores s(x) = w x for x ~ N(0, s0^2) is
  // w* = -1/(s0^2 + alpha^2); minimize the empirical loss under frozen noise
  const double sigma0 = 0.8, alpha = 0.4;
  DirectScore model =
      DirectScore::init(1, {}, {0}, {0}, false, rng::CounterRng(85, rng::Stream::WeightInit));
  const Matrix X = sigma0 * rng::CounterRng(86, rng::Stream::InitSamples).normal_matrix(1, 8000);
  const rng::CounterRng noise(87, rng::Stream::LossNoise);
  LossConfig cfg;
  cfg.alpha = alpha;

  AdamState st;
  AdamConfig adam;
  adam.lr = 3e-2;
  auto params = model.params();
  for (int it = 0; it < 3000; ++it) {
    LossValue v = denoising_loss_and_grad(model, X, cfg, noise);
    adam_step(params, v.grads, st, adam);
  }
  const double w = model.params()[0]->layers[0].W(0, 0);
  const double wstar = -1.0 / (sigma0 * sigma0 + alpha * alpha);
  // statistical tolerance: the empirical quadratic sits O(1/sqrt(n)) off
  CHECK(std::abs(w - wstar) < 0.05 * std::abs(wstar));
}

TEST_CASE("denoising loss: parameter gradients under frozen noise") {
  DirectScore model = DirectScore::init(1, {6}, {0}, {0}, false,
                                        rng::CounterRng(91, rng::Stream::WeightInit));
  const Matrix X = rng::CounterRng(92, rng::Stream::InitSamples).normal_matrix(1, 16);
  const rng::CounterRng noise(93, rng::Stream::LossNoise);
  LossConfig cfg;
  cfg.alpha = 0.3;
  check_loss_grads(
      model, [&] { return denoising_loss_and_grad(model, X, cfg, noise); }, 1e-5, 2e-5);
}

TEST_CASE("explicit loss mean is -E|sigma^T s|^2 at the true score") {
  // integration by parts: E[|s|_D^2 + 2 div(D s)] = -E[|sigma^T s|^2] = -1
  // for N(0,1) with D = 1; the exact-divergence estimator contributes
  // x^2 - 2 per sample, so SE = sqrt(Var(x^2)/n)
  GaussianScore model = standard_normal_score();
  const Matrix X = rng::CounterRng(95, rng::Stream::InitSamples).normal_matrix(1, 40000);
  const Matrix sigma = Matrix::Identity(1, 1);
  LossConfig cfg;
  cfg.kind = LossConfig::Kind::Explicit;
  cfg.divergence = LossConfig::Div::ExactFd;
  cfg.fd_step = 1e-5;
  const rng::CounterRng noise(96, rng::Stream::LossNoise);
  const double se = std::sqrt(2.0 / 40000.0);
  const LossValue fd = explicit_loss_and_grad(model, X, sigma, cfg, noise);
  CHECK(std::abs(fd.loss + 1.0) < 5.0 * se);

  cfg.divergence = LossConfig::Div::Doubling;
  cfg.alpha = 0.1;
  // doubling adds xi-variance: per-sample x^2 - 2 xi^2, Var = 2 + 8
  const LossValue db = explicit_loss_and_grad(model, X, sigma, cfg, noise);
  CHECK(std::abs(db.loss + 1.0) < 5.0 * std::sqrt(10.0 / 40000.0));

  // linear score: doubling divergence has no alpha bias, so the two
  // estimators differ only through the xi sampling
  CHECK(std::abs(db.loss - fd.loss) < 5.0 * std::sqrt(8.0 / 40000.0));
}

TEST_CASE("explicit loss: parameter gradients for both divergence modes") {
  DirectScore model = DirectScore::init(2, {5}, {0, 1}, {0, 1}, false,
                                        rng::CounterRng(101, rng::Stream::WeightInit));
  const Matrix X = rng::CounterRng(102, rng::Stream::InitSamples).normal_matrix(2, 12);
  Matrix sigma(2, 2);
  sigma << 0.9, 0.0, 0.2, 0.7;
  const rng::CounterRng noise(103, rng::Stream::LossNoise);
  LossConfig cfg;
  cfg.kind = LossConfig::Kind::Explicit;

  cfg.divergence = LossConfig::Div::Doubling;
  cfg.alpha = 0.25;
  check_loss_grads(
      model, [&] { return explicit_loss_and_grad(model, X, sigma, cfg, noise); }, 1e-5, 2e-5);

  cfg.divergence = LossConfig::Div::ExactFd;
  cfg.fd_step = 1e-4;
  check_loss_grads(
      model, [&] { return explicit_loss_and_grad(model, X, sigma, cfg, noise); }, 1e-5, 2e-5);
}

TEST_CASE("explicit loss on a restricted coordinate: swimmer-style velocity row") {
  // score only coordinate 1; sigma_sub is the 1x1 noise factor on that row
  DirectScore model = DirectScore::init(2, {4}, {0, 1}, {1}, true,
                                        rng::CounterRng(105, rng::Stream::WeightInit));
  const Matrix X = rng::CounterRng(106, rng::Stream::InitSamples).normal_matrix(2, 10);
  const Matrix sigma = Matrix::Constant(1, 1, std::sqrt(0.1));
  const rng::CounterRng noise(107, rng::Stream::LossNoise);
  LossConfig cfg;
  cfg.kind = LossConfig::Kind::Explicit;
  cfg.divergence = LossConfig::Div::Doubling;
  cfg.alpha = 0.2;
  check_loss_grads(
      model, [&] { return explicit_loss_and_grad(model, X, sigma, cfg, noise); }, 1e-5, 2e-5);

  Matrix bad(2, 1);
  bad.setOnes();
  CHECK_THROWS(explicit_loss_and_grad(model, X, bad, cfg, noise));
}

TEST_CASE("score_matching_loss dispatches on kind") {
  GaussianScore model = standard_normal_score();
  const Matrix X = rng::CounterRng(111, rng::Stream::InitSamples).normal_matrix(1, 32);
  const Matrix sigma = Matrix::Identity(1, 1);
  const rng::CounterRng noise(112, rng::Stream::LossNoise);
  LossConfig cfg;
  cfg.kind = LossConfig::Kind::Denoising;
  CHECK(score_matching_loss(model, X, sigma, cfg, noise).loss ==
        denoising_loss_and_grad(model, X, cfg, noise).loss);
  cfg.kind = LossConfig::Kind::Explicit;
  cfg.divergence = LossConfig::Div::ExactFd;
  CHECK(score_matching_loss(model, X, sigma, cfg, noise).loss ==
        explicit_loss_and_grad(model, X, sigma, cfg, noise).loss);
}
