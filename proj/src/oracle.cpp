#include "sbtm/oracle.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <cmath>

namespace sbtm {
namespace {

void check_pd(const Matrix& C, const char* where) {
  Eigen::LLT<Matrix> llt(C);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error(std::string(where) + ": covariance lost positive definiteness");
}

double logdet_llt(const Matrix& C, const char* where) {
  Eigen::LLT<Matrix> llt(C);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error(std::string(where) + ": matrix not positive definite");
  return 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
}

}  // namespace

OuProblem OuProblem::from_system(const SystemSpec& sys, const Matrix& Gamma) {
  OuProblem pb;
  pb.Gamma = Gamma;
  pb.D = sys.D;
  const TrapPath trap = sys.trap;
  const int N = sys.particles;
  const Index dbar = sys.dbar;
  if (sys.name == "harmonic") {
    pb.b = [trap, N, dbar](double t) {
      Vector beta = trap(t);
      Vector b(N * dbar);
      for (int i = 0; i < N; ++i) b.segment(i * dbar, dbar) = beta;
      return b;
    };
  } else {
    pb.b = [d = sys.dim](double) { return Vector::Zero(d).eval(); };
  }
  return pb;
}

void ou_moments_step(const OuProblem& pb, GaussianState& st, double dt) {
  const auto dm = [&](double t, const Vector& m) -> Vector { return -pb.Gamma * (m - pb.b(t)); };
  const auto dC = [&](const Matrix& C) -> Matrix {
    return -pb.Gamma * C - C * pb.Gamma.transpose() + 2.0 * pb.D;
  };
  const double t = st.t, h = dt;
  const Vector km1 = dm(t, st.m);
  const Matrix kc1 = dC(st.C);
  const Vector km2 = dm(t + h / 2, st.m + (h / 2) * km1);
  const Matrix kc2 = dC(st.C + (h / 2) * kc1);
  const Vector km3 = dm(t + h / 2, st.m + (h / 2) * km2);
  const Matrix kc3 = dC(st.C + (h / 2) * kc2);
  const Vector km4 = dm(t + h, st.m + h * km3);
  const Matrix kc4 = dC(st.C + h * kc3);
  st.m += (h / 6) * (km1 + 2 * km2 + 2 * km3 + km4);
  st.C += (h / 6) * (kc1 + 2 * kc2 + 2 * kc3 + kc4);
  st.C = 0.5 * (st.C + st.C.transpose()).eval();
  st.t += h;
  check_pd(st.C, "ou_moments_step");
}

std::vector<GaussianState> ou_moments_integrate(const OuProblem& pb, const GaussianState& init,
                                                const std::vector<double>& times, double dt) {
  require(dt > 0, "ou_moments_integrate: dt > 0");
  std::vector<GaussianState> out;
  GaussianState st = init;
  for (double target : times) {
    require(target >= st.t - 1e-12, "ou_moments_integrate: times must be nondecreasing");
    while (st.t < target - 1e-12) {
      ou_moments_step(pb, st, std::min(dt, target - st.t));
    }
    st.t = target;
    out.push_back(st);
  }
  return out;
}

void linear_flow_step(const OuProblem& pb, GaussianState& st, Matrix& X, Matrix* G, double dt) {
  require(X.rows() == st.m.size(), "linear_flow_step: sample dim mismatch");
  struct Stage {
    Vector m;
    Matrix C, X, G;
  };
  const bool with_g = (G != nullptr);
  auto deriv = [&](double t, const Vector& m, const Matrix& C, const Matrix& Xs,
                   const Matrix& Gs) -> Stage {
    Stage d;
    const Vector bt = pb.b(t);
    d.m = -pb.Gamma * (m - bt);
    d.C = -pb.Gamma * C - C * pb.Gamma.transpose() + 2.0 * pb.D;
    Eigen::LLT<Matrix> llt(C);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("linear_flow_step: covariance not positive definite");
    const Matrix CinvD = llt.solve(pb.D);  // C^-1 D
    // Xdot = (D C^-1 - Gamma) X + Gamma b - D C^-1 m
    d.X = CinvD.transpose() * Xs - pb.Gamma * Xs;
    d.X.colwise() += pb.Gamma * bt - CinvD.transpose() * m;
    if (with_g) d.G = pb.Gamma.transpose() * Gs - CinvD * Gs;
    return d;
  };
  const double t = st.t, h = dt;
  const Matrix Gdummy;
  const Stage k1 = deriv(t, st.m, st.C, X, with_g ? *G : Gdummy);
  const Stage k2 = deriv(t + h / 2, st.m + (h / 2) * k1.m, st.C + (h / 2) * k1.C,
                         X + (h / 2) * k1.X, with_g ? Matrix(*G + (h / 2) * k1.G) : Gdummy);
  const Stage k3 = deriv(t + h / 2, st.m + (h / 2) * k2.m, st.C + (h / 2) * k2.C,
                         X + (h / 2) * k2.X, with_g ? Matrix(*G + (h / 2) * k2.G) : Gdummy);
  const Stage k4 = deriv(t + h, st.m + h * k3.m, st.C + h * k3.C, X + h * k3.X,
                         with_g ? Matrix(*G + h * k3.G) : Gdummy);
  st.m += (h / 6) * (k1.m + 2 * k2.m + 2 * k3.m + k4.m);
  st.C += (h / 6) * (k1.C + 2 * k2.C + 2 * k3.C + k4.C);
  st.C = 0.5 * (st.C + st.C.transpose()).eval();
  X += (h / 6) * (k1.X + 2 * k2.X + 2 * k3.X + k4.X);
  if (with_g) *G += (h / 6) * (k1.G + 2 * k2.G + 2 * k3.G + k4.G);
  st.t += h;
  check_pd(st.C, "linear_flow_step");
}

Matrix lyapunov_solve(const Matrix& Gamma, const Matrix& D) {
  const Index d = Gamma.rows();
  require(Gamma.cols() == d && D.rows() == d && D.cols() == d, "lyapunov_solve: shape mismatch");
  // vec(Gamma C) = (I (x) Gamma) vec C, vec(C Gamma^T) = (Gamma (x) I) vec C
  Matrix K = Matrix::Zero(d * d, d * d);
  for (Index j = 0; j < d; ++j) K.block(j * d, j * d, d, d) = Gamma;
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j)
      K.block(j * d, i * d, d, d) += Gamma(j, i) * Matrix::Identity(d, d);
  Vector rhs(d * d);
  for (Index j = 0; j < d; ++j) rhs.segment(j * d, d) = 2.0 * D.col(j);
  const Vector c = K.partialPivLu().solve(rhs);
  Matrix C(d, d);
  for (Index j = 0; j < d; ++j) C.col(j) = c.segment(j * d, d);
  C = 0.5 * (C + C.transpose()).eval();
  const double resid = (Gamma * C + C * Gamma.transpose() - 2.0 * D).norm();
  // !(resid <= tol) also rejects NaN residuals from singular Gamma
  if (!(resid <= 1e-10 * std::max(1.0, D.norm())))
    throw std::runtime_error("lyapunov_solve: residual too large");
  return C;
}

double gaussian_entropy(const Matrix& C) {
  const double d = static_cast<double>(C.rows());
  return 0.5 * d * (std::log(2.0 * M_PI) + 1.0) + 0.5 * logdet_llt(C, "gaussian_entropy");
}

Matrix gaussian_score(const GaussianState& st, const Matrix& X) {
  require(X.rows() == st.m.size(), "gaussian_score: dim mismatch");
  Eigen::LLT<Matrix> llt(st.C);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("gaussian_score: covariance not positive definite");
  Matrix U = X;
  U.colwise() -= st.m;
  return -llt.solve(U);
}

double gaussian_logpdf(const GaussianState& st, const Vector& x) {
  const Index d = st.m.size();
  Eigen::LLT<Matrix> llt(st.C);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("gaussian_logpdf: covariance not positive definite");
  const Vector u = x - st.m;
  const double maha = u.dot(llt.solve(u));
  const double logdet = 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
  return -0.5 * (d * std::log(2.0 * M_PI) + logdet + maha);
}

double fisher_relative(const std::function<Matrix(const Matrix&)>& model, const GaussianState& st,
                       const Matrix& X) {
  const Matrix ref = gaussian_score(st, X);
  const Matrix s = model(X);
  require(s.rows() == ref.rows() && s.cols() == ref.cols(), "fisher_relative: shape mismatch");
  const double denom = ref.squaredNorm();
  require(denom > 0, "fisher_relative: reference score vanishes on all samples");
  return (s - ref).squaredNorm() / denom;
}

GaussianPath::GaussianPath(std::vector<GaussianState> traj) : traj_(std::move(traj)) {
  require(traj_.size() >= 1, "GaussianPath: empty trajectory");
  if (traj_.size() >= 2) dt_ = traj_[1].t - traj_[0].t;
}

GaussianState GaussianPath::at(double t) const {
  if (traj_.size() == 1 || t <= traj_.front().t) return traj_.front();
  if (t >= traj_.back().t) return traj_.back();
  const double pos = (t - traj_.front().t) / dt_;
  const size_t k = std::min(static_cast<size_t>(pos), traj_.size() - 2);
  const double w = (t - traj_[k].t) / (traj_[k + 1].t - traj_[k].t);
  GaussianState st;
  st.t = t;
  st.m = (1.0 - w) * traj_[k].m + w * traj_[k + 1].m;
  st.C = (1.0 - w) * traj_[k].C + w * traj_[k + 1].C;
  return st;
}

Matrix GaussianPath::score(double t, const Matrix& X) const { return gaussian_score(at(t), X); }

void harmonic_moments_step(double alpha, double D_coef, const TrapPath& trap,
                           SymmetricMoments& st, double dt) {
  const int N = st.N;
  const Index dbar = st.mbar.size();
  const Matrix I = Matrix::Identity(dbar, dbar);
  const auto dm = [&](double t, const Vector& m) -> Vector { return trap(t) - m; };
  const auto dCd = [&](const Matrix& Cd, const Matrix& Co) -> Matrix {
    return 2.0 * (alpha - 1.0) * Cd - (2.0 * alpha / N) * (Cd + (N - 1.0) * Co) + 2.0 * D_coef * I;
  };
  const auto dCo = [&](const Matrix& Cd, const Matrix& Co) -> Matrix {
    return 2.0 * (alpha - 1.0) * Co - (2.0 * alpha / N) * (Cd + (N - 1.0) * Co);
  };
  const double t = st.t, h = dt;
  const Vector km1 = dm(t, st.mbar);
  const Matrix kd1 = dCd(st.Cd, st.Co), ko1 = dCo(st.Cd, st.Co);
  const Vector km2 = dm(t + h / 2, st.mbar + (h / 2) * km1);
  const Matrix kd2 = dCd(st.Cd + (h / 2) * kd1, st.Co + (h / 2) * ko1);
  const Matrix ko2 = dCo(st.Cd + (h / 2) * kd1, st.Co + (h / 2) * ko1);
  const Vector km3 = dm(t + h / 2, st.mbar + (h / 2) * km2);
  const Matrix kd3 = dCd(st.Cd + (h / 2) * kd2, st.Co + (h / 2) * ko2);
  const Matrix ko3 = dCo(st.Cd + (h / 2) * kd2, st.Co + (h / 2) * ko2);
  const Vector km4 = dm(t + h, st.mbar + h * km3);
  const Matrix kd4 = dCd(st.Cd + h * kd3, st.Co + h * ko3);
  const Matrix ko4 = dCo(st.Cd + h * kd3, st.Co + h * ko3);
  st.mbar += (h / 6) * (km1 + 2 * km2 + 2 * km3 + km4);
  st.Cd += (h / 6) * (kd1 + 2 * kd2 + 2 * kd3 + kd4);
  st.Co += (h / 6) * (ko1 + 2 * ko2 + 2 * ko3 + ko4);
  st.Cd = 0.5 * (st.Cd + st.Cd.transpose()).eval();
  st.Co = 0.5 * (st.Co + st.Co.transpose()).eval();
  st.t += h;
}

std::vector<SymmetricMoments> harmonic_moments_integrate(double alpha, double D_coef,
                                                         const TrapPath& trap,
                                                         const SymmetricMoments& init,
                                                         const std::vector<double>& times,
                                                         double dt) {
  require(dt > 0, "harmonic_moments_integrate: dt > 0");
  std::vector<SymmetricMoments> out;
  SymmetricMoments st = init;
  for (double target : times) {
    require(target >= st.t - 1e-12, "harmonic_moments_integrate: times must be nondecreasing");
    while (st.t < target - 1e-12) {
      harmonic_moments_step(alpha, D_coef, trap, st, std::min(dt, target - st.t));
    }
    st.t = target;
    out.push_back(st);
  }
  return out;
}

GaussianState assemble_symmetric(const SymmetricMoments& st) {
  const Index dbar = st.mbar.size();
  const Index d = st.N * dbar;
  GaussianState full;
  full.t = st.t;
  full.m.resize(d);
  full.C.resize(d, d);
  for (int i = 0; i < st.N; ++i) {
    full.m.segment(i * dbar, dbar) = st.mbar;
    for (int j = 0; j < st.N; ++j)
      full.C.block(i * dbar, j * dbar, dbar, dbar) = (i == j) ? st.Cd : st.Co;
  }
  return full;
}

double symmetric_logdet(const SymmetricMoments& st) {
  const Matrix M1 = st.Cd + (st.N - 1.0) * st.Co;
  const Matrix M0 = st.Cd - st.Co;
  return logdet_llt(M1, "symmetric_logdet") + (st.N - 1.0) * logdet_llt(M0, "symmetric_logdet");
}

double symmetric_entropy(const SymmetricMoments& st) {
  const double d = static_cast<double>(st.N) * st.mbar.size();
  return 0.5 * d * (std::log(2.0 * M_PI) + 1.0) + 0.5 * symmetric_logdet(st);
}

Matrix symmetric_score(const SymmetricMoments& st, const Matrix& X) {
  const Index dbar = st.mbar.size();
  const int N = st.N;
  require(X.rows() == N * dbar, "symmetric_score: dim mismatch");
  const Matrix M1 = st.Cd + (N - 1.0) * st.Co;
  const Matrix M0 = st.Cd - st.Co;
  Eigen::LLT<Matrix> llt1(M1), llt0(M0);
  if (llt1.info() != Eigen::Success || llt0.info() != Eigen::Success)
    throw std::runtime_error("symmetric_score: covariance blocks not positive definite");
  // C^-1 has blocks B_d = M0^-1 + B_o, B_o = (M1^-1 - M0^-1)/N, so
  // s_i = -(M0^-1 u_i + N B_o ubar) with ubar the particle mean of u = x - m.
  Matrix mean = Matrix::Zero(dbar, X.cols());
  for (int i = 0; i < N; ++i) {
    mean += X.middleRows(i * dbar, dbar);
  }
  mean /= double(N);
  mean.colwise() -= st.mbar;  // ubar
  const Matrix shared = llt1.solve(mean) - llt0.solve(mean);  // N B_o ubar
  Matrix S(X.rows(), X.cols());
  for (int i = 0; i < N; ++i) {
    Matrix ui = X.middleRows(i * dbar, dbar);
    ui.colwise() -= st.mbar;
    S.middleRows(i * dbar, dbar) = -(llt0.solve(ui) + shared);
  }
  return S;
}

HarmonicPath::HarmonicPath(std::vector<SymmetricMoments> traj, double alpha, double D_coef,
                           TrapPath trap)
    : traj_(std::move(traj)), alpha_(alpha), D_(D_coef), trap_(std::move(trap)) {
  require(traj_.size() >= 1, "HarmonicPath: empty trajectory");
  if (traj_.size() >= 2) dt_ = traj_[1].t - traj_[0].t;
}

SymmetricMoments HarmonicPath::at(double t) const {
  if (traj_.size() == 1 || t <= traj_.front().t) return traj_.front();
  if (t >= traj_.back().t) return traj_.back();
  const double pos = (t - traj_.front().t) / dt_;
  const size_t k = std::min(static_cast<size_t>(pos), traj_.size() - 2);
  const double w = (t - traj_[k].t) / (traj_[k + 1].t - traj_[k].t);
  SymmetricMoments st;
  st.t = t;
  st.N = traj_[k].N;
  st.mbar = (1.0 - w) * traj_[k].mbar + w * traj_[k + 1].mbar;
  st.Cd = (1.0 - w) * traj_[k].Cd + w * traj_[k + 1].Cd;
  st.Co = (1.0 - w) * traj_[k].Co + w * traj_[k + 1].Co;
  return st;
}

Matrix HarmonicPath::score(double t, const Matrix& X) const { return symmetric_score(at(t), X); }

double HarmonicPath::entropy(double t) const { return symmetric_entropy(at(t)); }

double HarmonicPath::entropy_rate(double t) const {
  const SymmetricMoments st = at(t);
  const int N = st.N;
  const Index dbar = st.mbar.size();
  const Matrix I = Matrix::Identity(dbar, dbar);
  const Matrix dCd =
      2.0 * (alpha_ - 1.0) * st.Cd - (2.0 * alpha_ / N) * (st.Cd + (N - 1.0) * st.Co) + 2.0 * D_ * I;
  const Matrix dCo =
      2.0 * (alpha_ - 1.0) * st.Co - (2.0 * alpha_ / N) * (st.Cd + (N - 1.0) * st.Co);
  const Matrix M1 = st.Cd + (N - 1.0) * st.Co, dM1 = dCd + (N - 1.0) * dCo;
  const Matrix M0 = st.Cd - st.Co, dM0 = dCd - dCo;
  // dH/dt = 1/2 tr(C^-1 Cdot), split over the two block eigenspaces
  return 0.5 * (M1.llt().solve(dM1).trace() + (N - 1.0) * M0.llt().solve(dM0).trace());
}

double HarmonicPath::cov_trace(double t) const {
  const SymmetricMoments st = at(t);
  return st.N * st.Cd.trace();
}

}  // namespace sbtm
