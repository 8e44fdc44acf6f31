#include "sbtm/systems.hpp"

#include <cmath>

namespace sbtm {

Vector TrapPath::operator()(double t) const {
  Vector beta = Vector::Zero(dbar);
  switch (mode) {
    case Mode::Fixed:
      beta[0] = amplitude;
      break;
    case Mode::Circular:
      require(dbar >= 2, "TrapPath: circular mode needs dbar >= 2");
      beta[0] = amplitude * std::cos(M_PI * omega * t);
      beta[1] = amplitude * std::sin(M_PI * omega * t);
      break;
    case Mode::Linear:
      beta[0] = amplitude * std::cos(M_PI * omega * t);
      break;
  }
  return beta;
}

TrapPath::Mode trap_mode_from_string(const std::string& name) {
  if (name == "fixed") return TrapPath::Mode::Fixed;
  if (name == "circular") return TrapPath::Mode::Circular;
  if (name == "linear") return TrapPath::Mode::Linear;
  throw std::invalid_argument("unknown trap mode: " + name);
}

SystemSpec harmonic_system(int N, double alpha, double D_coef, const TrapPath& trap) {
  require(N >= 1, "harmonic_system: N >= 1");
  require(alpha >= 0.0 && alpha < 1.0, "harmonic_system: need 0 <= alpha < 1 for confinement");
  require(D_coef >= 0.0, "harmonic_system: D >= 0");
  SystemSpec sys;
  sys.name = "harmonic";
  sys.particles = N;
  sys.dbar = trap.dbar;
  sys.dim = N * trap.dbar;
  sys.trap = trap;
  sys.sigma = std::sqrt(D_coef) * Matrix::Identity(sys.dim, sys.dim);
  sys.D = D_coef * Matrix::Identity(sys.dim, sys.dim);
  sys.params = {{"N", double(N)}, {"alpha", alpha}, {"D", D_coef}};
  const Index dbar = trap.dbar;
  sys.drift = [N, dbar, alpha, trap](double t, const Matrix& X) {
    const Vector beta = trap(t);
    Matrix mean = Matrix::Zero(dbar, X.cols());
    for (int i = 0; i < N; ++i) mean += X.middleRows(i * dbar, dbar);
    mean /= double(N);
    Matrix B(X.rows(), X.cols());
    for (int i = 0; i < N; ++i) {
      auto Xi = X.middleRows(i * dbar, dbar);
      B.middleRows(i * dbar, dbar) = (-Xi).colwise() + beta;
      B.middleRows(i * dbar, dbar) += alpha * (Xi - mean);
    }
    return B;
  };
  return sys;
}

SystemSpec soft_sphere_system(int N, double A, double r, double gamma_trap, double D_coef,
                              const TrapPath& trap) {
  require(N >= 1 && r > 0.0 && gamma_trap > 0.0, "soft_sphere_system: bad parameters");
  SystemSpec sys;
  sys.name = "softspheres";
  sys.particles = N;
  sys.dbar = trap.dbar;
  sys.dim = N * trap.dbar;
  sys.trap = trap;
  sys.sigma = std::sqrt(D_coef) * Matrix::Identity(sys.dim, sys.dim);
  sys.D = D_coef * Matrix::Identity(sys.dim, sys.dim);
  const double R = std::sqrt(gamma_trap * N) * r;
  const double B_coef = D_coef / (R * R);
  sys.params = {{"N", double(N)}, {"A", A},         {"r", r},      {"gamma_trap", gamma_trap},
                {"D", D_coef},    {"B", B_coef},    {"R", R}};
  const Index dbar = trap.dbar;
  sys.drift = [N, dbar, A, r, B_coef, trap](double t, const Matrix& X) {
    const Vector beta = trap(t);
    Matrix B = Matrix::Zero(X.rows(), X.cols());
    // quartic trap: 4 B (beta - x_i) |x_i - beta|^2
    for (int i = 0; i < N; ++i) {
      Matrix rel = (-X.middleRows(i * dbar, dbar)).colwise() + beta;  // beta - x_i
      const auto sq = rel.array().square().colwise().sum();
      B.middleRows(i * dbar, dbar) = rel.array().rowwise() * (4.0 * B_coef * sq);
    }
    // pairwise Gaussian repulsion, antisymmetric in (i, j)
    const double c = A / (double(N) * r * r);
    const double inv2r2 = 1.0 / (2.0 * r * r);
    for (int i = 0; i < N; ++i) {
      for (int j = i + 1; j < N; ++j) {
        Matrix diff = X.middleRows(i * dbar, dbar) - X.middleRows(j * dbar, dbar);
        const auto w =
            (diff.array().square().colwise().sum() * (-inv2r2)).exp() * c;
        Matrix f = (diff.array().rowwise() * w).matrix();
        B.middleRows(i * dbar, dbar) += f;
        B.middleRows(j * dbar, dbar) -= f;
      }
    }
    return B;
  };
  return sys;
}

SystemSpec swimmer_system(double gamma, double D_coef) {
  require(gamma > 0.0 && D_coef >= 0.0, "swimmer_system: bad parameters");
  SystemSpec sys;
  sys.name = "swimmer";
  sys.particles = 1;
  sys.dbar = 2;
  sys.dim = 2;
  sys.sigma = Matrix::Zero(2, 1);
  sys.sigma(1, 0) = std::sqrt(gamma * D_coef);
  sys.D = sys.sigma * sys.sigma.transpose();
  sys.params = {{"gamma", gamma}, {"D", D_coef}};
  sys.drift = [gamma](double, const Matrix& X) {
    Matrix B(2, X.cols());
    B.row(0) = -X.row(0).array().cube() + X.row(1).array();
    B.row(1) = -gamma * X.row(1).array();
    return B;
  };
  return sys;
}

SystemSpec ou_system(const Matrix& Gamma, std::function<Vector(double)> b,
                     const Matrix& sigma_factor) {
  require(Gamma.rows() == Gamma.cols(), "ou_system: Gamma must be square");
  require(sigma_factor.rows() == Gamma.rows(), "ou_system: sigma row dim mismatch");
  SystemSpec sys;
  sys.name = "ou";
  sys.particles = 1;
  sys.dbar = Gamma.rows();
  sys.dim = Gamma.rows();
  sys.sigma = sigma_factor;
  sys.D = sigma_factor * sigma_factor.transpose();
  // Gamma = D A with A symmetric (detailed balance) <=> Gamma D symmetric
  const Matrix GD = Gamma * sys.D;
  if ((GD - GD.transpose()).norm() <= 1e-12 * std::max(1.0, GD.norm()))
    sys.params["detailed_balance"] = 1.0;
  Matrix G = Gamma;
  sys.drift = [G, b](double t, const Matrix& X) {
    Matrix B = -(G * X);
    B.colwise() += G * b(t);
    return B;
  };
  return sys;
}

SystemSpec ou_system(const Matrix& Gamma, const Vector& b, const Matrix& sigma_factor) {
  Vector bc = b;
  return ou_system(Gamma, [bc](double) { return bc; }, sigma_factor);
}

Matrix harmonic_gamma(int N, Index dbar, double alpha) {
  const Index d = N * dbar;
  Matrix G = (1.0 - alpha) * Matrix::Identity(d, d);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      G.block(i * dbar, j * dbar, dbar, dbar) +=
          (alpha / double(N)) * Matrix::Identity(dbar, dbar);
  return G;
}

}  // namespace sbtm
