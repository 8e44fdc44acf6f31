#include "sbtm/config.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace sbtm {
namespace {

enum class KeyType { Str, Num, Int, UInt, Bool, NumList, IdxList };

struct KeySpec {
  const char* key;
  KeyType type;
  const char* def;  // nullptr = no default (unset until configured)
};

// every documented key; anything else is rejected
const KeySpec kKeys[] = {
    {"system.name", KeyType::Str, nullptr},
    {"system.N", KeyType::Int, nullptr},
    {"system.alpha", KeyType::Num, nullptr},
    {"system.D", KeyType::Num, nullptr},
    {"system.A", KeyType::Num, nullptr},
    {"system.r", KeyType::Num, nullptr},
    {"system.gamma_trap", KeyType::Num, nullptr},
    {"system.gamma", KeyType::Num, nullptr},
    {"system.ou_gamma", KeyType::Num, nullptr},
    {"system.ou_b", KeyType::Num, nullptr},
    {"trap.mode", KeyType::Str, "fixed"},
    {"trap.amplitude", KeyType::Num, "0"},
    {"trap.omega", KeyType::Num, "1"},
    {"score.kind", KeyType::Str, nullptr},
    {"score.u1_hidden", KeyType::IdxList, nullptr},
    {"score.u2_hidden", KeyType::IdxList, nullptr},
    {"score.hidden", KeyType::IdxList, nullptr},
    {"score.antisym", KeyType::Bool, nullptr},
    {"loss.kind", KeyType::Str, "denoising"},
    {"loss.divergence", KeyType::Str, "doubling"},
    {"loss.alpha", KeyType::Num, "0.1"},
    {"loss.antithetic", KeyType::Bool, "true"},
    {"loss.fd_step", KeyType::Num, "1e-4"},
    {"opt.lr", KeyType::Num, "1e-4"},
    {"opt.beta1", KeyType::Num, "0.9"},
    {"opt.beta2", KeyType::Num, "0.999"},
    {"opt.eps", KeyType::Num, "1e-8"},
    {"opt.n_steps", KeyType::Int, "25"},
    {"opt.gtol", KeyType::Num, "0.1"},
    {"opt.warm_start", KeyType::Bool, "true"},
    {"opt.init_lr", KeyType::Num, "1e-3"},
    {"opt.init_tol", KeyType::Num, "1e-4"},
    {"opt.init_max_iters", KeyType::Int, "200000"},
    {"run.T", KeyType::Num, "1"},
    {"run.dt", KeyType::Num, "1e-3"},
    {"run.integrator", KeyType::Str, "euler"},
    {"run.n", KeyType::Int, "0"},
    {"run.seed", KeyType::UInt, "0"},
    {"run.sigma0", KeyType::Num, "0.25"},
    {"run.mean0", KeyType::NumList, nullptr},
    {"run.checkpoint_interval", KeyType::Int, "0"},
    {"run.fisher_sde", KeyType::Bool, "false"},
    {"run.track_g", KeyType::Bool, "false"},
    {"run.g_fd_step", KeyType::Num, "1e-4"},
    {"out.dir", KeyType::Str, "out"},
};

const KeySpec* find_key(const std::string& key) {
  for (const KeySpec& k : kKeys)
    if (key == k.key) return &k;
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void key_error(const std::string& key, const std::string& what) {
  throw std::invalid_argument("config key " + key + ": " + what);
}

double parse_num(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0' || !std::isfinite(x))
    key_error(key, "expected a number, got '" + v + "'");
  return x;
}

long long parse_int(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0') key_error(key, "expected an integer, got '" + v + "'");
  return x;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0' || v.find('-') != std::string::npos)
    key_error(key, "expected a nonnegative integer, got '" + v + "'");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  key_error(key, "expected true|false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> parts;
  std::stringstream ss(v);
  std::string cell;
  while (std::getline(ss, cell, ',')) parts.push_back(trim(cell));
  return parts;
}

void validate_value(const KeySpec& spec, const std::string& value) {
  switch (spec.type) {
    case KeyType::Str:
      if (value.empty()) key_error(spec.key, "expected a nonempty string");
      break;
    case KeyType::Num:
      parse_num(spec.key, value);
      break;
    case KeyType::Int:
      parse_int(spec.key, value);
      break;
    case KeyType::UInt:
      parse_uint(spec.key, value);
      break;
    case KeyType::Bool:
      parse_bool(spec.key, value);
      break;
    case KeyType::NumList:
      for (const auto& p : split_list(value)) parse_num(spec.key, p);
      break;
    case KeyType::IdxList:
      for (const auto& p : split_list(value))
        if (parse_int(spec.key, p) < 1) key_error(spec.key, "expected positive sizes");
      break;
  }
}

const std::string& fetch(const RunConfig& cfg, const std::string& key) {
  const auto it = cfg.kv.find(key);
  if (it == cfg.kv.end()) {
    if (!find_key(key)) key_error(key, "unknown key");
    key_error(key, "required but not set");
  }
  return it->second;
}

}  // namespace

bool RunConfig::has(const std::string& key) const { return kv.count(key) > 0; }

std::string RunConfig::str(const std::string& key) const { return fetch(*this, key); }

double RunConfig::num(const std::string& key) const { return parse_num(key, fetch(*this, key)); }

int RunConfig::integer(const std::string& key) const {
  return static_cast<int>(parse_int(key, fetch(*this, key)));
}

std::uint64_t RunConfig::uint(const std::string& key) const {
  return parse_uint(key, fetch(*this, key));
}

bool RunConfig::flag(const std::string& key) const { return parse_bool(key, fetch(*this, key)); }

std::vector<double> RunConfig::numbers(const std::string& key) const {
  std::vector<double> out;
  for (const auto& p : split_list(fetch(*this, key))) out.push_back(parse_num(key, p));
  return out;
}

std::vector<Index> RunConfig::indices(const std::string& key) const {
  std::vector<Index> out;
  for (const auto& p : split_list(fetch(*this, key)))
    out.push_back(static_cast<Index>(parse_int(key, p)));
  return out;
}

RunConfig run_config_defaults() {
  RunConfig cfg;
  for (const KeySpec& k : kKeys)
    if (k.def) cfg.kv[k.key] = k.def;
  return cfg;
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  const KeySpec* spec = find_key(key);
  if (!spec) key_error(key, "unknown key");
  validate_value(*spec, value);
  cfg.kv[key] = value;
}

namespace {

RunConfig overlay(std::initializer_list<std::pair<const char*, const char*>> pairs) {
  RunConfig cfg = run_config_defaults();
  for (const auto& [k, v] : pairs) set_key(cfg, k, v);
  return cfg;
}

}  // namespace

RunConfig preset(const std::string& name) {
  if (name == "harmonic-paper")
    return overlay({{"system.name", "harmonic"},
                    {"system.N", "50"},
                    {"system.alpha", "0.5"},
                    {"system.D", "0.25"},
                    {"trap.mode", "circular"},
                    {"trap.amplitude", "2"},
                    {"trap.omega", "1"},
                    {"score.kind", "potential"},
                    {"score.u1_hidden", "100"},
                    {"score.u2_hidden", "100"},
                    {"opt.lr", "1e-4"},
                    {"opt.init_lr", "1e-4"},
                    {"opt.n_steps", "25"},
                    {"opt.gtol", "0.1"},
                    {"run.T", "10"},
                    {"run.dt", "1e-3"},
                    {"run.n", "0"},
                    {"run.sigma0", "0.25"},
                    {"run.checkpoint_interval", "1000"}});
  if (name == "harmonic-desk")
    return overlay({{"system.name", "harmonic"},
                    {"system.N", "5"},
                    {"system.alpha", "0.5"},
                    {"system.D", "0.25"},
                    {"trap.mode", "circular"},
                    {"trap.amplitude", "2"},
                    {"trap.omega", "1"},
                    {"score.kind", "potential"},
                    {"score.u1_hidden", "32"},
                    {"score.u2_hidden", "32"},
                    {"loss.alpha", "0.03"},
                    {"opt.lr", "3e-4"},
                    {"opt.init_lr", "3e-3"},
                    {"opt.init_max_iters", "6000"},
                    {"opt.n_steps", "5"},
                    {"opt.gtol", "0.1"},
                    {"run.T", "2"},
                    {"run.dt", "1e-3"},
                    {"run.n", "1000"},
                    {"run.sigma0", "0.25"},
                    {"run.checkpoint_interval", "250"}});
  if (name == "softspheres-paper")
    return overlay({{"system.name", "softspheres"},
                    {"system.N", "5"},
                    {"system.A", "10"},
                    {"system.r", "0.5"},
                    {"system.gamma_trap", "5"},
                    {"system.D", "0.25"},
                    {"trap.mode", "circular"},
                    {"trap.amplitude", "2"},
                    {"trap.omega", "1"},
                    {"score.kind", "potential"},
                    {"score.u1_hidden", "32,32,32,32"},
                    {"score.u2_hidden", "32,32,32,32"},
                    {"opt.lr", "5e-3"},
                    {"opt.init_lr", "5e-3"},
                    {"opt.init_tol", "1e-6"},
                    {"opt.n_steps", "25"},
                    {"run.T", "10"},
                    {"run.dt", "1e-3"},
                    {"run.n", "10000"},
                    {"run.sigma0", "0.5"},
                    {"run.checkpoint_interval", "1000"}});
  if (name == "softspheres-desk")
    return overlay({{"system.name", "softspheres"},
                    {"system.N", "3"},
                    {"system.A", "10"},
                    {"system.r", "0.5"},
                    {"system.gamma_trap", "5"},
                    {"system.D", "0.25"},
                    {"trap.mode", "circular"},
                    {"trap.amplitude", "2"},
                    {"trap.omega", "1"},
                    {"score.kind", "potential"},
                    {"score.u1_hidden", "32,32"},
                    {"score.u2_hidden", "32,32"},
                    {"opt.lr", "2e-3"},
                    {"opt.init_lr", "5e-3"},
                    {"opt.init_max_iters", "8000"},
                    {"opt.n_steps", "6"},
                    {"run.T", "3"},
                    {"run.dt", "2e-3"},
                    {"run.n", "500"},
                    {"run.sigma0", "0.5"},
                    {"run.checkpoint_interval", "250"}});
  if (name == "swimmer-paper")
    return overlay({{"system.name", "swimmer"},
                    {"system.gamma", "0.1"},
                    {"system.D", "1.0"},
                    {"score.kind", "direct"},
                    {"score.hidden", "32,32,32"},
                    {"score.antisym", "true"},
                    {"loss.alpha", "0.05"},
                    {"opt.lr", "1e-4"},
                    {"opt.init_lr", "1e-4"},
                    {"opt.gtol", "0.5"},
                    {"opt.n_steps", "25"},
                    {"run.T", "100"},
                    {"run.dt", "1e-3"},
                    {"run.n", "10000"},
                    {"run.sigma0", "1"},
                    {"run.checkpoint_interval", "5000"}});
  if (name == "swimmer-desk")
    return overlay({{"system.name", "swimmer"},
                    {"system.gamma", "0.1"},
                    {"system.D", "1.0"},
                    {"score.kind", "direct"},
                    {"score.hidden", "32,32,32"},
                    {"score.antisym", "true"},
                    {"loss.alpha", "0.05"},
                    {"opt.lr", "3e-4"},
                    {"opt.init_lr", "1e-3"},
                    {"opt.init_max_iters", "8000"},
                    {"opt.gtol", "0.5"},
                    {"opt.n_steps", "3"},
                    {"run.T", "20"},
                    {"run.dt", "4e-3"},
                    {"run.n", "1000"},
                    {"run.sigma0", "1"},
                    {"run.checkpoint_interval", "125"}});
  if (name == "ou1d")
    return overlay({{"system.name", "ou1d"},
                    {"system.ou_gamma", "1"},
                    {"system.ou_b", "0"},
                    {"system.D", "1"},
                    {"score.kind", "direct"},
                    {"score.hidden", "32"},
                    {"score.antisym", "false"},
                    {"loss.kind", "denoising"},
                    {"loss.alpha", "0.03"},
                    {"opt.lr", "3e-4"},
                    {"opt.init_lr", "1e-3"},
                    {"opt.init_max_iters", "20000"},
                    {"opt.gtol", "0.02"},
                    {"opt.n_steps", "10"},
                    {"run.T", "2"},
                    {"run.dt", "1e-3"},
                    {"run.n", "1000"},
                    {"run.sigma0", "0.5"},
                    {"run.track_g", "true"},
                    {"run.checkpoint_interval", "100"}});
  throw std::invalid_argument("unknown preset '" + name + "'");
}

std::vector<std::string> preset_names() {
  return {"harmonic-paper", "harmonic-desk",  "softspheres-paper", "softspheres-desk",
          "swimmer-paper",  "swimmer-desk",   "ou1d"};
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value, got '" + line + "'");
    set_key(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

RunConfig parse_config_file(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in.good()) throw std::invalid_argument("config file not found: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), std::move(base));
}

RunConfig resolve(RunConfig cfg) {
  const std::string sysname = cfg.str("system.name");
  const auto default_key = [&cfg](const char* key, const char* value) {
    if (!cfg.has(key)) set_key(cfg, key, value);
  };
  int N = 1;
  Index dbar = 0;
  if (sysname == "harmonic" || sysname == "softspheres") {
    N = cfg.integer("system.N");
    dbar = 2;
    default_key("score.kind", "potential");
    default_key("score.u1_hidden", "100");
    default_key("score.u2_hidden", "100");
    default_key("score.antisym", "false");
  } else if (sysname == "swimmer") {
    dbar = 2;
    default_key("score.kind", "direct");
    default_key("score.hidden", "32,32,32");
    default_key("score.antisym", "true");
  } else if (sysname == "ou1d") {
    dbar = 1;
    default_key("score.kind", "direct");
    default_key("score.hidden", "32,32,32");
    default_key("score.antisym", "false");
  } else {
    key_error("system.name", "unknown system '" + sysname +
                                 "' (harmonic | softspheres | swimmer | ou1d)");
  }
  if (cfg.integer("run.n") == 0) {
    const long long n = std::llround(1e5 / static_cast<double>(N * dbar));
    set_key(cfg, "run.n", std::to_string(n));
  }
  return cfg;
}

BuiltRun build_run(const RunConfig& raw) {
  BuiltRun out;
  out.resolved = resolve(raw);
  const RunConfig& cfg = out.resolved;
  const std::string sysname = cfg.str("system.name");

  TrapPath trap;
  trap.mode = trap_mode_from_string(cfg.str("trap.mode"));
  trap.amplitude = cfg.num("trap.amplitude");
  trap.omega = cfg.num("trap.omega");
  trap.dbar = 2;

  EngineConfig& eng = out.engine;
  eng.plan.dt = cfg.num("run.dt");
  eng.plan.T = cfg.num("run.T");
  eng.plan.integrator = integrator_from_string(cfg.str("run.integrator"));
  eng.plan.n_opt_steps = cfg.integer("opt.n_steps");
  eng.plan.gtol = cfg.num("opt.gtol");
  eng.plan.warm_start = cfg.flag("opt.warm_start");
  eng.loss.kind = loss_kind_from_string(cfg.str("loss.kind"));
  eng.loss.divergence = loss_div_from_string(cfg.str("loss.divergence"));
  eng.loss.alpha = cfg.num("loss.alpha");
  eng.loss.antithetic = cfg.flag("loss.antithetic");
  eng.loss.fd_step = cfg.num("loss.fd_step");
  eng.adam = AdamConfig{cfg.num("opt.lr"), cfg.num("opt.beta1"), cfg.num("opt.beta2"),
                        cfg.num("opt.eps")};
  eng.init_adam = eng.adam;
  eng.init_adam.lr = cfg.num("opt.init_lr");
  eng.init_tol = cfg.num("opt.init_tol");
  eng.init_max_iters = cfg.integer("opt.init_max_iters");
  eng.n_samples = cfg.integer("run.n");
  eng.seed = cfg.uint("run.seed");
  eng.sigma0 = cfg.num("run.sigma0");
  eng.checkpoint_interval = cfg.integer("run.checkpoint_interval");
  eng.fisher_sde = cfg.flag("run.fisher_sde");
  eng.track_g = cfg.flag("run.track_g");
  eng.g_fd_step = cfg.num("run.g_fd_step");

  const rng::CounterRng weights(eng.seed, rng::Stream::WeightInit);
  const std::string score_kind = cfg.str("score.kind");

  if (sysname == "harmonic") {
    const int N = cfg.integer("system.N");
    const double alpha = cfg.num("system.alpha");
    const double D = cfg.num("system.D");
    out.sys = harmonic_system(N, alpha, D, trap);
    if (cfg.has("run.mean0"))
      key_error("run.mean0", "harmonic runs pin the initial mean to the trap center");
    eng.mean0 = Vector::Zero(out.sys.dim);
    const Vector beta0 = trap(0.0);
    for (int i = 0; i < N; ++i) eng.mean0.segment(2 * i, 2) = beta0;

    SymmetricMoments init;
    init.t = 0.0;
    init.N = N;
    init.mbar = beta0;
    init.Cd = eng.sigma0 * eng.sigma0 * Matrix::Identity(2, 2);
    init.Co = Matrix::Zero(2, 2);
    std::vector<double> times;
    for (int k = 0; k * eng.plan.dt <= eng.plan.T + 1e-12; ++k) times.push_back(k * eng.plan.dt);
    out.harmonic_oracle = std::make_shared<HarmonicPath>(
        harmonic_moments_integrate(alpha, D, trap, init, times, eng.plan.dt), alpha, D, trap);
    const auto oracle = out.harmonic_oracle;
    out.hooks.score = [oracle](double t, const Matrix& X) { return oracle->score(t, X); };
  } else if (sysname == "softspheres") {
    out.sys = soft_sphere_system(cfg.integer("system.N"), cfg.num("system.A"),
                                 cfg.num("system.r"), cfg.num("system.gamma_trap"),
                                 cfg.num("system.D"), trap);
    if (cfg.has("run.mean0")) {
      const auto vals = cfg.numbers("run.mean0");
      require(static_cast<Index>(vals.size()) == out.sys.dim,
              "config key run.mean0: dimension mismatch");
      eng.mean0 = Eigen::Map<const Vector>(vals.data(), out.sys.dim);
    } else {
      const int N = cfg.integer("system.N");
      const Vector beta0 = trap(0.0);
      eng.mean0 = Vector::Zero(out.sys.dim);
      for (int i = 0; i < N; ++i) eng.mean0.segment(2 * i, 2) = beta0;
    }
  } else if (sysname == "swimmer") {
    out.sys = swimmer_system(cfg.num("system.gamma"), cfg.num("system.D"));
    if (cfg.has("run.mean0")) {
      const auto vals = cfg.numbers("run.mean0");
      require(vals.size() == 2, "config key run.mean0: expected 2 entries");
      eng.mean0 = Eigen::Map<const Vector>(vals.data(), 2);
    }
  } else if (sysname == "ou1d") {
    Matrix Gamma(1, 1), sigma(1, 1);
    Gamma(0, 0) = cfg.num("system.ou_gamma");
    const double D = cfg.num("system.D");
    require(D >= 0.0, "config key system.D: nonnegative");
    sigma(0, 0) = std::sqrt(D);
    Vector b(1);
    b[0] = cfg.num("system.ou_b");
    out.sys = ou_system(Gamma, b, sigma);
    if (cfg.has("run.mean0")) {
      const auto vals = cfg.numbers("run.mean0");
      require(vals.size() == 1, "config key run.mean0: expected 1 entry");
      eng.mean0 = Eigen::Map<const Vector>(vals.data(), 1);
    }

    OuProblem pb;
    pb.Gamma = Gamma;
    pb.D = Matrix::Constant(1, 1, D);
    pb.b = [b](double) { return b; };
    GaussianState init;
    init.t = 0.0;
    init.m = eng.mean0.size() > 0 ? eng.mean0 : Vector::Zero(1);
    init.C = eng.sigma0 * eng.sigma0 * Matrix::Identity(1, 1);
    std::vector<double> times;
    for (int k = 0; k * eng.plan.dt <= eng.plan.T + 1e-12; ++k) times.push_back(k * eng.plan.dt);
    out.ou_oracle =
        std::make_shared<GaussianPath>(ou_moments_integrate(pb, init, times, eng.plan.dt));
    const auto oracle = out.ou_oracle;
    out.hooks.score = [oracle](double t, const Matrix& X) { return oracle->score(t, X); };
  }

  if (score_kind == "potential") {
    require(out.sys.particles >= 1 && out.sys.dbar >= 1,
            "config: potential score needs a particle system");
    out.model = std::make_unique<PotentialScore>(
        PotentialScore::init(out.sys.particles, out.sys.dbar, cfg.indices("score.u1_hidden"),
                             cfg.indices("score.u2_hidden"), weights));
  } else if (score_kind == "direct") {
    std::vector<Index> in_coords, out_coords;
    if (sysname == "swimmer") {
      in_coords = {0, 1};
      out_coords = {1};
    } else {
      in_coords.resize(static_cast<size_t>(out.sys.dim));
      for (Index i = 0; i < out.sys.dim; ++i) in_coords[static_cast<size_t>(i)] = i;
      out_coords = in_coords;
    }
    out.model = std::make_unique<DirectScore>(
        DirectScore::init(out.sys.dim, cfg.indices("score.hidden"), in_coords, out_coords,
                          cfg.flag("score.antisym"), weights));
  } else {
    key_error("score.kind", "unknown kind '" + score_kind + "' (potential | direct)");
  }

  out.out_dir = cfg.str("out.dir");
  return out;
}

std::string resolved_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg.kv) out += k + " = " + v + "\n";
  return out;
}

void write_manifest(const std::string& dir, const RunConfig& cfg, const std::string& status,
                    double wall_seconds) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["status"] = status;
  j["seed"] = cfg.has("run.seed") ? cfg.uint("run.seed") : 0;
  j["wall_time_s"] = wall_seconds;
  j["versions"] = {{"project", kProjectVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                 std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"compiler", __VERSION__}};
  j["config"] = cfg.kv;
  std::ofstream mf(dir + "/manifest.json");
  require(mf.good(), "write_manifest: cannot open " + dir + "/manifest.json");
  mf << j.dump(2) << "\n";
  std::ofstream rf(dir + "/config.resolved");
  require(rf.good(), "write_manifest: cannot open " + dir + "/config.resolved");
  rf << resolved_text(cfg);
}

RunConfig read_manifest_config(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw std::invalid_argument("manifest not found: " + path);
  nlohmann::json j;
  in >> j;
  RunConfig cfg;
  for (const auto& [k, v] : j.at("config").items()) set_key(cfg, k, v.get<std::string>());
  return cfg;
}

}  // namespace sbtm
