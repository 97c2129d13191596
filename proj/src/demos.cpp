#include "ioc/demos.hpp"

#include "number_text.hpp"

#include <json.hpp>

#include <fstream>
#include <random>
#include <sstream>

namespace ioc {

namespace {

using json = nlohmann::json;
using Index = Eigen::Index;

void check_psd(const Matrix& S, Index dim, const std::string& what) {
  if (S.rows() != dim || S.cols() != dim) {
    throw std::invalid_argument(what + " must be " + std::to_string(dim) + "x" +
                                std::to_string(dim));
  }
  if (!S.allFinite()) throw std::invalid_argument(what + " has non-finite entries");
  if (!S.isApprox(S.transpose(), 1e-12) && (S - S.transpose()).norm() > 1e-14) {
    throw std::invalid_argument(what + " is not symmetric");
  }
  if (dim > 0) {
    const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(S).eigenvalues().minCoeff();
    if (min_eig < -1e-12) {
      throw std::invalid_argument(what + " is not positive semidefinite (min eigenvalue " +
                                  std::to_string(min_eig) + ")");
    }
  }
}

// Factor F with F F' = S. Diagonal covariances keep their channel order.
Matrix covariance_factor(const Matrix& S) {
  if (S.isDiagonal(0.0)) return S.diagonal().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(S);
  return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

json matrix_to_json(const Matrix& M) {
  json rows = json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(row);
  }
  return rows;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Matrix matrix_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) throw ParseError(1, field, "expected an array of rows");
  const auto rows = static_cast<Index>(j.size());
  const Index cols = rows ? static_cast<Index>(j[0].size()) : 0;
  Matrix M(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
      throw ParseError(1, field, "ragged matrix");
    }
    for (Index c = 0; c < cols; ++c) {
      const json& e = row[static_cast<std::size_t>(c)];
      if (!e.is_number()) throw ParseError(1, field, "non-numeric entry");
      M(i, c) = e.get<double>();
    }
  }
  return M;
}

Vector vector_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) throw ParseError(1, field, "expected an array");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ParseError(1, field, "non-numeric entry");
    v[static_cast<Index>(i)] = j[i].get<double>();
  }
  return v;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

const json& require(const json& j, const char* key) {
  if (!j.contains(key)) throw ParseError(1, key, "missing header field");
  return j.at(key);
}

constexpr const char* kMagic = "#ioc-demoset ";

}  // namespace

void NoiseSpec::validate(int n, int m) const {
  check_psd(sigma_t, n + m, "sigma_t");
  check_psd(sigma_xN, n, "sigma_xN");
}

NoiseSpec make_noise_spec(const OcpSpec& spec, const Vector& u_star, double pct,
                          std::uint64_t seed) {
  if (!(pct >= 0.0)) throw std::invalid_argument("noise pct must be nonnegative");
  if (u_star.size() != spec.m * spec.N) throw DimensionError("u_star has wrong length");
  NoiseSpec noise;
  noise.pct = pct;
  noise.seed = seed;
  noise.sigma_t = Matrix::Zero(spec.n + spec.m, spec.n + spec.m);
  noise.sigma_xN = Matrix::Zero(spec.n, spec.n);
  for (int c = 0; c < spec.m; ++c) {
    double mean = 0.0;
    for (int k = 0; k < spec.N; ++k) mean += u_star[k * spec.m + c];
    mean /= spec.N;
    const double sd = pct * std::abs(mean);
    noise.sigma_t(spec.n + c, spec.n + c) = sd * sd;
  }
  return noise;
}

DemoSet generate_demoset(const OcpSpec& spec, const Vector& theta_star, const NoiseSpec& noise,
                         int D) {
  if (D < 1) throw std::invalid_argument("generate_demoset: D must be at least 1");
  const OcpSolution optimum = solve_ocp(spec, theta_star);
  return generate_demoset(spec, optimum, theta_star, noise, D);
}

DemoSet generate_demoset(const OcpSpec& spec, const OcpSolution& optimum,
                         const Vector& theta_star, const NoiseSpec& noise, int D) {
  if (D < 1) throw std::invalid_argument("generate_demoset: D must be at least 1");
  check_dimensions(spec, optimum.traj);
  noise.validate(spec.n, spec.m);
  const int n = spec.n;
  const int m = spec.m;
  const Matrix Ft = covariance_factor(noise.sigma_t);
  const Matrix Fx = covariance_factor(noise.sigma_xN);
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  DemoSet ds;
  ds.spec_name = spec.name;
  ds.noise = noise;
  ds.truth = DemoTruth{theta_star, optimum.traj};
  ds.demos.reserve(static_cast<std::size_t>(D));
  const Trajectory& opt = optimum.traj;
  for (int d = 0; d < D; ++d) {
    Trajectory demo = opt;
    for (int k = 0; k < spec.N; ++k) {
      Vector z(n + m);
      for (Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
      const Vector t = opt.stage(k) + Ft * z;
      demo.set_state(k, t.head(n));
      demo.set_input(k, t.tail(m));
    }
    Vector z(n);
    for (Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
    demo.set_state(spec.N, opt.state(spec.N) + Fx * z);
    ds.demos.push_back(std::move(demo));
  }
  return ds;
}

Trajectory mean_trajectory(const DemoSet& ds) {
  if (ds.demos.empty()) throw std::invalid_argument("mean_trajectory: empty demo set");
  Trajectory mean = ds.demos.front();
  for (std::size_t d = 1; d < ds.demos.size(); ++d) {
    if (!(ds.demos[d].n() == mean.n() && ds.demos[d].m() == mean.m() &&
          ds.demos[d].N() == mean.N())) {
      throw DimensionError("mean_trajectory: demos have different shapes");
    }
    mean.X() += ds.demos[d].X();
    mean.U() += ds.demos[d].U();
  }
  const double inv = 1.0 / static_cast<double>(ds.demos.size());
  mean.X() *= inv;
  mean.U() *= inv;
  return mean;
}

void save_demoset(const DemoSet& ds, const std::filesystem::path& path) {
  if (ds.demos.empty()) throw std::invalid_argument("save_demoset: empty demo set");
  const Trajectory& first = ds.demos.front();
  const int n = first.n();
  const int m = first.m();
  const int N = first.N();

  json header;
  header["version"] = kDemoSetVersion;
  header["spec"] = ds.spec_name;
  header["n"] = n;
  header["m"] = m;
  header["N"] = N;
  header["D"] = ds.size();
  if (ds.noise) {
    header["noise"] = {{"pct", ds.noise->pct},
                       {"seed", ds.noise->seed},
                       {"std_convention", "std = pct * |mean input|"},
                       {"sigma_t", matrix_to_json(ds.noise->sigma_t)},
                       {"sigma_xN", matrix_to_json(ds.noise->sigma_xN)}};
  } else {
    header["noise"] = nullptr;
  }
  if (ds.truth) {
    header["truth"] = {{"theta", vector_to_json(ds.truth->theta)},
                       {"X", vector_to_json(ds.truth->traj.X())},
                       {"U", vector_to_json(ds.truth->traj.U())}};
  } else {
    header["truth"] = nullptr;
  }

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << kMagic << header.dump() << '\n';
  out << "d\tk";
  for (int i = 0; i < n; ++i) out << "\tx" << i;
  for (int i = 0; i < m; ++i) out << "\tu" << i;
  out << '\n';
  for (int d = 0; d < ds.size(); ++d) {
    const Trajectory& demo = ds.demos[static_cast<std::size_t>(d)];
    for (int k = 0; k <= N; ++k) {
      out << d << '\t' << k;
      const Vector x = demo.state(k);
      for (int i = 0; i < n; ++i) out << '\t' << detail::format_double(x[i]);
      if (k < N) {
        const Vector u = demo.input(k);
        for (int i = 0; i < m; ++i) out << '\t' << detail::format_double(u[i]);
      } else {
        for (int i = 0; i < m; ++i) out << '\t';
      }
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

DemoSet load_demoset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind(kMagic, 0) != 0) {
    throw ParseError(1, "header", "missing '#ioc-demoset' header line");
  }
  json header;
  try {
    header = json::parse(line.substr(std::string(kMagic).size()));
  } catch (const json::parse_error& e) {
    throw ParseError(1, "header", e.what());
  }
  const json& version = require(header, "version");
  if (!version.is_number_integer()) throw ParseError(1, "version", "not an integer");
  if (version.get<int>() != kDemoSetVersion) throw UnsupportedVersionError(version.get<int>());

  DemoSet ds;
  int n = 0, m = 0, N = 0, D = 0;
  try {
    ds.spec_name = require(header, "spec").get<std::string>();
    n = require(header, "n").get<int>();
    m = require(header, "m").get<int>();
    N = require(header, "N").get<int>();
    D = require(header, "D").get<int>();
  } catch (const json::type_error& e) {
    throw ParseError(1, "header", e.what());
  }
  if (n <= 0 || m <= 0 || N <= 0 || D <= 0) {
    throw ParseError(1, "header", "dimensions must be positive");
  }

  const json& noise = require(header, "noise");
  if (!noise.is_null()) {
    NoiseSpec spec;
    try {
      spec.pct = require(noise, "pct").get<double>();
      spec.seed = require(noise, "seed").get<std::uint64_t>();
    } catch (const json::type_error& e) {
      throw ParseError(1, "noise", e.what());
    }
    spec.sigma_t = matrix_from_json(require(noise, "sigma_t"), "sigma_t");
    spec.sigma_xN = matrix_from_json(require(noise, "sigma_xN"), "sigma_xN");
    if (spec.sigma_t.rows() != n + m || spec.sigma_t.cols() != n + m) {
      throw DimensionError("sigma_t does not match n + m = " + std::to_string(n + m));
    }
    if (spec.sigma_xN.rows() != n || spec.sigma_xN.cols() != n) {
      throw DimensionError("sigma_xN does not match n = " + std::to_string(n));
    }
    ds.noise = spec;
  }
  const json& truth = require(header, "truth");
  if (!truth.is_null()) {
    Vector theta = vector_from_json(require(truth, "theta"), "theta");
    Vector X = vector_from_json(require(truth, "X"), "X");
    Vector U = vector_from_json(require(truth, "U"), "U");
    if (X.size() != n * (N + 1) || U.size() != m * N) {
      throw DimensionError("truth trajectory does not match (n, m, N) of the header");
    }
    ds.truth = DemoTruth{std::move(theta), Trajectory(n, m, N, std::move(X), std::move(U))};
  }

  if (!std::getline(in, line)) throw ParseError(2, "columns", "missing column header");
  const std::vector<std::string> columns = split_tabs(line);
  if (static_cast<int>(columns.size()) != 2 + n + m) {
    throw DimensionError("column header has " + std::to_string(columns.size() - 2) +
                         " value columns, header declares n + m = " + std::to_string(n + m));
  }

  ds.demos.assign(static_cast<std::size_t>(D), Trajectory(n, m, N));
  std::vector<int> rows_seen(static_cast<std::size_t>(D), 0);
  int lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> f = split_tabs(line);
    if (static_cast<int>(f.size()) != 2 + n + m) {
      throw ParseError(lineno, "row", "expected " + std::to_string(2 + n + m) + " fields, got " +
                                          std::to_string(f.size()));
    }
    const auto d = detail::parse_double(f[0]);
    const auto k = detail::parse_double(f[1]);
    if (!d || !k || *d != std::floor(*d) || *k != std::floor(*k) || *d < 0 || *d >= D ||
        *k < 0 || *k > N) {
      throw ParseError(lineno, "d/k", "bad demo or stage index");
    }
    const int di = static_cast<int>(*d);
    const int ki = static_cast<int>(*k);
    Trajectory& demo = ds.demos[static_cast<std::size_t>(di)];
    Vector x(n);
    for (int i = 0; i < n; ++i) {
      const auto v = detail::parse_double(f[static_cast<std::size_t>(2 + i)]);
      if (!v) throw ParseError(lineno, columns[static_cast<std::size_t>(2 + i)], "not a number");
      x[i] = *v;
    }
    demo.set_state(ki, x);
    if (ki < N) {
      Vector u(m);
      for (int i = 0; i < m; ++i) {
        const std::string& field = f[static_cast<std::size_t>(2 + n + i)];
        const auto v = detail::parse_double(field);
        if (!v) throw ParseError(lineno, columns[static_cast<std::size_t>(2 + n + i)], "not a number");
        u[i] = *v;
      }
      demo.set_input(ki, u);
    }
    ++rows_seen[static_cast<std::size_t>(di)];
  }
  for (int d = 0; d < D; ++d) {
    if (rows_seen[static_cast<std::size_t>(d)] != N + 1) {
      throw ParseError(lineno, "rows", "demo " + std::to_string(d) + " has " +
                                           std::to_string(rows_seen[static_cast<std::size_t>(d)]) +
                                           " rows, expected " + std::to_string(N + 1));
    }
  }
  return ds;
}

DemoSet load_demoset(const std::filesystem::path& path, const OcpSpec& spec) {
  DemoSet ds = load_demoset(path);
  const Trajectory& first = ds.demos.front();
  if (!first.matches(spec)) {
    throw DimensionError("demo set has (n, m, N) = (" + std::to_string(first.n()) + ", " +
                         std::to_string(first.m()) + ", " + std::to_string(first.N()) +
                         "), ocp '" + spec.name + "' expects (" + std::to_string(spec.n) + ", " +
                         std::to_string(spec.m) + ", " + std::to_string(spec.N) + ")");
  }
  return ds;
}

}  // namespace ioc
