#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "uapbev/common.hpp"
#include "uapbev/occupancy.hpp"

namespace uapbev {

enum class ErrorModelMode { Gaussian, Empirical };

// Time-indexed distribution of the distance-query error (d_gt - d_pred),
// one entry per predicted frame k = 0..F.
struct ErrorModel {
  ErrorModelMode mode = ErrorModelMode::Gaussian;
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<std::vector<double>> residuals;  // empirical mode only

  int frame_count() const { return static_cast<int>(mu.size()); }

  static ErrorModel gaussian(std::vector<double> mu, std::vector<double> sigma) {
    require(mu.size() == sigma.size() && !mu.empty(), "error model: mu/sigma length mismatch");
    for (double s : sigma) require(s >= 0.0, "error model: sigma must be non-negative");
    ErrorModel m;
    m.mu = std::move(mu);
    m.sigma = std::move(sigma);
    return m;
  }

  static ErrorModel zero(int frames) {
    return gaussian(std::vector<double>(frames, 0.0), std::vector<double>(frames, 0.0));
  }

  // Synthetic stand-in shape: mean 0.1*k m, std 0.15*(1 + 0.5*k) m.
  static ErrorModel synthetic_default(int frames) {
    std::vector<double> mu(frames), sigma(frames);
    for (int k = 0; k < frames; ++k) {
      mu[k] = 0.1 * k;
      sigma[k] = 0.15 * (1.0 + 0.5 * k);
    }
    return gaussian(std::move(mu), std::move(sigma));
  }
};

struct DistanceObservation {
  int k = 0;
  double d_pred = 0.0;
  double d_gt = 0.0;
};

inline ErrorModel fit_error_model(const std::vector<DistanceObservation>& obs,
                                  ErrorModelMode mode = ErrorModelMode::Gaussian) {
  std::map<int, std::vector<double>> by_k;
  for (const auto& o : obs) {
    require(o.k >= 0, "fit_error_model: negative step index");
    by_k[o.k].push_back(o.d_gt - o.d_pred);
  }
  require(!by_k.empty(), "fit_error_model: no observations");
  const int frames = by_k.rbegin()->first + 1;
  ErrorModel m;
  m.mode = mode;
  m.mu.assign(frames, 0.0);
  m.sigma.assign(frames, 0.0);
  if (mode == ErrorModelMode::Empirical) m.residuals.resize(frames);
  for (int k = 0; k < frames; ++k) {
    auto it = by_k.find(k);
    const std::size_t count = it == by_k.end() ? 0 : it->second.size();
    if (count < 2) {
      throw Error("fit_error_model: step " + std::to_string(k) + " has " + std::to_string(count) +
                  " observations (need >= 2)");
    }
    const auto& r = it->second;
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(count);
    double ss = 0.0;
    for (double v : r) ss += (v - mean) * (v - mean);
    m.mu[k] = mean;
    m.sigma[k] = std::sqrt(ss / static_cast<double>(count - 1));
    if (mode == ErrorModelMode::Empirical) m.residuals[k] = r;
  }
  return m;
}

// m x n matrix of noisy distance samples d_i[k] = d[k] + eps_{k,i}, eps drawn
// from the model entry of the frame that step k maps to. With `correlated`
// one standard draw (or bank quantile) is shared by all steps of a sample.
inline Mat sample_noisy_distances(const Vec& d, const ErrorModel& model, int m,
                                  std::uint64_t rng_seed, const FrameMapping& phi,
                                  bool correlated = false) {
  require(m >= 1, "sample_noisy_distances: m must be >= 1");
  const Eigen::Index n = d.size();
  for (Eigen::Index k = 0; k < n; ++k) {
    if (phi(static_cast<int>(k)) >= model.frame_count()) {
      throw DimensionError("error model covers " + std::to_string(model.frame_count()) +
                           " frames but step " + std::to_string(k) + " maps beyond it");
    }
  }
  if (model.mode == ErrorModelMode::Empirical) {
    for (const auto& bank : model.residuals) require(!bank.empty(), "empirical residual bank is empty");
  }
  std::vector<int> frame(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) frame[k] = phi(static_cast<int>(k));
  Rng rng = make_rng(rng_seed);
  Mat out(m, n);
  if (model.mode == ErrorModelMode::Gaussian && !correlated) {
    // Row-major fill so consecutive normals pair up.
    bool have_spare = false;
    double spare = 0.0;
    for (int i = 0; i < m; ++i) {
      for (Eigen::Index k = 0; k < n; ++k) {
        double z;
        if (have_spare) {
          z = spare;
        } else {
          std::tie(z, spare) = standard_normal_pair(rng);
        }
        have_spare = !have_spare;
        out(i, k) = d[k] + model.mu[frame[k]] + model.sigma[frame[k]] * z;
      }
    }
    return out;
  }
  for (int i = 0; i < m; ++i) {
    const double shared_z = correlated ? standard_normal(rng) : 0.0;
    const double shared_u = correlated ? uniform01(rng) : 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const int f = frame[k];
      double eps = 0.0;
      if (model.mode == ErrorModelMode::Gaussian) {
        eps = model.mu[f] + model.sigma[f] * shared_z;
      } else {
        const auto& bank = model.residuals[f];
        const double u = correlated ? shared_u : uniform01(rng);
        const auto idx = std::min(bank.size() - 1, static_cast<std::size_t>(u * bank.size()));
        eps = bank[idx];
      }
      out(i, k) = d[k] + eps;
    }
  }
  return out;
}

inline Mat sample_noisy_distances(const Vec& d, const ErrorModel& model, int m,
                                  std::uint64_t rng_seed) {
  // Identity step -> frame mapping; steps past the model are an error.
  const FrameMapping phi{1.0, 1.0, std::max(model.frame_count(), static_cast<int>(d.size()))};
  return sample_noisy_distances(d, model, m, rng_seed, phi);
}

// f_i = prod_k max(r_safe - d_i[k], 0) for every row i.
inline Vec collision_cost_samples(const Mat& noisy, double r_safe) {
  require(r_safe > 0.0, "collision_cost_samples: r_safe must be positive");
  Vec f(noisy.rows());
  for (Eigen::Index i = 0; i < noisy.rows(); ++i) {
    double prod = 1.0;
    for (Eigen::Index k = 0; k < noisy.cols() && prod != 0.0; ++k) {
      prod *= std::max(r_safe - noisy(i, k), 0.0);
    }
    f[i] = prod;
  }
  return f;
}

struct KernelConfig {
  double gamma = 0.1;
  int sample_count = 100;
};

inline double rbf_kernel(double a, double b, double gamma) {
  const double diff = a - b;
  return std::exp(-gamma * diff * diff);
}

// Squared RKHS distance between the empirical embedding of the cost samples
// and the Dirac at zero, expanded with the kernel trick.
inline double mmd_cost(const Vec& samples, const KernelConfig& kernel) {
  const Eigen::Index m = samples.size();
  require(m >= 1, "mmd_cost: empty sample set");
  require(kernel.gamma > 0.0, "mmd_cost: kernel gamma must be positive");
  const double g = kernel.gamma;
  // Equal samples share kernel rows; sampled costs are mostly exact zeros.
  std::vector<double> sorted(samples.data(), samples.data() + m);
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> level;
  std::vector<double> count;
  for (double v : sorted) {
    if (level.empty() || v != level.back()) {
      level.push_back(v);
      count.push_back(1.0);
    } else {
      count.back() += 1.0;
    }
  }
  const std::size_t u = level.size();
  double self = 0.0;
  for (std::size_t i = 0; i < u; ++i) {
    double row = 0.0;
    for (std::size_t j = i + 1; j < u; ++j) row += count[j] * rbf_kernel(level[i], level[j], g);
    self += count[i] * (2.0 * row + count[i]);
  }
  double cross = 0.0;
  for (std::size_t i = 0; i < u; ++i) cross += count[i] * rbf_kernel(level[i], 0.0, g);
  const double md = static_cast<double>(m);
  const double value = self / (md * md) - 2.0 * cross / md + 1.0;
  return value < 0.0 ? 0.0 : value;
}

// ---- serialization -------------------------------------------------------

inline void write_error_model(std::ostream& out, const ErrorModel& m) {
  out << "# k mu sigma\n";
  for (int k = 0; k < m.frame_count(); ++k) {
    out << k << ' ' << format_double(m.mu[k]) << ' ' << format_double(m.sigma[k]) << '\n';
  }
}

inline void write_residual_bank(std::ostream& out, const ErrorModel& m) {
  require(m.mode == ErrorModelMode::Empirical, "residual bank requires an empirical model");
  for (int k = 0; k < m.frame_count(); ++k) {
    out << k;
    for (double r : m.residuals[k]) out << ' ' << format_double(r);
    out << '\n';
  }
}

inline ErrorModel read_error_model(std::istream& in) {
  std::vector<double> mu, sigma;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string k, a, b;
    if (!(ls >> k >> a >> b)) throw ConfigError("error model: expected 'k mu sigma' line");
    const auto idx = static_cast<std::size_t>(parse_double(k, "error model step"));
    if (idx != mu.size()) throw ConfigError("error model: steps must be contiguous from 0");
    mu.push_back(parse_double(a, "error model mu"));
    sigma.push_back(parse_double(b, "error model sigma"));
  }
  return ErrorModel::gaussian(std::move(mu), std::move(sigma));
}

inline void read_residual_bank(std::istream& in, ErrorModel& m) {
  m.residuals.assign(m.mu.size(), {});
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    const auto idx = static_cast<std::size_t>(parse_double(tok, "residual bank step"));
    if (idx >= m.residuals.size()) throw ConfigError("residual bank: step beyond error model");
    while (ls >> tok) m.residuals[idx].push_back(parse_double(tok, "residual"));
  }
  for (const auto& bank : m.residuals) {
    if (bank.empty()) throw ConfigError("residual bank: missing step");
  }
  m.mode = ErrorModelMode::Empirical;
}

inline ErrorModel load_error_model(const std::string& path, const std::string& residual_path = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open error model file: " + path);
  ErrorModel m = read_error_model(in);
  if (!residual_path.empty()) {
    std::ifstream rin(residual_path);
    if (!rin) throw ConfigError("cannot open residual file: " + residual_path);
    read_residual_bank(rin, m);
  }
  return m;
}

}  // namespace uapbev
