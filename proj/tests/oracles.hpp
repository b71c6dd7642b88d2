#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "flowlab/eval.hpp"
#include "flowlab/mlp.hpp"

namespace oracle {

// Pascal's triangle in 64-bit integers (exact for n <= 62).
inline std::uint64_t choose(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::vector<std::uint64_t> row(static_cast<std::size_t>(n) + 1, 0);
  row[0] = 1;
  for (int i = 1; i <= n; ++i) {
    for (int j = i; j > 0; --j) row[j] += row[j - 1];
  }
  return row[k];
}

// Plain loops over the layer views: rectifier on hidden layers.
inline Eigen::VectorXd mlp_forward(const flowlab::Mlp& net, const Eigen::VectorXd& input) {
  std::vector<double> h(input.data(), input.data() + input.size());
  const auto& sizes = net.layer_sizes();
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    const auto w = net.weight(k);
    const auto b = net.bias(k);
    std::vector<double> z(static_cast<std::size_t>(sizes[k + 1]), 0.0);
    for (int i = 0; i < sizes[k + 1]; ++i) {
      double acc = b[i];
      for (int j = 0; j < sizes[k]; ++j) acc += w(i, j) * h[static_cast<std::size_t>(j)];
      z[static_cast<std::size_t>(i)] = (k + 2 < sizes.size()) ? std::max(acc, 0.0) : acc;
    }
    h = std::move(z);
  }
  return Eigen::Map<Eigen::VectorXd>(h.data(), static_cast<Eigen::Index>(h.size()));
}

// Central differences of f with respect to every entry of params.
inline Eigen::VectorXd central_difference(Eigen::VectorXd& params, const std::function<double()>& f,
                                          double h = 1e-5) {
  Eigen::VectorXd g(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = f();
    params[i] = keep - h;
    const double down = f();
    params[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// max_i |a_i - n_i| / max(|a_i|, |n_i|), skipping entries where both are
// below `floor` in magnitude (pure round-off there).
inline double max_relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric,
                                 double floor = 1e-7) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double scale = std::max(std::abs(analytic[i]), std::abs(numeric[i]));
    if (scale < floor) continue;
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

// Smallest gradient magnitude that a central difference with step h can
// resolve to `relative` accuracy for a loss r^2, where r sums terms of total
// magnitude `terms`: rounding gives ~eps * (r^2 + 2 |r| terms) absolute error
// per evaluation, taken with a 10x margin.
inline double fd_resolution_floor(double residual, double terms, double h, double relative) {
  const double noise = std::numeric_limits<double>::epsilon() * (residual * residual + 2.0 * std::abs(residual) * terms);
  return 10.0 * noise / h / relative;
}

// Bitwise equality (NaN fields compare equal to themselves).
inline bool same_bits(const flowlab::MetricsRecord& a, const flowlab::MetricsRecord& b) {
  auto eq = [](double x, double y) { return std::memcmp(&x, &y, sizeof x) == 0; };
  return a.round == b.round && a.n_seen == b.n_seen && eq(a.loss, b.loss) && eq(a.log_z, b.log_z) &&
         eq(a.sample_mean_reward, b.sample_mean_reward) && eq(a.target_mean_reward, b.target_mean_reward) &&
         eq(a.rel_mean_error, b.rel_mean_error) && eq(a.ad_statistic, b.ad_statistic) &&
         a.modes_found == b.modes_found && eq(a.diversity, b.diversity);
}

// Spearman rank correlation (average ranks for ties).
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i] / n;
    my += ry[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// P(X > x) for X ~ BetaBinomial(trials, a, b), summed from log-gamma terms.
inline double beta_binomial_tail(int x, int trials, double a, double b) {
  auto log_beta = [](double p, double q) { return std::lgamma(p) + std::lgamma(q) - std::lgamma(p + q); };
  double tail = 0.0;
  for (int k = x + 1; k <= trials; ++k) {
    const double log_choose = std::lgamma(trials + 1.0) - std::lgamma(k + 1.0) - std::lgamma(trials - k + 1.0);
    tail += std::exp(log_choose + log_beta(k + a, trials - k + b) - log_beta(a, b));
  }
  return tail;
}

// Inverse-CDF sampler over a fixed probability vector.
class CdfSampler {
 public:
  explicit CdfSampler(const std::vector<double>& probs) : cdf_(probs.size()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) cdf_[i] = acc += probs[i];
  }
  template <class Rng>
  std::size_t operator()(Rng& rng) const {
    const double u = rng.uniform() * cdf_.back();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

}  // namespace oracle
