#ifndef FRAMEBAYES_PREDICT_HPP
#define FRAMEBAYES_PREDICT_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <future>
#include <string>
#include <vector>

#include "framebayes/dynamics.hpp"
#include "framebayes/errors.hpp"
#include "framebayes/excitation.hpp"
#include "framebayes/frame_core.hpp"
#include "framebayes/model.hpp"

namespace framebayes {

struct Summary {
  double mean = 0.0;
  double sd = 0.0;
  double cov = 0.0;  // sd / |mean|
  double p5 = 0.0, p50 = 0.0, p95 = 0.0;
};

// Linear-interpolation quantile on sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw NumericalError("quantile of empty sample");
  if (sorted.size() == 1) return sorted.front();
  const double pos = q * (static_cast<double>(sorted.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return (1.0 - frac) * sorted[lo] + frac * sorted[hi];
}

inline Summary summarize(std::vector<double> samples) {
  if (samples.empty()) throw NumericalError("summarize needs samples");
  Summary s;
  const double n = static_cast<double>(samples.size());
  for (double v : samples) s.mean += v;
  s.mean /= n;
  double ss = 0.0;
  for (double v : samples) ss += (v - s.mean) * (v - s.mean);
  s.sd = samples.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  s.cov = s.mean != 0.0 ? s.sd / std::abs(s.mean) : 0.0;
  std::sort(samples.begin(), samples.end());
  s.p5 = quantile_sorted(samples, 0.05);
  s.p50 = quantile_sorted(samples, 0.50);
  s.p95 = quantile_sorted(samples, 0.95);
  return s;
}

/// Empirical CDF with k/(n+1) plotting positions.
struct EmpiricalCdf {
  std::vector<double> value;       // sorted samples
  std::vector<double> probability; // k/(n+1)

  double quantile(double p) const {
    if (value.empty()) throw NumericalError("empty CDF");
    for (std::size_t i = 0; i < value.size(); ++i)
      if (probability[i] >= p) return value[i];
    return value.back();
  }
};

inline EmpiricalCdf ecdf(std::vector<double> samples) {
  if (samples.empty()) throw NumericalError("ecdf needs samples");
  std::sort(samples.begin(), samples.end());
  EmpiricalCdf c;
  c.value = std::move(samples);
  const double n1 = static_cast<double>(c.value.size()) + 1.0;
  for (std::size_t k = 1; k <= c.value.size(); ++k)
    c.probability.push_back(static_cast<double>(k) / n1);
  return c;
}

struct KdeResult {
  Eigen::VectorXd grid;
  Eigen::VectorXd density;
  double bandwidth = 0.0;
};

// Gaussian kernel density, Silverman's rule by default; the grid spans the
// samples plus three bandwidths on both sides.
inline KdeResult kde(const std::vector<double>& samples, int grid_points = 256,
                     double bandwidth = 0.0) {
  if (samples.size() < 2) throw NumericalError("kde needs at least two samples");
  Summary s = summarize(samples);
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  if (s.sd == 0.0 && iqr == 0.0)
    throw NumericalError("kde is degenerate: all samples identical");
  double h = bandwidth;
  if (h <= 0.0) {
    const double spread = iqr > 0.0 ? std::min(s.sd, iqr / 1.34) : s.sd;
    h = 0.9 * spread * std::pow(static_cast<double>(samples.size()), -0.2);
  }
  KdeResult out;
  out.bandwidth = h;
  const double lo = sorted.front() - 3.0 * h, hi = sorted.back() + 3.0 * h;
  out.grid = Eigen::VectorXd::LinSpaced(grid_points, lo, hi);
  out.density = Eigen::VectorXd::Zero(grid_points);
  const double norm = 1.0 / (static_cast<double>(samples.size()) * h * std::sqrt(2.0 * M_PI));
  for (int g = 0; g < grid_points; ++g) {
    double acc = 0.0;
    for (double x : samples) {
      const double z = (out.grid[g] - x) / h;
      acc += std::exp(-0.5 * z * z);
    }
    out.density[g] = norm * acc;
  }
  return out;
}

/// Quantity of interest: the peak of one response channel.
struct QuantityOfInterest {
  enum class Kind { accel, moment } kind = Kind::accel;
  std::string channel;
};

inline QuantityOfInterest parse_qoi(const std::string& channel, const FrameModel& model) {
  QuantityOfInterest q;
  q.channel = channel;
  for (const auto& m : model.master_dofs)
    if (m.channel == channel) {
      q.kind = QuantityOfInterest::Kind::accel;
      return q;
    }
  for (const auto& o : model.observed)
    if (o.channel == channel) {
      q.kind = QuantityOfInterest::Kind::moment;
      return q;
    }
  throw ConfigError("QoI channel '" + channel + "' is neither a master DOF nor an observed "
                    "resultant");
}

struct PredictiveResult {
  std::string name;
  std::vector<double> samples;  // one peak per retained draw
  EmpiricalCdf cdf;
  KdeResult density;
  Summary summary;
  int skipped_draws = 0;
};

// Every `thinning`-th row of `draws` (constrained parameters, masses first then
// stiffness) goes through a full time-history analysis under the given record.
inline std::vector<PredictiveResult> predict_peaks(
    const FrameModel& model, const Eigen::MatrixXd& draws, int thinning,
    const Eigen::VectorXd& ground_accel, double dt, double damping_ratio, int substeps,
    const std::vector<QuantityOfInterest>& qois, int threads = 1) {
  if (thinning < 1) throw ConfigError("thinning must be >= 1");
  if (draws.rows() < 1) throw ConfigError("no posterior draws to predict from");
  const int n_m = model.n_theta_m(), n_k = model.n_theta_k();
  if (draws.cols() < n_m + n_k) throw ConfigError("draw matrix has too few columns");

  std::vector<Eigen::Index> picks;
  for (Eigen::Index i = thinning - 1; i < draws.rows(); i += thinning) picks.push_back(i);
  if (picks.empty()) picks.push_back(draws.rows() - 1);

  std::vector<std::vector<double>> peaks(qois.size());
  for (auto& p : peaks) p.reserve(picks.size());
  std::vector<int> skipped(qois.size(), 0);

  std::vector<std::vector<double>> per_draw(picks.size());
  std::vector<char> failed(picks.size(), 0);
  auto run_draw = [&](std::size_t w) {
    const Eigen::VectorXd row = draws.row(static_cast<Eigen::Index>(picks[w]));
    ParameterSet theta{row.segment(n_m, n_k), row.head(n_m)};
    try {
      const TimeHistoryResult th =
          integrate(model, theta, damping_ratio, ground_accel, dt, substeps);
      std::vector<double> vals;
      for (const auto& q : qois) {
        if (q.kind == QuantityOfInterest::Kind::accel) {
          int idx = -1;
          for (std::size_t i = 0; i < model.master_dofs.size(); ++i)
            if (model.master_dofs[i].channel == q.channel) idx = static_cast<int>(i);
          vals.push_back(peak(th.accel_abs.row(idx).transpose()));
        } else {
          int idx = -1;
          for (std::size_t i = 0; i < model.observed.size(); ++i)
            if (model.observed[i].channel == q.channel) idx = static_cast<int>(i);
          vals.push_back(peak(th.moments.row(idx).transpose()));
        }
      }
      per_draw[w] = std::move(vals);
    } catch (const Error&) {
      failed[w] = 1;
    }
  };

  if (threads > 1) {
    std::vector<std::future<void>> fut;
    std::size_t next = 0;
    const std::size_t total = picks.size();
    for (int t = 0; t < threads; ++t)
      fut.push_back(std::async(std::launch::async, [&, t]() {
        for (std::size_t w = static_cast<std::size_t>(t); w < total;
             w += static_cast<std::size_t>(threads))
          run_draw(w);
      }));
    (void)next;
    for (auto& f : fut) f.get();
  } else {
    for (std::size_t w = 0; w < picks.size(); ++w) run_draw(w);
  }

  for (std::size_t w = 0; w < picks.size(); ++w) {
    if (failed[w]) {
      for (auto& s : skipped) ++s;
      continue;
    }
    for (std::size_t qi = 0; qi < qois.size(); ++qi) peaks[qi].push_back(per_draw[w][qi]);
  }

  std::vector<PredictiveResult> out;
  for (std::size_t qi = 0; qi < qois.size(); ++qi) {
    if (peaks[qi].empty()) throw NumericalError("all predictive draws failed to integrate");
    PredictiveResult r;
    r.name = qois[qi].channel;
    r.samples = peaks[qi];
    r.cdf = ecdf(peaks[qi]);
    r.summary = summarize(peaks[qi]);
    r.skipped_draws = skipped[qi];
    bool degenerate = true;
    for (double v : peaks[qi])
      if (v != peaks[qi].front()) degenerate = false;
    if (!degenerate) r.density = kde(peaks[qi]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace framebayes

#endif
