#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <random>

#include "framebayes/dynamics.hpp"
#include "framebayes/excitation.hpp"
#include "framebayes/predict.hpp"
#include "support/oracles.hpp"

using namespace framebayes;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

GroundMotionSpec short_motion(std::uint64_t seed) {
  GroundMotionSpec gm;
  gm.omega_g = 8.0 * M_PI;
  gm.zeta = 0.6;
  gm.phi0 = 5.0;
  gm.duration = 20.48;
  gm.dt = 0.01;
  gm.t_start = 4.0;
  gm.t_end = 12.0;
  gm.highpass_cutoff_hz = 0.5;
  gm.seed = seed;
  return gm;
}

Eigen::MatrixXd single_draw_matrix(const ParameterSet& theta) {
  Eigen::MatrixXd row(1, theta.theta_M.size() + theta.theta_K.size() + 3);
  row << theta.theta_M.transpose(), theta.theta_K.transpose(), 0.1, 0.01, 1000.0;
  return row;
}

}  // namespace

TEST_CASE("summary statistics") {
  SECTION("constant samples") {
    const Summary s = summarize({3.5, 3.5, 3.5});
    CHECK(s.mean == 3.5);
    CHECK(s.sd == 0.0);
    CHECK(s.cov == 0.0);
  }
  SECTION("small sample percentiles") {
    const Summary s = summarize({1.0, 2.0, 3.0, 4.0});
    CHECK_THAT(s.mean, WithinRel(2.5, 1e-14));
    CHECK_THAT(s.p50, WithinRel(2.5, 1e-14));
  }
  CHECK_THROWS_AS(summarize({}), NumericalError);
}

TEST_CASE("empirical CDF uses k/(n+1) plotting positions") {
  const EmpiricalCdf c = ecdf({5.0, 1.0, 3.0});
  REQUIRE(c.value.size() == 3);
  CHECK(c.value[0] == 1.0);
  CHECK(c.value[2] == 5.0);
  CHECK_THAT(c.probability[0], WithinRel(0.25, 1e-14));
  CHECK_THAT(c.probability[1], WithinRel(0.50, 1e-14));
  CHECK_THAT(c.probability[2], WithinRel(0.75, 1e-14));

  SECTION("nondecreasing between 0 and 1") {
    auto rng = make_rng(4);
    std::normal_distribution<double> gauss(0.0, 2.0);
    std::vector<double> samples;
    for (int i = 0; i < 500; ++i) samples.push_back(gauss(rng));
    const EmpiricalCdf cc = ecdf(samples);
    for (std::size_t i = 1; i < cc.value.size(); ++i) {
      CHECK(cc.value[i] >= cc.value[i - 1]);
      CHECK(cc.probability[i] > cc.probability[i - 1]);
    }
    CHECK(cc.probability.front() > 0.0);
    CHECK(cc.probability.back() < 1.0);
  }
}

TEST_CASE("kernel density estimate") {
  auto rng = make_rng(6);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> samples;
  for (int i = 0; i < 10000; ++i) samples.push_back(gauss(rng));

  const KdeResult k = kde(samples, 512);

  SECTION("density at the mode of a standard normal") {
    double at_zero = 0.0;
    double best = 1e300;
    for (Eigen::Index i = 0; i < k.grid.size(); ++i)
      if (std::abs(k.grid[i]) < best) {
        best = std::abs(k.grid[i]);
        at_zero = k.density[i];
      }
    CHECK_THAT(at_zero, WithinRel(1.0 / std::sqrt(2.0 * M_PI), 0.10));
  }

  SECTION("integrates to one") {
    double integral = 0.0;
    for (Eigen::Index i = 1; i < k.grid.size(); ++i)
      integral += 0.5 * (k.density[i] + k.density[i - 1]) * (k.grid[i] - k.grid[i - 1]);
    CHECK_THAT(integral, WithinAbs(1.0, 1e-3));
  }

  SECTION("symmetric samples give a symmetric density") {
    std::vector<double> sym = {-2.0, -1.0, -0.5, 0.5, 1.0, 2.0};
    const KdeResult ks = kde(sym, 201);
    for (Eigen::Index i = 0; i < ks.grid.size(); ++i) {
      const Eigen::Index j = ks.grid.size() - 1 - i;
      CHECK_THAT(ks.density[i], WithinAbs(ks.density[j], 1e-12));
    }
  }

  CHECK_THROWS_AS(kde({1.0}), NumericalError);
  CHECK_THROWS_AS(kde({2.0, 2.0, 2.0}), NumericalError);
}

TEST_CASE("predictive peaks from posterior draws") {
  const FrameModel model = oracles::fig1_model();
  const ParameterSet target = oracles::fig1_target();
  const GroundMotionSpec gm = short_motion(7);
  const Eigen::VectorXd ag = synthesize_record(gm);
  const std::vector<QuantityOfInterest> qois = {parse_qoi("a_5x", model),
                                                parse_qoi("r_1i", model)};

  SECTION("single true-parameter draw reproduces the integrator bit-exactly") {
    const auto results =
        predict_peaks(model, single_draw_matrix(target), 1, ag, gm.dt, 0.02, 8, qois);
    const TimeHistoryResult th = integrate(model, target, 0.02, ag, gm.dt, 8);
    REQUIRE(results.size() == 2);
    CHECK(results[0].samples.size() == 1);
    CHECK(results[0].samples[0] == peak(th.accel_abs.row(2).transpose()));
    CHECK(results[1].samples[0] == peak(th.moments.row(0).transpose()));
  }

  SECTION("degenerate posterior gives a step CDF") {
    Eigen::MatrixXd draws(6, single_draw_matrix(target).cols());
    for (int i = 0; i < 6; ++i) draws.row(i) = single_draw_matrix(target);
    const auto results = predict_peaks(model, draws, 1, ag, gm.dt, 0.02, 4, qois);
    for (const auto& r : results) {
      for (double v : r.samples) CHECK(v == r.samples.front());
      CHECK(r.density.grid.size() == 0);  // no density for an atom
    }
  }

  SECTION("thinning forty on four thousand draws runs one hundred analyses") {
    Eigen::MatrixXd draws(4000, single_draw_matrix(target).cols());
    auto rng = make_rng(9);
    std::uniform_real_distribution<double> jitter(0.97, 1.03);
    for (int i = 0; i < 4000; ++i) {
      ParameterSet t = target;
      t.theta_M *= jitter(rng);
      for (int k = 0; k < t.theta_K.size(); ++k)
        t.theta_K[k] = std::min(1.0, t.theta_K[k] * jitter(rng));
      draws.row(i) = single_draw_matrix(t);
    }
    const auto results = predict_peaks(model, draws, 40, ag, gm.dt, 0.02, 4, qois, 2);
    CHECK(results[0].samples.size() == 100);
    CHECK(results[0].cdf.value.size() == 100);
    CHECK(results[0].skipped_draws == 0);
    // CDF of the sorted samples hits k/(n+1)
    CHECK_THAT(results[0].cdf.probability[49], WithinRel(50.0 / 101.0, 1e-12));
  }

  SECTION("linear scaling of the excitation scales every peak") {
    Eigen::MatrixXd draws(3, single_draw_matrix(target).cols());
    auto rng = make_rng(10);
    std::uniform_real_distribution<double> jitter(0.95, 1.05);
    for (int i = 0; i < 3; ++i) {
      ParameterSet t = target;
      t.theta_M *= jitter(rng);
      draws.row(i) = single_draw_matrix(t);
    }
    const auto base = predict_peaks(model, draws, 1, ag, gm.dt, 0.02, 4, qois);
    const auto doubled = predict_peaks(model, draws, 1, (2.0 * ag).eval(), gm.dt, 0.02, 4, qois);
    for (std::size_t q = 0; q < qois.size(); ++q)
      for (std::size_t i = 0; i < base[q].samples.size(); ++i)
        CHECK(doubled[q].samples[i] == 2.0 * base[q].samples[i]);
  }
}
