#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <complex>
#include <unsupported/Eigen/FFT>

#include "framebayes/excitation.hpp"
#include "support/oracles.hpp"

using namespace framebayes;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

GroundMotionSpec paper_spec(std::uint64_t seed = 42) {
  GroundMotionSpec s;
  s.omega_g = 8.0 * M_PI;
  s.zeta = 0.6;
  s.phi0 = 5.0;
  s.duration = 40.96;
  s.dt = 0.01;
  s.t_start = 8.20;
  s.t_end = 20.48;
  s.highpass_cutoff_hz = 0.5;
  s.seed = seed;
  return s;
}

Eigen::VectorXd periodogram(const Eigen::VectorXd& x, double dt) {
  const int n = static_cast<int>(x.size());
  Eigen::FFT<double> fft;
  std::vector<double> in(x.data(), x.data() + n);
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, in);
  Eigen::VectorXd p(n / 2 + 1);
  for (int k = 0; k <= n / 2; ++k)
    p(k) = std::norm(spec[static_cast<std::size_t>(k)]) * dt / n;
  return p;
}

}  // namespace

TEST_CASE("Kanai-Tajimi spectrum values") {
  GroundMotionSpec s = paper_spec();
  CHECK_THAT(kanai_tajimi_psd(0.0, s), WithinRel(5.0, 1e-14));
  CHECK(kanai_tajimi_psd(1e4 * s.omega_g, s) < 1e-6 * s.phi0);
  // at the corner frequency: phi0 (1 + 4 z^2) / (4 z^2)
  CHECK_THAT(kanai_tajimi_psd(s.omega_g, s), WithinRel(5.0 * (1.0 + 1.44) / 1.44, 1e-12));
  CHECK_THAT(kanai_tajimi_psd(s.omega_g, s), WithinAbs(8.4722, 5e-4));
}

TEST_CASE("envelope shape") {
  GroundMotionSpec s = paper_spec();
  CHECK(amin_envelope(0.0, s) == 0.0);
  CHECK_THAT(amin_envelope(0.5 * s.t_start, s), WithinRel(0.25, 1e-12));
  CHECK(amin_envelope(s.t_start, s) == 1.0);
  CHECK(amin_envelope(0.5 * (s.t_start + s.t_end), s) == 1.0);
  CHECK(amin_envelope(s.t_end, s) == 1.0);
  CHECK_THAT(amin_envelope(s.duration, s), WithinRel(0.1, 1e-9));
  for (double t = 0.0; t <= s.duration; t += 0.37) {
    const double e = amin_envelope(t, s);
    CHECK(e >= 0.0);
    CHECK(e <= 1.0);
    if (t > s.t_start + 1e-9 && t < s.t_end - 1e-9) CHECK(e == 1.0);
  }
}

TEST_CASE("synthesis is seed-deterministic") {
  const Eigen::VectorXd a = synthesize_record(paper_spec(7));
  const Eigen::VectorXd b = synthesize_record(paper_spec(7));
  const Eigen::VectorXd c = synthesize_record(paper_spec(8));
  REQUIRE(a.size() == 4096);
  CHECK((a - b).isZero(0.0));
  CHECK((a - c).norm() > 0.0);
  CHECK(std::abs(a.mean()) < 1e-10 * a.cwiseAbs().maxCoeff());
}

TEST_CASE("high-pass filter behaviour") {
  SECTION("mask endpoints") {
    CHECK(highpass_mask(0.0, 0.5) == 0.0);
    CHECK(highpass_mask(0.19, 0.5) == 0.0);
    CHECK(highpass_mask(0.8, 0.5) == 1.0);
    CHECK(highpass_mask(2.0, 0.5) == 1.0);
    CHECK_THAT(highpass_mask(0.5, 0.5), WithinAbs(0.5, 1e-12));
    CHECK(highpass_mask(1.0, 0.0) == 1.0);  // disabled filter
  }

  GroundMotionSpec with = paper_spec(3);
  GroundMotionSpec without = with;
  without.highpass_cutoff_hz = 0.0;

  SECTION("stopband suppression at 0.25 Hz") {
    double p_with = 0.0, p_without = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      with.seed = seed;
      without.seed = seed;
      const Eigen::VectorXd pf = periodogram(synthesize_record(with), with.dt);
      const Eigen::VectorXd pu = periodogram(synthesize_record(without), with.dt);
      const double df = 1.0 / with.duration;
      const int bin = static_cast<int>(std::round(0.25 / df));
      for (int k = bin - 1; k <= bin + 1; ++k) {
        p_with += pf(k);
        p_without += pu(k);
      }
    }
    CHECK(p_with < 0.01 * p_without);
  }

  SECTION("passband above 1 Hz is untouched") {
    with.seed = 11;
    without.seed = 11;
    Eigen::FFT<double> fft;
    const Eigen::VectorXd xf = synthesize_record(with);
    const Eigen::VectorXd xu = synthesize_record(without);
    std::vector<double> inf(xf.data(), xf.data() + xf.size());
    std::vector<double> inu(xu.data(), xu.data() + xu.size());
    std::vector<std::complex<double>> sf, su;
    fft.fwd(sf, inf);
    fft.fwd(su, inu);
    const double df = 1.0 / with.duration;
    for (int k = static_cast<int>(std::ceil(1.0 / df)); k <= 2048; ++k) {
      const double mu = std::abs(su[static_cast<std::size_t>(k)]);
      if (mu < 1e-12) continue;
      CHECK(std::abs(sf[static_cast<std::size_t>(k)]) / mu > 0.99);
      CHECK(std::abs(sf[static_cast<std::size_t>(k)]) / mu < 1.01);
    }
  }
}

TEST_CASE("stationary-segment variance matches the quadrature of the spectrum") {
  GroundMotionSpec s = paper_spec();
  s.highpass_cutoff_hz = 0.0;  // variance check applies to the raw synthesis
  const double nyquist = M_PI / s.dt;
  const double target = 2.0 * oracles::integrate_simpson(
                                  [&](double w) { return kanai_tajimi_psd(w, s); }, 0.0, nyquist,
                                  20000);

  const int i0 = static_cast<int>(std::ceil(s.t_start / s.dt));
  const int i1 = static_cast<int>(std::floor(s.t_end / s.dt));
  double mean_var = 0.0;
  const int n_seeds = 100;
  for (int seed = 0; seed < n_seeds; ++seed) {
    s.seed = static_cast<std::uint64_t>(seed);
    const Eigen::VectorXd x = synthesize_record(s);
    const Eigen::VectorXd seg = x.segment(i0, i1 - i0 + 1);
    mean_var += (seg.array() - seg.mean()).square().sum() / (seg.size() - 1.0);
  }
  mean_var /= n_seeds;
  CHECK_THAT(mean_var, WithinRel(target, 0.05));
}

TEST_CASE("smoothed spectrum of simulations tracks the target spectrum shape") {
  GroundMotionSpec s = paper_spec();
  const int i0 = static_cast<int>(std::ceil(s.t_start / s.dt));
  const int i1 = static_cast<int>(std::floor(s.t_end / s.dt));

  Eigen::VectorXd mean_p;
  for (int seed = 0; seed < 10; ++seed) {
    s.seed = static_cast<std::uint64_t>(100 + seed);
    const Eigen::VectorXd x = synthesize_record(s);
    const Eigen::VectorXd p = periodogram(x.segment(i0, i1 - i0 + 1), s.dt);
    if (mean_p.size() == 0)
      mean_p = p;
    else
      mean_p += p;
  }
  mean_p /= 10.0;

  const double seg_duration = (i1 - i0) * s.dt;
  const double df = 1.0 / seg_duration;
  const int half_window = static_cast<int>(std::round(0.25 / df));  // 0.5 Hz smoothing
  auto smoothed = [&](int k) {
    double acc = 0.0;
    int count = 0;
    for (int j = std::max(0, k - half_window);
         j <= std::min<int>(static_cast<int>(mean_p.size()) - 1, k + half_window); ++j) {
      acc += mean_p(j);
      ++count;
    }
    return acc / count;
  };

  const int k_lo = static_cast<int>(std::ceil(1.5 / df));
  const int k_hi = static_cast<int>(std::floor(10.0 / df));
  std::vector<double> est, ref;
  for (int k = k_lo; k <= k_hi; ++k) {
    est.push_back(smoothed(k));
    // one-sided target: 2 S(w); the absolute scale cancels in the correlation
    ref.push_back(2.0 * kanai_tajimi_psd(2.0 * M_PI * k * df, s));
  }
  const auto corr = [&]() {
    const double n = static_cast<double>(est.size());
    double me = 0, mr = 0;
    for (std::size_t i = 0; i < est.size(); ++i) {
      me += est[i];
      mr += ref[i];
    }
    me /= n;
    mr /= n;
    double ce = 0, cr = 0, cx = 0;
    for (std::size_t i = 0; i < est.size(); ++i) {
      ce += (est[i] - me) * (est[i] - me);
      cr += (ref[i] - mr) * (ref[i] - mr);
      cx += (est[i] - me) * (ref[i] - mr);
    }
    return cx / std::sqrt(ce * cr);
  }();
  CHECK(corr > 0.9);

  // spectral peak lands near the target peak
  int k_peak = k_lo;
  for (int k = k_lo; k <= k_hi; ++k)
    if (smoothed(k) > smoothed(k_peak)) k_peak = k;
  double f_ref_peak = 0.0, best = 0.0;
  for (double f = 0.5; f <= 10.0; f += 0.01) {
    const double v = kanai_tajimi_psd(2.0 * M_PI * f, s);
    if (v > best) {
      best = v;
      f_ref_peak = f;
    }
  }
  CHECK_THAT(k_peak * df, WithinAbs(f_ref_peak, 0.8));
}

TEST_CASE("observation noise") {
  ChannelSet set;
  set.dt = 0.01;
  set.names = {"a_ref", "a_other", "r_ref"};
  auto rng = make_rng(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  set.data.resize(3, 4096);
  for (Eigen::Index j = 0; j < set.data.cols(); ++j) {
    set.data(0, j) = gauss(rng);
    set.data(1, j) = 0.5 * gauss(rng);
    set.data(2, j) = 2000.0 * gauss(rng);
  }
  // force the reference channel to exactly unit RMS
  set.data.row(0) /= rms(set.data.row(0).transpose());

  SECTION("zero ratios return the input untouched") {
    NoiseSpec n;
    n.seed = 1;
    const ChannelSet out = add_noise(set, n, "a_ref", "r_ref");
    CHECK((out.data - set.data).isZero(0.0));
  }

  SECTION("added noise has the requested standard deviation") {
    NoiseSpec n;
    n.accel_sigma_ratio = 0.1;
    n.moment_sigma_ratio = 0.0;
    n.seed = 77;
    const ChannelSet out = add_noise(set, n, "a_ref", "r_ref");
    const Eigen::VectorXd delta = (out.data.row(1) - set.data.row(1)).transpose();
    const double sd = std::sqrt((delta.array() - delta.mean()).square().sum() /
                                (delta.size() - 1.0));
    // sampling error of a sample s.d. over 4096 draws: sigma/sqrt(2n)
    const double three_sigma = 3.0 * 0.1 / std::sqrt(2.0 * 4096.0);
    CHECK_THAT(sd, WithinAbs(0.1, three_sigma));
    // moment channel untouched at zero ratio
    CHECK((out.data.row(2) - set.data.row(2)).isZero(0.0));
  }

  SECTION("deterministic given the seed") {
    NoiseSpec n;
    n.accel_sigma_ratio = 0.05;
    n.moment_sigma_ratio = 0.02;
    n.seed = 9;
    const ChannelSet a = add_noise(set, n, "a_ref", "r_ref");
    const ChannelSet b = add_noise(set, n, "a_ref", "r_ref");
    CHECK((a.data - b.data).isZero(0.0));
  }

  SECTION("case table") {
    CHECK(noise_case(1, 0).accel_sigma_ratio == 0.01);
    CHECK(noise_case(1, 0).moment_sigma_ratio == 0.01);
    CHECK(noise_case(2, 0).accel_sigma_ratio == 0.10);
    CHECK(noise_case(2, 0).moment_sigma_ratio == 0.01);
    CHECK(noise_case(3, 0).accel_sigma_ratio == 0.01);
    CHECK(noise_case(3, 0).moment_sigma_ratio == 0.10);
    CHECK(noise_case(4, 0).accel_sigma_ratio == 0.10);
    CHECK(noise_case(4, 0).moment_sigma_ratio == 0.10);
    CHECK_THROWS_AS(noise_case(5, 0), ConfigError);
  }

  SECTION("empty series rejected") {
    ChannelSet empty;
    empty.dt = 0.01;
    empty.names = {"a_ref"};
    empty.data.resize(1, 0);
    NoiseSpec n;
    n.accel_sigma_ratio = 0.1;
    CHECK_THROWS_AS(add_noise(empty, n, "a_ref", "r"), NumericalError);
  }
}

TEST_CASE("spec validation") {
  GroundMotionSpec s = paper_spec();
  s.dt = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = paper_spec();
  s.t_start = 25.0;  // after t_end
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = paper_spec();
  s.zeta = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = paper_spec();
  s.duration = 40.955;  // not a multiple of dt
  CHECK_THROWS_AS(s.validate(), ConfigError);
}
