#ifndef FRAMEBAYES_EXCITATION_HPP
#define FRAMEBAYES_EXCITATION_HPP

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "framebayes/errors.hpp"
#include "framebayes/random.hpp"
#include "framebayes/timeseries.hpp"

namespace framebayes {

/// Non-stationary ground motion recipe: band-limited stationary core shaped by
/// an envelope, then high-pass filtered.
struct GroundMotionSpec {
  double omega_g = 8.0 * M_PI;  // rad/s, spectral peak region
  double zeta = 0.6;            // bandwidth
  double phi0 = 5.0;            // intensity
  double duration = 40.96;      // s
  double dt = 0.01;             // s
  double t_start = 8.20;        // s, stationary window begin
  double t_end = 20.48;         // s, stationary window end
  double highpass_cutoff_hz = 0.5;  // 0 disables the filter
  std::uint64_t seed = 0;

  int n_samples() const { return static_cast<int>(std::llround(duration / dt)); }

  void validate() const {
    if (!(dt > 0.0)) throw ConfigError("ground_motion.dt must be > 0");
    const double n = duration / dt;
    if (std::abs(n - std::llround(n)) > 1e-9 || n < 2)
      throw ConfigError("ground_motion.duration must be a positive multiple of dt");
    if (!(t_start >= 0.0 && t_start < t_end && t_end <= duration))
      throw ConfigError("ground_motion stationary window must satisfy 0 <= t_start < t_end <= duration");
    if (!(zeta > 0.0 && zeta <= 1.0)) throw ConfigError("ground_motion.zeta must be in (0,1]");
    if (!(phi0 > 0.0)) throw ConfigError("ground_motion.phi0 must be > 0");
    if (highpass_cutoff_hz < 0.0) throw ConfigError("ground_motion.highpass_cutoff_hz must be >= 0");
  }
};

// Two-sided filtered white-noise spectrum
//   S(w) = phi0 (1 + 4 z^2 (w/wg)^2) / ((1 - (w/wg)^2)^2 + 4 z^2 (w/wg)^2)
inline double kanai_tajimi_psd(double omega, const GroundMotionSpec& spec) {
  const double r2 = (omega / spec.omega_g) * (omega / spec.omega_g);
  const double z2 = 4.0 * spec.zeta * spec.zeta * r2;
  return spec.phi0 * (1.0 + z2) / ((1.0 - r2) * (1.0 - r2) + z2);
}

// Parabolic rise, flat top, exponential tail reaching 0.1 at the record end.
inline double amin_envelope(double t, const GroundMotionSpec& spec) {
  if (t <= 0.0) return 0.0;
  if (t < spec.t_start) {
    const double r = t / spec.t_start;
    return r * r;
  }
  if (t <= spec.t_end) return 1.0;
  const double tail = spec.duration - spec.t_end;
  const double rate = tail > 0.0 ? std::log(10.0) / tail : 0.0;
  return std::exp(-rate * (t - spec.t_end));
}

// Cosine-tapered high-pass amplitude mask over [0.4, 1.6] * cutoff.
inline double highpass_mask(double f_hz, double cutoff_hz) {
  if (cutoff_hz <= 0.0) return 1.0;
  const double lo = 0.4 * cutoff_hz, hi = 1.6 * cutoff_hz;
  if (f_hz <= lo) return 0.0;
  if (f_hz >= hi) return 1.0;
  return 0.5 * (1.0 - std::cos(M_PI * (f_hz - lo) / (hi - lo)));
}

namespace detail {

// Stationary core by the spectral representation method: cosine series with
// deterministic amplitudes sqrt(4 S dw) and seeded uniform phases, frequencies
// up to Nyquist.
inline Eigen::VectorXd stationary_core(const GroundMotionSpec& spec, std::mt19937_64& rng) {
  const int n = spec.n_samples();
  const double dw = 2.0 * M_PI / spec.duration;
  const int n_freq = n / 2;
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);

  // FFT synthesis: sum_j a_j cos(w_j t + p_j) == Re IFFT of a_j e^{i p_j} at bins j
  std::vector<std::complex<double>> spectrum(static_cast<std::size_t>(n), {0.0, 0.0});
  for (int j = 1; j <= n_freq; ++j) {
    const double w = j * dw;
    if (w > M_PI / spec.dt + 1e-12) break;
    const double amp = std::sqrt(4.0 * kanai_tajimi_psd(w, spec) * dw);
    const double p = phase(rng);
    // n/2 * amp because the inverse transform divides by n and the conjugate
    // bin doubles every component except Nyquist
    const std::complex<double> c = std::polar(amp * n / 2.0, p);
    spectrum[static_cast<std::size_t>(j)] = c;
    if (j != n - j) spectrum[static_cast<std::size_t>(n - j)] = std::conj(c);
  }

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> time(static_cast<std::size_t>(n));
  fft.inv(time, spectrum);
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x(i) = time[static_cast<std::size_t>(i)].real();
  return x;
}

inline Eigen::VectorXd apply_highpass(const Eigen::VectorXd& x, double dt, double cutoff_hz) {
  if (cutoff_hz <= 0.0) return x;
  const int n = static_cast<int>(x.size());
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(n));
  std::vector<double> xin(x.data(), x.data() + n);
  fft.fwd(spec, xin);
  const double df = 1.0 / (n * dt);
  for (int k = 0; k < n; ++k) {
    const double f = (k <= n / 2 ? k : n - k) * df;
    spec[static_cast<std::size_t>(k)] *= highpass_mask(f, cutoff_hz);
  }
  std::vector<std::complex<double>> out(static_cast<std::size_t>(n));
  fft.inv(out, spec);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = out[static_cast<std::size_t>(i)].real();
  return y;
}

}  // namespace detail

/// One ground acceleration record; bit-identical for identical spec and seed.
inline Eigen::VectorXd synthesize_record(const GroundMotionSpec& spec) {
  spec.validate();
  auto rng = make_rng(spec.seed, 0);
  Eigen::VectorXd x = detail::stationary_core(spec, rng);
  const int n = spec.n_samples();
  for (int i = 0; i < n; ++i) x(i) *= amin_envelope(i * spec.dt, spec);
  return detail::apply_highpass(x, spec.dt, spec.highpass_cutoff_hz);
}

struct NoiseSpec {
  double accel_sigma_ratio = 0.0;   // fraction of RMS of the reference acceleration channel
  double moment_sigma_ratio = 0.0;  // fraction of RMS of the reference moment channel
  std::uint64_t seed = 0;

  void validate() const {
    if (accel_sigma_ratio < 0.0 || moment_sigma_ratio < 0.0)
      throw ConfigError("noise ratios must be >= 0");
  }
};

// Case selector from the four standard noise scenarios.
inline NoiseSpec noise_case(int case_id, std::uint64_t seed) {
  NoiseSpec n;
  n.seed = seed;
  switch (case_id) {
    case 1: n.accel_sigma_ratio = 0.01; n.moment_sigma_ratio = 0.01; break;
    case 2: n.accel_sigma_ratio = 0.10; n.moment_sigma_ratio = 0.01; break;
    case 3: n.accel_sigma_ratio = 0.01; n.moment_sigma_ratio = 0.10; break;
    case 4: n.accel_sigma_ratio = 0.10; n.moment_sigma_ratio = 0.10; break;
    default: throw ConfigError("noise case must be 1..4");
  }
  return n;
}

inline double rms(const Eigen::VectorXd& x) {
  if (x.size() == 0) throw NumericalError("rms of empty series");
  return std::sqrt(x.squaredNorm() / static_cast<double>(x.size()));
}

/// Adds i.i.d. Gaussian noise to every channel: acceleration channels (name
/// starts with "a") at accel_sigma_ratio x RMS(reference accel channel),
/// moment channels (name starts with "r") analogously.
inline ChannelSet add_noise(const ChannelSet& clean, const NoiseSpec& noise,
                            const std::string& reference_accel,
                            const std::string& reference_moment) {
  noise.validate();
  if (clean.n_samples() == 0) throw NumericalError("cannot add noise to empty series");
  ChannelSet out = clean;
  if (noise.accel_sigma_ratio == 0.0 && noise.moment_sigma_ratio == 0.0) return out;

  double sigma_a = 0.0, sigma_r = 0.0;
  if (noise.accel_sigma_ratio > 0.0)
    sigma_a = noise.accel_sigma_ratio * rms(clean.channel(reference_accel));
  if (noise.moment_sigma_ratio > 0.0 && clean.has_channel(reference_moment))
    sigma_r = noise.moment_sigma_ratio * rms(clean.channel(reference_moment));
  auto rng = make_rng(noise.seed, 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int c = 0; c < out.n_channels(); ++c) {
    double sigma = 0.0;
    if (!out.names[c].empty() && out.names[c][0] == 'a')
      sigma = sigma_a;
    else if (!out.names[c].empty() && out.names[c][0] == 'r')
      sigma = sigma_r;
    if (sigma == 0.0) continue;
    for (Eigen::Index j = 0; j < out.n_samples(); ++j) out.data(c, j) += sigma * gauss(rng);
  }
  return out;
}

}  // namespace framebayes

#endif
