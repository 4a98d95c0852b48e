#ifndef FRAMEBAYES_SYSID_HPP
#define FRAMEBAYES_SYSID_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "framebayes/errors.hpp"
#include "framebayes/timeseries.hpp"

namespace framebayes {

/// Discrete-time state-space realization. B and D stay empty for output-only
/// identification.
struct StateSpaceRealization {
  Eigen::MatrixXd A, B, C, D;
  double dt = 0.0;

  int order() const { return static_cast<int>(A.rows()); }
  int n_outputs() const { return static_cast<int>(C.rows()); }
  int n_inputs() const { return static_cast<int>(B.cols()); }
};

// Block-Hankel with `rows` block rows: column t stacks x(:, t), ..., x(:, t+rows-1).
inline Eigen::MatrixXd block_hankel(const Eigen::MatrixXd& x, int rows) {
  const Eigen::Index q = x.rows();
  const Eigen::Index cols = x.cols() - rows + 1;
  if (rows < 1 || cols < 1) throw NumericalError("series too short for the block Hankel matrix");
  Eigen::MatrixXd h(q * rows, cols);
  for (int r = 0; r < rows; ++r) h.middleRows(r * q, q) = x.middleCols(r, cols);
  return h;
}

namespace detail {

inline Eigen::MatrixXd pinv(const Eigen::MatrixXd& m, double rel_tol = 1e-12) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double tol = rel_tol * (s.size() > 0 ? s(0) : 0.0);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > tol) inv(i) = 1.0 / s(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// Extended observability [C; CA; ...; CA^{m-1}].
inline Eigen::MatrixXd extended_observability(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C,
                                              int m) {
  const Eigen::Index q = C.rows(), n = C.cols();
  Eigen::MatrixXd o(q * m, n);
  o.topRows(q) = C;
  for (int k = 1; k < m; ++k) o.middleRows(k * q, q) = o.middleRows((k - 1) * q, q) * A;
  return o;
}

// (A, C) from an SVD of a matrix whose column space is the extended
// observability range; throws when the numerical rank cannot carry `order`.
inline void observability_to_ac(const Eigen::MatrixXd& subspace, int q, int block_rows, int order,
                                Eigen::MatrixXd& A, Eigen::MatrixXd& C) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(subspace, Eigen::ComputeFullU);
  const auto& sv = svd.singularValues();
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-8 * sv(0)) ++rank;
  if (order > rank)
    throw OrderTooHighError("requested order " + std::to_string(order) +
                                " exceeds the detected rank " + std::to_string(rank),
                            rank);
  const Eigen::MatrixXd obs =
      svd.matrixU().leftCols(order) *
      sv.head(order).cwiseSqrt().asDiagonal();
  C = obs.topRows(q);
  const Eigen::MatrixXd up = obs.topRows(q * (block_rows - 1));
  const Eigen::MatrixXd down = obs.bottomRows(q * (block_rows - 1));
  A = up.colPivHouseholderQr().solve(down);
}

}  // namespace detail

/// MOESP: LQ factorization of the stacked input/output block-Hankel matrices,
/// SVD of the part of the output data orthogonal to the input row space, then
/// B and D by least squares against the identified observability structure.
inline StateSpaceRealization moesp_identify(const Eigen::MatrixXd& inputs,
                                            const Eigen::MatrixXd& outputs, int block_rows,
                                            int order, double dt) {
  const Eigen::Index p = inputs.rows(), q = outputs.rows(), N = inputs.cols();
  if (outputs.cols() != N) throw NumericalError("input/output length mismatch");
  if (block_rows < 2) throw NumericalError("need at least two block rows");
  if (static_cast<Eigen::Index>(block_rows) * q <= order)
    throw NumericalError("block_rows * n_outputs must exceed the requested order");
  const Eigen::Index j = N - block_rows + 1;
  if (j < (p + q) * block_rows)
    throw NumericalError("series too short to fill the block Hankel matrices");

  const double scale = 1.0 / std::sqrt(static_cast<double>(j));
  Eigen::MatrixXd W((p + q) * block_rows, j);
  W.topRows(p * block_rows) = block_hankel(inputs, block_rows) * scale;
  W.bottomRows(q * block_rows) = block_hankel(outputs, block_rows) * scale;

  // W = L Q with L lower triangular, via QR of W^T
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(W.transpose());
  const Eigen::MatrixXd L = Eigen::MatrixXd(
      qr.matrixQR().topRows(W.rows()).triangularView<Eigen::Upper>()).transpose();
  const Eigen::Index pu = p * block_rows, qy = q * block_rows;
  const Eigen::MatrixXd L11 = L.topLeftCorner(pu, pu);
  const Eigen::MatrixXd L21 = L.bottomLeftCorner(qy, pu);
  const Eigen::MatrixXd L22 = L.bottomRightCorner(qy, qy);

  StateSpaceRealization sys;
  sys.dt = dt;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(L22, Eigen::ComputeFullU);
  const auto& sv = svd.singularValues();
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-8 * sv(0)) ++rank;
  if (order > rank)
    throw OrderTooHighError("requested order " + std::to_string(order) +
                                " exceeds the detected rank " + std::to_string(rank),
                            rank);

  const Eigen::MatrixXd obs =
      svd.matrixU().leftCols(order) * sv.head(order).cwiseSqrt().asDiagonal();
  sys.C = obs.topRows(q);
  sys.A = obs.topRows(q * (block_rows - 1))
              .colPivHouseholderQr()
              .solve(obs.bottomRows(q * (block_rows - 1)));

  // least squares for B, D:  Xi_k = Phi_k D + [Phi_{k+1} .. Phi_s] O_{s-k} B
  const Eigen::MatrixXd U2t = svd.matrixU().rightCols(qy - order).transpose();
  const Eigen::MatrixXd Xi = U2t * L21 * detail::pinv(L11);
  const Eigen::Index rows_per_k = qy - order;
  Eigen::MatrixXd G(rows_per_k * block_rows, q + order);
  Eigen::MatrixXd rhs(rows_per_k * block_rows, p);
  const Eigen::MatrixXd obs_full = detail::extended_observability(sys.A, sys.C, block_rows);
  for (int k = 0; k < block_rows; ++k) {
    rhs.middleRows(k * rows_per_k, rows_per_k) = Xi.middleCols(k * p, p);
    G.block(k * rows_per_k, 0, rows_per_k, q) = U2t.middleCols(k * q, q);
    Eigen::MatrixXd Lk = Eigen::MatrixXd::Zero(rows_per_k, order);
    if (k + 1 < block_rows)
      Lk = U2t.rightCols(q * (block_rows - k - 1)) *
           obs_full.topRows(q * (block_rows - k - 1));
    G.block(k * rows_per_k, q, rows_per_k, order) = Lk;
  }
  const Eigen::MatrixXd DB = G.colPivHouseholderQr().solve(rhs);
  sys.D = DB.topRows(q);
  sys.B = DB.bottomRows(order);
  return sys;
}

/// Output-only covariance realization: SVD of the block-Hankel matrix of
/// output covariances gives the observability range; only (A, C) come back.
inline StateSpaceRealization stochastic_realization(const Eigen::MatrixXd& outputs,
                                                    int block_rows, int order, double dt) {
  const Eigen::Index q = outputs.rows(), N = outputs.cols();
  if (block_rows < 2) throw NumericalError("need at least two block rows");
  if (static_cast<Eigen::Index>(block_rows) * q <= order)
    throw NumericalError("block_rows * n_outputs must exceed the requested order");
  if (N < 4 * block_rows) throw NumericalError("series too short for covariance estimation");

  Eigen::MatrixXd y = outputs;
  const Eigen::VectorXd mean = y.rowwise().mean();
  y.colwise() -= mean;

  std::vector<Eigen::MatrixXd> lags(static_cast<std::size_t>(2 * block_rows));
  for (int i = 1; i <= 2 * block_rows; ++i)
    lags[static_cast<std::size_t>(i - 1)] =
        (y.rightCols(N - i) * y.leftCols(N - i).transpose()) / static_cast<double>(N - i);

  Eigen::MatrixXd hank(q * block_rows, q * block_rows);
  for (int a = 0; a < block_rows; ++a)
    for (int b = 0; b < block_rows; ++b)
      hank.block(a * q, b * q, q, q) = lags[static_cast<std::size_t>(a + b)];

  StateSpaceRealization sys;
  sys.dt = dt;
  detail::observability_to_ac(hank, static_cast<int>(q), block_rows, order, sys.A, sys.C);
  sys.B.resize(order, 0);
  sys.D.resize(q, 0);
  return sys;
}

// ---------------------------------------------------------------------------
// Modal extraction and conversions
// ---------------------------------------------------------------------------

struct OutputRoles {
  std::vector<int> accel;   // output rows carrying acceleration channels
  std::vector<int> moment;  // output rows carrying stress-resultant channels
};

struct ComplexMode {
  std::complex<double> lambda;  // discrete-time eigenvalue, Im > 0 member of the pair
  double omega = 0.0;           // |ln lambda| / dt
  double damping = 0.0;         // -Re(ln lambda) / |ln lambda|
  Eigen::VectorXcd phi;         // full output shape C v
  Eigen::VectorXcd a;           // acceleration partition
  Eigen::VectorXcd r;           // resultant partition
};

struct ModeExtraction {
  std::vector<ComplexMode> modes;          // oscillatory pairs, ascending frequency
  std::vector<std::complex<double>> real_poles;  // non-oscillatory eigenvalues, reported as-is
};

inline ModeExtraction extract_modes(const StateSpaceRealization& sys, const OutputRoles& roles) {
  if (!(sys.dt > 0.0)) throw NumericalError("realization has no sampling period");
  Eigen::EigenSolver<Eigen::MatrixXd> es(sys.A);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition of A failed");

  ModeExtraction out;
  for (Eigen::Index i = 0; i < sys.A.rows(); ++i) {
    const std::complex<double> lambda = es.eigenvalues()(i);
    if (std::abs(lambda.imag()) < 1e-12 * std::max(1.0, std::abs(lambda.real()))) {
      out.real_poles.push_back(lambda);
      continue;
    }
    if (lambda.imag() < 0.0) continue;  // keep one member of each conjugate pair
    const std::complex<double> s = std::log(lambda) / sys.dt;
    ComplexMode m;
    m.lambda = lambda;
    m.omega = std::abs(s);
    m.damping = -s.real() / std::abs(s);
    m.phi = sys.C * es.eigenvectors().col(i);
    m.a.resize(static_cast<Eigen::Index>(roles.accel.size()));
    for (std::size_t k = 0; k < roles.accel.size(); ++k)
      m.a(static_cast<Eigen::Index>(k)) = m.phi(roles.accel[k]);
    m.r.resize(static_cast<Eigen::Index>(roles.moment.size()));
    for (std::size_t k = 0; k < roles.moment.size(); ++k)
      m.r(static_cast<Eigen::Index>(k)) = m.phi(roles.moment[k]);
    out.modes.push_back(std::move(m));
  }
  std::sort(out.modes.begin(), out.modes.end(),
            [](const ComplexMode& a, const ComplexMode& b) { return a.omega < b.omega; });
  return out;
}

// d = -a / w^2: acceleration mode shape to displacement mode shape.
inline Eigen::VectorXcd ma_to_md(const Eigen::VectorXcd& a_complex, double omega) {
  if (!(omega > 0.0)) throw NumericalError("ma_to_md needs omega > 0");
  return -a_complex / (omega * omega);
}

// Rotate each partition by the phase of its reference component and keep the
// real part; the reference entry comes out real and positive. The magnitude
// variant keeps |.| with the sign of the rotated real part.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> rotate_to_real(const Eigen::VectorXcd& d_complex,
                                                                  const Eigen::VectorXcd& r_complex,
                                                                  int ref_d, int ref_r,
                                                                  bool magnitude_phase = false) {
  if (ref_d < 0 || ref_d >= d_complex.size() || ref_r < 0 || ref_r >= r_complex.size())
    throw NumericalError("reference component index out of range");
  if (std::abs(d_complex(ref_d)) == 0.0 || std::abs(r_complex(ref_r)) == 0.0)
    throw NumericalError("zero reference component; pick a different reference channel");
  auto rotate = [&](const Eigen::VectorXcd& v, int ref) {
    const std::complex<double> rot = std::polar(1.0, -std::arg(v(ref)));
    Eigen::VectorXd out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const std::complex<double> z = v(i) * rot;
      out(i) = magnitude_phase ? std::copysign(std::abs(z), z.real()) : z.real();
    }
    return out;
  };
  return {rotate(d_complex, ref_d), rotate(r_complex, ref_r)};
}

// Both vectors divided by ||d||; preserves the internal-force-per-unit-deformation
// meaning of r.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> normalize_pair(const Eigen::VectorXd& d_real,
                                                                  const Eigen::VectorXd& r_real) {
  const double n = d_real.norm();
  if (!(n > 0.0)) throw NumericalError("cannot normalize a zero displacement mode shape");
  return {d_real / n, r_real / n};
}

// Bending moment from the strains at the east/west edges of a cross-section.
inline double strain_to_mbm(double eps_east, double eps_west, double E, double Z) {
  if (!(E > 0.0 && Z > 0.0)) throw GeometryError("strain conversion needs positive E and Z");
  return (eps_east - eps_west) * E * Z / 2.0;
}

// Modal assurance criterion of two real shapes.
inline double mac(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double num = a.dot(b);
  return num * num / (a.squaredNorm() * b.squaredNorm());
}

// ---------------------------------------------------------------------------
// Identified modal dataset
// ---------------------------------------------------------------------------

struct ModalModeData {
  double omega = 0.0;
  double damping = 0.0;
  Eigen::VectorXd d;  // unit Euclidean norm
  Eigen::VectorXd r;  // scaled by the same factor as d
  double normalization = 1.0;  // raw ||d|| divided out of both vectors
};

struct ModalDataset {
  std::vector<ModalModeData> modes;
  std::vector<std::string> d_channels;
  std::vector<std::string> r_channels;
  std::string reference_d, reference_r;
};

struct SysidConfig {
  int block_rows = 30;
  int order = 10;
  int n_modes = 2;
  std::vector<std::string> input_channels;  // empty selects output-only identification
  std::string reference_d;                  // acceleration channel for phase rotation
  std::string reference_r;                  // resultant channel for phase rotation
  bool magnitude_phase = false;
  double max_damping = 0.2;
  // noise-mode rejection: drop poles whose acceleration-shape norm falls below
  // this fraction of the strongest candidate, and merge near-coincident
  // frequencies keeping the stronger pole
  double amplitude_floor = 0.1;
  double cluster_tol = 0.02;
};

// Physical-mode selection: damping and band filters, relative-amplitude floor,
// duplicate-frequency merging, then ascending frequency.
inline std::vector<ComplexMode> select_modes(const std::vector<ComplexMode>& candidates,
                                             const SysidConfig& cfg, double nyquist) {
  std::vector<ComplexMode> kept;
  double max_amp = 0.0;
  for (const auto& m : candidates) {
    if (m.damping <= -1e-8 || m.damping >= cfg.max_damping) continue;
    if (!(m.omega > 0.0) || m.omega > 0.95 * nyquist) continue;
    kept.push_back(m);
    max_amp = std::max(max_amp, m.a.norm());
  }
  std::vector<ComplexMode> strong;
  for (auto& m : kept)
    if (m.a.norm() >= cfg.amplitude_floor * max_amp) strong.push_back(std::move(m));

  std::sort(strong.begin(), strong.end(),
            [](const ComplexMode& a, const ComplexMode& b) { return a.omega < b.omega; });
  std::vector<ComplexMode> merged;
  for (auto& m : strong) {
    if (!merged.empty() &&
        std::abs(m.omega - merged.back().omega) <
            cfg.cluster_tol * std::max(m.omega, merged.back().omega)) {
      if (m.a.norm() > merged.back().a.norm()) merged.back() = std::move(m);
    } else {
      merged.push_back(std::move(m));
    }
  }
  if (static_cast<int>(merged.size()) > cfg.n_modes) merged.resize(cfg.n_modes);
  return merged;
}

/// End-to-end identification of a modal dataset from measured time histories:
/// subspace identification, mode selection, acceleration-to-displacement
/// conversion, phase rotation and paired normalization.
inline ModalDataset identify_modal_dataset(const ChannelSet& data,
                                           const std::vector<std::string>& accel_outputs,
                                           const std::vector<std::string>& moment_outputs,
                                           const SysidConfig& cfg) {
  std::vector<std::string> outputs = accel_outputs;
  outputs.insert(outputs.end(), moment_outputs.begin(), moment_outputs.end());
  const Eigen::MatrixXd y = data.rows(outputs);

  StateSpaceRealization sys;
  if (cfg.input_channels.empty()) {
    sys = stochastic_realization(y, cfg.block_rows, cfg.order, data.dt);
  } else {
    const Eigen::MatrixXd u = data.rows(cfg.input_channels);
    sys = moesp_identify(u, y, cfg.block_rows, cfg.order, data.dt);
  }

  OutputRoles roles;
  for (std::size_t i = 0; i < accel_outputs.size(); ++i) roles.accel.push_back(static_cast<int>(i));
  for (std::size_t i = 0; i < moment_outputs.size(); ++i)
    roles.moment.push_back(static_cast<int>(accel_outputs.size() + i));
  const ModeExtraction ex = extract_modes(sys, roles);
  const std::vector<ComplexMode> selected = select_modes(ex.modes, cfg, M_PI / data.dt);

  int ref_d = -1, ref_r = -1;
  for (std::size_t i = 0; i < accel_outputs.size(); ++i)
    if (accel_outputs[i] == cfg.reference_d) ref_d = static_cast<int>(i);
  for (std::size_t i = 0; i < moment_outputs.size(); ++i)
    if (moment_outputs[i] == cfg.reference_r) ref_r = static_cast<int>(i);
  if (ref_d < 0) throw ConfigError("reference_d channel '" + cfg.reference_d + "' is not an output");
  if (ref_r < 0) throw ConfigError("reference_r channel '" + cfg.reference_r + "' is not an output");

  ModalDataset ds;
  ds.d_channels = accel_outputs;
  ds.r_channels = moment_outputs;
  ds.reference_d = cfg.reference_d;
  ds.reference_r = cfg.reference_r;
  for (const auto& m : selected) {
    const Eigen::VectorXcd d_c = ma_to_md(m.a, m.omega);
    auto [d_real, r_real] = rotate_to_real(d_c, m.r, ref_d, ref_r, cfg.magnitude_phase);
    ModalModeData md;
    md.normalization = d_real.norm();
    auto [d_n, r_n] = normalize_pair(d_real, r_real);
    md.omega = m.omega;
    md.damping = m.damping;
    md.d = d_n;
    md.r = r_n;
    ds.modes.push_back(std::move(md));
  }
  if (static_cast<int>(ds.modes.size()) < cfg.n_modes)
    throw NumericalError("identified only " + std::to_string(ds.modes.size()) + " of " +
                         std::to_string(cfg.n_modes) + " requested modes");
  return ds;
}

}  // namespace framebayes

#endif
