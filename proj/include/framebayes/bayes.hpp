#ifndef FRAMEBAYES_BAYES_HPP
#define FRAMEBAYES_BAYES_HPP

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "framebayes/errors.hpp"
#include "framebayes/frame_core.hpp"
#include "framebayes/model.hpp"
#include "framebayes/random.hpp"
#include "framebayes/sysid.hpp"

namespace framebayes {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLogSqrt2Pi = 0.9189385332046727;  // log sqrt(2 pi)

/// Uniform bounds on structural parameters, half-normal scales on the
/// residual standard deviations.
struct Priors {
  Eigen::VectorXd mass_upper;       // per mass parameter, lower bound 0
  Eigen::VectorXd k_lower, k_upper; // per stiffness parameter
  double s_omega = 0.4 * M_PI;
  double s_d = 0.05;
  double s_r = 5.0e4;

  static Priors defaults(const FrameModel& model, double mass_upper_value = 5.0e4,
                         double log10_scale_upper = 3.0) {
    Priors p;
    p.mass_upper = Eigen::VectorXd::Constant(model.n_theta_m(), mass_upper_value);
    p.k_lower.resize(model.n_theta_k());
    p.k_upper.resize(model.n_theta_k());
    for (int i = 0; i < model.n_theta_k(); ++i) {
      if (model.stiffness_params[static_cast<std::size_t>(i)].kind == StiffnessKind::fixity) {
        p.k_lower[i] = 0.0;
        p.k_upper[i] = 1.0;
      } else {
        p.k_lower[i] = 0.0;
        p.k_upper[i] = log10_scale_upper;
      }
    }
    return p;
  }

  void validate(const FrameModel& model) const {
    if (mass_upper.size() != model.n_theta_m() || k_lower.size() != model.n_theta_k() ||
        k_upper.size() != model.n_theta_k())
      throw ConfigError("prior bound vectors do not match the parameter map");
    if ((mass_upper.array() <= 0.0).any()) throw ConfigError("mass prior upper bounds must be > 0");
    if (((k_upper - k_lower).array() <= 0.0).any())
      throw ConfigError("stiffness prior bounds must be ordered");
    if (!(s_omega > 0.0 && s_d > 0.0 && s_r > 0.0))
      throw ConfigError("half-normal prior scales must be > 0");
  }
};

// ---------------------------------------------------------------------------
// Likelihood terms
// ---------------------------------------------------------------------------

/// Simulated modal quantities paired to the observed modes at one parameter
/// point: shapes sign-aligned to the data, resultants given the same
/// orientation.
struct PairedModes {
  std::vector<double> omega;
  std::vector<Eigen::VectorXd> d;
  std::vector<Eigen::VectorXd> r;
};

inline PairedModes simulate_paired_modes(const StructuralMatrices& mats,
                                         const ModalDataset& data) {
  const int n_all = mats.n_master;
  const auto modes = solve_modal(mats, n_all);
  const int K = static_cast<int>(data.modes.size());

  PairedModes out;
  std::vector<bool> used(static_cast<std::size_t>(n_all), false);
  for (int k = 0; k < K; ++k) {
    const auto& obs = data.modes[static_cast<std::size_t>(k)];
    int best = -1;
    double best_mac = -1.0;
    for (int j = 0; j < n_all; ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      const double m = mac(obs.d, modes[static_cast<std::size_t>(j)].shape);
      const bool better =
          m > best_mac + 1e-12 ||
          (std::abs(m - best_mac) <= 1e-12 && best >= 0 &&
           std::abs(modes[static_cast<std::size_t>(j)].omega - obs.omega) <
               std::abs(modes[static_cast<std::size_t>(best)].omega - obs.omega));
      if (better) {
        best_mac = std::max(m, best_mac);
        best = j;
      }
    }
    used[static_cast<std::size_t>(best)] = true;
    const auto& sim = modes[static_cast<std::size_t>(best)];
    Eigen::VectorXd d_hat = sim.shape;
    if (obs.d.dot(d_hat) < 0.0) d_hat = -d_hat;
    out.omega.push_back(sim.omega);
    out.r.push_back(stress_resultants(mats, d_hat));
    out.d.push_back(std::move(d_hat));
  }
  return out;
}

inline double log_likelihood_modal(const ModalDataset& data, const PairedModes& sim,
                                   double sigma_omega, double sigma_d) {
  double lp = 0.0;
  for (std::size_t k = 0; k < data.modes.size(); ++k) {
    const auto& obs = data.modes[k];
    const double dw = obs.omega - sim.omega[k];
    lp += -0.5 * dw * dw / (sigma_omega * sigma_omega) - std::log(sigma_omega) - kLogSqrt2Pi;
    const double nd = static_cast<double>(obs.d.size());
    lp += -0.5 * (obs.d - sim.d[k]).squaredNorm() / (sigma_d * sigma_d) -
          nd * (std::log(sigma_d) + kLogSqrt2Pi);
  }
  return lp;
}

// Conditions on the simulated shapes, so mass enters only through them.
inline double log_likelihood_static(const ModalDataset& data, const PairedModes& sim,
                                    double sigma_r) {
  double lp = 0.0;
  for (std::size_t k = 0; k < data.modes.size(); ++k) {
    const auto& obs = data.modes[k];
    const double nr = static_cast<double>(obs.r.size());
    lp += -0.5 * (obs.r - sim.r[k]).squaredNorm() / (sigma_r * sigma_r) -
          nr * (std::log(sigma_r) + kLogSqrt2Pi);
  }
  return lp;
}

// ---------------------------------------------------------------------------
// Posterior over unconstrained parameters
// ---------------------------------------------------------------------------

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

struct UpdateOptions {
  bool prior_only = false;   // drop both likelihood terms
  bool modal_only = false;   // drop the static term
  bool static_only = false;  // drop the modal term
  double fd_step = 1e-6;     // relative central-difference step
  bool use_generic_eval = false;  // route through assemble() instead of the cached evaluator
};

/// Posterior of (theta_M, theta_K, sigma_omega, sigma_d, sigma_r) given one
/// modal dataset. Works in unconstrained space: log for masses and sigmas,
/// scaled logit for the bounded stiffness parameters; log-Jacobians included
/// so the constrained-space priors are what they claim to be.
class UpdateProblem {
 public:
  using Options = UpdateOptions;

  UpdateProblem(const FrameModel& model, ModalDataset dataset, Priors priors,
                Options options = Options())
      : model_(model), data_(std::move(dataset)), priors_(std::move(priors)), opt_(options) {
    priors_.validate(model);
    n_m_ = model.n_theta_m();
    n_k_ = model.n_theta_k();
    for (const auto& mode : data_.modes) {
      if (mode.d.size() != model.n_master)
        throw ConfigError("dataset displacement vectors do not match the master DOF count");
      if (mode.r.size() != static_cast<Eigen::Index>(model.observed.size()))
        throw ConfigError("dataset resultant vectors do not match the observed component count");
    }
    build_cache();
  }

  int dim() const { return n_m_ + n_k_ + 3; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& n : model_.mass_params) out.push_back(n);
    for (const auto& p : model_.stiffness_params) out.push_back(p.name);
    out.push_back("sigma_omega");
    out.push_back("sigma_d");
    out.push_back("sigma_r");
    return out;
  }

  const FrameModel& model() const { return model_; }
  const ModalDataset& dataset() const { return data_; }
  const Priors& priors() const { return priors_; }

  Eigen::VectorXd to_constrained(const Eigen::VectorXd& u) const {
    Eigen::VectorXd c(dim());
    for (int i = 0; i < n_m_; ++i) c[i] = std::exp(u[i]);
    for (int i = 0; i < n_k_; ++i) {
      const double lo = priors_.k_lower[i], hi = priors_.k_upper[i];
      c[n_m_ + i] = lo + (hi - lo) / (1.0 + std::exp(-u[n_m_ + i]));
    }
    for (int i = 0; i < 3; ++i) c[n_m_ + n_k_ + i] = std::exp(u[n_m_ + n_k_ + i]);
    return c;
  }

  Eigen::VectorXd to_unconstrained(const Eigen::VectorXd& c) const {
    Eigen::VectorXd u(dim());
    for (int i = 0; i < n_m_; ++i) u[i] = std::log(c[i]);
    for (int i = 0; i < n_k_; ++i) {
      const double lo = priors_.k_lower[i], hi = priors_.k_upper[i];
      const double t = (c[n_m_ + i] - lo) / (hi - lo);
      u[n_m_ + i] = std::log(t) - std::log1p(-t);
    }
    for (int i = 0; i < 3; ++i) u[n_m_ + n_k_ + i] = std::log(c[n_m_ + n_k_ + i]);
    return u;
  }

  // log posterior density in unconstrained space; -inf flags a rejected point.
  double log_posterior(const Eigen::VectorXd& u) const {
    if (u.size() != dim()) throw NumericalError("parameter vector has wrong length");
    if (!u.allFinite()) return kNegInf;

    double lp = 0.0;
    Eigen::VectorXd theta_m(n_m_), theta_k(n_k_);
    for (int i = 0; i < n_m_; ++i) {
      theta_m[i] = std::exp(u[i]);
      if (!(theta_m[i] < priors_.mass_upper[i])) return kNegInf;  // uniform wall
      lp += u[i] - std::log(priors_.mass_upper[i]);               // Jacobian + flat prior
    }
    for (int i = 0; i < n_k_; ++i) {
      const double lo = priors_.k_lower[i], hi = priors_.k_upper[i];
      const double ui = u[n_m_ + i];
      theta_k[i] = lo + (hi - lo) / (1.0 + std::exp(-ui));
      lp += std::log(hi - lo) - softplus(ui) - softplus(-ui) - std::log(hi - lo);
    }
    const double sw = std::exp(u[n_m_ + n_k_ + 0]);
    const double sd = std::exp(u[n_m_ + n_k_ + 1]);
    const double sr = std::exp(u[n_m_ + n_k_ + 2]);
    auto half_normal = [](double x, double s) {
      return 0.5 * std::log(2.0 / M_PI) - std::log(s) - 0.5 * x * x / (s * s);
    };
    lp += half_normal(sw, priors_.s_omega) + u[n_m_ + n_k_ + 0];
    lp += half_normal(sd, priors_.s_d) + u[n_m_ + n_k_ + 1];
    lp += half_normal(sr, priors_.s_r) + u[n_m_ + n_k_ + 2];

    if (!opt_.prior_only) {
      const double ll = opt_.use_generic_eval ? likelihood_generic(theta_m, theta_k, sw, sd, sr)
                                              : likelihood_fast(theta_m, theta_k, sw, sd, sr);
      if (!std::isfinite(ll)) return kNegInf;
      lp += ll;
    }
    return std::isfinite(lp) ? lp : kNegInf;
  }

  // Central finite differences in unconstrained space. False when any stencil
  // point is rejected.
  bool log_posterior_grad(const Eigen::VectorXd& u, double& value, Eigen::VectorXd& grad) const {
    value = log_posterior(u);
    if (!std::isfinite(value)) return false;
    grad.resize(dim());
    Eigen::VectorXd x = u;
    for (int i = 0; i < dim(); ++i) {
      const double h = opt_.fd_step * (1.0 + std::abs(u[i]));
      x[i] = u[i] + h;
      const double fp = log_posterior(x);
      x[i] = u[i] - h;
      const double fm = log_posterior(x);
      x[i] = u[i];
      if (!std::isfinite(fp) || !std::isfinite(fm)) return false;
      grad[i] = (fp - fm) / (2.0 * h);
    }
    return true;
  }

  // Initial point in unconstrained space; masses from the lower part of their
  // range, everything else from its prior.
  Eigen::VectorXd draw_init(std::mt19937_64& rng, double mass_init_fraction = 0.5) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd c(dim());
    for (int i = 0; i < n_m_; ++i)
      c[i] = std::max(1e-4 * priors_.mass_upper[i],
                      mass_init_fraction * priors_.mass_upper[i] * unif(rng));
    for (int i = 0; i < n_k_; ++i) {
      const double lo = priors_.k_lower[i], hi = priors_.k_upper[i];
      c[n_m_ + i] = lo + (hi - lo) * (0.02 + 0.96 * unif(rng));
    }
    c[n_m_ + n_k_ + 0] = std::abs(gauss(rng)) * priors_.s_omega + 1e-8;
    c[n_m_ + n_k_ + 1] = std::abs(gauss(rng)) * priors_.s_d + 1e-8;
    c[n_m_ + n_k_ + 2] = std::abs(gauss(rng)) * priors_.s_r + 1e-8;
    return to_unconstrained(c);
  }

 private:
  double likelihood_generic(const Eigen::VectorXd& theta_m, const Eigen::VectorXd& theta_k,
                            double sw, double sd, double sr) const {
    PairedModes sim;
    try {
      const StructuralMatrices mats = assemble(model_, {theta_k, theta_m});
      sim = simulate_paired_modes(mats, data_);
    } catch (const Error&) {
      return kNegInf;  // eigen-solve or reduction failure rejects the proposal
    }
    double ll = 0.0;
    if (!opt_.static_only) ll += log_likelihood_modal(data_, sim, sw, sd);
    if (!opt_.modal_only) ll += log_likelihood_static(data_, sim, sr);
    return ll;
  }

  // Topology and geometry fixed over the run; only the basic stiffness
  // coefficients and the lumped masses change with the parameters.
  struct ElementCache {
    int loc[6];
    Eigen::Matrix<double, 3, 6> compat;
    // outer products of the compatibility rows: the element matrix is a
    // parameter-weighted combination of these fixed blocks
    Eigen::Matrix<double, 6, 6> axial_block, b11, b22, b12;
    double ea_over_l = 0.0;
    double ei_over_l = 0.0;
    double fix_i = 1.0, fix_j = 1.0;
    int fix_i_param = -1, fix_j_param = -1, scale_param = -1;
  };
  struct ExtraMassCache {
    int dof;
    int param;
    double fraction;
  };

  void build_cache() {
    n_free_ = model_.n_free;
    n_master_ = model_.n_master;
    mass_base_ = Eigen::VectorXd::Zero(n_free_);
    for (int ei = 0; ei < model_.n_elements(); ++ei) {
      const Element& e = model_.elements[static_cast<std::size_t>(ei)];
      ElementCache c;
      c.loc[0] = model_.free_index(e.node_i, Dof::ux);
      c.loc[1] = model_.free_index(e.node_i, Dof::uy);
      c.loc[2] = model_.free_index(e.node_i, Dof::rz);
      c.loc[3] = model_.free_index(e.node_j, Dof::ux);
      c.loc[4] = model_.free_index(e.node_j, Dof::uy);
      c.loc[5] = model_.free_index(e.node_j, Dof::rz);
      c.compat = elemental_compatibility(e.cx, e.cy, e.length);
      c.axial_block = c.compat.row(0).transpose() * c.compat.row(0);
      c.b11 = c.compat.row(1).transpose() * c.compat.row(1);
      c.b22 = c.compat.row(2).transpose() * c.compat.row(2);
      c.b12 = c.compat.row(1).transpose() * c.compat.row(2) +
              c.compat.row(2).transpose() * c.compat.row(1);
      c.ea_over_l = e.E * e.A / e.length;
      c.ei_over_l = e.E * e.I / e.length;
      c.fix_i = e.fix_i.value;
      c.fix_j = e.fix_j.value;
      c.fix_i_param = e.fix_i.param;
      c.fix_j_param = e.fix_j.param;
      c.scale_param = e.scale_param;
      elems_.push_back(c);
      const double half = 0.5 * e.density * e.A * e.length;
      for (int a : {0, 1, 3, 4})
        if (c.loc[a] >= 0) mass_base_(c.loc[a]) += half;
    }
    for (const auto& em : model_.extra_masses)
      for (int d = 0; d < 2; ++d)
        if (em.dofs[static_cast<std::size_t>(d)])
          extra_.push_back({model_.free_index(em.node, static_cast<Dof>(d)), em.param,
                            em.fraction});
    observed_rows_ = model_.observed_rows;
  }

  double likelihood_fast(const Eigen::VectorXd& theta_m, const Eigen::VectorXd& theta_k,
                         double sw, double sd, double sr) const {
    struct Scratch {
      Eigen::MatrixXd K, S, K_red, B, shapes;
      Eigen::VectorXd mass, winv, omega, v_slave, r_hat;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
      Eigen::LLT<Eigen::MatrixXd> llt;
      std::vector<char> used;
      std::vector<Eigen::Vector3d> coeff;  // (k11, k12, k22) per element
    };
    thread_local Scratch sc;
    const int nf = n_free_, nm = n_master_, ns = nf - nm;
    sc.K.resize(nf, nf);
    sc.K.setZero();
    sc.mass = mass_base_;
    sc.coeff.resize(elems_.size());

    for (std::size_t idx = 0; idx < elems_.size(); ++idx) {
      const auto& e = elems_[idx];
      const double gi = e.fix_i_param >= 0 ? theta_k[e.fix_i_param] : e.fix_i;
      const double gj = e.fix_j_param >= 0 ? theta_k[e.fix_j_param] : e.fix_j;
      const double ei =
          e.scale_param >= 0 ? e.ei_over_l * std::pow(10.0, theta_k[e.scale_param]) : e.ei_over_l;
      const double c = ei / (4.0 - gi * gj);
      const double k11 = 12.0 * gi * c, k12 = 6.0 * gi * gj * c, k22 = 12.0 * gj * c;
      sc.coeff[idx] << k11, k12, k22;
      const Eigen::Matrix<double, 6, 6> ke =
          e.ea_over_l * e.axial_block + k11 * e.b11 + k22 * e.b22 + k12 * e.b12;
      for (int a = 0; a < 6; ++a) {
        if (e.loc[a] < 0) continue;
        for (int b = 0; b < 6; ++b)
          if (e.loc[b] >= 0) sc.K(e.loc[a], e.loc[b]) += ke(a, b);
      }
    }
    for (const auto& em : extra_) sc.mass(em.dof) += em.fraction * theta_m[em.param];

    if (ns > 0) {
      sc.llt.compute(sc.K.bottomRightCorner(ns, ns));
      if (sc.llt.info() != Eigen::Success) return kNegInf;
      sc.S = -sc.llt.solve(sc.K.bottomLeftCorner(ns, nm));
      sc.K_red = sc.K.topLeftCorner(nm, nm) + sc.K.topRightCorner(nm, ns) * sc.S;
      sc.K_red = 0.5 * (sc.K_red + sc.K_red.transpose()).eval();
    } else {
      sc.K_red = sc.K;
    }

    if ((sc.mass.head(nm).array() <= 0.0).any()) return kNegInf;
    sc.winv = sc.mass.head(nm).cwiseSqrt().cwiseInverse();
    sc.B.resize(nm, nm);
    for (int i = 0; i < nm; ++i)
      for (int j = 0; j < nm; ++j) sc.B(i, j) = sc.K_red(i, j) * sc.winv(i) * sc.winv(j);
    sc.es.compute(sc.B);
    if (sc.es.info() != Eigen::Success) return kNegInf;
    if (!(sc.es.eigenvalues()(0) > 0.0)) return kNegInf;

    sc.omega = sc.es.eigenvalues().cwiseSqrt();
    sc.shapes.resize(nm, nm);
    for (int k = 0; k < nm; ++k) {
      auto col = sc.shapes.col(k);
      col = sc.winv.cwiseProduct(sc.es.eigenvectors().col(k));
      col /= col.norm();
      Eigen::Index imax;
      col.cwiseAbs().maxCoeff(&imax);
      if (col(imax) < 0.0) col = -col;
    }

    // pair to the observed modes by MAC, tie-break on frequency proximity
    const int K = static_cast<int>(data_.modes.size());
    sc.used.assign(static_cast<std::size_t>(nm), 0);
    double ll = 0.0;
    for (int k = 0; k < K; ++k) {
      const auto& obs = data_.modes[static_cast<std::size_t>(k)];
      int best = -1;
      double best_mac = -1.0;
      for (int j = 0; j < nm; ++j) {
        if (sc.used[static_cast<std::size_t>(j)]) continue;
        const double dot = obs.d.dot(sc.shapes.col(j));
        const double m = dot * dot;  // both shapes unit norm
        const bool better = m > best_mac + 1e-12 ||
                            (std::abs(m - best_mac) <= 1e-12 && best >= 0 &&
                             std::abs(sc.omega(j) - obs.omega) <
                                 std::abs(sc.omega(best) - obs.omega));
        if (better) {
          best_mac = std::max(m, best_mac);
          best = j;
        }
      }
      sc.used[static_cast<std::size_t>(best)] = 1;
      const double sign = obs.d.dot(sc.shapes.col(best)) < 0.0 ? -1.0 : 1.0;

      if (!opt_.static_only) {
        const double dw = obs.omega - sc.omega(best);
        ll += -0.5 * dw * dw / (sw * sw) - std::log(sw) - kLogSqrt2Pi;
        const double nd = static_cast<double>(obs.d.size());
        ll += -0.5 * (obs.d - sign * sc.shapes.col(best)).squaredNorm() / (sd * sd) -
              nd * (std::log(sd) + kLogSqrt2Pi);
      }

      if (!opt_.modal_only) {
        // observed resultants of the paired, sign-aligned shape
        if (ns > 0) sc.v_slave = sc.S * (sign * sc.shapes.col(best));
        sc.r_hat.resize(static_cast<Eigen::Index>(observed_rows_.size()));
        for (std::size_t oi = 0; oi < observed_rows_.size(); ++oi) {
          const int row = observed_rows_[oi];
          const std::size_t epos = static_cast<std::size_t>(row / 3);
          const auto& e = elems_[epos];
          const int comp = row % 3;
          // gather element end displacements from masters and recovered slaves
          Eigen::Matrix<double, 6, 1> v;
          for (int a = 0; a < 6; ++a) {
            const int idx = e.loc[a];
            if (idx < 0)
              v(a) = 0.0;
            else if (idx < nm)
              v(a) = sign * sc.shapes(idx, best);
            else
              v(a) = sc.v_slave(idx - nm);
          }
          const Eigen::Vector3d def = e.compat * v;
          const Eigen::Vector3d& kc = sc.coeff[epos];
          if (comp == 0)
            sc.r_hat(static_cast<Eigen::Index>(oi)) = e.ea_over_l * def(0);
          else if (comp == 1)
            sc.r_hat(static_cast<Eigen::Index>(oi)) = kc(0) * def(1) + kc(1) * def(2);
          else
            sc.r_hat(static_cast<Eigen::Index>(oi)) = kc(1) * def(1) + kc(2) * def(2);
        }
        const double nr = static_cast<double>(obs.r.size());
        ll += -0.5 * (obs.r - sc.r_hat).squaredNorm() / (sr * sr) -
              nr * (std::log(sr) + kLogSqrt2Pi);
      }
    }
    return ll;
  }

  const FrameModel& model_;
  ModalDataset data_;
  Priors priors_;
  Options opt_;
  int n_m_ = 0, n_k_ = 0;
  int n_free_ = 0, n_master_ = 0;
  std::vector<ElementCache> elems_;
  std::vector<ExtraMassCache> extra_;
  Eigen::VectorXd mass_base_;
  std::vector<int> observed_rows_;
};

// ---------------------------------------------------------------------------
// No-U-Turn sampler with dual-averaging step size and diagonal metric
// ---------------------------------------------------------------------------

struct TargetDensity {
  std::function<double(const Eigen::VectorXd&)> logp;
  // returns false when the point (or a stencil point) is rejected
  std::function<bool(const Eigen::VectorXd&, double&, Eigen::VectorXd&)> logp_grad;
};

inline TargetDensity make_target(const UpdateProblem& problem) {
  TargetDensity t;
  t.logp = [&problem](const Eigen::VectorXd& u) { return problem.log_posterior(u); };
  t.logp_grad = [&problem](const Eigen::VectorXd& u, double& v, Eigen::VectorXd& g) {
    return problem.log_posterior_grad(u, v, g);
  };
  return t;
}

struct NutsConfig {
  int chains = 4;
  int draws = 1000;
  int burn_in = 1000;
  double target_accept = 0.8;
  int max_depth = 10;
  std::uint64_t seed = 0;
  int threads = 1;
  bool adapt_metric = true;
  double initial_step = 0.0;  // 0 = pick automatically
  // > 0 switches to plain Hamiltonian Monte Carlo: this many leapfrog steps
  // per proposal at the fixed initial_step, Metropolis accept/reject
  int fixed_leapfrog_steps = 0;
  std::vector<Eigen::VectorXd> inits;  // one per chain
};

struct ChainOutput {
  Eigen::MatrixXd draws;  // draws x dim, unconstrained space
  int divergences = 0;    // post-burn-in
  double step_size = 0.0;
  double mean_accept = 0.0;
  double mean_depth = 0.0;
};

namespace nuts_detail {

struct State {
  Eigen::VectorXd u, phi, grad;
  double logp = 0.0;
};

// One leapfrog step with diagonal metric; eps carries the direction sign.
// False when the gradient is unavailable along the way.
inline bool leapfrog_step(const TargetDensity& target, const Eigen::VectorXd& inv_mass,
                          double eps, const State& in, State& out) {
  const Eigen::VectorXd phi_half = in.phi + 0.5 * eps * in.grad;
  out.u = in.u + eps * inv_mass.cwiseProduct(phi_half);
  if (!target.logp_grad(out.u, out.logp, out.grad)) return false;
  out.phi = phi_half + 0.5 * eps * out.grad;
  return true;
}

inline double hamiltonian(const State& s, const Eigen::VectorXd& inv_mass) {
  return -s.logp + 0.5 * s.phi.dot(inv_mass.cwiseProduct(s.phi));
}

struct Tree {
  State minus, plus;
  State proposal;
  double log_w = kNegInf;
  bool divergent = false;
  bool turning = false;
  double sum_alpha = 0.0;
  int n_alpha = 0;
};

class Sampler {
 public:
  Sampler(const TargetDensity& target, const NutsConfig& cfg, Eigen::VectorXd init,
          std::uint64_t stream)
      : target_(target), cfg_(cfg), rng_(make_rng(cfg.seed, stream)) {
    dim_ = static_cast<int>(init.size());
    inv_mass_ = Eigen::VectorXd::Ones(dim_);
    state_.u = std::move(init);
    if (!target_.logp_grad(state_.u, state_.logp, state_.grad))
      throw ConvergenceError("log posterior is not finite at the initial point");
  }

  ChainOutput run() {
    if (cfg_.fixed_leapfrog_steps > 0) {
      if (!(cfg_.initial_step > 0.0))
        throw ConfigError("plain HMC mode needs an explicit step size");
      return run_plain_hmc();
    }
    eps_ = cfg_.initial_step > 0.0 ? cfg_.initial_step : find_initial_step();
    mu_ = std::log(10.0 * eps_);
    log_eps_bar_ = 0.0;
    h_bar_ = 0.0;
    adapt_count_ = 0;

    const int total = cfg_.burn_in + cfg_.draws;
    ChainOutput out;
    out.draws.resize(cfg_.draws, dim_);
    int burn_divergent = 0;
    double sum_accept = 0.0, sum_depth = 0.0;

    // expanding metric windows: short early windows fix the coordinate scales
    // quickly, longer late windows refine them; the tail is step-size only
    std::vector<int> window_ends;
    int init_buffer = 75, term_buffer = 50, first_window = 25;
    if (cfg_.adapt_metric && cfg_.burn_in >= 40) {
      if (cfg_.burn_in < init_buffer + first_window + term_buffer) {
        init_buffer = cfg_.burn_in / 4;
        term_buffer = cfg_.burn_in / 4;
        window_ends.push_back(cfg_.burn_in - term_buffer);
      } else {
        int start = init_buffer, width = first_window;
        while (true) {
          int end = start + width;
          // absorb a final stub into the last window
          if (end + 2 * width > cfg_.burn_in - term_buffer) end = cfg_.burn_in - term_buffer;
          window_ends.push_back(end);
          if (end >= cfg_.burn_in - term_buffer) break;
          start = end;
          width *= 2;
        }
      }
    }
    std::vector<Eigen::VectorXd> window;
    std::size_t next_window = 0;

    for (int t = 0; t < total; ++t) {
      const bool warm = t < cfg_.burn_in;
      IterStats stats = transition();
      if (warm) {
        if (stats.divergent) ++burn_divergent;
        adapt_step(stats.accept_stat);
        if (next_window < window_ends.size() && t >= init_buffer) {
          window.push_back(state_.u);
          if (t + 1 == window_ends[next_window]) {
            if (window.size() >= 10) {
              update_metric(window);
              eps_ = find_initial_step();
              mu_ = std::log(10.0 * eps_);
              log_eps_bar_ = 0.0;
              h_bar_ = 0.0;
              adapt_count_ = 0;
            }
            window.clear();
            ++next_window;
          }
        }
        if (t + 1 == cfg_.burn_in) {
          eps_ = std::exp(log_eps_bar_);
          if (burn_divergent >= cfg_.burn_in)
            throw ConvergenceError(
                "sampler failed to adapt: every burn-in iteration diverged (step size " +
                std::to_string(eps_) + ")");
        }
      } else {
        out.draws.row(t - cfg_.burn_in) = state_.u.transpose();
        if (stats.divergent) ++out.divergences;
        sum_accept += stats.accept_stat;
        sum_depth += stats.depth;
      }
    }
    out.step_size = eps_;
    out.mean_accept = cfg_.draws > 0 ? sum_accept / cfg_.draws : 0.0;
    out.mean_depth = cfg_.draws > 0 ? sum_depth / cfg_.draws : 0.0;
    return out;
  }

 private:
  struct IterStats {
    double accept_stat = 0.0;
    bool divergent = false;
    int depth = 0;
  };

  // Fixed-step, fixed-length trajectories with a Metropolis accept/reject on
  // the joint density ratio.
  ChainOutput run_plain_hmc() {
    eps_ = cfg_.initial_step;
    ChainOutput out;
    out.draws.resize(cfg_.draws, dim_);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double sum_accept = 0.0;
    const int total = cfg_.burn_in + cfg_.draws;
    for (int t = 0; t < total; ++t) {
      state_.phi = sample_momentum();
      const double h0 = -state_.logp + kinetic(state_.phi);
      State walker = state_;
      bool ok = true;
      for (int l = 0; l < cfg_.fixed_leapfrog_steps && ok; ++l) {
        State next;
        ok = leapfrog(walker, 1.0, next);
        if (ok) walker = std::move(next);
      }
      double alpha = 0.0;
      if (ok) {
        const double h = -walker.logp + kinetic(walker.phi);
        alpha = std::min(1.0, std::exp(h0 - h));
        if (unif(rng_) < alpha) state_ = std::move(walker);
      }
      if (t >= cfg_.burn_in) {
        out.draws.row(t - cfg_.burn_in) = state_.u.transpose();
        sum_accept += alpha;
        if (!ok) ++out.divergences;
      }
    }
    out.step_size = eps_;
    out.mean_accept = cfg_.draws > 0 ? sum_accept / cfg_.draws : 0.0;
    out.mean_depth = cfg_.fixed_leapfrog_steps;
    return out;
  }

  double kinetic(const Eigen::VectorXd& phi) const {
    return 0.5 * phi.dot(inv_mass_.cwiseProduct(phi));
  }

  Eigen::VectorXd sample_momentum() {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd phi(dim_);
    for (int i = 0; i < dim_; ++i) phi[i] = gauss(rng_) / std::sqrt(inv_mass_[i]);
    return phi;
  }

  bool leapfrog(const State& in, double direction, State& out) {
    return leapfrog_step(target_, inv_mass_, direction * eps_, in, out);
  }

  bool uturn(const State& minus, const State& plus) const {
    const Eigen::VectorXd du = plus.u - minus.u;
    return du.dot(inv_mass_.cwiseProduct(minus.phi)) < 0.0 ||
           du.dot(inv_mass_.cwiseProduct(plus.phi)) < 0.0;
  }

  Tree build_tree(const State& from, double direction, int depth, double h0) {
    if (depth == 0) {
      Tree leaf;
      State next;
      leaf.n_alpha = 1;
      if (!leapfrog(from, direction, next)) {
        leaf.divergent = true;
        return leaf;
      }
      const double h = -next.logp + kinetic(next.phi);
      const double delta = h0 - h;
      leaf.minus = next;
      leaf.plus = std::move(next);
      leaf.proposal = leaf.plus;
      leaf.log_w = delta;
      leaf.sum_alpha = std::min(1.0, std::exp(delta));
      leaf.divergent = delta < -1000.0;
      return leaf;
    }
    Tree first = build_tree(from, direction, depth - 1, h0);
    if (first.divergent || first.turning) return first;
    const State& edge = direction > 0 ? first.plus : first.minus;
    Tree second = build_tree(edge, direction, depth - 1, h0);
    if (second.divergent) {
      // a divergent leaf carries no usable end states; discard the doubling
      first.divergent = true;
      first.sum_alpha += second.sum_alpha;
      first.n_alpha += second.n_alpha;
      return first;
    }
    Tree combined;
    combined.minus = direction > 0 ? first.minus : second.minus;
    combined.plus = direction > 0 ? second.plus : first.plus;
    combined.sum_alpha = first.sum_alpha + second.sum_alpha;
    combined.n_alpha = first.n_alpha + second.n_alpha;
    combined.log_w = log_add(first.log_w, second.log_w);
    // multinomial sampling among the leaves of the combined subtree
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    if (std::isfinite(second.log_w) &&
        std::log(unif(rng_)) < second.log_w - combined.log_w)
      combined.proposal = second.proposal;
    else
      combined.proposal = first.proposal;
    combined.turning = second.turning || uturn(combined.minus, combined.plus);
    return combined;
  }

  static double log_add(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
  }

  IterStats transition() {
    state_.phi = sample_momentum();
    const double h0 = -state_.logp + kinetic(state_.phi);

    State minus = state_, plus = state_;
    State proposal = state_;
    bool moved = false;
    double log_w_tree = 0.0;  // weight of the start point
    IterStats stats;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double sum_alpha = 0.0;
    int n_alpha = 0;

    for (int depth = 0; depth < cfg_.max_depth; ++depth) {
      const double direction = unif(rng_) < 0.5 ? 1.0 : -1.0;
      Tree sub = build_tree(direction > 0 ? plus : minus, direction, depth, h0);
      sum_alpha += sub.sum_alpha;
      n_alpha += sub.n_alpha;
      if (sub.divergent) {
        stats.divergent = true;
        break;
      }
      if (sub.turning) break;
      // biased progressive sampling toward the new subtree
      if (std::log(unif(rng_)) < sub.log_w - log_w_tree) {
        proposal = sub.proposal;
        moved = true;
      }
      log_w_tree = log_add(log_w_tree, sub.log_w);
      if (direction > 0)
        plus = sub.plus;
      else
        minus = sub.minus;
      stats.depth = depth + 1;
      if (uturn(minus, plus)) break;
    }
    stats.accept_stat = n_alpha > 0 ? sum_alpha / n_alpha : 0.0;

    if (moved) state_ = proposal;
    return stats;
  }

  // Reasonable first step size: scale until the one-step joint density ratio
  // crosses 1/2.
  double find_initial_step() {
    double eps = 1.0;
    state_.phi = sample_momentum();
    const double h0 = -state_.logp + kinetic(state_.phi);
    auto joint_delta = [&](double e) {
      const double saved = eps_;
      eps_ = e;
      State next;
      const bool ok = leapfrog(state_, 1.0, next);
      eps_ = saved;
      if (!ok) return kNegInf;
      return h0 - (-next.logp + kinetic(next.phi));
    };
    double delta = joint_delta(eps);
    int guard = 0;
    while (delta == kNegInf && guard++ < 60) {
      eps *= 0.5;
      delta = joint_delta(eps);
    }
    if (delta == kNegInf)
      throw ConvergenceError("could not find a workable initial step size");
    const double dir = delta > std::log(0.5) ? 1.0 : -1.0;
    guard = 0;
    while (dir * delta > dir * std::log(0.5) && guard++ < 60) {
      eps *= std::pow(2.0, dir);
      delta = joint_delta(eps);
      if (delta == kNegInf) {
        eps *= 0.5;
        break;
      }
    }
    return eps;
  }

  void adapt_step(double accept_stat) {
    ++adapt_count_;
    constexpr double gamma = 0.05, t0 = 10.0, kappa = 0.75;
    const double eta = 1.0 / (adapt_count_ + t0);
    h_bar_ = (1.0 - eta) * h_bar_ + eta * (cfg_.target_accept - accept_stat);
    const double log_eps = mu_ - std::sqrt(static_cast<double>(adapt_count_)) / gamma * h_bar_;
    const double x_eta = std::pow(static_cast<double>(adapt_count_), -kappa);
    log_eps_bar_ = x_eta * log_eps + (1.0 - x_eta) * log_eps_bar_;
    eps_ = std::exp(log_eps);
  }

  void update_metric(const std::vector<Eigen::VectorXd>& window) {
    const double n = static_cast<double>(window.size());
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim_);
    for (const auto& u : window) mean += u;
    mean /= n;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(dim_);
    for (const auto& u : window) var += (u - mean).cwiseAbs2();
    var /= (n - 1.0);
    // shrink toward a small diagonal, as usual for windowed estimates
    inv_mass_ = (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
  }

  const TargetDensity& target_;
  const NutsConfig& cfg_;
  std::mt19937_64 rng_;
  int dim_ = 0;
  State state_;
  Eigen::VectorXd inv_mass_;
  double eps_ = 1.0, mu_ = 0.0, log_eps_bar_ = 0.0, h_bar_ = 0.0;
  int adapt_count_ = 0;
};

}  // namespace nuts_detail

inline std::vector<ChainOutput> nuts_sample(const TargetDensity& target, const NutsConfig& cfg) {
  if (static_cast<int>(cfg.inits.size()) != cfg.chains)
    throw ConfigError("nuts_sample needs one initial point per chain");
  if (cfg.draws < 1 || cfg.burn_in < 0 || cfg.chains < 1)
    throw ConfigError("invalid sampler configuration");

  std::vector<ChainOutput> out(static_cast<std::size_t>(cfg.chains));
  auto run_chain = [&](int c) {
    nuts_detail::Sampler sampler(target, cfg, cfg.inits[static_cast<std::size_t>(c)],
                                 static_cast<std::uint64_t>(c) + 1);
    out[static_cast<std::size_t>(c)] = sampler.run();
  };
  if (cfg.threads > 1) {
    std::vector<std::future<void>> futures;
    for (int c = 0; c < cfg.chains; ++c)
      futures.push_back(std::async(std::launch::async, run_chain, c));
    for (auto& f : futures) f.get();
  } else {
    for (int c = 0; c < cfg.chains; ++c) run_chain(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convergence diagnostics and posterior containers
// ---------------------------------------------------------------------------

// Split potential scale reduction factor. Each chain is halved, then
//   rhat^2 = 1 + B / ((L - 1) W)
// over the 2m half-chains; exactly 1 when all groups coincide and >= 1 always.
inline double rhat(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.size() < 2) throw NumericalError("rhat needs at least two chains");
  const Eigen::Index n = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != n) throw NumericalError("rhat needs equal chain lengths");
  if (n < 10) throw NumericalError("rhat needs chains of length >= 10");

  const Eigen::Index half = n / 2;
  std::vector<Eigen::VectorXd> groups;
  for (const auto& c : chains) {
    groups.push_back(c.head(half));
    groups.push_back(c.segment(n - half, half));
  }
  const double L = static_cast<double>(half);
  const double g = static_cast<double>(groups.size());
  Eigen::VectorXd means(groups.size()), vars(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    means[static_cast<Eigen::Index>(i)] = groups[i].mean();
    vars[static_cast<Eigen::Index>(i)] =
        (groups[i].array() - means[static_cast<Eigen::Index>(i)]).square().sum() / (L - 1.0);
  }
  const double W = vars.mean();
  if (!(W > 0.0)) throw NumericalError("degenerate chain: zero within-chain variance");
  const double grand = means.mean();
  const double B = L * (means.array() - grand).square().sum() / (g - 1.0);
  return std::sqrt(1.0 + B / ((L - 1.0) * W));
}

/// Constrained-space draws of (theta_M, theta_K, sigma_omega, sigma_d,
/// sigma_r) with per-chain diagnostics; chains merge deterministically by
/// index.
struct PosteriorSamples {
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> chains;  // draws x dim, constrained space
  std::vector<int> divergences;
  std::vector<double> step_sizes;
  std::vector<double> mean_accept;
  Eigen::VectorXd rhat_values;

  Eigen::MatrixXd stacked() const {
    if (chains.empty()) return {};
    const Eigen::Index per = chains.front().rows(), dim = chains.front().cols();
    Eigen::MatrixXd all(per * static_cast<Eigen::Index>(chains.size()), dim);
    for (std::size_t c = 0; c < chains.size(); ++c)
      all.middleRows(static_cast<Eigen::Index>(c) * per, per) = chains[c];
    return all;
  }

  double max_rhat() const { return rhat_values.size() ? rhat_values.maxCoeff() : 0.0; }
};

inline PosteriorSamples sample_posterior(const UpdateProblem& problem, const NutsConfig& base_cfg,
                                         double init_mass_fraction = 0.5) {
  NutsConfig cfg = base_cfg;
  if (cfg.inits.empty()) {
    for (int c = 0; c < cfg.chains; ++c) {
      auto rng = make_rng(cfg.seed, 900 + static_cast<std::uint64_t>(c));
      Eigen::VectorXd u;
      bool ok = false;
      for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
        u = problem.draw_init(rng, init_mass_fraction);
        ok = std::isfinite(problem.log_posterior(u));
      }
      if (!ok) throw ConvergenceError("could not find a finite-density initial point");
      cfg.inits.push_back(u);
    }
  }

  const TargetDensity target = make_target(problem);
  const std::vector<ChainOutput> raw = nuts_sample(target, cfg);

  PosteriorSamples out;
  out.names = problem.names();
  for (const auto& chain : raw) {
    Eigen::MatrixXd constrained(chain.draws.rows(), chain.draws.cols());
    for (Eigen::Index i = 0; i < chain.draws.rows(); ++i)
      constrained.row(i) = problem.to_constrained(chain.draws.row(i).transpose()).transpose();
    out.chains.push_back(std::move(constrained));
    out.divergences.push_back(chain.divergences);
    out.step_sizes.push_back(chain.step_size);
    out.mean_accept.push_back(chain.mean_accept);
  }
  const int dim = static_cast<int>(out.names.size());
  out.rhat_values.resize(dim);
  for (int p = 0; p < dim; ++p) {
    std::vector<Eigen::VectorXd> per_chain;
    for (const auto& c : out.chains) per_chain.push_back(c.col(p));
    out.rhat_values[p] = rhat(per_chain);
  }
  return out;
}

}  // namespace framebayes

#endif
