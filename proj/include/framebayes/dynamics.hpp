#ifndef FRAMEBAYES_DYNAMICS_HPP
#define FRAMEBAYES_DYNAMICS_HPP

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "framebayes/errors.hpp"
#include "framebayes/frame_core.hpp"
#include "framebayes/model.hpp"

namespace framebayes {

struct NewmarkResult {
  Eigen::MatrixXd disp;   // n x T
  Eigen::MatrixXd vel;    // n x T
  Eigen::MatrixXd accel;  // n x T (relative)
};

// Average-acceleration Newmark (beta 1/4, gamma 1/2) for
//   M a + C v + K u = load(t).
// `loads` holds one column per output sample; with substeps > 1 the load is
// linearly interpolated between samples and only every substeps-th state is
// returned. M is the diagonal of a lumped mass matrix.
inline NewmarkResult newmark_solve(const Eigen::VectorXd& M, const Eigen::MatrixXd& C,
                                   const Eigen::MatrixXd& K, const Eigen::MatrixXd& loads,
                                   double dt, int substeps = 1,
                                   const Eigen::VectorXd& u0 = Eigen::VectorXd(),
                                   const Eigen::VectorXd& v0 = Eigen::VectorXd()) {
  const Eigen::Index n = M.size();
  const Eigen::Index T = loads.cols();
  if (K.rows() != n || K.cols() != n || C.rows() != n || C.cols() != n || loads.rows() != n)
    throw NumericalError("newmark: dimension mismatch");
  if (!(dt > 0.0) || substeps < 1) throw NumericalError("newmark: bad step configuration");

  const double h = dt / substeps;
  constexpr double beta = 0.25, gamma = 0.5;

  // constant effective stiffness, factored once
  Eigen::MatrixXd Keff = K;
  Keff += (gamma / (beta * h)) * C;
  Keff += (1.0 / (beta * h * h)) * Eigen::MatrixXd(M.asDiagonal());
  Eigen::LDLT<Eigen::MatrixXd> solver(Keff);
  if (solver.info() != Eigen::Success)
    throw NumericalError("newmark: effective stiffness factorization failed");

  Eigen::VectorXd u = u0.size() == n ? u0 : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd v = v0.size() == n ? v0 : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd a =
      M.cwiseInverse().asDiagonal() * (loads.col(0) - C * v - K * u);

  NewmarkResult r;
  r.disp.resize(n, T);
  r.vel.resize(n, T);
  r.accel.resize(n, T);
  r.disp.col(0) = u;
  r.vel.col(0) = v;
  r.accel.col(0) = a;

  for (Eigen::Index t = 1; t < T; ++t) {
    for (int s = 1; s <= substeps; ++s) {
      const double frac = static_cast<double>(s) / substeps;
      const Eigen::VectorXd p = (1.0 - frac) * loads.col(t - 1) + frac * loads.col(t);
      const Eigen::VectorXd rhs =
          p +
          M.asDiagonal() * (u / (beta * h * h) + v / (beta * h) + (0.5 / beta - 1.0) * a) +
          C * ((gamma / (beta * h)) * u + (gamma / beta - 1.0) * v +
               h * (0.5 * gamma / beta - 1.0) * a);
      const Eigen::VectorXd u_new = solver.solve(rhs);
      const Eigen::VectorXd v_new = (gamma / (beta * h)) * (u_new - u) +
                                    (1.0 - gamma / beta) * v +
                                    h * (1.0 - 0.5 * gamma / beta) * a;
      const Eigen::VectorXd a_new =
          (u_new - u) / (beta * h * h) - v / (beta * h) - (0.5 / beta - 1.0) * a;
      u = u_new;
      v = v_new;
      a = a_new;
    }
    r.disp.col(t) = u;
    r.vel.col(t) = v;
    r.accel.col(t) = a;
  }
  if (!r.disp.allFinite()) throw NumericalError("newmark: response diverged to non-finite values");
  return r;
}

/// Response histories at the measured components.
struct TimeHistoryResult {
  double dt = 0.0;
  Eigen::MatrixXd accel_abs;  // n_master x T, absolute accelerations
  Eigen::MatrixXd moments;    // n_observed x T
  Eigen::MatrixXd disp;       // n_master x T
};

// Influence vector: unit ground displacement in x moves every x-translation
// master rigidly.
inline Eigen::VectorXd lateral_influence(const FrameModel& model) {
  Eigen::VectorXd iota = Eigen::VectorXd::Zero(model.n_master);
  for (int i = 0; i < model.n_master; ++i)
    if (model.master_dofs[static_cast<std::size_t>(i)].dof == Dof::ux) iota(i) = 1.0;
  return iota;
}

// Stiffness-proportional damping anchored at the first mode: C = (2 z / w1) K.
inline Eigen::MatrixXd stiffness_proportional_damping(const Eigen::MatrixXd& K_red,
                                                      double omega1, double damping_ratio) {
  if (!(omega1 > 0.0)) throw NumericalError("damping anchor frequency must be positive");
  return (2.0 * damping_ratio / omega1) * K_red;
}

inline TimeHistoryResult integrate(const FrameModel& model, const StructuralMatrices& mats,
                                   double damping_ratio, const Eigen::VectorXd& ground_accel,
                                   double dt, int substeps = 1) {
  if (damping_ratio < 0.0) throw NumericalError("damping ratio must be >= 0");
  const Eigen::VectorXd iota = lateral_influence(model);
  const auto modes = solve_modal(mats, 1);
  const Eigen::MatrixXd C = stiffness_proportional_damping(mats.K_red, modes[0].omega, damping_ratio);

  const Eigen::Index T = ground_accel.size();
  Eigen::MatrixXd loads(model.n_master, T);
  for (Eigen::Index t = 0; t < T; ++t)
    loads.col(t) = -(mats.mass_red.cwiseProduct(iota)) * ground_accel(t);

  const NewmarkResult nm = newmark_solve(mats.mass_red, C, mats.K_red, loads, dt, substeps);

  TimeHistoryResult out;
  out.dt = dt;
  out.disp = nm.disp;
  out.accel_abs = nm.accel + iota * ground_accel.transpose();
  out.moments = mats.resultant_map * nm.disp;
  return out;
}

inline TimeHistoryResult integrate(const FrameModel& model, const ParameterSet& theta,
                                   double damping_ratio, const Eigen::VectorXd& ground_accel,
                                   double dt, int substeps = 1) {
  return integrate(model, assemble(model, theta), damping_ratio, ground_accel, dt, substeps);
}

inline double peak(const Eigen::VectorXd& series) {
  if (series.size() == 0) throw NumericalError("peak of empty series");
  return series.cwiseAbs().maxCoeff();
}

}  // namespace framebayes

#endif
