#ifndef FRAMEBAYES_FRAME_CORE_HPP
#define FRAMEBAYES_FRAME_CORE_HPP

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "framebayes/errors.hpp"
#include "framebayes/model.hpp"

namespace framebayes {

// gamma = (1 + 3EI/(L k))^-1; 0 = pinned, 1 = rigid. k may be +inf.
inline double fixity_from_rotational_stiffness(double k, double E, double I, double L) {
  if (!(E > 0.0 && I > 0.0 && L > 0.0))
    throw GeometryError("fixity conversion needs positive E, I and L");
  if (k < 0.0) throw ParameterError("rotational stiffness must be >= 0");
  if (std::isinf(k)) return 1.0;
  if (k == 0.0) return 0.0;
  return 1.0 / (1.0 + 3.0 * E * I / (L * k));
}

inline double rotational_stiffness_from_fixity(double gamma, double E, double I, double L) {
  if (!(E > 0.0 && I > 0.0 && L > 0.0))
    throw GeometryError("fixity conversion needs positive E, I and L");
  if (gamma < 0.0 || gamma > 1.0) throw ParameterError("fixity factor outside [0,1]");
  if (gamma == 1.0) return std::numeric_limits<double>::infinity();
  return 3.0 * E * I / L * gamma / (1.0 - gamma);
}

// Basic (unassembled) stiffness of one member: axial force plus the two end
// moments against axial stretch and the end rotations measured from the chord.
// End springs act in series with the member; expressed through fixity factors
// the bending block is
//   [ 12 g_i          6 g_i g_j ]   EI
//   [ 6 g_i g_j       12 g_j    ] * ----------------
//                                   L (4 - g_i g_j)
inline Eigen::Matrix3d elemental_basic_stiffness(double E, double A, double I, double L,
                                                 double gi, double gj) {
  if (gi < 0.0 || gi > 1.0 || gj < 0.0 || gj > 1.0)
    throw ParameterError("fixity factor outside [0,1]");
  Eigen::Matrix3d k = Eigen::Matrix3d::Zero();
  k(0, 0) = E * A / L;
  const double den = 4.0 - gi * gj;
  const double c = E * I / (L * den);
  k(1, 1) = 12.0 * gi * c;
  k(1, 2) = k(2, 1) = 6.0 * gi * gj * c;
  k(2, 2) = 12.0 * gj * c;
  return k;
}

// Rows map global end displacements [uxi uyi rzi uxj uyj rzj] to the basic
// deformations [axial stretch, end rotation i, end rotation j] (from chord).
inline Eigen::Matrix<double, 3, 6> elemental_compatibility(double cx, double cy, double L) {
  Eigen::Matrix<double, 3, 6> t = Eigen::Matrix<double, 3, 6>::Zero();
  // axial stretch
  t(0, 0) = -cx;
  t(0, 1) = -cy;
  t(0, 3) = cx;
  t(0, 4) = cy;
  // chord rotation = (transverse_i - transverse_j)/L, transverse = -cy*ux + cx*uy
  const double bx = -cy / L, by = cx / L;
  t(1, 0) = bx;
  t(1, 1) = by;
  t(1, 2) = 1.0;
  t(1, 3) = -bx;
  t(1, 4) = -by;
  t(2, 0) = bx;
  t(2, 1) = by;
  t(2, 3) = -bx;
  t(2, 4) = -by;
  t(2, 5) = 1.0;
  return t;
}

struct ElementMatrices {
  Eigen::Matrix<double, 6, 6> global;  // end-force stiffness in global coordinates
  Eigen::Matrix3d basic;               // block of the unassembled stiffness
  Eigen::Matrix<double, 3, 6> compat;  // basic deformations from global end displacements
};

inline ElementMatrices elemental_stiffness(const FrameModel& model, const Element& e,
                                           const Eigen::VectorXd& theta_K) {
  const double gi = model.end_fixity(e.fix_i, theta_K);
  const double gj = model.end_fixity(e.fix_j, theta_K);
  const double scale = model.stiffness_scale(e, theta_K);
  ElementMatrices out;
  out.basic = elemental_basic_stiffness(e.E, e.A, e.I * scale, e.length, gi, gj);
  out.compat = elemental_compatibility(e.cx, e.cy, e.length);
  out.global = out.compat.transpose() * out.basic * out.compat;
  return out;
}

/// Assembled matrices for one parameter point. Immutable once built; shares
/// freely across threads.
struct StructuralMatrices {
  Eigen::MatrixXd K;    // global stiffness over free DOFs (masters first)
  Eigen::MatrixXd Km;   // block-diagonal unassembled stiffness, 3 per element
  Eigen::MatrixXd H;    // equilibrium matrix: nodal loads = H * basic resultants
  Eigen::VectorXd mass; // lumped diagonal over free DOFs
  Eigen::MatrixXd K_red;          // statically condensed onto masters
  Eigen::MatrixXd recovery;       // full free vector from master vector; top block = I
  Eigen::VectorXd mass_red;       // master diagonal (slaves carry no mass)
  Eigen::MatrixXd resultant_map;  // observed resultants from master displacements
  Eigen::VectorXd theta_K_used;
  int n_master = 0;
};

// Builds K twice over: once by direct scatter of element matrices and once as
// H Km H^T inside the test suite; here only the scatter route is computed so
// the identity stays a real cross-check.
inline StructuralMatrices assemble(const FrameModel& model, const ParameterSet& theta) {
  model.validate_parameters(theta);
  const int nf = model.n_free;
  const int nm = model.n_master;
  const int nb = model.n_basic();

  StructuralMatrices out;
  out.n_master = nm;
  out.theta_K_used = theta.theta_K;
  out.K = Eigen::MatrixXd::Zero(nf, nf);
  out.Km = Eigen::MatrixXd::Zero(nb, nb);
  out.H = Eigen::MatrixXd::Zero(nf, nb);
  out.mass = Eigen::VectorXd::Zero(nf);

  for (int ei = 0; ei < model.n_elements(); ++ei) {
    const Element& e = model.elements[ei];
    const ElementMatrices em = elemental_stiffness(model, e, theta.theta_K);

    int loc[6];
    const int ni = e.node_i, nj = e.node_j;
    loc[0] = model.free_index(ni, Dof::ux);
    loc[1] = model.free_index(ni, Dof::uy);
    loc[2] = model.free_index(ni, Dof::rz);
    loc[3] = model.free_index(nj, Dof::ux);
    loc[4] = model.free_index(nj, Dof::uy);
    loc[5] = model.free_index(nj, Dof::rz);

    for (int a = 0; a < 6; ++a) {
      if (loc[a] < 0) continue;
      for (int b = 0; b < 6; ++b)
        if (loc[b] >= 0) out.K(loc[a], loc[b]) += em.global(a, b);
      for (int c = 0; c < 3; ++c) out.H(loc[a], 3 * ei + c) += em.compat(c, a);
    }
    out.Km.block<3, 3>(3 * ei, 3 * ei) = em.basic;

    // half the self-weight to each end's translations
    const double half = 0.5 * e.density * e.A * e.length;
    for (int a : {0, 1, 3, 4})
      if (loc[a] >= 0) out.mass(loc[a]) += half;
  }

  for (const auto& em : model.extra_masses) {
    const double value = em.fraction * theta.theta_M[em.param];
    for (int d = 0; d < 2; ++d)
      if (em.dofs[d]) out.mass(model.free_index(em.node, static_cast<Dof>(d))) += value;
  }

  // Guyan condensation onto the masters; free numbering already puts them first
  const int ns = nf - nm;
  out.recovery = Eigen::MatrixXd::Zero(nf, nm);
  out.recovery.topRows(nm).setIdentity();
  if (ns > 0) {
    const Eigen::MatrixXd Kss = out.K.bottomRightCorner(ns, ns);
    const Eigen::MatrixXd Ksm = out.K.bottomLeftCorner(ns, nm);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(Kss);
    if (lu.rank() < ns)
      throw ReductionError("mechanism among slave DOFs: slave stiffness block is singular (rank " +
                           std::to_string(lu.rank()) + " of " + std::to_string(ns) + ")");
    out.recovery.bottomRows(ns) = -lu.solve(Ksm);
    out.K_red = out.K.topLeftCorner(nm, nm) + out.K.topRightCorner(nm, ns) * out.recovery.bottomRows(ns);
    out.K_red = 0.5 * (out.K_red + out.K_red.transpose()).eval();
  } else {
    out.K_red = out.K;
  }
  out.mass_red = out.mass.head(nm);

  // observed resultants r = B Km H^T recovery d_m, precomputed per component
  const Eigen::MatrixXd full_map = out.Km * out.H.transpose() * out.recovery;
  out.resultant_map.resize(static_cast<Eigen::Index>(model.observed_rows.size()), nm);
  for (std::size_t i = 0; i < model.observed_rows.size(); ++i)
    out.resultant_map.row(static_cast<Eigen::Index>(i)) = full_map.row(model.observed_rows[i]);

  return out;
}

struct Mode {
  double omega = 0.0;       // rad/s
  Eigen::VectorXd shape;    // over master DOFs, unit Euclidean norm
};

// K d = w^2 M d over the condensed system. M must be diagonal positive,
// K symmetric; modes come back sorted by frequency with unit-norm shapes.
inline std::vector<Mode> solve_modal(const Eigen::MatrixXd& K_red,
                                     const Eigen::VectorXd& mass_red, int n_modes) {
  const Eigen::Index n = K_red.rows();
  if (K_red.cols() != n) throw NumericalError("stiffness matrix must be square");
  if (mass_red.size() != n) throw NumericalError("mass vector length mismatch");
  const double asym = (K_red - K_red.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9 * std::max(1.0, K_red.cwiseAbs().maxCoeff()))
    throw NumericalError("stiffness matrix is not symmetric");
  if ((mass_red.array() <= 0.0).any())
    throw NumericalError("mass matrix must be positive on all retained DOFs");
  if (n_modes < 1 || n_modes > static_cast<int>(n))
    throw NumericalError("invalid mode count " + std::to_string(n_modes));

  Eigen::MatrixXd M = mass_red.asDiagonal();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(K_red, M);
  if (es.info() != Eigen::Success) throw NumericalError("generalized eigensolve failed");

  std::vector<Mode> modes(static_cast<std::size_t>(n_modes));
  for (int k = 0; k < n_modes; ++k) {
    const double lambda = es.eigenvalues()(k);
    if (!(lambda > 0.0))
      throw NumericalError("non-positive eigenvalue in modal solve: " + std::to_string(lambda));
    modes[k].omega = std::sqrt(lambda);
    Eigen::VectorXd v = es.eigenvectors().col(k);
    v /= v.norm();
    // deterministic orientation: largest-magnitude entry positive
    Eigen::Index imax;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0.0) v = -v;
    modes[k].shape = v;
  }
  return modes;
}

inline std::vector<Mode> solve_modal(const StructuralMatrices& mats, int n_modes) {
  return solve_modal(mats.K_red, mats.mass_red, n_modes);
}

// Observed stress resultants for a master displacement pattern.
inline Eigen::VectorXd stress_resultants(const StructuralMatrices& mats,
                                         const Eigen::VectorXd& d_master) {
  if (d_master.size() != mats.n_master)
    throw NumericalError("displacement vector length does not match master DOF count");
  return mats.resultant_map * d_master;
}

// Validating variant: the matrices must have been assembled at exactly this theta_K.
inline Eigen::VectorXd stress_resultants(const FrameModel& model, const Eigen::VectorXd& theta_K,
                                         const StructuralMatrices& mats,
                                         const Eigen::VectorXd& d_master) {
  (void)model;
  if (theta_K.size() != mats.theta_K_used.size() || theta_K != mats.theta_K_used)
    throw ConsistencyError("stale assembled matrices: theta_K changed since assembly");
  return stress_resultants(mats, d_master);
}

}  // namespace framebayes

#endif
