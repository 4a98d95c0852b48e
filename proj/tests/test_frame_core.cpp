#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <limits>
#include <random>

#include "framebayes/frame_core.hpp"
#include "framebayes/model.hpp"
#include "support/oracles.hpp"

using namespace framebayes;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

// Two collinear axial members in series; the middle node is a massless slave.
FrameModel series_spring_model(double k1, double k2, double L) {
  FrameModel m;
  m.nodes = {{1, 0.0, 0.0}, {2, L, 0.0}, {3, 2.0 * L, 0.0}};
  const double E = 1.0e9;
  Element e1;
  e1.id = 1;
  e1.node_i = 1;
  e1.node_j = 2;
  e1.E = E;
  e1.A = k1 * L / E;
  e1.I = 1e-6;
  Element e2 = e1;
  e2.id = 2;
  e2.node_i = 2;
  e2.node_j = 3;
  e2.A = k2 * L / E;
  m.elements = {e1, e2};
  m.supports = {{1, {true, true, true}}, {2, {false, true, true}}, {3, {false, true, true}}};
  m.mass_params = {"m"};
  ExtraMass em;
  em.node = 3;
  em.param = 0;
  em.dofs = {true, false};
  m.extra_masses = {em};
  MasterDof md;
  md.node = 3;
  md.dof = Dof::ux;
  md.channel = "tip";
  m.master_dofs = {md};
  ObservedResultant o;
  o.element = 1;
  o.component = ResultantComponent::axial;
  o.channel = "n_1";
  m.observed = {o};
  m.finalize();
  return m;
}

ParameterSet one_mass(double value) {
  ParameterSet t;
  t.theta_K.resize(0);
  t.theta_M.resize(1);
  t.theta_M << value;
  return t;
}

}  // namespace

TEST_CASE("fixity factor from rotational stiffness") {
  const double E = 2.05e11, I = 3.99e-5, L = 3.5;

  CHECK(fixity_from_rotational_stiffness(kInf, E, I, L) == 1.0);
  CHECK(fixity_from_rotational_stiffness(0.0, E, I, L) == 0.0);
  CHECK_THAT(fixity_from_rotational_stiffness(3.0 * E * I / L, E, I, L),
             WithinAbs(0.5, 1e-15));

  SECTION("monotone in k") {
    double prev = 0.0;
    for (double k = 1e3; k < 1e12; k *= 10.0) {
      const double g = fixity_from_rotational_stiffness(k, E, I, L);
      CHECK(g > prev);
      prev = g;
    }
  }

  SECTION("round trip on (0,1)") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unif(1e-6, 1.0 - 1e-6);
    for (int i = 0; i < 200; ++i) {
      const double g = unif(rng);
      const double k = rotational_stiffness_from_fixity(g, E, I, L);
      CHECK_THAT(fixity_from_rotational_stiffness(k, E, I, L), WithinAbs(g, 1e-12));
    }
  }

  CHECK_THROWS_AS(fixity_from_rotational_stiffness(1.0, -E, I, L), GeometryError);
  CHECK_THROWS_AS(fixity_from_rotational_stiffness(1.0, E, 0.0, L), GeometryError);
  CHECK_THROWS_AS(fixity_from_rotational_stiffness(1.0, E, I, -L), GeometryError);
  CHECK_THROWS_AS(fixity_from_rotational_stiffness(-1.0, E, I, L), ParameterError);
}

TEST_CASE("elemental stiffness with end fixity factors") {
  const double E = 2.05e11, A = 6.67e-3, I = 3.99e-5, L = 3.5;

  SECTION("rigid ends reproduce the textbook beam") {
    const Eigen::Matrix3d k = elemental_basic_stiffness(E, A, I, L, 1.0, 1.0);
    CHECK_THAT(k(1, 1), WithinRel(4.0 * E * I / L, 1e-12));
    CHECK_THAT(k(2, 2), WithinRel(4.0 * E * I / L, 1e-12));
    CHECK_THAT(k(1, 2), WithinRel(2.0 * E * I / L, 1e-12));
    CHECK_THAT(k(0, 0), WithinRel(E * A / L, 1e-12));
  }

  SECTION("double pin keeps only the axial term") {
    const Eigen::Matrix3d k = elemental_basic_stiffness(E, A, I, L, 0.0, 0.0);
    CHECK(k.block<2, 2>(1, 1).isZero(0.0));
    CHECK_THAT(k(0, 0), WithinRel(E * A / L, 1e-12));
  }

  SECTION("matches the explicit spring condensation oracle") {
    struct Case {
      double gi, gj, cx, cy;
    };
    const Case cases[] = {{0.3, 1.0, 0.0, 1.0}, {0.5, 0.5, 1.0, 0.0}, {0.0, 0.7, 0.6, 0.8}};
    for (const auto& c : cases) {
      Eigen::Matrix<double, 3, 6> t = elemental_compatibility(c.cx, c.cy, L);
      const Eigen::Matrix<double, 6, 6> impl =
          t.transpose() * elemental_basic_stiffness(E, A, I, L, c.gi, c.gj) * t;
      const Eigen::Matrix<double, 6, 6> ref =
          oracles::spring_condensed_global(E, A, I, L, c.cx, c.cy, c.gi, c.gj);
      const double scale = ref.cwiseAbs().maxCoeff();
      CHECK((impl - ref).cwiseAbs().maxCoeff() / scale < 1e-9);
    }
  }

  SECTION("100 random fixity pairs against the oracle") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
      const double gi = unif(rng), gj = unif(rng);
      const double cx = std::cos(unif(rng) * 2 * M_PI), cy = std::sin(std::acos(cx));
      Eigen::Matrix<double, 3, 6> t = elemental_compatibility(cx, cy, L);
      const Eigen::Matrix<double, 6, 6> impl =
          t.transpose() * elemental_basic_stiffness(E, A, I, L, gi, gj) * t;
      const Eigen::Matrix<double, 6, 6> ref =
          oracles::spring_condensed_global(E, A, I, L, cx, cy, gi, gj);
      CHECK((impl - ref).cwiseAbs().maxCoeff() / ref.cwiseAbs().maxCoeff() < 1e-9);
    }
  }

  SECTION("symmetric positive semidefinite") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < 20; ++i) {
      Eigen::Matrix<double, 3, 6> t = elemental_compatibility(1.0, 0.0, L);
      const Eigen::Matrix<double, 6, 6> k =
          t.transpose() * elemental_basic_stiffness(E, A, I, L, unif(rng), unif(rng)) * t;
      CHECK((k - k.transpose()).cwiseAbs().maxCoeff() < 1e-9 * k.cwiseAbs().maxCoeff());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
      CHECK(es.eigenvalues().minCoeff() > -1e-9 * es.eigenvalues().maxCoeff());
    }
  }

  CHECK_THROWS_AS(elemental_basic_stiffness(E, A, I, L, -0.1, 0.5), ParameterError);
  CHECK_THROWS_AS(elemental_basic_stiffness(E, A, I, L, 0.5, 1.2), ParameterError);
}

TEST_CASE("assembly of the series-spring chain") {
  const double k1 = 3.0e6, k2 = 5.0e6;
  FrameModel m = series_spring_model(k1, k2, 1.5);
  const StructuralMatrices mats = assemble(m, one_mass(100.0));
  REQUIRE(mats.K_red.rows() == 1);
  CHECK_THAT(mats.K_red(0, 0), WithinRel(k1 * k2 / (k1 + k2), 1e-12));
}

TEST_CASE("assembly identity and Guyan consistency on random frames") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const FrameModel m = oracles::random_frame(rng, trial % 3 == 0);
    const ParameterSet theta = oracles::random_parameters(m, rng);
    const StructuralMatrices mats = assemble(m, theta);

    const double k_norm = mats.K.norm();
    CHECK((mats.K - mats.H * mats.Km * mats.H.transpose()).norm() / k_norm < 1e-9);
    CHECK((mats.K - mats.K.transpose()).norm() / k_norm < 1e-9);
    CHECK((mats.recovery.transpose() * mats.K * mats.recovery - mats.K_red).norm() /
              mats.K_red.norm() <
          1e-9);
    CHECK(mats.recovery.topRows(mats.n_master).isIdentity(1e-14));
    CHECK((mats.mass.array() >= 0.0).all());

    const auto modes = solve_modal(mats, std::min(4, mats.n_master));
    for (const auto& mode : modes) {
      const Eigen::VectorXd res = mats.K_red * mode.shape -
                                  mode.omega * mode.omega *
                                      (mats.mass_red.asDiagonal() * mode.shape);
      CHECK(res.norm() / (mats.K_red * mode.shape).norm() < 1e-8);
    }
    for (std::size_t i = 0; i < modes.size(); ++i)
      for (std::size_t j = i + 1; j < modes.size(); ++j) {
        Eigen::VectorXd mi = modes[i].shape, mj = modes[j].shape;
        mi /= std::sqrt(mi.dot(mats.mass_red.asDiagonal() * mi));
        mj /= std::sqrt(mj.dot(mats.mass_red.asDiagonal() * mj));
        CHECK(std::abs(mi.dot(mats.mass_red.asDiagonal() * mj)) < 1e-8);
      }
  }
}

TEST_CASE("target frame assembles with the published section properties") {
  const FrameModel m = oracles::fig1_model();
  // twelve nominal acceleration components collapse to ten distinct channels
  // (the base pairs coincide); after removing the two supported base nodes the
  // eight superstructure translations remain as masters
  CHECK(m.n_master == 8);
  CHECK(m.n_free == 12);
  const StructuralMatrices mats = assemble(m, oracles::fig1_target());
  CHECK(mats.K_red.rows() == 8);
  CHECK((mats.K - mats.H * mats.Km * mats.H.transpose()).norm() / mats.K.norm() < 1e-9);

  SECTION("first two frequencies match an independent dense eigensolver") {
    const auto modes = solve_modal(mats, 2);
    const auto ref = oracles::jacobi_generalized(mats.K_red, mats.mass_red);
    for (int k = 0; k < 2; ++k)
      CHECK_THAT(modes[static_cast<std::size_t>(k)].omega,
                 WithinRel(std::sqrt(ref[static_cast<std::size_t>(k)].lambda), 1e-8));
  }
}

TEST_CASE("mechanism among slave DOFs is reported") {
  // a cantilever with a pinned far end rotation: the free rotation has no
  // stiffness path once the element bending block vanishes there
  FrameModel m;
  m.nodes = {{1, 0.0, 0.0}, {2, 0.0, 3.0}};
  Element e;
  e.id = 1;
  e.node_i = 1;
  e.node_j = 2;
  e.E = 2.0e11;
  e.A = 5e-3;
  e.I = 4e-5;
  e.fix_i.value = 1.0;
  e.fix_j.value = 0.0;
  m.elements = {e};
  m.supports = {{1, {true, true, true}}};
  m.mass_params = {"m"};
  ExtraMass em;
  em.node = 2;
  em.param = 0;
  em.dofs = {true, true};
  m.extra_masses = {em};
  m.master_dofs = {{2, Dof::ux, "tip_x"}, {2, Dof::uy, "tip_y"}};
  m.finalize();
  CHECK_THROWS_AS(assemble(m, one_mass(500.0)), ReductionError);
}

TEST_CASE("modal solve on closed-form systems") {
  SECTION("single DOF") {
    Eigen::MatrixXd K(1, 1);
    K << 4.0;
    Eigen::VectorXd M(1);
    M << 1.0;
    const auto modes = solve_modal(K, M, 1);
    CHECK_THAT(modes[0].omega, WithinRel(2.0, 1e-14));
  }

  SECTION("uniform two-DOF shear chain") {
    const double k = 7.3e5, mass = 1250.0;
    Eigen::MatrixXd K(2, 2);
    K << 2.0 * k, -k, -k, k;
    Eigen::VectorXd M = Eigen::VectorXd::Constant(2, mass);
    const auto modes = solve_modal(K, M, 2);
    const double l1 = k / mass * (3.0 - std::sqrt(5.0)) / 2.0;
    const double l2 = k / mass * (3.0 + std::sqrt(5.0)) / 2.0;
    CHECK_THAT(modes[0].omega, WithinRel(std::sqrt(l1), 1e-12));
    CHECK_THAT(modes[1].omega, WithinRel(std::sqrt(l2), 1e-12));
  }

  SECTION("input validation") {
    Eigen::MatrixXd K(2, 2);
    K << 1.0, 0.5, 0.2, 1.0;  // not symmetric
    Eigen::VectorXd M = Eigen::VectorXd::Ones(2);
    CHECK_THROWS_AS(solve_modal(K, M, 1), NumericalError);
    Eigen::MatrixXd Ks(2, 2);
    Ks << 2.0, -1.0, -1.0, 2.0;
    Eigen::VectorXd Mbad(2);
    Mbad << 1.0, -1.0;
    CHECK_THROWS_AS(solve_modal(Ks, Mbad, 1), NumericalError);
  }
}

TEST_CASE("stress resultants from master displacements") {
  const FrameModel m = oracles::fig1_model();
  const StructuralMatrices mats = assemble(m, oracles::fig1_target());

  SECTION("zero displacement, zero resultants") {
    CHECK(stress_resultants(mats, Eigen::VectorXd::Zero(8)).isZero(0.0));
  }

  SECTION("linearity in the displacement") {
    Eigen::VectorXd d = Eigen::VectorXd::LinSpaced(8, -1.0, 1.0);
    const Eigen::VectorXd r1 = stress_resultants(mats, d);
    // power-of-two scale factors commute through the arithmetic bit-exactly
    const Eigen::VectorXd r2 = stress_resultants(mats, (2.0 * d).eval());
    CHECK((r2 - 2.0 * r1).isZero(0.0));
    const Eigen::VectorXd r3 = stress_resultants(mats, (2.5 * d).eval());
    CHECK((r3 - 2.5 * r1).norm() < 1e-14 * r1.norm());
  }

  SECTION("cantilever tip displacement gives 3EI/L^2 at the base") {
    FrameModel c;
    c.nodes = {{1, 0.0, 0.0}, {2, 0.0, 2.8}};
    Element e;
    e.id = 1;
    e.node_i = 1;
    e.node_j = 2;
    e.E = 2.05e11;
    e.A = 6.67e-3;
    e.I = 3.99e-5;
    c.elements = {e};
    c.supports = {{1, {true, true, true}}};
    c.mass_params = {"m"};
    ExtraMass em;
    em.node = 2;
    em.param = 0;
    em.dofs = {true, false};
    c.extra_masses = {em};
    c.master_dofs = {{2, Dof::ux, "tip"}};
    c.observed = {{1, ResultantComponent::moment_i, "base"},
                  {1, ResultantComponent::moment_j, "tip_m"}};
    c.finalize();
    ParameterSet t;
    t.theta_K.resize(0);
    t.theta_M.resize(1);
    t.theta_M << 1.0;
    const StructuralMatrices cm = assemble(c, t);
    Eigen::VectorXd d(1);
    d << 1.0;
    const Eigen::VectorXd r = stress_resultants(cm, d);
    const double L = 2.8;
    CHECK_THAT(r(0), WithinRel(3.0 * e.E * e.I / (L * L), 1e-9));
    CHECK_THAT(r(1), WithinAbs(0.0, 1e-6 * std::abs(r(0))));
  }

  SECTION("stale matrices are rejected") {
    Eigen::VectorXd other = oracles::fig1_target().theta_K;
    other[0] = 0.31;
    CHECK_THROWS_AS(stress_resultants(m, other, mats, Eigen::VectorXd::Zero(8)),
                    ConsistencyError);
    CHECK_NOTHROW(
        stress_resultants(m, oracles::fig1_target().theta_K, mats, Eigen::VectorXd::Zero(8)));
  }
}

TEST_CASE("model validation catches bad inputs") {
  FrameModel m = oracles::fig1_model();
  SECTION("parameter vector lengths") {
    ParameterSet t = oracles::fig1_target();
    t.theta_M.resize(1);
    CHECK_THROWS_AS(assemble(m, t), ParameterError);
  }
  SECTION("fixity domain") {
    ParameterSet t = oracles::fig1_target();
    t.theta_K[0] = 1.5;
    CHECK_THROWS_AS(assemble(m, t), ParameterError);
  }
  SECTION("negative mass") {
    ParameterSet t = oracles::fig1_target();
    t.theta_M[0] = -2.0;
    CHECK_THROWS_AS(assemble(m, t), ParameterError);
  }
}
