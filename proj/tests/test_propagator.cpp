#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "spinrestore/propagator.hpp"

using namespace spinrestore;

namespace {

ChainPartition part_n(int n) { return {2, n - 4, 2, 1}; }

Eigen::MatrixXcd random_density(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  Eigen::MatrixXcd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = std::complex<double>(gauss(rng), gauss(rng));
  Eigen::MatrixXcd rho = a * a.adjoint();
  rho /= rho.trace();
  return rho;
}

}  // namespace

TEST_CASE("exponential at t = 0 is the identity", "[propagator]") {
  const ChainPartition part = part_n(5);
  const SectorBasis basis = build_sector_basis(part, 1);
  const ChainSpec spec = make_chain_spec(part, CouplingProfile::homogeneous, 0.05);
  const LindbladGenerator gen = build_generator(spec, basis);
  const Propagator prop = expm_generator(gen, basis, 0.0);
  const int d2 = basis.dim * basis.dim;
  CHECK((prop.map - Eigen::MatrixXcd::Identity(d2, d2)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("exponential matches the truncated series", "[propagator]") {
  const ChainPartition part{1, 1, 1, 1};  // N = 3
  const SectorBasis basis = build_sector_basis(part, 1);
  const ChainSpec spec = make_chain_spec(part, CouplingProfile::homogeneous, 0.2);
  const LindbladGenerator gen = build_generator(spec, basis);
  const double t = 0.35;
  const Propagator prop = expm_generator(gen, basis, t);

  Eigen::MatrixXcd series = Eigen::MatrixXcd::Identity(9, 9);
  Eigen::MatrixXcd term = series;
  for (int j = 1; j <= 20; ++j) {
    term = (term * gen.matrix * t / double(j)).eval();
    series += term;
  }
  CHECK((prop.map - series).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("propagation preserves trace and Hermiticity", "[propagator]") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(0.0, 0.4);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 5 + trial % 3;
    const ChainPartition part = part_n(n);
    const SectorBasis basis = build_sector_basis(part, 1);
    ChainSpec spec = make_chain_spec(part, CouplingProfile::homogeneous, 0.0);
    for (int l = 0; l < n; ++l) spec.dephasing(l) = unif(rng);
    const LindbladGenerator gen = build_generator(spec, basis);
    const Propagator prop = expm_generator(gen, basis, 0.5 + unif(rng));

    const Eigen::MatrixXcd rho0 = random_density(prop.sender_dim, rng);
    const Eigen::MatrixXcd rho = evolve(prop, rho0);
    CHECK(std::abs(rho.trace().real() - 1.0) < 1e-10);
    CHECK(std::abs(rho.trace().imag()) < 1e-12);
    CHECK((rho - rho.adjoint()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("embedding at t = 0 pads the sender state", "[propagator]") {
  const ChainPartition part = part_n(6);
  const SectorBasis basis = build_sector_basis(part, 1);
  const ChainSpec spec = make_chain_spec(part, CouplingProfile::homogeneous, 0.1);
  const LindbladGenerator gen = build_generator(spec, basis);
  const Propagator prop = expm_generator(gen, basis, 0.0);
  std::mt19937_64 rng(3);
  const Eigen::MatrixXcd rho0 = random_density(2, rng);
  const Eigen::MatrixXcd rho = evolve(prop, rho0);
  CHECK((rho.block(0, 0, 2, 2) - rho0).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(rho.cwiseAbs().sum() == Catch::Approx(rho0.cwiseAbs().sum()));
}

TEST_CASE("closed evolution keeps purity", "[propagator]") {
  const ChainPartition part = part_n(6);
  const SectorBasis basis = build_sector_basis(part, 1);
  const ChainSpec spec = make_chain_spec(part, CouplingProfile::homogeneous, 0.0);
  const LindbladGenerator gen = build_generator(spec, basis);
  const Propagator prop = expm_generator(gen, basis, 2.7);
  Eigen::VectorXcd psi(2);
  psi << std::complex<double>(0.6, 0.0), std::complex<double>(0.0, 0.8);
  const Eigen::MatrixXcd rho = evolve(prop, psi * psi.adjoint());
  CHECK((rho * rho).trace().real() == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("pure dephasing decays off-diagonals analytically", "[propagator]") {
  const ChainPartition part = part_n(5);
  const SectorBasis basis = build_sector_basis(part, 1);
  ChainSpec spec = make_chain_spec(part, CouplingProfile::homogeneous, 0.3);
  spec.couplings.setZero();
  const LindbladGenerator gen = build_generator(spec, basis);
  const double t = 1.7;
  const Propagator prop = expm_generator(gen, basis, t);
  std::mt19937_64 rng(5);
  const Eigen::MatrixXcd rho0 = random_density(2, rng);
  const Eigen::MatrixXcd rho = evolve(prop, rho0);
  // one-excitation states differ at two sites: off-diagonals decay as
  // exp(-Gamma t), diagonals stay
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(rho(i, i) - rho0(i, i)) < 1e-10);
    for (int j = 0; j < 2; ++j)
      if (i != j)
        CHECK(std::abs(rho(i, j) - rho0(i, j) * std::exp(-0.3 * t)) < 1e-10);
  }
}

TEST_CASE("semigroup property", "[propagator]") {
  const ChainPartition part = part_n(5);
  const SectorBasis basis = build_sector_basis(part, 1);
  const ChainSpec spec = make_chain_spec(part, CouplingProfile::homogeneous, 0.12);
  const LindbladGenerator gen = build_generator(spec, basis);
  const Propagator a = expm_generator(gen, basis, 0.4);
  const Propagator b = expm_generator(gen, basis, 0.9);
  const Propagator ab = expm_generator(gen, basis, 1.3);
  CHECK((a.map * b.map - ab.map).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("sender-restricted map is completely positive", "[propagator]") {
  const ChainPartition part = part_n(5);
  const SectorBasis basis = build_sector_basis(part, 1);
  const ChainSpec spec = make_chain_spec(part, CouplingProfile::homogeneous, 0.08);
  const LindbladGenerator gen = build_generator(spec, basis);
  const Propagator prop = expm_generator(gen, basis, 1.1);
  const int d = basis.dim, ds = prop.sender_dim;
  Eigen::MatrixXcd choi(d * ds, d * ds);
  for (int n = 0; n < d; ++n)
    for (int i = 0; i < ds; ++i)
      for (int m = 0; m < d; ++m)
        for (int j = 0; j < ds; ++j)
          choi(n * ds + i, m * ds + j) = prop.sender_columns(n * d + m, i * ds + j);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(choi, Eigen::EigenvaluesOnly);
  CHECK(es.eigenvalues().minCoeff() > -1e-10);
}

TEST_CASE("lambda roots of the transfer Gram matrix", "[propagator]") {
  Eigen::MatrixXcd vhat = Eigen::MatrixXcd::Zero(3, 2);
  vhat(0, 0) = 1.0;
  vhat(1, 1) = 1.0;
  auto [lo, hi] = lambda_roots_2qubit(vhat);
  CHECK(lo == Catch::Approx(1.0));
  CHECK(hi == Catch::Approx(1.0));

  vhat(1, 1) = 0.0;
  std::tie(lo, hi) = lambda_roots_2qubit(vhat);
  CHECK(lo == Catch::Approx(0.0).margin(1e-15));
  CHECK(hi == Catch::Approx(1.0));

  CHECK_THROWS_AS(lambda_roots_2qubit(Eigen::MatrixXcd::Zero(3, 3)), std::domain_error);
}

TEST_CASE("lambda roots depend only on the Gram matrix", "[propagator]") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss;
  Eigen::MatrixXcd vhat(3, 2);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) vhat(i, j) = 0.4 * std::complex<double>(gauss(rng), gauss(rng));
  const auto base = lambda_roots_2qubit(vhat);
  const auto rotated = lambda_roots_2qubit(std::polar(1.0, 1.234) * vhat);
  CHECK(base.first == Catch::Approx(rotated.first).margin(1e-14));
  CHECK(base.second == Catch::Approx(rotated.second).margin(1e-14));
}

TEST_CASE("lambda roots within a unitary stay in [0, 1]", "[propagator]") {
  const ChainPartition part = part_n(8);
  const SectorBasis basis = build_sector_basis(part, 1);
  const ChainSpec spec = make_chain_spec(part, CouplingProfile::homogeneous, 0.0);
  const SectorHamiltonian h = build_hamiltonian(spec, basis);
  const SectorUnitary u(h, basis);
  for (double tau : {0.5, 3.0, 7.5, 12.0}) {
    const auto [lo, hi] = lambda_roots_2qubit(u.transfer_block(tau));
    CHECK(lo >= -1e-12);
    CHECK(hi <= 1.0 + 1e-12);
    CHECK(lo <= hi + 1e-15);
  }
}

TEST_CASE("registration time for the 10-node homogeneous chain", "[propagator]") {
  const ChainPartition part = part_n(10);
  const SectorBasis basis = build_sector_basis(part, 1);
  const ChainSpec spec = make_chain_spec(part, CouplingProfile::homogeneous, 0.0);
  const LambdaCurve curve = find_t0(spec, basis);
  CHECK(std::abs(curve.t0 - 12.222) < 0.002);
  CHECK(std::abs(curve.lambda0 - 0.536) < 0.002);
  for (double lam : curve.lambda_min) {
    CHECK(lam >= -1e-12);
    CHECK(lam <= 1.0 + 1e-12);
  }
}

TEST_CASE("propagator input validation", "[propagator]") {
  const ChainPartition part = part_n(5);
  const SectorBasis basis = build_sector_basis(part, 1);
  const ChainSpec spec = make_chain_spec(part, CouplingProfile::homogeneous, 0.0);
  const LindbladGenerator gen = build_generator(spec, basis);
  CHECK_THROWS_AS(expm_generator(gen, basis, -1.0), std::invalid_argument);
  const Propagator prop = expm_generator(gen, basis, 1.0);
  Eigen::MatrixXcd bad = Eigen::MatrixXcd::Identity(2, 2);  // trace 2
  CHECK_THROWS_AS(evolve(prop, bad), std::invalid_argument);
  Eigen::MatrixXcd non_psd(2, 2);
  non_psd << 1.5, 0.0, 0.0, -0.5;
  CHECK_THROWS_AS(evolve(prop, non_psd), std::invalid_argument);
  Eigen::MatrixXcd nonfinite = Eigen::MatrixXcd::Zero(2, 2);
  nonfinite(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(matrix_exponential(nonfinite), NumericalError);
}
