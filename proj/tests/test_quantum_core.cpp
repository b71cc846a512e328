#include <gtest/gtest.h>

#include <random>

#include "qfpt/quantum_core.hpp"
#include "support.hpp"

using namespace qfpt;

namespace {

// Qubit i of an n-site register is the (n-1-i)-th bit of the basis index;
// bit value 0 is the excited state (kExcitedIndex).
ComplexMatrix bitwise_sigma_z(std::size_t site, std::size_t n) {
  const auto d = Eigen::Index{1} << n;
  ComplexMatrix m = ComplexMatrix::Zero(d, d);
  for (Eigen::Index b = 0; b < d; ++b) {
    const bool bit = (b >> (n - 1 - site)) & 1;
    m(b, b) = bit ? -1.0 : 1.0;
  }
  return m;
}

ComplexMatrix bitwise_sigma_plus(std::size_t site, std::size_t n) {
  const auto d = Eigen::Index{1} << n;
  const Eigen::Index mask = Eigen::Index{1} << (n - 1 - site);
  ComplexMatrix m = ComplexMatrix::Zero(d, d);
  for (Eigen::Index b = 0; b < d; ++b) {
    if (b & mask) m(b ^ mask, b) = 1.0;  // ground -> excited
  }
  return m;
}

}  // namespace

TEST(Pauli, Conventions) {
  using namespace pauli;
  EXPECT_EQ(sigma_z()(kExcitedIndex, kExcitedIndex), Complex(1.0));
  EXPECT_EQ(sigma_z()(kGroundIndex, kGroundIndex), Complex(-1.0));
  // sigma+ |ground> = |excited>
  ComplexVector g = ComplexVector::Zero(2);
  g(kGroundIndex) = 1.0;
  const ComplexVector e = sigma_plus() * g;
  EXPECT_EQ(e(kExcitedIndex), Complex(1.0));
  EXPECT_LT(max_abs(commutator(sigma_plus(), sigma_minus()) - sigma_z()), 1e-15);
  EXPECT_LT(max_abs(sigma_plus() + sigma_minus() - sigma_x()), 1e-15);
}

TEST(Tensor, MatchesBitOracle) {
  for (std::size_t n = 1; n <= 5; ++n) {
    for (std::size_t site = 0; site < n; ++site) {
      EXPECT_LT(max_abs(site_operator(pauli::sigma_z(), site, n) - bitwise_sigma_z(site, n)), 1e-15);
      EXPECT_LT(max_abs(site_operator(pauli::sigma_plus(), site, n) - bitwise_sigma_plus(site, n)), 1e-15);
    }
  }
}

TEST(Tensor, KroneckerIndexing) {
  std::mt19937_64 g(1);
  const ComplexMatrix a = test::random_hermitian(g, 2);
  const ComplexMatrix b = test::random_hermitian(g, 3);
  const ComplexMatrix k = tensor(a, b);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) EXPECT_EQ(k(i * 3 + r, j * 3 + c), a(i, j) * b(r, c));
}

TEST(Tensor, MixedProductProperty) {
  std::mt19937_64 g(2);
  for (int rep = 0; rep < 20; ++rep) {
    const ComplexMatrix a = test::random_hermitian(g, 2), b = test::random_hermitian(g, 3);
    const ComplexMatrix c = test::random_hermitian(g, 2), d = test::random_hermitian(g, 3);
    EXPECT_LT(max_abs(tensor(a, b) * tensor(c, d) - tensor(a * c, b * d)), 1e-12);
  }
}

TEST(Tensor, RejectsOversizedProduct) {
  const ComplexMatrix a = ComplexMatrix::Identity(8, 8);
  EXPECT_NO_THROW(tensor(a, a));  // 64 is the largest allowed dimension
  EXPECT_THROW(tensor(a, ComplexMatrix::Identity(9, 9)), DomainError);
  EXPECT_THROW(site_operator(pauli::sigma_z(), 3, 3), DomainError);
  EXPECT_THROW(site_operator(pauli::sigma_z(), 0, 7), DomainError);
}

TEST(ProductState, IndexConvention) {
  // |excited, ground> is index 0b01 with excited = bit 0
  const StateVector s = product_state({true, false});
  EXPECT_EQ(s.amplitudes()(1), Complex(1.0));
  const ComplexMatrix z0 = site_operator(pauli::sigma_z(), 0, 2);
  const ComplexMatrix z1 = site_operator(pauli::sigma_z(), 1, 2);
  const DensityOperator rho = DensityOperator::pure(s);
  EXPECT_DOUBLE_EQ(expectation(rho, z0).real(), 1.0);
  EXPECT_DOUBLE_EQ(expectation(rho, z1).real(), -1.0);
}

TEST(StateVector, Normalizes) {
  ComplexVector v(3);
  v << 3.0, Complex(0.0, 4.0), 0.0;
  const StateVector s(v);
  EXPECT_NEAR(s.amplitudes().norm(), 1.0, 1e-15);
  EXPECT_THROW(StateVector(ComplexVector::Zero(3)), DomainError);
  EXPECT_THROW(StateVector(ComplexVector(0)), DomainError);
  EXPECT_THROW(StateVector::basis(2, 2), DomainError);
}

TEST(DensityOperator, Validation) {
  EXPECT_NO_THROW(DensityOperator::maximally_mixed(4));
  ComplexMatrix m = ComplexMatrix::Identity(2, 2) * 0.5;
  m(0, 1) = 0.1;
  EXPECT_THROW(DensityOperator{m}, DomainError);  // not Hermitian
  ComplexMatrix t = ComplexMatrix::Identity(2, 2);
  EXPECT_THROW(DensityOperator{t}, DomainError);  // trace 2
  ComplexMatrix neg = ComplexMatrix::Zero(2, 2);
  neg(0, 0) = 1.5;
  neg(1, 1) = -0.5;
  EXPECT_THROW(DensityOperator{neg}, DomainError);  // not positive
}

TEST(Projector, FromOrthonormalBasis) {
  const std::vector<StateVector> basis{StateVector::basis(4, 0), StateVector::basis(4, 3)};
  const ComplexMatrix p = projector(basis);
  EXPECT_LT(max_abs(p * p - p), 1e-15);
  EXPECT_NEAR(p.trace().real(), 2.0, 1e-15);
}

TEST(Projector, RejectsNonOrthogonalBasis) {
  ComplexVector v(2);
  v << 1.0, 1.0;
  const std::vector<StateVector> basis{StateVector::basis(2, 0), StateVector(v)};
  EXPECT_GT(gram_deviation(basis), 0.5);
  EXPECT_THROW(projector(basis), DomainError);
}

TEST(Hermitize, Property) {
  std::mt19937_64 g(3);
  std::normal_distribution<double> n;
  for (int rep = 0; rep < 20; ++rep) {
    ComplexMatrix a(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) a(i, j) = Complex(n(g), n(g));
    const ComplexMatrix h = hermitize(a);
    EXPECT_TRUE(is_hermitian(h));
    EXPECT_LT(max_abs(hermitize(h) - h), 1e-15);
  }
}

TEST(Json, MatrixRoundTripIsExact) {
  std::mt19937_64 g(4);
  const ComplexMatrix a = test::random_hermitian(g, 5);
  const nlohmann::json j = matrix_to_json(a);
  const ComplexMatrix b = matrix_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(max_abs(a - b), 0.0);
  const ComplexVector v = a.col(2);
  EXPECT_EQ((vector_from_json(vector_to_json(v)) - v).norm(), 0.0);
}

TEST(Json, MalformedMatricesRejected) {
  EXPECT_THROW(matrix_from_json(nlohmann::json::parse("[[1, 2], [3]]")), ModelError);
  EXPECT_THROW(matrix_from_json(nlohmann::json::parse("[[[1, 2, 3]]]")), ModelError);
  EXPECT_THROW(matrix_from_json(nlohmann::json::parse("[]")), ModelError);
  // real entries are accepted as a shorthand
  EXPECT_EQ(matrix_from_json(nlohmann::json::parse("[[2]]"))(0, 0), Complex(2.0));
}
