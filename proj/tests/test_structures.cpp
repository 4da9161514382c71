#include <gtest/gtest.h>

#include "support.hpp"

using namespace stconfound;
using namespace testing_support;

namespace {

void expect_valid_spectrum(const PrecisionSpectrum& s) {
    const Eigen::Index n = s.dim();
    MatrixXd u(n, n);
    u << s.U_null, s.U_range;
    EXPECT_LE(max_abs(u.transpose() * u - MatrixXd::Identity(n, n)), 1e-10);
    if (s.kernel_dim()) EXPECT_LE(max_abs(s.Q * s.U_null), 1e-8 * max_abs(s.Q));
    const MatrixXd rebuilt = s.U_range * s.eigvals_range.asDiagonal() * s.U_range.transpose();
    EXPECT_LE(relative_frobenius(rebuilt, s.Q), 1e-8);
    for (Eigen::Index k = 1; k < s.eigvals_range.size(); ++k) EXPECT_LE(s.eigvals_range(k - 1), s.eigvals_range(k));
    EXPECT_TRUE((s.eigvals_range.array() > 0.0).all());
}

}  // namespace

TEST(SpatialGraph, RejectsSelfLoopsDuplicatesAndBadIndices) {
    EXPECT_THROW(SpatialGraph::from_edges(3, {{0, 0}, {0, 1}, {1, 2}}), ValidationError);
    EXPECT_THROW(SpatialGraph::from_edges(3, {{0, 1}, {1, 0}, {1, 2}}), ValidationError);
    EXPECT_THROW(SpatialGraph::from_edges(3, {{0, 3}, {1, 2}}), ValidationError);
}

TEST(SpatialGraph, DisconnectedMapNamesComponents) {
    try {
        SpatialGraph::from_edges(5, {{0, 1}, {2, 3}, {3, 4}});
        FAIL() << "expected an error";
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("2 components"), std::string::npos) << msg;
        EXPECT_NE(msg.find("5"), std::string::npos) << msg;
    }
}

TEST(SpatialPrecision, PathOfThree) {
    const MatrixXd q = build_spatial_precision(SpatialGraph::path(3));
    MatrixXd expected(3, 3);
    expected << 1, -1, 0, -1, 2, -1, 0, -1, 1;
    EXPECT_EQ(q, expected);
}

TEST(SpatialPrecision, RowsSumToZeroAndRankIsSMinusOne) {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 2 + rep % 11;
        const auto g = random_connected_graph(n, rng);
        const MatrixXd q = build_spatial_precision(g);
        EXPECT_LE(max_abs(q * VectorXd::Ones(n)), 0.0);
        EXPECT_EQ(q, q.transpose());
        const auto s = spectral_split(q);
        EXPECT_EQ(s.kernel_dim(), 1);
        EXPECT_EQ(s.range_dim(), n - 1);
        expect_valid_spectrum(s);
    }
}

TEST(SpatialPrecision, KernelIsNormalisedConstant) {
    const auto s = spectral_split(build_spatial_precision(SpatialGraph::lattice(3, 4)));
    ASSERT_EQ(s.kernel_dim(), 1);
    const VectorXd c = VectorXd::Constant(12, 1.0 / std::sqrt(12.0));
    EXPECT_LE(std::min((s.U_null.col(0) - c).norm(), (s.U_null.col(0) + c).norm()), 1e-10);
}

TEST(Rw1Precision, DefinitionAndSpectrum) {
    MatrixXd expected(3, 3);
    expected << 1, -1, 0, -1, 2, -1, 0, -1, 1;
    EXPECT_EQ(build_rw1_precision(3), expected);
    const auto s = spectral_split(build_rw1_precision(3));
    ASSERT_EQ(s.range_dim(), 2);
    EXPECT_NEAR(s.eigvals_range(0), 1.0, 1e-12);
    EXPECT_NEAR(s.eigvals_range(1), 3.0, 1e-12);
    EXPECT_THROW(build_rw1_precision(1), ValidationError);
}

TEST(Rw1Precision, AnalyticEigenvaluesAndRank) {
    for (int t : {2, 5, 14}) {
        const auto s = spectral_split(build_rw1_precision(t));
        EXPECT_EQ(s.range_dim(), t - 1);
        for (int k = 1; k < t; ++k)
            EXPECT_NEAR(s.eigvals_range(k - 1), 2.0 - 2.0 * std::cos(M_PI * k / t), 1e-10);
        expect_valid_spectrum(s);
    }
}

TEST(SpectralSplit, IdentityHasNoKernel) {
    const auto s = spectral_split(MatrixXd::Identity(4, 4));
    EXPECT_EQ(s.kernel_dim(), 0);
    EXPECT_LE((s.eigvals_range.array() - 1.0).abs().maxCoeff(), 1e-14);
    expect_valid_spectrum(s);
}

TEST(SpectralSplit, RejectsIndefiniteAndAsymmetric) {
    MatrixXd q(2, 2);
    q << 1, 0, 0, -1;
    EXPECT_THROW(spectral_split(q), ValidationError);
    q << 1, 0.5, 0, 1;
    EXPECT_THROW(spectral_split(q), ValidationError);
}

TEST(Interaction, PathThreeByThree) {
    const auto sp = spectral_split(build_spatial_precision(SpatialGraph::path(3)));
    const auto tm = spectral_split(build_rw1_precision(3));
    const auto d = interaction_eigenstructure(sp, tm);
    EXPECT_EQ(d.kernel_dim(), 5);
    EXPECT_EQ(d.range_dim(), 4);
    ASSERT_EQ(d.eigvals_range.size(), 4);
    const double expected[] = {1, 3, 3, 9};
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(d.eigvals_range(k), expected[k], 1e-10);
    expect_valid_spectrum(d);
}

TEST(Interaction, MatchesDirectDecomposition) {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 15; ++rep) {
        const int s = 2 + rep % 5, t = 2 + (rep / 5) % 5;
        if (s * t > 36) continue;
        const auto sp = spectral_split(build_spatial_precision(random_connected_graph(s, rng)));
        const auto tm = spectral_split(build_rw1_precision(t));
        const auto d = interaction_eigenstructure(sp, tm);
        const auto direct = spectral_split(kron(tm.Q, sp.Q));
        EXPECT_EQ(d.kernel_dim(), s + t - 1);
        EXPECT_EQ(direct.kernel_dim(), s + t - 1);
        EXPECT_LE(max_abs(span_projector(d.U_null) - span_projector(direct.U_null)), 1e-8);
        EXPECT_LE((d.eigvals_range - direct.eigvals_range).cwiseAbs().maxCoeff(), 1e-8 * direct.eigvals_range.maxCoeff());
        expect_valid_spectrum(d);
    }
}

TEST(Interaction, SeventyByFourteenDimensions) {
    std::mt19937_64 rng(70);
    const auto sp = spectral_split(build_spatial_precision(random_connected_graph(70, rng, 0.05)));
    const auto tm = spectral_split(build_rw1_precision(14));
    const auto d = interaction_eigenstructure(sp, tm);
    EXPECT_EQ(sp.range_dim(), 69);
    EXPECT_EQ(tm.range_dim(), 13);
    EXPECT_EQ(d.range_dim(), 897);
    EXPECT_EQ(d.kernel_dim(), 70 + 14 - 1);
}
