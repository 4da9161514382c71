#pragma once

// Datasets, covariate standardisation and the design bundles of the four
// model variants:
//   ST1  fixed effects only
//   ST2  reparameterised spatial + temporal + Type IV interaction effects
//   ST3  ST2 with (some) blocks restricted to the Ŵ-orthogonal complement of X_*
//   ST4  full-dimension effects with weighted orthogonality constraints

#include <array>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stconfound/error.hpp"
#include "stconfound/linalg.hpp"
#include "stconfound/projections.hpp"
#include "stconfound/structures.hpp"

namespace stconfound {

/// Per-column centring and scaling applied to the raw covariates.
struct StandardizationRecord {
    VectorXd mean;
    VectorXd scale;
    std::string convention = "sample variance, divisor N-1";
};

/// Counts, expected counts and covariates for S areas over T periods, stored
/// area-fastest: row t·S + i holds area i at period t.
struct Dataset {
    int areas = 0;
    int periods = 0;
    VectorXd observed;
    VectorXd expected;
    MatrixXd covariates;  ///< standardised
    std::vector<std::string> covariate_names;
    StandardizationRecord standardization;

    Eigen::Index size() const { return static_cast<Eigen::Index>(areas) * periods; }
    Eigen::Index n_covariates() const { return covariates.cols(); }
    static Eigen::Index index(int area, int period, int areas) { return static_cast<Eigen::Index>(period) * areas + area; }
};

/// Centres each column and divides by its sample standard deviation.
inline std::pair<MatrixXd, StandardizationRecord> standardize_covariates(const MatrixXd& raw) {
    const Eigen::Index n = raw.rows();
    StandardizationRecord rec;
    rec.mean.resize(raw.cols());
    rec.scale.resize(raw.cols());
    MatrixXd out(raw.rows(), raw.cols());
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
        if (n < 2) throw ValidationError("standardisation needs at least two rows");
        const double mean = raw.col(j).mean();
        const VectorXd centred = raw.col(j).array() - mean;
        const double var = centred.squaredNorm() / static_cast<double>(n - 1);
        if (!(var > 1e-300) || !std::isfinite(var))
            throw ValidationError("covariate column " + std::to_string(j + 1) + " has zero variance");
        rec.mean(j) = mean;
        rec.scale(j) = std::sqrt(var);
        out.col(j) = centred / rec.scale(j);
    }
    return {out, rec};
}

/// Coefficients on the raw covariate scale from coefficients fitted on the
/// standardised scale (intercept first).
inline VectorXd back_transform(const VectorXd& beta_std, const StandardizationRecord& rec) {
    VectorXd raw = beta_std;
    for (Eigen::Index j = 0; j < rec.scale.size(); ++j) {
        raw(j + 1) = beta_std(j + 1) / rec.scale(j);
        raw(0) -= raw(j + 1) * rec.mean(j);
    }
    return raw;
}

/// Internal standardisation: e = n · ΣO / Σn.
inline VectorXd expected_counts(const VectorXd& observed, const VectorXd& population) {
    if (observed.size() != population.size()) throw ValidationError("observed and population lengths differ");
    for (Eigen::Index i = 0; i < population.size(); ++i)
        if (!(population(i) > 0.0)) throw ValidationError("population cell " + std::to_string(i + 1) + " is not positive");
    const double rate = observed.sum() / population.sum();
    return population * rate;
}

/// Validates and assembles a dataset; covariates are standardised here.
inline Dataset make_dataset(int areas, int periods, VectorXd observed, VectorXd expected, const MatrixXd& raw_covariates,
                            std::vector<std::string> names = {}) {
    if (areas < 1 || periods < 1) throw ValidationError("dataset needs positive S and T");
    const Eigen::Index n = static_cast<Eigen::Index>(areas) * periods;
    if (observed.size() != n || expected.size() != n || raw_covariates.rows() != n)
        throw ValidationError("dataset columns must all have S·T = " + std::to_string(n) + " entries");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(observed(i) >= 0.0) || observed(i) != std::floor(observed(i)))
            throw ValidationError("observed count in row " + std::to_string(i + 1) + " is not a nonnegative integer");
        if (!(expected(i) > 0.0) || !std::isfinite(expected(i)))
            throw ValidationError("expected count in row " + std::to_string(i + 1) + " is not positive");
    }
    Dataset d;
    d.areas = areas;
    d.periods = periods;
    d.observed = std::move(observed);
    d.expected = std::move(expected);
    if (raw_covariates.cols() > 0) {
        auto [std_x, rec] = standardize_covariates(raw_covariates);
        d.covariates = std::move(std_x);
        d.standardization = std::move(rec);
    } else {
        d.covariates.resize(n, 0);
    }
    if (names.empty())
        for (Eigen::Index j = 0; j < raw_covariates.cols(); ++j) names.push_back("x" + std::to_string(j + 1));
    if (static_cast<Eigen::Index>(names.size()) != raw_covariates.cols())
        throw ValidationError("covariate name count does not match the covariate columns");
    d.covariate_names = std::move(names);
    return d;
}

enum class Variant { ST1, ST2, ST3, ST4 };
enum class BlockKind { spatial, temporal, interaction };

inline std::string to_string(Variant v) {
    switch (v) {
        case Variant::ST1: return "st1";
        case Variant::ST2: return "st2";
        case Variant::ST3: return "st3";
        case Variant::ST4: return "st4";
    }
    return "?";
}

inline Variant parse_variant(const std::string& s) {
    std::string l;
    for (char c : s) l += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (l == "st1") return Variant::ST1;
    if (l == "st2") return Variant::ST2;
    if (l == "st3") return Variant::ST3;
    if (l == "st4") return Variant::ST4;
    throw ValidationError("unknown model variant '" + s + "' (expected st1|st2|st3|st4)");
}

inline std::string to_string(BlockKind k) {
    switch (k) {
        case BlockKind::spatial: return "spatial";
        case BlockKind::temporal: return "temporal";
        case BlockKind::interaction: return "interaction";
    }
    return "?";
}

inline BlockKind parse_block(const std::string& s) {
    if (s == "spatial") return BlockKind::spatial;
    if (s == "temporal") return BlockKind::temporal;
    if (s == "interaction") return BlockKind::interaction;
    throw ValidationError("unknown random-effect block '" + s + "' (expected spatial|temporal|interaction)");
}

enum class WeightSource { from_st2_fit, user_supplied };

struct ModelSpec {
    Variant variant = Variant::ST2;
    std::set<BlockKind> restrict_blocks{BlockKind::spatial, BlockKind::temporal, BlockKind::interaction};
    WeightSource weight_source = WeightSource::from_st2_fit;

    void validate() const {
        if (variant == Variant::ST3 && restrict_blocks.empty())
            throw ValidationError("ST3 needs at least one restricted block");
    }
};

/// ICAR, RW1 and interaction spectra for one map and period count. With a
/// single period only the spatial spectrum exists.
struct ModelStructures {
    PrecisionSpectrum spatial;
    std::optional<PrecisionSpectrum> temporal;
    std::optional<PrecisionSpectrum> interaction;

    static ModelStructures build(const SpatialGraph& graph, int periods) {
        ModelStructures m;
        m.spatial = spectral_split(build_spatial_precision(graph));
        if (periods >= 2) {
            m.temporal = spectral_split(build_rw1_precision(periods));
            m.interaction = interaction_eigenstructure(m.spatial, *m.temporal);
        }
        return m;
    }
};

/// One Gaussian random-effect block u ~ N(0, σ²·C) entering the linear
/// predictor as Z·u.
struct RandomBlock {
    BlockKind kind = BlockKind::spatial;
    MatrixXd Z;
    MatrixXd C;            ///< unit-variance covariance
    MatrixXd C_factor;     ///< C = C_factor · C_factorᵀ
    MatrixXd to_original;  ///< maps u to the ξ/γ/δ scale
    std::optional<MatrixXd> constraints;
    bool restricted = false;

    std::string label() const { return to_string(kind); }
    MatrixXd factor() const { return Z * C_factor; }
};

struct DesignBundle {
    Variant variant = Variant::ST1;
    int areas = 0;
    int periods = 0;
    MatrixXd X_star;
    std::vector<RandomBlock> blocks;
    std::optional<VectorXd> projector_weights;  ///< frozen Ŵ for ST3/ST4
    std::optional<WeightedProjector> projector;
    std::optional<ConstraintSet> constraint_set;

    Eigen::Index size() const { return X_star.rows(); }
    Eigen::Index random_dim() const {
        Eigen::Index q = 0;
        for (const auto& b : blocks) q += b.Z.cols();
        return q;
    }
    const RandomBlock* find(BlockKind k) const {
        for (const auto& b : blocks)
            if (b.kind == k) return &b;
        return nullptr;
    }
};

namespace detail {

inline MatrixXd spatial_effect_design(int areas, int periods) {
    return kron(MatrixXd(ones_column(periods)), MatrixXd(MatrixXd::Identity(areas, areas)));
}
inline MatrixXd temporal_effect_design(int areas, int periods) {
    return kron(MatrixXd(MatrixXd::Identity(periods, periods)), MatrixXd(ones_column(areas)));
}

inline RandomBlock reparameterised_block(BlockKind kind, const MatrixXd& effect_design, const PrecisionSpectrum& spec) {
    RandomBlock b;
    b.kind = kind;
    b.to_original = spec.U_range;
    b.Z = effect_design * spec.U_range;
    const VectorXd var = spec.eigvals_range.cwiseInverse();
    b.C = var.asDiagonal();
    b.C_factor = var.cwiseSqrt().asDiagonal();
    return b;
}

inline RandomBlock constrained_block(BlockKind kind, const MatrixXd& effect_design, const PrecisionSpectrum& spec,
                                     const MatrixXd& constraints) {
    RandomBlock b;
    b.kind = kind;
    b.Z = effect_design;
    auto cc = constrained_covariance(spec.Q, constraints);
    b.C = std::move(cc.V);
    b.C_factor = std::move(cc.factor);
    b.to_original = MatrixXd::Identity(spec.dim(), spec.dim());
    b.constraints = constraints;
    return b;
}

}  // namespace detail

/// Assembles the fixed design and random-effect blocks of a model variant.
/// ST3 and ST4 need the frozen weights Ŵ (normally the fitted means of ST2).
inline DesignBundle build_design(const ModelSpec& spec, const Dataset& data, const ModelStructures& st,
                                 const std::optional<VectorXd>& weights = std::nullopt) {
    spec.validate();
    const int s = data.areas, t = data.periods;
    const Eigen::Index n = data.size();
    if (st.spatial.dim() != s) throw ValidationError("spatial structure has " + std::to_string(st.spatial.dim()) +
                                                     " areas but the dataset has " + std::to_string(s));
    if (t >= 2 && (!st.temporal || st.temporal->dim() != t))
        throw ValidationError("temporal structure does not match the dataset's " + std::to_string(t) + " periods");

    DesignBundle b;
    b.variant = spec.variant;
    b.areas = s;
    b.periods = t;
    b.X_star.resize(n, data.n_covariates() + 1);
    b.X_star << VectorXd::Ones(n), data.covariates;
    if (spec.variant == Variant::ST1) return b;

    const bool temporal = t >= 2;
    const MatrixXd zs = detail::spatial_effect_design(s, t);
    const MatrixXd zt = detail::temporal_effect_design(s, t);

    if (spec.variant == Variant::ST2 || spec.variant == Variant::ST3) {
        b.blocks.push_back(detail::reparameterised_block(BlockKind::spatial, zs, st.spatial));
        if (temporal) {
            b.blocks.push_back(detail::reparameterised_block(BlockKind::temporal, zt, *st.temporal));
            b.blocks.push_back(detail::reparameterised_block(
                BlockKind::interaction, MatrixXd::Identity(n, n), *st.interaction));
        }
    }

    if (spec.variant == Variant::ST3 || spec.variant == Variant::ST4) {
        if (!weights) throw ValidationError(to_string(spec.variant) + " needs frozen weights (fit ST2 first or supply them)");
        if (weights->size() != n) throw ValidationError("weight vector must have S·T entries");
        b.projector_weights = *weights;
    }

    if (spec.variant == Variant::ST3) {
        b.projector = weighted_projector(data.covariates, *weights);
        for (auto& blk : b.blocks) {
            if (!spec.restrict_blocks.count(blk.kind)) continue;
            blk.Z = b.projector->restrict(blk.Z);
            blk.restricted = true;
        }
    }

    if (spec.variant == Variant::ST4) {
        b.constraint_set = constraint_matrices(data.covariates, *weights, s, t);
        b.blocks.push_back(detail::constrained_block(BlockKind::spatial, zs, st.spatial, b.constraint_set->B_spatial));
        if (temporal) {
            b.blocks.push_back(
                detail::constrained_block(BlockKind::temporal, zt, *st.temporal, b.constraint_set->B_temporal));
            b.blocks.push_back(detail::constrained_block(BlockKind::interaction, MatrixXd::Identity(n, n),
                                                         *st.interaction, b.constraint_set->B_interaction));
        }
    }
    return b;
}

/// Variant of build_design for ST4 with an explicit choice of the dropped
/// interaction row.
inline DesignBundle build_constrained_design(const Dataset& data, const ModelStructures& st, const VectorXd& weights,
                                             RedundantRow drop) {
    ModelSpec spec;
    spec.variant = Variant::ST4;
    DesignBundle b = build_design(spec, data, st, weights);
    if (data.periods >= 2 && drop != RedundantRow::last_temporal) {
        b.constraint_set = constraint_matrices(data.covariates, weights, data.areas, data.periods, drop);
        for (auto& blk : b.blocks)
            if (blk.kind == BlockKind::interaction)
                blk = detail::constrained_block(BlockKind::interaction, blk.Z, *st.interaction,
                                                b.constraint_set->B_interaction);
    }
    return b;
}

}  // namespace stconfound
