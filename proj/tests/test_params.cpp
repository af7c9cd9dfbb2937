#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "fedpake/checkpoint.hpp"
#include "fedpake/params.hpp"
#include "support/instances.hpp"

using namespace fedpake;

namespace {

LayerMatrix lm(const std::vector<Vector>& rows) {
    std::vector<ClientId> ids(rows.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<ClientId>(i);
    return LayerMatrix::from_rows(ids, rows);
}

ModelParams sample_model() {
    return ModelParams{{LayerTensor{"fc.weight", {2, 2}, {1.0, -2.5, 1.0 / 3.0, 1e-300}},
                        LayerTensor{"fc.bias", {2}, {0.1, -0.0}}}};
}

}  // namespace

TEST(ColumnMean, HandComputedValues) {
    EXPECT_EQ(column_mean(lm({{1, 2}, {3, 4}})), (Vector{2, 3}));
    EXPECT_EQ(column_mean(lm({{5, 5}})), (Vector{5, 5}));
    EXPECT_EQ(column_mean(lm({{-1, 0}, {1, 0}})), (Vector{0, 0}));
}

TEST(ColumnMean, EmptyClientSetIsAnError) {
    LayerMatrix empty;
    EXPECT_THROW(column_mean(empty), Error);
    try {
        column_mean(empty);
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "empty client set");
    }
}

TEST(ColumnMean, MatchesPerColumnLoopOracle) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t k = 1 + rng() % 7, m = 1 + rng() % 13;
        auto inst = testing_support::random_instance(rng, k, m);
        const Vector mean = column_mean(inst.matrix());
        for (std::size_t c = 0; c < m; ++c) {
            double s = 0.0;
            for (std::size_t r = 0; r < k; ++r) s += inst.rows[r][c];
            EXPECT_NEAR(mean[c], s / static_cast<double>(k), 1e-12);
        }
    }
}

TEST(ColumnMean, IdenticalRowsReproducedExactly) {
    const Vector row{0.1, 1.0 / 3.0, -7.25, 1e-17};
    EXPECT_EQ(column_mean(lm({row, row, row})), row);
}

TEST(CoefficientOfVariation, Examples) {
    const Vector cv = coefficient_of_variation(lm({{1}, {2}, {3}}));
    EXPECT_NEAR(cv[0], std::sqrt(2.0 / 3.0) / (2.0 + 1e-12), 1e-15);
    EXPECT_NEAR(cv[0], 0.40825, 1e-5);

    for (double c : {-4.0, 0.0, 2.5}) EXPECT_EQ(coefficient_of_variation(lm({{c}, {c}, {c}}))[0], 0.0);

    const double a = 0.5;
    const double guarded = coefficient_of_variation(lm({{a}, {-a}}))[0];
    EXPECT_TRUE(std::isfinite(guarded));
    EXPECT_DOUBLE_EQ(guarded, a / kCvEpsilon);
}

TEST(CoefficientOfVariation, NegativeMeanStaysNonNegative) {
    const Vector cv = coefficient_of_variation(lm({{-1}, {-2}, {-3}}));
    EXPECT_NEAR(cv[0], std::sqrt(2.0 / 3.0) / 2.0, 1e-12);
}

TEST(CoefficientOfVariation, InvariantUnderRowPermutation) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        auto inst = testing_support::random_instance(rng, 2 + rng() % 5, 1 + rng() % 10);
        const Vector before = coefficient_of_variation(inst.matrix());
        std::shuffle(inst.rows.begin(), inst.rows.end(), rng);
        const Vector after = coefficient_of_variation(inst.matrix());
        for (std::size_t m = 0; m < before.size(); ++m)
            EXPECT_NEAR(before[m], after[m], 1e-12 * std::max(1.0, std::abs(before[m])));
    }
}

TEST(NormalizeCv, Examples) {
    EXPECT_EQ(normalize_cv(Vector{0, 0.5, 1}), (Vector{0, 0.5, 1}));
    EXPECT_EQ(normalize_cv(Vector{2, 4}), (Vector{0, 1}));
    EXPECT_EQ(normalize_cv(Vector{3, 3, 3}), (Vector{0, 0, 0}));
}

TEST(NormalizeCv, RangeAndExtremaPreserved) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-5, 50);
    for (int trial = 0; trial < 200; ++trial) {
        Vector cv(2 + rng() % 20);
        for (double& v : cv) v = u(rng);
        const Vector n = normalize_cv(cv);
        for (double v : n) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
        EXPECT_EQ(std::max_element(n.begin(), n.end()) - n.begin(), std::max_element(cv.begin(), cv.end()) - cv.begin());
        EXPECT_EQ(std::min_element(n.begin(), n.end()) - n.begin(), std::min_element(cv.begin(), cv.end()) - cv.begin());
    }
}

TEST(SquaredDeviation, Examples) {
    EXPECT_EQ(squared_deviation(lm({{1, 2}, {3, 4}})), Matrix::from_rows({{1, 1}, {1, 1}}));
    EXPECT_EQ(squared_deviation(lm({{0}, {2}})), Matrix::from_rows({{1}, {1}}));
    EXPECT_EQ(squared_deviation(lm({{0.3, -1}, {0.3, -1}})), Matrix(2, 2, 0.0));
}

TEST(SquaredDeviation, ZeroEverywhereIffRowsIdentical) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        auto inst = testing_support::random_instance(rng, 1 + rng() % 6, 1 + rng() % 8);
        if (trial % 2 == 0)
            for (auto& r : inst.rows) r = inst.rows.front();
        const bool identical = std::all_of(inst.rows.begin(), inst.rows.end(), [&](const auto& r) { return r == inst.rows.front(); });
        const Matrix sd = squared_deviation(inst.matrix());
        const bool all_zero = std::all_of(sd.values().begin(), sd.values().end(), [](double v) { return v == 0.0; });
        EXPECT_EQ(identical, all_zero);
        for (double v : sd.values()) EXPECT_GE(v, 0.0);
    }
}

TEST(Flatten, RowMajorAndRoundTrip) {
    const ModelParams m = sample_model();
    const auto flat = flatten_model(m);
    ASSERT_EQ(flat.size(), 2u);
    EXPECT_EQ(flat[0], (Vector{1.0, -2.5, 1.0 / 3.0, 1e-300}));
    EXPECT_EQ(unflatten_model(flat, m), m);
}

TEST(Flatten, LengthMismatchNamesTheLayer) {
    auto flat = flatten_model(sample_model());
    flat[1].push_back(1.0);
    try {
        unflatten_model(flat, sample_model());
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("fc.bias"), std::string::npos);
    }
}

TEST(ModelParams, ValidationRejectsBadTensors) {
    ModelParams dup{{LayerTensor{"a", {1}, {0}}, LayerTensor{"a", {1}, {0}}}};
    EXPECT_THROW(dup.validate(), Error);
    ModelParams nan{{LayerTensor{"a", {1}, {std::nan("")}}}};
    EXPECT_THROW(nan.validate(), Error);
    ModelParams wrong{{LayerTensor{"a", {2, 2}, {0, 0, 0}}}};
    EXPECT_THROW(wrong.validate(), Error);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    ModelParams m{{LayerTensor{"dense0.weight", {3, 5}, Vector(15)}, LayerTensor{"dense0.bias", {3}, Vector(3)}}};
    for (auto& l : m.layers)
        for (double& v : l.values) v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    std::stringstream ss;
    write_checkpoint(ss, m);
    EXPECT_EQ(read_checkpoint(ss), m);
}

TEST(Checkpoint, DocumentedLayout) {
    std::stringstream ss;
    write_checkpoint(ss, ModelParams{{LayerTensor{"w", {1, 2}, {0.5, -1.0 / 3.0}}}});
    EXPECT_EQ(ss.str(), "fedpake-checkpoint 1\nlayers 1\nlayer w 2 1 2\n0.5\n-0.33333333333333331\n");
}

TEST(Checkpoint, TruncatedInputIsRejected) {
    std::stringstream ss("fedpake-checkpoint 1\nlayers 1\nlayer w 1 3\n1\n2\n");
    EXPECT_THROW(read_checkpoint(ss), Error);
    std::stringstream bad("fedpake-checkpoint 1\nlayers 1\nlayer w 1 1\nabc\n");
    EXPECT_THROW(read_checkpoint(bad), Error);
}
