#include "support.hpp"

#include "reprompt/deferral.hpp"
#include "reprompt/error.hpp"
#include "reprompt/policy.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace reprompt;
using reprompt::testing::constant_clip;

namespace {

// Row of `on` foreground pixels starting at x0 on a 20 x 1 frame.
Mask row(int x0, int on)
{
    Mask m(20, 1);
    for (int x = x0; x < x0 + on; ++x) m.set(x, 0, true);
    return m;
}

// Direct evaluation of the surrogate from its definition.
double surrogate_oracle(const Eigen::VectorXd& d, double wprop, const Eigen::VectorXd& wcorr)
{
    double z = 1.0;
    for (Eigen::Index k = 0; k < d.size(); ++k) z += std::exp(-d(k));
    double loss = wprop * (1.0 - 1.0 / z);
    for (Eigen::Index k = 0; k < d.size(); ++k) loss += wcorr(k) * (1.0 - std::exp(-d(k)) / z);
    return loss;
}

ComplementWeights weights(double prop, std::initializer_list<double> corr)
{
    ComplementWeights w;
    w.prop = prop;
    w.corr.resize(static_cast<Eigen::Index>(corr.size()));
    Eigen::Index i = 0;
    for (double c : corr) w.corr(i++) = c;
    return w;
}

} // namespace

TEST(SegmentationError, PerfectPredictionIsZero)
{
    const Clip c = generate_clip(ClipConfig{}, 1);
    PropagationResult r;
    r.pred_masks = c.gt_masks;
    EXPECT_DOUBLE_EQ(segmentation_error(r, c), 0.0);
}

TEST(SegmentationError, DisjointPredictionIsOne)
{
    const Clip c = generate_clip(ClipConfig{}, 1);
    PropagationResult r;
    for (const Mask& m : c.gt_masks) r.pred_masks.push_back(complement(m));
    EXPECT_DOUBLE_EQ(segmentation_error(r, c), 1.0);
}

TEST(SegmentationError, MeanOverFrames)
{
    Clip c = constant_clip(row(0, 10), 2);
    PropagationResult r;
    r.pred_masks = {row(2, 10), row(4, 10)};
    EXPECT_DOUBLE_EQ(dice(r.pred_masks[0], c.gt_masks[0]), 0.8);
    EXPECT_DOUBLE_EQ(dice(r.pred_masks[1], c.gt_masks[1]), 0.6);
    EXPECT_NEAR(segmentation_error(r, c), 0.3, 1e-15);
}

TEST(SegmentationError, FrameCountMismatchThrows)
{
    const Clip c = constant_clip(row(0, 10), 3);
    PropagationResult r;
    r.pred_masks = {row(0, 10)};
    EXPECT_THROW(segmentation_error(r, c), Error);
}

TEST(CostTable, PricesFromErrors)
{
    CostSpec spec;
    spec.lambda_corr = 0.01;
    Eigen::VectorXd ell(1);
    ell << 0.20;
    const CostTable t = make_cost_table({30}, 0.30, ell, spec);
    EXPECT_DOUBLE_EQ(t.c_prop, 0.30);
    EXPECT_NEAR(t.c_corr(0), 0.21, 1e-15);
    EXPECT_DOUBLE_EQ(deferral_loss(0, t), 0.30);
    EXPECT_NEAR(deferral_loss(30, t), 0.21, 1e-15);
    EXPECT_THROW(deferral_loss(31, t), Error);
}

TEST(CostTable, BasePriceAddsToEveryOption)
{
    CostSpec spec{0.05, 0.02};
    Eigen::VectorXd ell(2);
    ell << 0.1, 0.4;
    const CostTable t = make_cost_table({6, 12}, 0.3, ell, spec);
    EXPECT_DOUBLE_EQ(t.c_prop, 0.35);
    EXPECT_NEAR(t.c_corr(0), 0.17, 1e-15);
    EXPECT_NEAR(t.c_corr(1), 0.47, 1e-15);
}

TEST(CostTable, RepriceKeepsErrors)
{
    Eigen::VectorXd ell(3);
    ell << 0.1, 0.2, 0.05;
    const CostTable a = make_cost_table({6, 12, 18}, 0.3, ell, CostSpec{0.0, 0.01});
    const CostTable b = reprice(a, CostSpec{0.0, 0.5});
    EXPECT_EQ(b.ell_0k, a.ell_0k);
    EXPECT_DOUBLE_EQ(b.ell_0, a.ell_0);
    EXPECT_NEAR(b.c_corr(2), 0.55, 1e-15);
}

TEST(CostTable, RejectsNegativePrices)
{
    Eigen::VectorXd ell(1);
    ell << 0.1;
    EXPECT_THROW(make_cost_table({5}, 0.2, ell, CostSpec{0.0, -1.0}), Error);
}

TEST(CostTable, FreeCorrectionOnAnAlreadyGoodClipChangesLittle)
{
    PromptDynamics dyn = reprompt::testing::frame_distance_dynamics(0.0);
    dyn.mask = {0.99, 0.98, 0.04, 0.0};
    const Clip c = generate_clip(reprompt::testing::static_config(), 12);
    const std::vector<int> candidates{30};
    const CostTable t = build_cost_table(c, PromptKind::mask, candidates, CostSpec{0.0, 0.0}, dyn, 1);
    EXPECT_NEAR(t.c_corr(0), t.c_prop, 0.03);
}

TEST(CostTable, CorrectionsNeverHurtWithoutNoise)
{
    PromptDynamics dyn;
    for (PromptKind k : kAllPromptKinds) dyn.of(k).sigma = 0.0;
    const auto candidates = candidate_frames(sample_frames(60, 10));
    for (std::uint64_t s = 0; s < 6; ++s) {
        const Clip c = generate_clip(ClipConfig{}, s);
        const CostTable t = build_cost_table(c, PromptKind::mask, candidates, CostSpec{}, dyn, 3);
        EXPECT_LE(t.ell_0k.minCoeff(), t.ell_0);
        for (Eigen::Index k = 0; k < t.size(); ++k) EXPECT_LE(t.ell_0k(k), t.ell_0 + 0.01);
    }
}

TEST(CostTable, CsvRows)
{
    Eigen::VectorXd ell(2);
    ell << 0.25, 0.5;
    const CostTable t = make_cost_table({6, 12}, 0.5, ell, CostSpec{});
    std::ostringstream os;
    write_cost_csv(os, "clip-0001", t);
    EXPECT_EQ(os.str(), "clip-0001,6,0.5,0.25,0.5,0.26000000000000001\n"
                        "clip-0001,12,0.5,0.5,0.5,0.51000000000000001\n");
}

TEST(Complement, ClampsToUnitInterval)
{
    Eigen::VectorXd ell(3);
    ell << 1.0, 0.0, 0.5;
    CostTable t = make_cost_table({1, 2, 3}, 0.30, ell, CostSpec{0.0, 0.05});
    EXPECT_NEAR(t.c_corr(0), 1.05, 1e-15);
    const ComplementWeights w = complement_costs(t);
    EXPECT_NEAR(w.prop, 0.70, 1e-15);
    EXPECT_DOUBLE_EQ(w.corr(0), 0.0);
    EXPECT_NEAR(w.corr(1), 0.95, 1e-15);

    Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
    const ComplementWeights all = complement_costs(make_cost_table({1, 2}, 0.0, zero, CostSpec{0.0, 0.0}));
    EXPECT_DOUBLE_EQ(all.prop, 1.0);
    EXPECT_TRUE((all.corr.array() == 1.0).all());
}

TEST(Surrogate, SymmetricPointEqualsK)
{
    const Eigen::VectorXd d = Eigen::VectorXd::Zero(2);
    EXPECT_NEAR(surrogate_mae(d, weights(1, {1, 1})), 2.0, 1e-15);
}

TEST(Surrogate, HandEvaluatedSingleCandidate)
{
    const Eigen::VectorXd d = Eigen::VectorXd::Zero(1);
    EXPECT_NEAR(surrogate_mae(d, weights(0.7, {0.79})), 0.745, 1e-15);
}

TEST(Surrogate, AllMassOnDeferralLeavesPropWeight)
{
    Eigen::VectorXd d(1);
    d << -60.0;
    EXPECT_NEAR(surrogate_mae(d, weights(0.4, {0.9})), 0.4, 1e-12);
}

TEST(Surrogate, BracketSumIsK)
{
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 3.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const int K = 1 + trial % 12;
        Eigen::VectorXd d(K);
        for (int k = 0; k < K; ++k) d(k) = n(rng);
        const Eigen::VectorXd p = option_probabilities(d);
        EXPECT_NEAR((1.0 - p.array()).sum(), K, 1e-12);
    }
}

TEST(Surrogate, MatchesDirectFormula)
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        const int K = 1 + trial % 9;
        Eigen::VectorXd d(K), w(K);
        for (int k = 0; k < K; ++k) {
            d(k) = n(rng);
            w(k) = u(rng);
        }
        const double wp = u(rng);
        EXPECT_NEAR(surrogate_mae(d, ComplementWeights{wp, w}), surrogate_oracle(d, wp, w), 1e-12);
    }
}

TEST(Surrogate, StableForExtremeScores)
{
    Eigen::VectorXd d(3);
    d << -800.0, 700.0, 0.0;
    const double loss = surrogate_mae(d, weights(0.5, {0.2, 0.9, 0.3}));
    EXPECT_TRUE(std::isfinite(loss));
    EXPECT_NEAR(loss, 0.5 + 0.9 + 0.3, 1e-12);
}

TEST(Surrogate, LengthMismatchThrows)
{
    const Eigen::VectorXd d = Eigen::VectorXd::Zero(2);
    EXPECT_THROW(surrogate_mae(d, weights(1, {1})), DimensionMismatch);
    EXPECT_THROW(surrogate_grad(d, weights(1, {1})), DimensionMismatch);
}

TEST(SurrogateGrad, EqualPartialsAtTheSymmetricPoint)
{
    const Eigen::VectorXd d = Eigen::VectorXd::Constant(4, 0.3);
    const Eigen::VectorXd g = surrogate_grad(d, weights(0.6, {0.6, 0.6, 0.6, 0.6}));
    for (int k = 1; k < 4; ++k) EXPECT_DOUBLE_EQ(g(k), g(0));
}

TEST(SurrogateGrad, MatchesCentralDifferences)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.5);
    const double h = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
        const int K = 1 + trial % 10;
        Eigen::VectorXd d(K), w(K);
        for (int k = 0; k < K; ++k) {
            d(k) = n(rng);
            w(k) = u(rng);
        }
        const double wp = u(rng);
        const Eigen::VectorXd g = surrogate_grad(d, ComplementWeights{wp, w});
        for (int k = 0; k < K; ++k) {
            Eigen::VectorXd up = d, dn = d;
            up(k) += h;
            dn(k) -= h;
            const double fd = (surrogate_oracle(up, wp, w) - surrogate_oracle(dn, wp, w)) / (2 * h);
            EXPECT_LE(std::abs(g(k) - fd), 1e-6 * std::max(std::abs(fd), 1e-3)) << trial << " " << k;
        }
    }
}

TEST(SurrogateGrad, SingleCandidateClosedForm)
{
    for (double d1 : {-3.0, -0.5, 0.0, 0.7, 4.0}) {
        Eigen::VectorXd d(1);
        d << d1;
        const double p1 = std::exp(-d1) / (1.0 + std::exp(-d1));
        const double g = surrogate_grad(d, weights(0.0, {1.0}))(0);
        EXPECT_NEAR(g, p1 - p1 * p1, 1e-14);
        EXPECT_GT(g, 0.0);
    }
}

TEST(Decide, AllPositiveKeepsPropagation)
{
    Eigen::VectorXd d(3);
    d << 0.5, 0.2, 0.9;
    const std::vector<int> c{10, 20, 30};
    EXPECT_EQ(decide(d, std::span<const int>(c)), 0);
}

TEST(Decide, ArgminWhenSomeScoreIsNonPositive)
{
    Eigen::VectorXd d(3);
    d << 0.5, -0.2, 0.3;
    const std::vector<int> c{10, 20, 30};
    EXPECT_EQ(decide(d, std::span<const int>(c)), 20);
}

TEST(Decide, TiesGoToTheEarlierCandidate)
{
    Eigen::VectorXd d(2);
    d << -0.1, -0.1;
    const std::vector<int> c{10, 20};
    EXPECT_EQ(decide(d, std::span<const int>(c)), 10);
}

TEST(Decide, ZeroScoreDefers)
{
    Eigen::VectorXd d(2);
    d << 0.4, 0.0;
    const std::vector<int> c{10, 20};
    EXPECT_EQ(decide(d, std::span<const int>(c)), 20);
}

TEST(Decide, RejectsNonFiniteAndMismatchedInput)
{
    Eigen::VectorXd d(2);
    d << 0.1, std::nan("");
    const std::vector<int> c{10, 20}, one{10};
    EXPECT_THROW(decide(d, std::span<const int>(c)), Error);
    EXPECT_THROW(decide(Eigen::VectorXd::Zero(2), std::span<const int>(one)), DimensionMismatch);
}

TEST(Surrogate, GradientDescentRecoversTheCheapestOption)
{
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int checked = 0;
    for (int trial = 0; trial < 200 && checked < 60; ++trial) {
        const int K = 1 + trial % 6;
        std::vector<int> cand(K);
        Eigen::VectorXd ell(K);
        for (int k = 0; k < K; ++k) {
            cand[k] = 5 * (k + 1);
            ell(k) = u(rng);
        }
        const CostTable t = make_cost_table(cand, u(rng), ell, CostSpec{0.0, 0.1 * u(rng)});
        Eigen::VectorXd all(K + 1);
        all << t.c_prop, t.c_corr;
        Eigen::Index best;
        all.minCoeff(&best);
        Eigen::VectorXd sorted = all;
        std::sort(sorted.data(), sorted.data() + sorted.size());
        if (sorted.size() > 1 && sorted(1) - sorted(0) < 0.05) continue;
        ++checked;

        const ComplementWeights w = complement_costs(t);
        Eigen::VectorXd d = Eigen::VectorXd::Zero(K);
        // Large steps can land on the flat region near a worse option.
        for (int step = 0; step < 200000; ++step) d -= 0.5 * surrogate_grad(d, w);
        const int oracle = best == 0 ? 0 : cand[static_cast<std::size_t>(best - 1)];
        EXPECT_EQ(decide(d, std::span<const int>(cand)), oracle) << "trial " << trial;
    }
    EXPECT_GE(checked, 40);
}
