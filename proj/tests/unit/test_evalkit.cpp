#include "support.hpp"

#include "reprompt/error.hpp"
#include "reprompt/evalkit.hpp"
#include "reprompt/random.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

using namespace reprompt;
using namespace reprompt::testing;

namespace {

// Two-sided exact p by listing all 2^n sign assignments of the midranks.
double enumerated_p(const std::vector<double>& diffs)
{
    std::vector<double> nz;
    for (double d : diffs) {
        if (d != 0.0) nz.push_back(d);
    }
    const std::size_t n = nz.size();
    if (n == 0) return 1.0;
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n; ++i) {
        int below = 0, equal = 0;
        for (std::size_t j = 0; j < n; ++j) {
            below += std::abs(nz[j]) < std::abs(nz[i]);
            equal += std::abs(nz[j]) == std::abs(nz[i]);
        }
        rank[i] = below + (equal + 1) / 2.0;
    }
    double observed = 0;
    for (std::size_t i = 0; i < n; ++i) observed += nz[i] > 0 ? rank[i] : 0.0;
    std::uint64_t le = 0, ge = 0;
    for (std::uint64_t mask = 0; mask < (1ull << n); ++mask) {
        double w = 0;
        for (std::size_t i = 0; i < n; ++i) w += (mask >> i) & 1 ? rank[i] : 0.0;
        le += w <= observed + 1e-9;
        ge += w >= observed - 1e-9;
    }
    return std::min(1.0, 2.0 * static_cast<double>(std::min(le, ge)) / std::ldexp(1.0, static_cast<int>(n)));
}

std::vector<Clip> small_clips(int n, std::uint64_t seed)
{
    ClipConfig cfg;
    cfg.frame_count = 30;
    cfg.width = 40;
    cfg.height = 40;
    return generate_dataset(cfg, n, seed);
}

} // namespace

TEST(ParallelFor, VisitsEveryIndexOnce)
{
    for (int threads : {1, 2, 3, 8}) {
        std::vector<std::atomic<int>> hits(37);
        parallel_for(37, threads, [&](int i) { ++hits[i]; });
        for (auto& h : hits) EXPECT_EQ(h.load(), 1);
    }
}

TEST(ParallelFor, PropagatesExceptions)
{
    EXPECT_THROW(parallel_for(10, 4, [](int i) { if (i == 7) throw Error("boom"); }), Error);
}

TEST(BuildCases, IndependentOfThreadCount)
{
    const auto clips = small_clips(6, 1);
    const auto frames = sample_frames(30, 6);
    const auto a = build_cases(clips, PromptKind::box, frames, CostSpec{}, PromptDynamics{}, 5, 1);
    const auto b = build_cases(clips, PromptKind::box, frames, CostSpec{}, PromptDynamics{}, 5, 8);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].clip_id, b[i].clip_id);
        EXPECT_EQ(a[i].table.ell_0k, b[i].table.ell_0k);
        EXPECT_EQ(a[i].features.values, b[i].features.values);
        EXPECT_EQ(a[i].initial_dice, b[i].initial_dice);
    }
}

TEST(BuildCases, TableAgreesWithDirectPropagation)
{
    const auto clips = small_clips(2, 2);
    const auto frames = sample_frames(30, 6);
    const auto cand = candidate_frames(frames);
    const ClipCase c = build_case(clips[1], PromptKind::mask, frames, CostSpec{}, PromptDynamics{}, 4);
    const std::vector<int> both{0, cand[2]};
    const auto r = propagate(clips[1], both, PromptKind::mask, PromptDynamics{}, 4);
    EXPECT_DOUBLE_EQ(c.table.ell_0k(2), segmentation_error(r, clips[1]));
    double mean = 0;
    for (double d : c.initial_dice) mean += d;
    EXPECT_NEAR(1.0 - mean / c.initial_dice.size(), c.table.ell_0, 1e-12);
}

TEST(Evaluate, RatesAndOracleBound)
{
    const auto clips = small_clips(10, 3);
    const auto frames = sample_frames(30, 6);
    const CostSpec spec{0.0, 0.02};
    const auto cases = build_cases(clips, PromptKind::mask, frames, spec, PromptDynamics{}, 6);
    std::vector<EvalReport> reports;
    for (StrategyKind k : {StrategyKind::initial, StrategyKind::midpoint, StrategyKind::random, StrategyKind::oracle}) {
        reports.push_back(evaluate(cases, Strategy::make(k), PromptKind::mask, spec, 9));
    }
    EXPECT_DOUBLE_EQ(reports[0].deferral_rate, 0.0);
    EXPECT_DOUBLE_EQ(reports[1].deferral_rate, 1.0);
    for (const EvalReport& r : reports) EXPECT_LE(reports[3].mean_deferral_loss, r.mean_deferral_loss);
    for (std::size_t i = 0; i < cases.size(); ++i) {
        EXPECT_DOUBLE_EQ(reports[0].final_dice[i], 1.0 - cases[i].table.ell_0);
        EXPECT_DOUBLE_EQ(reports[0].deferral_loss[i], cases[i].table.ell_0);
    }
    EXPECT_NEAR(reports[0].mean_dice, mean_of(reports[0].final_dice), 1e-15);
    EXPECT_NEAR(reports[0].std_dice, sample_std(reports[0].final_dice), 1e-15);
}

TEST(Stats, MeanAndSampleStd)
{
    const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
    EXPECT_DOUBLE_EQ(mean_of(v), 5.0);
    EXPECT_NEAR(sample_std(v), std::sqrt(32.0 / 7.0), 1e-15);
    EXPECT_DOUBLE_EQ(sample_std(std::vector<double>{3.0}), 0.0);
}

TEST(MovingAverage, WindowOneIsIdentity)
{
    const std::vector<double> v{0.3, 0.1, 0.8, 0.4};
    EXPECT_EQ(moving_average(v, 1), v);
}

TEST(MovingAverage, CenteredAndClippedAtTheEnds)
{
    Rng rng(1);
    std::vector<double> v(25);
    for (double& x : v) x = rng.uniform();
    for (int w : {2, 3, 4, 7, 20, 40}) {
        const auto s = moving_average(v, w);
        const int before = (w - 1) / 2, after = w - 1 - before;
        for (int i = 0; i < 25; ++i) {
            double sum = 0;
            int n = 0;
            for (int j = std::max(0, i - before); j <= std::min(24, i + after); ++j, ++n) sum += v[j];
            EXPECT_NEAR(s[i], sum / n, 1e-14) << w << " " << i;
        }
    }
}

TEST(ErrorCurve, MeansAndConfidenceBand)
{
    const std::vector<std::vector<double>> losses{{0.1, 0.2, 0.3}, {0.3, 0.2, 0.5}, {0.2, 0.5, 0.1}};
    const ErrorCurve c = error_curve(losses, 1);
    EXPECT_NEAR(c.raw[0], 0.2, 1e-15);
    EXPECT_NEAR(c.raw[1], 0.3, 1e-15);
    EXPECT_EQ(c.smoothed, c.raw);
    EXPECT_NEAR(c.ci_half_width[0], 1.96 * 0.1 / std::sqrt(3.0), 1e-12);
}

TEST(ErrorCurve, StaticClipsFollowTheFormula)
{
    std::vector<Clip> clips;
    for (std::uint64_t s = 0; s < 5; ++s) clips.push_back(generate_clip(static_config(), s));
    const ErrorCurve c = error_curve(clips, PromptKind::mask, frame_distance_dynamics(0.0), 2, 1, 2);
    for (std::size_t t = 0; t < c.raw.size(); ++t) {
        EXPECT_NEAR(c.raw[t], 1.0 - (0.45 + 0.5 * std::exp(-0.04 * double(t))), 0.02) << t;
    }
}

TEST(Wilcoxon, IdenticalSamples)
{
    const std::vector<double> a{0.1, 0.5, 0.3};
    const WilcoxonResult r = wilcoxon_signed_rank(a, a);
    EXPECT_DOUBLE_EQ(r.p_value, 1.0);
    EXPECT_EQ(r.n_effective, 0);
}

TEST(Wilcoxon, AllPositiveSmallSamples)
{
    const std::vector<double> a6{1.1, 2.3, 3.2, 4.6, 5.5, 6.1}, b6(6, 0.0);
    EXPECT_EQ(wilcoxon_signed_rank(a6, b6).p_value, 0.03125);
    EXPECT_EQ(wilcoxon_signed_rank(a6, b6).statistic, 21.0);
    const std::vector<double> a5{1, 2, 3, 4, 5}, b5(5, 0.0);
    EXPECT_EQ(wilcoxon_signed_rank(a5, b5).p_value, 0.0625);
}

TEST(Wilcoxon, MatchesSignEnumeration)
{
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + trial % 12;
        std::vector<double> a(n), b(n), d(n);
        for (int i = 0; i < n; ++i) {
            a[i] = std::round(rng.uniform() * 8) / 8;
            b[i] = std::round(rng.uniform() * 8) / 8;
            d[i] = a[i] - b[i];
        }
        EXPECT_EQ(wilcoxon_signed_rank(a, b).p_value, enumerated_p(d)) << "trial " << trial;
    }
}

TEST(Wilcoxon, NormalApproximationMatchesReference)
{
    const std::vector<double> d{0.02, 0.0,  0.07, -0.01, 0.06, 0.03,  0.04, 0.0,  0.06,
                                -0.02, 0.04, 0.06, 0.02,  0.07, -0.02, 0.05, 0.0,  0.05,
                                0.04, 0.0,  0.04, 0.05,  -0.01, 0.06, 0.05};
    const std::vector<double> zero(d.size(), 0.0);
    const WilcoxonResult r = wilcoxon_signed_rank(d, zero);
    EXPECT_EQ(r.n_effective, 21);
    EXPECT_DOUBLE_EQ(r.statistic, 219.0);
    EXPECT_NEAR(r.p_value, 0.00032884904480322415, 1e-12);
}

TEST(Wilcoxon, SymmetricInArgumentOrder)
{
    Rng rng(3);
    for (int n : {7, 15, 30}) {
        std::vector<double> a(n), b(n);
        for (int i = 0; i < n; ++i) {
            a[i] = rng.uniform();
            b[i] = rng.uniform();
        }
        EXPECT_NEAR(wilcoxon_signed_rank(a, b).p_value, wilcoxon_signed_rank(b, a).p_value, 1e-15);
    }
}

TEST(Wilcoxon, LengthMismatchThrows)
{
    EXPECT_THROW(wilcoxon_signed_rank(std::vector<double>{1, 2}, std::vector<double>{1}), DimensionMismatch);
}

TEST(LambdaSweep, SingleLambdaMatchesEvaluate)
{
    const auto clips = small_clips(24, 4);
    const auto frames = sample_frames(30, 6);
    const auto train_cases = build_cases(std::span(clips).first(16), PromptKind::mask, frames, CostSpec{},
                                         PromptDynamics{}, 1);
    const auto eval_cases = build_cases(std::span(clips).subspan(16), PromptKind::mask, frames, CostSpec{},
                                        PromptDynamics{}, 1);
    TrainConfig cfg;
    cfg.epochs = 20;
    const CostSpec spec{0.0, 0.03};
    const std::vector<double> lambdas{0.03};
    const auto rows = lambda_sweep(train_cases, eval_cases, lambdas, PromptKind::mask, spec, cfg, 8);
    ASSERT_EQ(rows.size(), 1u);

    Strategy s = Strategy::make(StrategyKind::l2rp);
    s.policy = train(training_samples(train_cases, spec), cfg).model;
    const EvalReport r = evaluate(eval_cases, s, PromptKind::mask, spec, 8);
    EXPECT_EQ(rows[0].mean_dice, r.mean_dice);
    EXPECT_EQ(rows[0].deferral_rate, r.deferral_rate);

    const std::vector<double> unordered{0.06, 0.01};
    EXPECT_THROW(lambda_sweep(train_cases, eval_cases, unordered, PromptKind::mask, spec, cfg, 8), Error);
}

TEST(Csv, ReportLayout)
{
    EvalReport r;
    r.strategy = "midpoint";
    r.kind = PromptKind::box;
    r.lambda_corr = 0.01;
    r.clip_ids = {"clip-0000"};
    r.final_dice = {0.75};
    r.deferral_frame = {30};
    r.deferral_loss = {0.26};
    std::ostringstream os;
    write_report_csv(os, std::span(&r, 1), Provenance{{{"tool", "t"}}});
    EXPECT_EQ(os.str(), "# tool: t\n"
                        "strategy,prompt_kind,lambda_corr,clip_id,final_dice,deferral_frame,deferral_loss\n"
                        "midpoint,box,0.01,clip-0000,0.75,30,0.26000000000000001\n");
}

TEST(Csv, FormatDoubleRoundTrips)
{
    Rng rng(2);
    for (int i = 0; i < 100; ++i) {
        const double v = rng.normal() * std::pow(10.0, rng.uniform(-8, 8));
        EXPECT_EQ(std::stod(format_double(v)), v);
    }
}

TEST(Svg, WellFormedChart)
{
    const SvgSeries s{"mask", {0, 1, 2}, {0.1, 0.3, 0.2}, {0.01, 0.02, 0.01}};
    std::ostringstream os;
    write_line_chart_svg(os, "a < b & c", "frame", "loss", std::span(&s, 1));
    const std::string svg = os.str();
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
    EXPECT_NE(svg.find("a &lt; b &amp; c"), std::string::npos);
}
