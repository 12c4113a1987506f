#pragma once

#include "reprompt/deferral.hpp"
#include "reprompt/policy.hpp"
#include "reprompt/strategies.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace reprompt {

/// Everything evaluation needs from one clip, so strategies can be compared
/// without re-running propagation.
struct ClipCase
{
    std::string clip_id;
    std::uint64_t clip_seed = 0;
    int last_frame = 0;
    /// Segmentation errors; prices are re-applied per cost spec.
    CostTable table;
    /// Features of the initial propagation on the sampled frames.
    FrameFeatures features;
    /// True Dice of the initial propagation at each sampled frame.
    Eigen::VectorXd sampled_dice;
    /// True Dice of the initial propagation at every frame.
    std::vector<double> initial_dice;
};

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Work is split by
/// index, so results stored by index never depend on the thread count.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

ClipCase build_case(const Clip& clip, PromptKind kind, std::span<const int> frames,
                    const CostSpec& spec, const PromptDynamics& dyn, std::uint64_t seed);

std::vector<ClipCase> build_cases(std::span<const Clip> clips, PromptKind kind,
                                  std::span<const int> frames, const CostSpec& spec,
                                  const PromptDynamics& dyn, std::uint64_t seed, int threads = 1);

std::vector<TrainingSample> training_samples(std::span<const ClipCase> cases, const CostSpec& spec);
std::vector<QualitySample> quality_samples(std::span<const ClipCase> cases);

struct EvalReport
{
    std::string strategy;
    PromptKind kind = PromptKind::mask;
    double lambda_corr = 0.0;
    std::vector<std::string> clip_ids;
    /// Mean Dice over all frames, prompted frames included.
    std::vector<double> final_dice;
    std::vector<int> deferral_frame;
    std::vector<double> deferral_loss;

    double mean_dice = 0.0;
    /// Sample standard deviation across clips.
    double std_dice = 0.0;
    double deferral_rate = 0.0;
    double mean_deferral_loss = 0.0;
};

/// Lets the strategy choose on each clip and reads the outcome off the cost
/// table; the table's entry for a frame is the mean error of exactly the
/// re-propagation a deferral there would run.
EvalReport evaluate(std::span<const ClipCase> cases, const Strategy& strategy, PromptKind kind,
                    const CostSpec& spec, std::uint64_t seed);

double mean_of(std::span<const double> v);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double sample_std(std::span<const double> v);

struct ErrorCurve
{
    std::vector<double> raw;
    std::vector<double> smoothed;
    std::vector<double> ci_half_width;
};

/// Per-frame mean Dice loss over clips with a centered moving average (window
/// clipped at the ends) and CI half-width 1.96 * std / sqrt(n_clips). Every
/// row of `losses` is one clip.
ErrorCurve error_curve(const std::vector<std::vector<double>>& losses, int window = 20);

/// Single-prompt propagation from frame 0 on every clip.
ErrorCurve error_curve(std::span<const Clip> clips, PromptKind kind, const PromptDynamics& dyn,
                       std::uint64_t seed, int window = 20, int threads = 1);

std::vector<double> moving_average(std::span<const double> v, int window);

struct WilcoxonResult
{
    /// Sum of ranks of the positive differences.
    double statistic = 0.0;
    double p_value = 1.0;
    int n_effective = 0;
};

inline constexpr int kWilcoxonExactLimit = 20;

/// Two-sided paired signed-rank test on a - b. Zero differences are dropped
/// and tied magnitudes get midranks. Exact null distribution up to
/// kWilcoxonExactLimit pairs, normal approximation with tie and continuity
/// corrections above. All differences zero gives p = 1.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

struct SweepRow
{
    double lambda_corr = 0.0;
    double mean_dice = 0.0;
    double std_dice = 0.0;
    double deferral_rate = 0.0;
    double mean_deferral_loss = 0.0;
};

/// Retrains the policy for each lambda_corr on the training cases (same data,
/// same seed, re-priced costs) and evaluates it on the evaluation cases.
std::vector<SweepRow> lambda_sweep(std::span<const ClipCase> train_cases,
                                   std::span<const ClipCase> eval_cases,
                                   std::span<const double> lambdas, PromptKind kind,
                                   const CostSpec& base, const TrainConfig& cfg,
                                   std::uint64_t seed);

/// "# key: value" lines written at the top of every CSV.
struct Provenance
{
    std::vector<std::pair<std::string, std::string>> entries;
};

void write_provenance(std::ostream& out, const Provenance& p);

/// strategy,prompt_kind,lambda_corr,clip_id,final_dice,deferral_frame,deferral_loss
void write_report_csv(std::ostream& out, std::span<const EvalReport> reports, const Provenance& p);
/// prompt_kind,frame,raw_loss,smoothed_loss,ci_half_width
void write_curve_csv(std::ostream& out, std::span<const std::pair<PromptKind, ErrorCurve>> curves,
                     const Provenance& p);
/// lambda_corr,mean_dice,std_dice,deferral_rate
void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows, const Provenance& p);

/// %.17g formatting.
std::string format_double(double v);

struct SvgSeries
{
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
    /// Optional symmetric band around y.
    std::vector<double> band;
};

void write_line_chart_svg(std::ostream& out, const std::string& title, const std::string& x_label,
                          const std::string& y_label, std::span<const SvgSeries> series);

} // namespace reprompt
