#include "reprompt/evalkit.hpp"

#include "reprompt/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

namespace reprompt {

void parallel_for(int n, int threads, const std::function<void(int)>& fn)
{
    const int workers = std::clamp(threads, 1, std::max(1, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    const std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

ClipCase build_case(const Clip& clip, PromptKind kind, std::span<const int> frames,
                    const CostSpec& spec, const PromptDynamics& dyn, std::uint64_t seed)
{
    const std::vector<int> candidates = candidate_frames(frames);
    ClipCase c;
    c.clip_id = clip.id;
    c.clip_seed = clip.seed;
    c.last_frame = clip.last_frame();
    PropagationResult initial;
    c.table = build_cost_table(clip, kind, candidates, spec, dyn, seed, initial);
    c.features = extract_features(clip, initial, frames);
    c.initial_dice = measured_dice(clip, initial);
    c.sampled_dice.resize(static_cast<Eigen::Index>(frames.size()));
    for (std::size_t i = 0; i < frames.size(); ++i) {
        c.sampled_dice(static_cast<Eigen::Index>(i)) = c.initial_dice[static_cast<std::size_t>(frames[i])];
    }
    return c;
}

std::vector<ClipCase> build_cases(std::span<const Clip> clips, PromptKind kind,
                                  std::span<const int> frames, const CostSpec& spec,
                                  const PromptDynamics& dyn, std::uint64_t seed, int threads)
{
    std::vector<ClipCase> cases(clips.size());
    parallel_for(static_cast<int>(clips.size()), threads, [&](int i) {
        cases[static_cast<std::size_t>(i)] = build_case(clips[static_cast<std::size_t>(i)], kind, frames, spec, dyn, seed);
    });
    return cases;
}

std::vector<TrainingSample> training_samples(std::span<const ClipCase> cases, const CostSpec& spec)
{
    std::vector<TrainingSample> out;
    out.reserve(cases.size());
    for (const ClipCase& c : cases) out.push_back({c.features, reprice(c.table, spec)});
    return out;
}

std::vector<QualitySample> quality_samples(std::span<const ClipCase> cases)
{
    std::vector<QualitySample> out;
    out.reserve(cases.size());
    for (const ClipCase& c : cases) out.push_back({c.features, c.sampled_dice});
    return out;
}

double mean_of(std::span<const double> v)
{
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v)
{
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

EvalReport evaluate(std::span<const ClipCase> cases, const Strategy& strategy, PromptKind kind,
                    const CostSpec& spec, std::uint64_t seed)
{
    EvalReport r;
    r.strategy = std::string(to_string(strategy.kind));
    r.kind = kind;
    r.lambda_corr = spec.lambda_corr;
    int deferred = 0;
    for (const ClipCase& c : cases) {
        const CostTable table = reprice(c.table, spec);
        const SelectionInput in{c.clip_seed, c.last_frame, table.candidates, &c.features, &table};
        const int choice = select(strategy, in, seed);
        const double ell = choice == 0 ? table.ell_0 : table.ell_0k(table.candidate_index(choice));
        r.clip_ids.push_back(c.clip_id);
        r.final_dice.push_back(1.0 - ell);
        r.deferral_frame.push_back(choice);
        r.deferral_loss.push_back(deferral_loss(choice, table));
        if (choice != 0) ++deferred;
    }
    r.mean_dice = mean_of(r.final_dice);
    r.std_dice = sample_std(r.final_dice);
    r.mean_deferral_loss = mean_of(r.deferral_loss);
    r.deferral_rate = cases.empty() ? 0.0 : static_cast<double>(deferred) / static_cast<double>(cases.size());
    return r;
}

std::vector<double> moving_average(std::span<const double> v, int window)
{
    if (window < 1) throw Error("moving_average: window must be >= 1");
    const int n = static_cast<int>(v.size());
    const int before = (window - 1) / 2;
    const int after = window - 1 - before;
    std::vector<double> out(v.size());
    for (int t = 0; t < n; ++t) {
        const int lo = std::max(0, t - before);
        const int hi = std::min(n - 1, t + after);
        double s = 0.0;
        for (int i = lo; i <= hi; ++i) s += v[static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(t)] = s / (hi - lo + 1);
    }
    return out;
}

ErrorCurve error_curve(const std::vector<std::vector<double>>& losses, int window)
{
    if (window < 1) throw Error("error_curve: window must be >= 1");
    ErrorCurve c;
    if (losses.empty()) return c;
    const std::size_t frames = losses.front().size();
    for (const auto& row : losses) {
        if (row.size() != frames) throw DimensionMismatch("error_curve: clips differ in length");
    }
    const double n = static_cast<double>(losses.size());
    std::vector<double> column(losses.size());
    for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t i = 0; i < losses.size(); ++i) column[i] = losses[i][t];
        c.raw.push_back(mean_of(column));
        c.ci_half_width.push_back(1.96 * sample_std(column) / std::sqrt(n));
    }
    c.smoothed = moving_average(c.raw, window);
    return c;
}

ErrorCurve error_curve(std::span<const Clip> clips, PromptKind kind, const PromptDynamics& dyn,
                       std::uint64_t seed, int window, int threads)
{
    std::vector<std::vector<double>> losses(clips.size());
    parallel_for(static_cast<int>(clips.size()), threads, [&](int i) {
        const Clip& clip = clips[static_cast<std::size_t>(i)];
        const int first = 0;
        const auto d = measured_dice(clip, propagate(clip, std::span<const int>(&first, 1), kind, dyn, seed));
        auto& row = losses[static_cast<std::size_t>(i)];
        for (double v : d) row.push_back(1.0 - v);
    });
    return error_curve(losses, window);
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) throw DimensionMismatch("wilcoxon: samples differ in length");
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        if (!std::isfinite(diff)) throw Error("wilcoxon: non-finite difference");
        if (diff != 0.0) d.push_back(diff);
    }
    WilcoxonResult r;
    r.n_effective = static_cast<int>(d.size());
    if (d.empty()) return r;

    // Doubled midranks stay integral under ties.
    const std::size_t n = d.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return std::abs(d[x]) < std::abs(d[y]); });
    std::vector<std::int64_t> rank2(n);
    double tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
        const auto r2 = static_cast<std::int64_t>(i + j + 2); // 2 * average of ranks i+1..j+1
        for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r2;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    std::int64_t w2 = 0;
    std::int64_t total2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        total2 += rank2[i];
        if (d[i] > 0) w2 += rank2[i];
    }
    r.statistic = static_cast<double>(w2) / 2.0;

    if (static_cast<int>(n) <= kWilcoxonExactLimit) {
        // counts[s]: sign assignments whose doubled positive-rank sum is s.
        std::vector<std::uint64_t> counts(static_cast<std::size_t>(total2 + 1), 0);
        counts[0] = 1;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::int64_t s = total2; s >= rank2[i]; --s) {
                counts[static_cast<std::size_t>(s)] += counts[static_cast<std::size_t>(s - rank2[i])];
            }
        }
        std::uint64_t le = 0, ge = 0;
        for (std::int64_t s = 0; s <= total2; ++s) {
            if (s <= w2) le += counts[static_cast<std::size_t>(s)];
            if (s >= w2) ge += counts[static_cast<std::size_t>(s)];
        }
        const double all = std::ldexp(1.0, static_cast<int>(n));
        r.p_value = std::min(1.0, 2.0 * static_cast<double>(std::min(le, ge)) / all);
        return r;
    }

    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    if (!(var > 0.0)) {
        r.p_value = 1.0;
        return r;
    }
    const double dev = std::max(0.0, std::abs(r.statistic - mean) - 0.5);
    const double z = dev / std::sqrt(var);
    r.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    return r;
}

std::vector<SweepRow> lambda_sweep(std::span<const ClipCase> train_cases,
                                   std::span<const ClipCase> eval_cases,
                                   std::span<const double> lambdas, PromptKind kind,
                                   const CostSpec& base, const TrainConfig& cfg,
                                   std::uint64_t seed)
{
    if (lambdas.empty()) throw Error("lambda_sweep: no lambda values");
    for (std::size_t i = 1; i < lambdas.size(); ++i) {
        if (!(lambdas[i] > lambdas[i - 1])) throw Error("lambda_sweep: lambdas must be strictly increasing");
    }
    std::vector<SweepRow> rows;
    for (double lambda : lambdas) {
        CostSpec spec = base;
        spec.lambda_corr = lambda;
        spec.validate();
        const auto samples = training_samples(train_cases, spec);
        Strategy s = Strategy::make(StrategyKind::l2rp);
        s.policy = train(samples, cfg).model;
        const EvalReport r = evaluate(eval_cases, s, kind, spec, seed);
        rows.push_back({lambda, r.mean_dice, r.std_dice, r.deferral_rate, r.mean_deferral_loss});
    }
    return rows;
}

std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_provenance(std::ostream& out, const Provenance& p)
{
    for (const auto& [key, value] : p.entries) out << "# " << key << ": " << value << '\n';
}

void write_report_csv(std::ostream& out, std::span<const EvalReport> reports, const Provenance& p)
{
    write_provenance(out, p);
    out << "strategy,prompt_kind,lambda_corr,clip_id,final_dice,deferral_frame,deferral_loss\n";
    for (const EvalReport& r : reports) {
        for (std::size_t i = 0; i < r.clip_ids.size(); ++i) {
            out << r.strategy << ',' << to_string(r.kind) << ',' << format_double(r.lambda_corr) << ','
                << r.clip_ids[i] << ',' << format_double(r.final_dice[i]) << ',' << r.deferral_frame[i]
                << ',' << format_double(r.deferral_loss[i]) << '\n';
        }
    }
}

void write_curve_csv(std::ostream& out, std::span<const std::pair<PromptKind, ErrorCurve>> curves,
                     const Provenance& p)
{
    write_provenance(out, p);
    out << "prompt_kind,frame,raw_loss,smoothed_loss,ci_half_width\n";
    for (const auto& [kind, c] : curves) {
        for (std::size_t t = 0; t < c.raw.size(); ++t) {
            out << to_string(kind) << ',' << t << ',' << format_double(c.raw[t]) << ','
                << format_double(c.smoothed[t]) << ',' << format_double(c.ci_half_width[t]) << '\n';
        }
    }
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows, const Provenance& p)
{
    write_provenance(out, p);
    out << "lambda_corr,mean_dice,std_dice,deferral_rate\n";
    for (const SweepRow& r : rows) {
        out << format_double(r.lambda_corr) << ',' << format_double(r.mean_dice) << ','
            << format_double(r.std_dice) << ',' << format_double(r.deferral_rate) << '\n';
    }
}

namespace {

std::string xml_escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

} // namespace

void write_line_chart_svg(std::ostream& out, const std::string& title, const std::string& x_label,
                          const std::string& y_label, std::span<const SvgSeries> series)
{
    constexpr double width = 640, height = 400, left = 64, right = 150, top = 36, bottom = 48;
    static constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const SvgSeries& s : series) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            const double band = i < s.band.size() ? s.band[i] : 0.0;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i] - band);
            y1 = std::max(y1, s.y[i] + band);
        }
    }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    const double pw = width - left - right, ph = height - top - bottom;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
        << xml_escape(title) << "</text>\n";
    out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double yv = y0 + (y1 - y0) * i / 4.0;
        const double xv = x0 + (x1 - x0) * i / 4.0;
        out << "<text x=\"" << left - 6 << "\" y=\"" << fmt(py(yv) + 4) << "\" text-anchor=\"end\">"
            << fmt(yv) << "</text>\n";
        out << "<text x=\"" << fmt(px(xv)) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
            << fmt(xv) << "</text>\n";
    }
    out << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">"
        << xml_escape(x_label) << "</text>\n";
    out << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
        << xml_escape(y_label) << "</text>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
        const SvgSeries& s = series[k];
        const char* color = palette[k % std::size(palette)];
        if (!s.band.empty() && s.band.size() == s.y.size()) {
            out << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
            for (std::size_t i = 0; i < s.x.size(); ++i) out << fmt(px(s.x[i])) << ',' << fmt(py(s.y[i] + s.band[i])) << ' ';
            for (std::size_t i = s.x.size(); i-- > 0;) out << fmt(px(s.x[i])) << ',' << fmt(py(s.y[i] - s.band[i])) << ' ';
            out << "\"/>\n";
        }
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) out << fmt(px(s.x[i])) << ',' << fmt(py(s.y[i])) << ' ';
        out << "\"/>\n";
        const double ly = top + 14 + 18 * static_cast<double>(k);
        out << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 32
            << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly + 4 << "\">" << xml_escape(s.name) << "</text>\n";
    }
    out << "</svg>\n";
}

} // namespace reprompt
