#include "reprompt/propagator.hpp"

#include "reprompt/error.hpp"
#include "reprompt/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace reprompt {

namespace {

constexpr std::uint64_t kNoiseStream = 0x6e6f697365ull;    // "noise"
constexpr std::uint64_t kCorruptStream = 0x636f7272ull;    // "corr"
constexpr std::uint64_t kDriftStream = 0x6472696674ull;    // "drift"
constexpr std::uint64_t kClickStream = 0x636c69636bull;    // "click"
constexpr double kDiceFloor = 0.05;

Offset drift_offset(const Eigen::Vector2d& direction, double magnitude)
{
    const Eigen::Vector2d v = magnitude * direction;
    return {static_cast<int>(std::lround(v.x())), static_cast<int>(std::lround(v.y()))};
}

} // namespace

std::string_view to_string(PromptKind kind)
{
    switch (kind) {
    case PromptKind::mask: return "mask";
    case PromptKind::box: return "box";
    case PromptKind::point: return "point";
    }
    return "unknown";
}

PromptKind parse_prompt_kind(std::string_view name)
{
    for (PromptKind k : kAllPromptKinds) {
        if (to_string(k) == name) return k;
    }
    throw Error("unknown prompt kind: " + std::string(name));
}

void KindDynamics::validate() const
{
    if (!(0.0 <= d_inf && d_inf < d0 && d0 <= 1.0)) {
        throw Error("prompt dynamics: need 0 <= d_inf < d0 <= 1");
    }
    if (!(rho > 0.0)) throw Error("prompt dynamics: rho must be positive");
    if (!(sigma >= 0.0)) throw Error("prompt dynamics: sigma must be nonnegative");
}

const KindDynamics& PromptDynamics::of(PromptKind kind) const
{
    switch (kind) {
    case PromptKind::mask: return mask;
    case PromptKind::box: return box;
    case PromptKind::point: return point;
    }
    throw Error("unknown prompt kind");
}

KindDynamics& PromptDynamics::of(PromptKind kind)
{
    return const_cast<KindDynamics&>(std::as_const(*this).of(kind));
}

void PromptDynamics::validate() const
{
    mask.validate();
    box.validate();
    point.validate();
    if (!(frame_weight > 0.0)) throw Error("prompt dynamics: frame_weight must be positive");
    if (motion_weight < 0.0) throw Error("prompt dynamics: motion_weight must be >= 0");
    if (appearance_weight < 0.0) throw Error("prompt dynamics: appearance_weight must be >= 0");
    if (drift_rate < 0.0) throw Error("prompt dynamics: drift_rate must be >= 0");
}

void to_json(nlohmann::json& j, const KindDynamics& d)
{
    j = {{"d0", d.d0}, {"d_inf", d.d_inf}, {"rho", d.rho}, {"sigma", d.sigma}};
}

void from_json(const nlohmann::json& j, KindDynamics& d)
{
    d.d0 = j.value("d0", d.d0);
    d.d_inf = j.value("d_inf", d.d_inf);
    d.rho = j.value("rho", d.rho);
    d.sigma = j.value("sigma", d.sigma);
}

void to_json(nlohmann::json& j, const PromptDynamics& d)
{
    j = {{"mask", d.mask},
         {"box", d.box},
         {"point", d.point},
         {"anchoring", d.anchoring == Anchoring::nearest ? "nearest" : "forward-only"},
         {"frame_weight", d.frame_weight},
         {"motion_weight", d.motion_weight},
         {"appearance_weight", d.appearance_weight},
         {"drift_rate", d.drift_rate}};
}

void from_json(const nlohmann::json& j, PromptDynamics& d)
{
    d = PromptDynamics{};
    if (j.contains("mask")) j.at("mask").get_to(d.mask);
    if (j.contains("box")) j.at("box").get_to(d.box);
    if (j.contains("point")) j.at("point").get_to(d.point);
    const std::string anchoring = j.value("anchoring", std::string("nearest"));
    if (anchoring == "nearest") {
        d.anchoring = Anchoring::nearest;
    } else if (anchoring == "forward-only") {
        d.anchoring = Anchoring::forward_only;
    } else {
        throw Error("prompt dynamics: anchoring must be nearest or forward-only");
    }
    d.frame_weight = j.value("frame_weight", d.frame_weight);
    d.motion_weight = j.value("motion_weight", d.motion_weight);
    d.appearance_weight = j.value("appearance_weight", d.appearance_weight);
    d.drift_rate = j.value("drift_rate", d.drift_rate);
}

double expected_dice(double delta, const KindDynamics& dyn)
{
    return dyn.d_inf + (dyn.d0 - dyn.d_inf) * std::exp(-dyn.rho * delta);
}

double expected_dice(double delta, PromptKind kind, const PromptDynamics& dyn)
{
    return expected_dice(delta, dyn.of(kind));
}

Prompt make_prompt(const Clip& clip, int frame_index, PromptKind kind, std::uint64_t seed)
{
    if (frame_index < 0 || frame_index >= clip.frame_count()) {
        throw Error("make_prompt: frame index out of range");
    }
    const Mask& gt = clip.gt_masks[static_cast<std::size_t>(frame_index)];
    if (gt.empty()) {
        throw Error("make_prompt: frame has no foreground");
    }
    Prompt p{frame_index, kind, gt};
    switch (kind) {
    case PromptKind::mask: break;
    case PromptKind::box: p.payload = tight_box(gt); break;
    case PromptKind::point:
        p.payload = sample_clicks(gt, 3, derive_seed(seed, clip.seed, frame_index, kClickStream));
        break;
    }
    return p;
}

double shape_dissimilarity(const Mask& a, const Mask& b)
{
    if (a.empty() || b.empty()) {
        return a.empty() && b.empty() ? 0.0 : 1.0;
    }
    const Eigen::Vector2d shift = centroid(a) - centroid(b);
    const Offset by{static_cast<int>(std::lround(shift.x())), static_cast<int>(std::lround(shift.y()))};
    return 1.0 - dice(a, translate(b, by));
}

std::vector<double> centroid_path(const Clip& clip)
{
    std::vector<double> path(clip.gt_masks.size(), 0.0);
    for (std::size_t t = 1; t < clip.gt_masks.size(); ++t) {
        const Mask& prev = clip.gt_masks[t - 1];
        const Mask& cur = clip.gt_masks[t];
        const double step = prev.empty() || cur.empty() ? 0.0 : (centroid(cur) - centroid(prev)).norm();
        path[t] = path[t - 1] + step;
    }
    return path;
}

PropagationResult propagate(const Clip& clip, std::span<const Prompt> prompts,
                            const PromptDynamics& dyn, std::uint64_t seed)
{
    if (prompts.empty()) {
        throw Error("propagate: prompt set is empty");
    }
    const PromptKind kind = prompts.front().kind;
    std::vector<int> frames;
    for (const Prompt& p : prompts) {
        if (p.kind != kind) throw Error("propagate: prompts mix kinds");
        if (p.frame < 0 || p.frame >= clip.frame_count()) {
            throw Error("propagate: prompt frame out of range");
        }
        frames.push_back(p.frame);
    }
    std::sort(frames.begin(), frames.end());
    if (std::adjacent_find(frames.begin(), frames.end()) != frames.end()) {
        throw Error("propagate: two prompts on the same frame");
    }

    const KindDynamics& kd = dyn.of(kind);
    const int n = clip.frame_count();

    // Shape dissimilarity of every frame against every prompt frame.
    std::vector<std::vector<double>> appearance(frames.size(), std::vector<double>(n, 0.0));
    if (dyn.appearance_weight > 0.0) {
        for (std::size_t i = 0; i < frames.size(); ++i) {
            const Mask& anchor_gt = clip.gt_masks[static_cast<std::size_t>(frames[i])];
            for (int t = 0; t < n; ++t) {
                appearance[i][t] = shape_dissimilarity(clip.gt_masks[static_cast<std::size_t>(t)], anchor_gt);
            }
        }
    }

    std::vector<double> path;
    if (dyn.motion_weight > 0.0) {
        path = centroid_path(clip);
    } else {
        path.assign(static_cast<std::size_t>(n), 0.0);
    }

    Rng drift_rng(derive_seed(seed, clip.seed, kDriftStream));
    const double angle = drift_rng.uniform(0.0, 2.0 * std::numbers::pi);
    const Eigen::Vector2d direction(std::cos(angle), std::sin(angle));

    PropagationResult out;
    out.pred_masks.reserve(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
        std::size_t best = frames.size();
        double best_delta = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < frames.size(); ++i) {
            if (dyn.anchoring == Anchoring::forward_only && frames[i] > t && frames.front() <= t) {
                continue;
            }
            const double delta = dyn.frame_weight * std::abs(t - frames[i]) +
                                 dyn.motion_weight * std::abs(path[t] - path[frames[i]]) +
                                 dyn.appearance_weight * appearance[i][t];
            // Strict comparisons keep the nearer (then earlier) prompt on ties.
            if (best == frames.size() || delta < best_delta ||
                (delta == best_delta && std::abs(t - frames[i]) < std::abs(t - frames[best]))) {
                best = i;
                best_delta = delta;
            }
        }
        const int anchor = frames[best];
        const Mask& gt = clip.gt_masks[static_cast<std::size_t>(t)];
        const double expected = expected_dice(best_delta, kd);

        double target = kd.d0;
        Offset offset{};
        if (anchor != t) {
            Rng noise(derive_seed(seed, clip.seed, static_cast<std::uint64_t>(t), kNoiseStream));
            target = std::clamp(expected + kd.sigma * noise.normal(), kDiceFloor, 1.0);
            offset = drift_offset(direction, dyn.drift_rate * (t - anchor));
            // Corruption only lowers Dice, so the drift alone must not overshoot.
            while (offset != Offset{} && dice(translate(gt, offset), gt) < target) {
                offset = {offset.dx / 2, offset.dy / 2};
            }
        }
        out.pred_masks.push_back(corrupt_to_dice(
            gt, target, offset, derive_seed(seed, clip.seed, static_cast<std::uint64_t>(t), kCorruptStream)));
        out.anchor_index.push_back(anchor);
        out.anchor_distance.push_back(best_delta);
        out.expected_dice_trace.push_back(expected);
    }
    return out;
}

PropagationResult propagate(const Clip& clip, std::span<const int> prompt_frames, PromptKind kind,
                            const PromptDynamics& dyn, std::uint64_t seed)
{
    std::vector<Prompt> prompts;
    prompts.reserve(prompt_frames.size());
    for (int f : prompt_frames) {
        prompts.push_back(make_prompt(clip, f, kind, seed));
    }
    return propagate(clip, prompts, dyn, seed);
}

std::vector<double> measured_dice(const Clip& clip, const PropagationResult& result)
{
    if (result.pred_masks.size() != clip.gt_masks.size()) {
        throw DimensionMismatch("measured_dice: result length differs from clip length");
    }
    std::vector<double> d;
    d.reserve(clip.gt_masks.size());
    for (std::size_t t = 0; t < clip.gt_masks.size(); ++t) {
        d.push_back(dice(result.pred_masks[t], clip.gt_masks[t]));
    }
    return d;
}

} // namespace reprompt
