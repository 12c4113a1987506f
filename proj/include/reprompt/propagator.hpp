#pragma once

#include "reprompt/mask.hpp"
#include "reprompt/synthgen.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace reprompt {

enum class PromptKind { mask, box, point };

inline constexpr std::array<PromptKind, 3> kAllPromptKinds{PromptKind::mask, PromptKind::box,
                                                          PromptKind::point};

std::string_view to_string(PromptKind kind);
PromptKind parse_prompt_kind(std::string_view name);

struct Prompt
{
    int frame = 0;
    PromptKind kind = PromptKind::mask;
    std::variant<Mask, BoxPrompt, PointPrompt> payload;
};

/// Expected-Dice decay for one prompt kind:
/// dice(delta) = d_inf + (d0 - d_inf) * exp(-rho * delta), plus N(0, sigma) noise per frame.
struct KindDynamics
{
    double d0 = 0.95;
    double d_inf = 0.45;
    double rho = 0.04;
    double sigma = 0.03;

    void validate() const;
    friend bool operator==(const KindDynamics&, const KindDynamics&) = default;
};

enum class Anchoring { nearest, forward_only };

struct PromptDynamics
{
    KindDynamics mask{0.95, 0.45, 0.04, 0.03};
    KindDynamics box{0.85, 0.50, 0.02, 0.03};
    KindDynamics point{0.78, 0.52, 0.01, 0.03};
    Anchoring anchoring = Anchoring::nearest;
    /// Effective distance per frame of separation from the anchor.
    double frame_weight = 0.07;
    /// Effective distance per pixel of ground-truth centroid path travelled
    /// between a frame and its anchor.
    double motion_weight = 0.35;
    /// Effective distance per unit of shape dissimilarity between a frame and
    /// its anchor (1 - Dice of the centroid-aligned ground-truth masks).
    double appearance_weight = 2.8;
    /// Pixels of translation drift per frame of distance from the anchor.
    double drift_rate = 0.05;

    const KindDynamics& of(PromptKind kind) const;
    KindDynamics& of(PromptKind kind);
    void validate() const;

    friend bool operator==(const PromptDynamics&, const PromptDynamics&) = default;
};

void to_json(nlohmann::json& j, const KindDynamics& d);
void from_json(const nlohmann::json& j, KindDynamics& d);
void to_json(nlohmann::json& j, const PromptDynamics& d);
void from_json(const nlohmann::json& j, PromptDynamics& d);

struct PropagationResult
{
    std::vector<Mask> pred_masks;
    /// Frame index of the prompt that anchored each frame.
    std::vector<int> anchor_index;
    /// Effective distance from each frame to its anchor.
    std::vector<double> anchor_distance;
    /// Noise-free expected Dice per frame.
    std::vector<double> expected_dice_trace;
};

double expected_dice(double delta, const KindDynamics& dyn);
double expected_dice(double delta, PromptKind kind, const PromptDynamics& dyn);

Prompt make_prompt(const Clip& clip, int frame_index, PromptKind kind, std::uint64_t seed);

/// Shape dissimilarity 1 - Dice(a, b) after aligning the foreground centroids.
double shape_dissimilarity(const Mask& a, const Mask& b);

/// Cumulative ground-truth centroid path length, in pixels, at every frame.
std::vector<double> centroid_path(const Clip& clip);

/// Simulated iVOS propagation. Each frame is anchored to the prompt with the
/// smallest effective distance
///   frame_weight * |t - a| + motion_weight * path(a..t) + appearance_weight * shape_dissimilarity,
/// and its prediction is the ground truth corrupted to the (noisy) expected Dice
/// for that distance. Noise and corruption seeds depend on (seed, clip, frame)
/// only, never on the prompt set.
PropagationResult propagate(const Clip& clip, std::span<const Prompt> prompts,
                            const PromptDynamics& dyn, std::uint64_t seed);

/// Convenience overload: prompts of `kind` at the given frames.
PropagationResult propagate(const Clip& clip, std::span<const int> prompt_frames, PromptKind kind,
                            const PromptDynamics& dyn, std::uint64_t seed);

/// Per-frame measured Dice of a propagation against the clip ground truth.
std::vector<double> measured_dice(const Clip& clip, const PropagationResult& result);

} // namespace reprompt
