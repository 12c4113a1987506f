#pragma once

#include "reprompt/mask.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace reprompt {

/// Generator knobs for one synthetic clip. Lengths are in pixels, rates per frame.
struct ClipConfig
{
    int frame_count = 60;
    int width = 64;
    int height = 64;
    /// Base lesion radius as a fraction of min(width, height).
    double radius_fraction = 0.15;
    /// Mean centroid speed.
    double motion_speed = 0.5;
    /// Relative amplitude of the Fourier boundary modulation. Half of it also
    /// drives a slow scale oscillation.
    double deformation_amplitude = 0.2;
    /// Phase advance of the boundary modulation, radians per frame.
    double deformation_frequency = 0.08;
    /// Per-frame probability that an occlusion event starts.
    double occlusion_rate = 0.02;
    /// Per-clip activity multiplier exp(U[-spread, spread]); scales motion speed
    /// and deformation frequency.
    double activity_spread = 1.1;

    void validate() const;

    friend bool operator==(const ClipConfig&, const ClipConfig&) = default;
};

void to_json(nlohmann::json& j, const ClipConfig& c);
void from_json(const nlohmann::json& j, ClipConfig& c);

struct MotionSample
{
    Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
    double scale = 1.0;
    double phase = 0.0;
    /// Fraction of the lesion hidden by an occlusion event (0 when none).
    double occlusion = 0.0;

    friend bool operator==(const MotionSample& a, const MotionSample& b)
    {
        return a.centroid == b.centroid && a.scale == b.scale && a.phase == b.phase &&
               a.occlusion == b.occlusion;
    }
};

struct Clip
{
    std::string id;
    std::uint64_t seed = 0;
    int width = 0;
    int height = 0;
    std::vector<Mask> gt_masks;
    std::vector<MotionSample> motion;
    /// Per-clip activity multiplier the generator drew.
    double activity = 1.0;

    int frame_count() const noexcept { return static_cast<int>(gt_masks.size()); }
    /// Index of the last frame (T).
    int last_frame() const noexcept { return frame_count() - 1; }

    friend bool operator==(const Clip&, const Clip&) = default;
};

/// Largest boundary radius the config can produce.
double max_lesion_radius(const ClipConfig& cfg);

Clip generate_clip(const ClipConfig& cfg, std::uint64_t seed, std::string id = "clip-0000");

/// Clip i uses seed derive_seed(seed, i) and id "clip-iiii".
std::vector<Clip> generate_dataset(const ClipConfig& cfg, int n_clips, std::uint64_t seed);

struct Dataset
{
    ClipConfig config;
    std::uint64_t master_seed = 0;
    std::vector<Clip> clips;
    /// Free-form provenance copied into the header (tool version, config hash, ...).
    nlohmann::json provenance = nlohmann::json::object();
};

/// Container layout: "RPDS" magic, u32 version, u64 header length, JSON header
/// (config, seeds, clip index with byte offsets), then per clip and frame a
/// run-length record (u32 run count, u32 runs) followed by the motion trace as
/// five little-endian f64 per frame.
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);
nlohmann::json read_dataset_header(const std::filesystem::path& path);

} // namespace reprompt
