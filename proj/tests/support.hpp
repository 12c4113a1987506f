#pragma once

#include "reprompt/mask.hpp"
#include "reprompt/propagator.hpp"
#include "reprompt/synthgen.hpp"

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

namespace reprompt::testing {

inline Mask disk(int width, int height, double cx, double cy, double r)
{
    Mask m(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.set(x, y, true);
        }
    }
    return m;
}

inline ClipConfig static_config()
{
    ClipConfig c;
    c.motion_speed = 0.0;
    c.deformation_amplitude = 0.0;
    c.occlusion_rate = 0.0;
    c.activity_spread = 0.0;
    return c;
}

// Distance is plain frame separation, as in the closed-form decay model.
inline PromptDynamics frame_distance_dynamics(double sigma)
{
    PromptDynamics d;
    d.frame_weight = 1.0;
    d.motion_weight = 0.0;
    d.appearance_weight = 0.0;
    d.drift_rate = 0.0;
    for (PromptKind k : kAllPromptKinds) d.of(k).sigma = sigma;
    return d;
}

// Clip whose every frame holds the same mask.
inline Clip constant_clip(const Mask& m, int frames)
{
    Clip c;
    c.id = "clip-test";
    c.seed = 11;
    c.width = m.width();
    c.height = m.height();
    c.gt_masks.assign(static_cast<std::size_t>(frames), m);
    MotionSample s;
    if (!m.empty()) s.centroid = centroid(m);
    c.motion.assign(static_cast<std::size_t>(frames), s);
    return c;
}

inline Mask random_mask(int width, int height, double density, std::mt19937_64& rng)
{
    std::bernoulli_distribution on(density);
    Mask m(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) m.set(x, y, on(rng));
    }
    return m;
}

class TempDir
{
public:
    explicit TempDir(const std::string& name)
        : path_(std::filesystem::temp_directory_path() / ("reprompt-" + name + "-" + std::to_string(::getpid())))
    {
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace reprompt::testing
