#include "reprompt/synthgen.hpp"

#include "reprompt/binary_io.hpp"
#include "reprompt/error.hpp"
#include "reprompt/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace reprompt {

namespace {

constexpr int kModes = 3;           // boundary harmonics 2..4; harmonic 1 is a translation
constexpr double kVelocityMemory = 0.85;
constexpr double kMaxOcclusion = 0.4;
constexpr double kMinOcclusion = 0.1;

struct BlobShape
{
    std::array<double, kModes> weight{};
    std::array<double, kModes> phase{};
    std::array<double, kModes> speed{};
};

Mask rasterize_blob(int width, int height, const Eigen::Vector2d& c, double radius,
                    double amplitude, const BlobShape& shape, double t, double frequency)
{
    Mask m(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const Eigen::Vector2d v = Eigen::Vector2d(x, y) - c;
            const double theta = std::atan2(v.y(), v.x());
            double mod = 0.0;
            for (int j = 0; j < kModes; ++j) {
                mod += shape.weight[j] *
                       std::cos((j + 2) * theta + shape.phase[j] + shape.speed[j] * frequency * t);
            }
            if (v.norm() <= radius * (1.0 + amplitude * mod)) {
                m.set(x, y, true);
            }
        }
    }
    const int cx = std::clamp(static_cast<int>(std::lround(c.x())), 0, width - 1);
    const int cy = std::clamp(static_cast<int>(std::lround(c.y())), 0, height - 1);
    m.set(cx, cy, true);
    return m;
}

// Hides `fraction` of the foreground behind a straight occluding edge.
Mask occlude(const Mask& m, double fraction, double angle)
{
    struct Pixel
    {
        double projection;
        int x, y;
    };
    std::vector<Pixel> fg;
    const Eigen::Vector2d dir(std::cos(angle), std::sin(angle));
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (m(x, y)) fg.push_back({dir.dot(Eigen::Vector2d(x, y)), x, y});
        }
    }
    std::stable_sort(fg.begin(), fg.end(),
                     [](const Pixel& a, const Pixel& b) { return a.projection > b.projection; });
    const auto hidden = std::min<std::size_t>(
        fg.size() - 1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(fg.size()))));
    Mask out = m;
    for (std::size_t i = 0; i < hidden; ++i) {
        out.set(fg[i].x, fg[i].y, false);
    }
    return out;
}

double reflect(double v, double lo, double hi, double& velocity)
{
    for (int guard = 0; guard < 8 && (v < lo || v > hi); ++guard) {
        if (v < lo) {
            v = 2.0 * lo - v;
            velocity = -velocity;
        }
        if (v > hi) {
            v = 2.0 * hi - v;
            velocity = -velocity;
        }
    }
    return std::clamp(v, lo, hi);
}

std::string clip_id(int index)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "clip-%04d", index);
    return buf;
}

} // namespace

void ClipConfig::validate() const
{
    if (frame_count < 2) throw Error("clip config: frame_count must be at least 2");
    if (width <= 0 || height <= 0) throw Error("clip config: frame size must be positive");
    if (!(radius_fraction > 0.0 && radius_fraction < 0.5)) {
        throw Error("clip config: radius_fraction must lie in (0, 0.5)");
    }
    if (motion_speed < 0 || deformation_amplitude < 0 || deformation_frequency < 0 ||
        occlusion_rate < 0) {
        throw Error("clip config: magnitudes must be nonnegative");
    }
    if (deformation_amplitude >= 1.0) throw Error("clip config: deformation_amplitude must be < 1");
    if (occlusion_rate > 1.0) throw Error("clip config: occlusion_rate is a probability");
    if (!(activity_spread >= 0.0 && activity_spread <= 3.0)) {
        throw Error("clip config: activity_spread must lie in [0, 3]");
    }
}

void to_json(nlohmann::json& j, const ClipConfig& c)
{
    j = {{"frame_count", c.frame_count},
         {"width", c.width},
         {"height", c.height},
         {"radius_fraction", c.radius_fraction},
         {"motion_speed", c.motion_speed},
         {"deformation_amplitude", c.deformation_amplitude},
         {"deformation_frequency", c.deformation_frequency},
         {"occlusion_rate", c.occlusion_rate},
         {"activity_spread", c.activity_spread}};
}

void from_json(const nlohmann::json& j, ClipConfig& c)
{
    c = ClipConfig{};
    c.frame_count = j.value("frame_count", c.frame_count);
    c.width = j.value("width", c.width);
    c.height = j.value("height", c.height);
    c.radius_fraction = j.value("radius_fraction", c.radius_fraction);
    c.motion_speed = j.value("motion_speed", c.motion_speed);
    c.deformation_amplitude = j.value("deformation_amplitude", c.deformation_amplitude);
    c.deformation_frequency = j.value("deformation_frequency", c.deformation_frequency);
    c.occlusion_rate = j.value("occlusion_rate", c.occlusion_rate);
    c.activity_spread = j.value("activity_spread", c.activity_spread);
}

double max_lesion_radius(const ClipConfig& cfg)
{
    const double base = cfg.radius_fraction * std::min(cfg.width, cfg.height);
    const double amplitude = cfg.deformation_amplitude;
    return base * (1.0 + 0.5 * amplitude) * (1.0 + amplitude);
}

Clip generate_clip(const ClipConfig& cfg, std::uint64_t seed, std::string id)
{
    cfg.validate();
    const double margin = max_lesion_radius(cfg) + 1.0;
    const double lo_x = margin, hi_x = cfg.width - 1 - margin;
    const double lo_y = margin, hi_y = cfg.height - 1 - margin;
    if (hi_x < lo_x || hi_y < lo_y) {
        throw Error("clip config: lesion radius too large to stay on frame");
    }

    Rng rng(seed);
    const double activity = std::exp(rng.uniform(-cfg.activity_spread, cfg.activity_spread));
    const double amplitude = cfg.deformation_amplitude;
    const double frequency = cfg.deformation_frequency * activity;
    const double speed = cfg.motion_speed * activity;
    const double radius = cfg.radius_fraction * std::min(cfg.width, cfg.height);

    BlobShape shape;
    double weight_sum = 0.0;
    for (int j = 0; j < kModes; ++j) {
        shape.weight[j] = rng.uniform(0.2, 1.0);
        weight_sum += shape.weight[j];
        shape.phase[j] = rng.uniform(0.0, 2.0 * std::numbers::pi);
        shape.speed[j] = rng.uniform(0.5, 1.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    }
    for (double& w : shape.weight) w /= weight_sum;
    const double scale_rate = 2.0 * std::numbers::pi / rng.uniform(40.0, 120.0);
    const double scale_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

    // E|v| = sigma * sqrt(pi / 2) for an isotropic Gaussian velocity.
    const double sigma = speed / std::sqrt(std::numbers::pi / 2.0);
    const double kick = std::sqrt(1.0 - kVelocityMemory * kVelocityMemory) * sigma;
    Eigen::Vector2d pos(rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y));
    Eigen::Vector2d vel(sigma * rng.normal(), sigma * rng.normal());

    int occluded_left = 0;
    double occlusion_fraction = 0.0;
    double occlusion_angle = 0.0;

    Clip clip;
    clip.id = std::move(id);
    clip.seed = seed;
    clip.activity = activity;
    clip.width = cfg.width;
    clip.height = cfg.height;
    clip.gt_masks.reserve(static_cast<std::size_t>(cfg.frame_count));
    clip.motion.reserve(static_cast<std::size_t>(cfg.frame_count));

    for (int t = 0; t < cfg.frame_count; ++t) {
        // Events never start on frame 0, which carries the initial prompt.
        if (occluded_left == 0 && t > 0 && rng.uniform() < cfg.occlusion_rate) {
            occluded_left = 3 + static_cast<int>(rng.below(4));
            occlusion_fraction = rng.uniform(kMinOcclusion, kMaxOcclusion);
            occlusion_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        }

        MotionSample sample;
        sample.centroid = pos;
        sample.scale = 1.0 + 0.5 * amplitude * std::sin(scale_rate * t + scale_phase);
        sample.phase = frequency * t;
        Mask m = rasterize_blob(cfg.width, cfg.height, pos, radius * sample.scale, amplitude, shape,
                                t, frequency);
        if (occluded_left > 0) {
            sample.occlusion = occlusion_fraction;
            m = occlude(m, occlusion_fraction, occlusion_angle);
            --occluded_left;
        }
        clip.gt_masks.push_back(std::move(m));
        clip.motion.push_back(sample);

        vel = kVelocityMemory * vel + kick * Eigen::Vector2d(rng.normal(), rng.normal());
        double vx = vel.x(), vy = vel.y();
        pos.x() = reflect(pos.x() + vx, lo_x, hi_x, vx);
        pos.y() = reflect(pos.y() + vy, lo_y, hi_y, vy);
        vel = Eigen::Vector2d(vx, vy);
    }
    return clip;
}

std::vector<Clip> generate_dataset(const ClipConfig& cfg, int n_clips, std::uint64_t seed)
{
    if (n_clips < 1) {
        throw Error("generate_dataset: need at least one clip");
    }
    std::vector<Clip> clips;
    clips.reserve(static_cast<std::size_t>(n_clips));
    for (int i = 0; i < n_clips; ++i) {
        clips.push_back(generate_clip(cfg, derive_seed(seed, static_cast<std::uint64_t>(i)), clip_id(i)));
    }
    return clips;
}

namespace {

constexpr char kDatasetMagic[5] = "RPDS";
constexpr std::uint32_t kDatasetVersion = 1;

std::string encode_clip(const Clip& clip)
{
    std::ostringstream out(std::ios::binary);
    for (const Mask& m : clip.gt_masks) {
        const auto runs = encode_runs(m);
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(runs.size()));
        for (auto r : runs) detail::put_le<std::uint32_t>(out, r);
    }
    for (const MotionSample& s : clip.motion) {
        detail::put_le<double>(out, s.centroid.x());
        detail::put_le<double>(out, s.centroid.y());
        detail::put_le<double>(out, s.scale);
        detail::put_le<double>(out, s.phase);
        detail::put_le<double>(out, s.occlusion);
    }
    return out.str();
}

} // namespace

void write_dataset(const std::filesystem::path& path, const Dataset& dataset)
{
    std::vector<std::string> records;
    records.reserve(dataset.clips.size());
    nlohmann::json index = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const Clip& clip : dataset.clips) {
        records.push_back(encode_clip(clip));
        index.push_back({{"id", clip.id},
                         {"seed", clip.seed},
                         {"activity", clip.activity},
                         {"frame_count", clip.frame_count()},
                         {"width", clip.width},
                         {"height", clip.height},
                         {"offset", offset},
                         {"bytes", records.back().size()}});
        offset += records.back().size();
    }
    const nlohmann::json header = {{"format", "reprompt-dataset"},
                                   {"version", kDatasetVersion},
                                   {"config", dataset.config},
                                   {"master_seed", dataset.master_seed},
                                   {"seed_rule", "clip i uses splitmix64-chain(master_seed, i)"},
                                   {"clip_count", dataset.clips.size()},
                                   {"clips", index},
                                   {"provenance", dataset.provenance}};

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    detail::put_header(out, kDatasetMagic, kDatasetVersion, header.dump());
    for (const std::string& r : records) out.write(r.data(), static_cast<std::streamsize>(r.size()));
    if (!out) throw Error("write failed for " + path.string());
}

nlohmann::json read_dataset_header(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return nlohmann::json::parse(detail::get_header(in, kDatasetMagic, kDatasetVersion));
}

Dataset read_dataset(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    const auto header = nlohmann::json::parse(detail::get_header(in, kDatasetMagic, kDatasetVersion));

    Dataset ds;
    ds.config = header.at("config").get<ClipConfig>();
    ds.master_seed = header.at("master_seed").get<std::uint64_t>();
    ds.provenance = header.value("provenance", nlohmann::json::object());
    for (const auto& entry : header.at("clips")) {
        Clip clip;
        clip.id = entry.at("id").get<std::string>();
        clip.seed = entry.at("seed").get<std::uint64_t>();
        clip.activity = entry.at("activity").get<double>();
        clip.width = entry.at("width").get<int>();
        clip.height = entry.at("height").get<int>();
        const int frames = entry.at("frame_count").get<int>();
        for (int t = 0; t < frames; ++t) {
            const auto n = detail::get_le<std::uint32_t>(in);
            std::vector<std::uint32_t> runs(n);
            for (auto& r : runs) r = detail::get_le<std::uint32_t>(in);
            clip.gt_masks.push_back(decode_runs(clip.width, clip.height, runs));
        }
        for (int t = 0; t < frames; ++t) {
            MotionSample s;
            s.centroid.x() = detail::get_le<double>(in);
            s.centroid.y() = detail::get_le<double>(in);
            s.scale = detail::get_le<double>(in);
            s.phase = detail::get_le<double>(in);
            s.occlusion = detail::get_le<double>(in);
            clip.motion.push_back(s);
        }
        ds.clips.push_back(std::move(clip));
    }
    return ds;
}

} // namespace reprompt
