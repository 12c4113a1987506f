#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace reprompt {

using BitGrid = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Binary segmentation mask, row-major, indexed (x, y) with 0 <= x < width.
class Mask
{
public:
    Mask() = default;
    Mask(int width, int height);
    /// Takes ownership of a height x width grid. Throws unless every value is 0 or 1.
    explicit Mask(BitGrid bits);

    int width() const noexcept { return static_cast<int>(bits_.cols()); }
    int height() const noexcept { return static_cast<int>(bits_.rows()); }
    std::int64_t pixel_count() const noexcept { return bits_.size(); }

    bool operator()(int x, int y) const { return bits_(y, x) != 0; }
    void set(int x, int y, bool on) { bits_(y, x) = on ? 1 : 0; }
    bool contains(int x, int y) const noexcept
    {
        return x >= 0 && y >= 0 && x < width() && y < height();
    }

    std::int64_t area() const;
    bool empty() const { return area() == 0; }

    const BitGrid& bits() const noexcept { return bits_; }

    friend bool operator==(const Mask& a, const Mask& b)
    {
        return a.width() == b.width() && a.height() == b.height() && (a.bits_ == b.bits_).all();
    }

private:
    BitGrid bits_;
};

struct BoxPrompt
{
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;
    int y_max = 0;

    friend bool operator==(const BoxPrompt&, const BoxPrompt&) = default;
};

struct Click
{
    int x = 0;
    int y = 0;
    bool positive = true;

    friend bool operator==(const Click&, const Click&) = default;
};

struct PointPrompt
{
    std::vector<Click> clicks;

    friend bool operator==(const PointPrompt&, const PointPrompt&) = default;
};

struct Offset
{
    int dx = 0;
    int dy = 0;

    friend bool operator==(const Offset&, const Offset&) = default;
};

/// 2|a∩b| / (|a|+|b|), with dice(empty, empty) = 1.
double dice(const Mask& a, const Mask& b);
inline double dice_loss(const Mask& a, const Mask& b) { return 1.0 - dice(a, b); }
/// |a∩b| / |a∪b|, with iou(empty, empty) = 1.
double iou(const Mask& a, const Mask& b);

Mask complement(const Mask& m);
/// Shift by (dx, dy); pixels pushed off the frame are dropped.
Mask translate(const Mask& m, Offset by);
/// Filled rasterization of a box on an empty width x height frame.
Mask rasterize(const BoxPrompt& box, int width, int height);

/// Foreground pixel centroid (x, y). Undefined for an empty mask.
Eigen::Vector2d centroid(const Mask& m);
/// Foreground pixels with at least one 4-neighbour outside the foreground.
std::int64_t boundary_length(const Mask& m);

BoxPrompt tight_box(const Mask& m);

/// n distinct foreground clicks. The first is the foreground pixel nearest the
/// centroid (row-major order breaks ties), the rest are uniform over the
/// remaining foreground.
PointPrompt sample_clicks(const Mask& m, int n, std::uint64_t seed);

/// Chamfer distance of every pixel to the nearest pixel of the opposite class
/// (orthogonal step 1, diagonal step sqrt 2). Boundary pixels get 1.
Eigen::ArrayXXd boundary_distance(const Mask& m);

inline constexpr double kCorruptionTolerance = 0.02;
inline constexpr int kCorruptionBisectionSteps = 30;

/// Translates gt by `drift`, then flips pixels near the translated boundary to
/// disagree with gt, with the flip level found by bisection so that the result
/// has Dice `target` against gt (within kCorruptionTolerance when target >= 0.05).
/// Throws InfeasibleTarget carrying the best Dice seen otherwise.
Mask corrupt_to_dice(const Mask& gt, double target, Offset drift, std::uint64_t seed);

/// PGM (P5, 0/255) for eyeballing masks.
void write_pgm(std::ostream& out, const Mask& m);
Mask read_pgm(std::istream& in);

/// Run lengths in row-major order, alternating background/foreground,
/// starting with a (possibly empty) background run.
std::vector<std::uint32_t> encode_runs(const Mask& m);
Mask decode_runs(int width, int height, std::span<const std::uint32_t> runs);

} // namespace reprompt
