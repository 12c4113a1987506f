#include "reprompt/mask.hpp"

#include "reprompt/error.hpp"
#include "reprompt/random.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace reprompt {

namespace {

void require_same_shape(const Mask& a, const Mask& b)
{
    if (a.width() != b.width() || a.height() != b.height()) {
        std::ostringstream os;
        os << "mask dimensions differ: " << a.width() << "x" << a.height() << " vs "
           << b.width() << "x" << b.height();
        throw DimensionMismatch(os.str());
    }
}

double dice_from_counts(std::int64_t intersection, std::int64_t sum)
{
    return sum == 0 ? 1.0 : 2.0 * static_cast<double>(intersection) / static_cast<double>(sum);
}

// Two-pass chamfer transform: distance to the nearest pixel where `seed` is set.
Eigen::ArrayXXd chamfer_to(const BitGrid& seed, bool target)
{
    const Eigen::Index h = seed.rows();
    const Eigen::Index w = seed.cols();
    constexpr double inf = std::numeric_limits<double>::infinity();
    const double diag = std::numbers::sqrt2;

    Eigen::ArrayXXd d(h, w);
    for (Eigen::Index y = 0; y < h; ++y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            d(y, x) = (seed(y, x) != 0) == target ? 0.0 : inf;
        }
    }
    for (Eigen::Index y = 0; y < h; ++y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            double v = d(y, x);
            if (x > 0) v = std::min(v, d(y, x - 1) + 1.0);
            if (y > 0) {
                v = std::min(v, d(y - 1, x) + 1.0);
                if (x > 0) v = std::min(v, d(y - 1, x - 1) + diag);
                if (x + 1 < w) v = std::min(v, d(y - 1, x + 1) + diag);
            }
            d(y, x) = v;
        }
    }
    for (Eigen::Index y = h - 1; y >= 0; --y) {
        for (Eigen::Index x = w - 1; x >= 0; --x) {
            double v = d(y, x);
            if (x + 1 < w) v = std::min(v, d(y, x + 1) + 1.0);
            if (y + 1 < h) {
                v = std::min(v, d(y + 1, x) + 1.0);
                if (x + 1 < w) v = std::min(v, d(y + 1, x + 1) + diag);
                if (x > 0) v = std::min(v, d(y + 1, x - 1) + diag);
            }
            d(y, x) = v;
        }
    }
    return d;
}

} // namespace

Mask::Mask(int width, int height)
{
    if (width <= 0 || height <= 0) {
        throw Error("mask dimensions must be positive");
    }
    bits_ = BitGrid::Zero(height, width);
}

Mask::Mask(BitGrid bits) : bits_(std::move(bits))
{
    if (bits_.rows() <= 0 || bits_.cols() <= 0) {
        throw Error("mask dimensions must be positive");
    }
    if ((bits_ > 1).any()) {
        throw Error("mask values must be 0 or 1");
    }
}

std::int64_t Mask::area() const
{
    return bits_.cast<std::int64_t>().sum();
}

double dice(const Mask& a, const Mask& b)
{
    require_same_shape(a, b);
    const auto ai = a.bits().cast<std::int64_t>();
    const auto bi = b.bits().cast<std::int64_t>();
    return dice_from_counts((ai * bi).sum(), ai.sum() + bi.sum());
}

double iou(const Mask& a, const Mask& b)
{
    require_same_shape(a, b);
    const auto ai = a.bits().cast<std::int64_t>();
    const auto bi = b.bits().cast<std::int64_t>();
    const std::int64_t inter = (ai * bi).sum();
    const std::int64_t uni = ai.sum() + bi.sum() - inter;
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Mask complement(const Mask& m)
{
    return Mask(BitGrid(1 - m.bits()));
}

Mask translate(const Mask& m, Offset by)
{
    Mask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (m(x, y) && out.contains(x + by.dx, y + by.dy)) {
                out.set(x + by.dx, y + by.dy, true);
            }
        }
    }
    return out;
}

Mask rasterize(const BoxPrompt& box, int width, int height)
{
    Mask out(width, height);
    for (int y = std::max(0, box.y_min); y <= std::min(height - 1, box.y_max); ++y) {
        for (int x = std::max(0, box.x_min); x <= std::min(width - 1, box.x_max); ++x) {
            out.set(x, y, true);
        }
    }
    return out;
}

Eigen::Vector2d centroid(const Mask& m)
{
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    std::int64_t n = 0;
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (m(x, y)) {
                sum += Eigen::Vector2d(x, y);
                ++n;
            }
        }
    }
    return n > 0 ? Eigen::Vector2d(sum / static_cast<double>(n)) : sum;
}

std::int64_t boundary_length(const Mask& m)
{
    std::int64_t n = 0;
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (!m(x, y)) continue;
            const bool inner = m.contains(x - 1, y) && m(x - 1, y) && m.contains(x + 1, y) &&
                               m(x + 1, y) && m.contains(x, y - 1) && m(x, y - 1) &&
                               m.contains(x, y + 1) && m(x, y + 1);
            if (!inner) ++n;
        }
    }
    return n;
}

BoxPrompt tight_box(const Mask& m)
{
    BoxPrompt box{m.width(), m.height(), -1, -1};
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (!m(x, y)) continue;
            box.x_min = std::min(box.x_min, x);
            box.y_min = std::min(box.y_min, y);
            box.x_max = std::max(box.x_max, x);
            box.y_max = std::max(box.y_max, y);
        }
    }
    if (box.x_max < 0) {
        throw Error("tight_box: mask has no foreground");
    }
    return box;
}

PointPrompt sample_clicks(const Mask& m, int n, std::uint64_t seed)
{
    if (n < 1) {
        throw Error("sample_clicks: click count must be positive");
    }
    std::vector<Click> fg;
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (m(x, y)) fg.push_back({x, y, true});
        }
    }
    if (static_cast<int>(fg.size()) < n) {
        throw Error("sample_clicks: fewer foreground pixels than requested clicks");
    }

    const Eigen::Vector2d c = centroid(m);
    std::size_t nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < fg.size(); ++i) {
        const double d = (Eigen::Vector2d(fg[i].x, fg[i].y) - c).squaredNorm();
        if (d < best) {
            best = d;
            nearest = i;
        }
    }
    std::swap(fg[0], fg[nearest]);

    // Partial Fisher-Yates over fg[1..].
    Rng rng(seed);
    for (int i = 1; i < n; ++i) {
        const auto j = static_cast<std::size_t>(i) + rng.below(fg.size() - static_cast<std::size_t>(i));
        std::swap(fg[static_cast<std::size_t>(i)], fg[j]);
    }
    fg.resize(static_cast<std::size_t>(n));
    return PointPrompt{std::move(fg)};
}

Eigen::ArrayXXd boundary_distance(const Mask& m)
{
    const Eigen::ArrayXXd to_fg = chamfer_to(m.bits(), true);
    const Eigen::ArrayXXd to_bg = chamfer_to(m.bits(), false);
    Eigen::ArrayXXd d(m.height(), m.width());
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            d(y, x) = m(x, y) ? to_bg(y, x) : to_fg(y, x);
        }
    }
    return d;
}

Mask corrupt_to_dice(const Mask& gt, double target, Offset drift, std::uint64_t seed)
{
    if (!(target >= 0.0 && target <= 1.0)) {
        throw Error("corrupt_to_dice: target must lie in [0, 1]");
    }
    if (gt.empty()) {
        throw Error("corrupt_to_dice: ground truth has no foreground");
    }
    if (target == 1.0 && drift == Offset{}) {
        return gt;
    }

    const Mask shifted = translate(gt, drift);
    Eigen::ArrayXXd dist = boundary_distance(shifted.empty() ? gt : shifted);
    const double finite_cap = static_cast<double>(gt.width() + gt.height());
    dist = dist.isFinite().select(dist, finite_cap);

    // A pixel flips to the wrong label once the flip level p reaches its
    // threshold. Thresholds grow with distance from the drifted boundary and are
    // jittered by a seeded uniform over a band of `softness` pixels, so the
    // flipped set is nested in p and Dice is non-increasing in p.
    constexpr double softness = 2.0;
    const double span = dist.maxCoeff() - 1.0 + softness;
    Rng rng(seed);
    const Eigen::Index n = gt.pixel_count();
    std::vector<double> threshold(static_cast<std::size_t>(n));
    std::vector<std::uint8_t> truth(static_cast<std::size_t>(n));
    std::vector<std::uint8_t> start(static_cast<std::size_t>(n));
    for (int y = 0, i = 0; y < gt.height(); ++y) {
        for (int x = 0; x < gt.width(); ++x, ++i) {
            threshold[i] = (dist(y, x) - 1.0 + softness * rng.uniform()) / span;
            truth[i] = gt.bits()(y, x);
            start[i] = shifted.bits()(y, x);
        }
    }
    const std::int64_t gt_area = gt.area();

    auto dice_at = [&](double p) {
        std::int64_t inter = 0;
        std::int64_t pred = 0;
        for (std::size_t i = 0; i < threshold.size(); ++i) {
            const std::uint8_t v = threshold[i] <= p ? std::uint8_t(1 - truth[i]) : start[i];
            pred += v;
            inter += v & truth[i];
        }
        return dice_from_counts(inter, pred + gt_area);
    };

    double lo = 0.0;
    double hi = 1.0;
    const double d_lo = dice_at(lo);
    double best_p = lo;
    double best = d_lo;
    if (d_lo > target) {
        for (int step = 0; step < kCorruptionBisectionSteps; ++step) {
            const double mid = 0.5 * (lo + hi);
            if (dice_at(mid) >= target) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        const double dl = dice_at(lo);
        const double dh = dice_at(hi);
        best_p = std::abs(dl - target) <= std::abs(dh - target) ? lo : hi;
        best = best_p == lo ? dl : dh;
    }

    if (target >= 0.05 && std::abs(best - target) > kCorruptionTolerance) {
        std::ostringstream os;
        os << "corrupt_to_dice: target " << target << " unreachable, best dice " << best;
        throw InfeasibleTarget(os.str(), best);
    }

    BitGrid out(gt.height(), gt.width());
    for (int y = 0, i = 0; y < gt.height(); ++y) {
        for (int x = 0; x < gt.width(); ++x, ++i) {
            out(y, x) = threshold[i] <= best_p ? std::uint8_t(1 - truth[i]) : start[i];
        }
    }
    return Mask(std::move(out));
}

void write_pgm(std::ostream& out, const Mask& m)
{
    out << "P5\n" << m.width() << ' ' << m.height() << "\n255\n";
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            out.put(m(x, y) ? static_cast<char>(255) : 0);
        }
    }
}

Mask read_pgm(std::istream& in)
{
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P5" || !in || maxval != 255) {
        throw Error("read_pgm: expected binary P5 with maxval 255");
    }
    in.get();
    Mask m(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int c = in.get();
            if (c == std::char_traits<char>::eof()) {
                throw Error("read_pgm: truncated pixel data");
            }
            if (c != 0 && c != 255) {
                throw Error("read_pgm: pixel values must be 0 or 255");
            }
            m.set(x, y, c == 255);
        }
    }
    return m;
}

std::vector<std::uint32_t> encode_runs(const Mask& m)
{
    std::vector<std::uint32_t> runs;
    std::uint8_t current = 0;
    std::uint32_t length = 0;
    const BitGrid& bits = m.bits();
    for (Eigen::Index i = 0; i < bits.size(); ++i) {
        const std::uint8_t v = bits.data()[i];
        if (v != current) {
            runs.push_back(length);
            current = v;
            length = 0;
        }
        ++length;
    }
    runs.push_back(length);
    return runs;
}

Mask decode_runs(int width, int height, std::span<const std::uint32_t> runs)
{
    BitGrid bits(height, width);
    const std::uint64_t total = std::accumulate(runs.begin(), runs.end(), std::uint64_t{0});
    if (total != static_cast<std::uint64_t>(bits.size())) {
        throw Error("decode_runs: run lengths do not cover the frame");
    }
    Eigen::Index pos = 0;
    std::uint8_t value = 0;
    for (std::uint32_t run : runs) {
        std::fill_n(bits.data() + pos, run, value);
        pos += run;
        value ^= 1;
    }
    return Mask(std::move(bits));
}

} // namespace reprompt
