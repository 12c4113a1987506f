#include "reprompt/policy.hpp"

#include "reprompt/binary_io.hpp"
#include "reprompt/error.hpp"
#include "reprompt/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace reprompt {

namespace {

constexpr char kCheckpointMagic[5] = "RPCK";
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint64_t kInitStream = 0x696e6974ull; // "init"

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& m, std::span<const int> idx)
{
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
        out.col(static_cast<Eigen::Index>(j)) = m.col(idx[j]);
    }
    return out;
}

std::vector<int> iota_indices(Eigen::Index n)
{
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

void require_aligned(std::span<const TrainingSample> samples)
{
    if (samples.empty()) {
        throw Error("train: dataset is empty");
    }
    const auto& frames = samples.front().features.frames;
    const auto& cands = samples.front().table.candidates;
    if (cands != candidate_frames(frames)) {
        throw Error("train: cost table candidates differ from the sampled frames");
    }
    for (const TrainingSample& s : samples) {
        if (s.features.frames != frames || s.table.candidates != cands) {
            throw Error("train: samples use different candidate sets");
        }
    }
}

Eigen::MatrixXd feature_matrix(std::span<const TrainingSample> samples)
{
    const Eigen::Index dim = samples.front().features.values.size();
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(samples.size()), dim);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        rows.row(static_cast<Eigen::Index>(i)) = samples[i].features.flat().transpose();
    }
    return rows;
}

nlohmann::json vector_json(const Eigen::VectorXd& v)
{
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd json_vector(const nlohmann::json& j)
{
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

} // namespace

std::vector<int> sample_frames(int frame_count, int n)
{
    if (n < 2 || n > frame_count) {
        throw Error("sample_frames: need 2 <= |J| <= frame count");
    }
    std::vector<int> frames(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        frames[static_cast<std::size_t>(i)] =
            static_cast<int>((static_cast<std::int64_t>(i) * frame_count) / n);
    }
    return frames;
}

std::vector<int> candidate_frames(std::span<const int> sampled)
{
    std::vector<int> c;
    for (int f : sampled) {
        if (f != 0) c.push_back(f);
    }
    return c;
}

Eigen::VectorXd FrameFeatures::flat() const
{
    Eigen::VectorXd out(values.size());
    Eigen::Index i = 0;
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        for (Eigen::Index c = 0; c < values.cols(); ++c) {
            out(i++) = values(r, c);
        }
    }
    return out;
}

FrameFeatures extract_features(const Clip& clip, const PropagationResult& result,
                               std::span<const int> frames)
{
    if (frames.size() < 2 || frames.front() != 0) {
        throw Error("extract_features: need at least two sampled frames starting at 0");
    }
    if (result.pred_masks.size() != clip.gt_masks.size()) {
        throw DimensionMismatch("extract_features: result length differs from clip length");
    }
    const double pixels = static_cast<double>(clip.width) * clip.height;
    const double diagonal = std::hypot(clip.width, clip.height);
    const double last = std::max(1, clip.last_frame());

    FrameFeatures f;
    f.frames.assign(frames.begin(), frames.end());
    f.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(frames.size()), kFeaturesPerFrame);
    const Mask* prev = nullptr;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const int k = frames[i];
        if (k < 0 || k > clip.last_frame() || (i > 0 && k <= frames[i - 1])) {
            throw Error("extract_features: sampled frames must be increasing and in range");
        }
        const Mask& m = result.pred_masks[static_cast<std::size_t>(k)];
        const auto row = static_cast<Eigen::Index>(i);
        const auto area = static_cast<double>(m.area());
        f.values(row, 5) = k / last;
        if (area > 0) {
            f.values(row, 1) = area / pixels;
            f.values(row, 3) = static_cast<double>(boundary_length(m)) / area;
            if (prev == nullptr) {
                f.values(row, 0) = 1.0;
                f.values(row, 2) = 1.0;
            } else {
                f.values(row, 0) = iou(m, *prev);
                const auto prev_area = static_cast<double>(prev->area());
                if (prev_area > 0) {
                    f.values(row, 2) = area / prev_area;
                    f.values(row, 4) = (centroid(m) - centroid(*prev)).norm() / diagonal;
                }
            }
        }
        prev = &m;
    }
    return f;
}

Normalizer Normalizer::fit(const Eigen::MatrixXd& samples)
{
    if (samples.rows() == 0) {
        throw Error("normalizer: no samples");
    }
    Normalizer n;
    n.mean = samples.colwise().mean().transpose();
    const Eigen::MatrixXd centered = samples.rowwise() - n.mean.transpose();
    n.scale = (centered.array().square().colwise().sum() / static_cast<double>(samples.rows()))
                  .sqrt()
                  .transpose();
    for (Eigen::Index i = 0; i < n.scale.size(); ++i) {
        if (!(n.scale(i) > 1e-12)) n.scale(i) = 1.0;
    }
    return n;
}

Eigen::VectorXd Normalizer::apply(const Eigen::VectorXd& x) const
{
    if (x.size() != mean.size()) {
        throw DimensionMismatch("normalizer: feature length mismatch");
    }
    return ((x - mean).array() / scale.array()).matrix();
}

Eigen::MatrixXd Normalizer::apply_rows(const Eigen::MatrixXd& samples) const
{
    if (samples.cols() != mean.size()) {
        throw DimensionMismatch("normalizer: feature length mismatch");
    }
    return (samples.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

Mlp::Mlp(std::vector<int> sizes, std::uint64_t seed) : sizes_(std::move(sizes))
{
    if (sizes_.size() < 2) {
        throw Error("mlp: need at least an input and an output size");
    }
    for (int s : sizes_) {
        if (s < 1) throw Error("mlp: layer sizes must be positive");
    }
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        const int in = sizes_[l], out = sizes_[l + 1];
        const double limit = std::sqrt(6.0 / (in + out));
        Layer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
        for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
            for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
                layer.weight(i, j) = rng.uniform(-limit, limit);
            }
        }
        layers_.push_back(std::move(layer));
    }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const
{
    if (layers_.empty()) throw Error("mlp: network has no layers");
    if (x.rows() != inputs()) {
        throw DimensionMismatch("mlp: expected " + std::to_string(inputs()) + " inputs, got " +
                                std::to_string(x.rows()));
    }
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Eigen::MatrixXd z = (layers_[l].weight * a).colwise() + layers_[l].bias;
        a = l + 1 < layers_.size() ? Eigen::MatrixXd(z.array().tanh()) : std::move(z);
    }
    return a;
}

Eigen::VectorXd Mlp::backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& grad_out) const
{
    if (x.rows() != inputs()) throw DimensionMismatch("mlp: input length mismatch");
    if (grad_out.rows() != outputs() || grad_out.cols() != x.cols()) {
        throw DimensionMismatch("mlp: output gradient shape mismatch");
    }
    std::vector<Eigen::MatrixXd> acts{x};
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Eigen::MatrixXd z = (layers_[l].weight * acts.back()).colwise() + layers_[l].bias;
        acts.push_back(l + 1 < layers_.size() ? Eigen::MatrixXd(z.array().tanh()) : std::move(z));
    }

    Eigen::VectorXd grad(parameter_count());
    std::vector<Eigen::Index> offsets;
    Eigen::Index off = 0;
    for (const Layer& layer : layers_) {
        offsets.push_back(off);
        off += layer.weight.size() + layer.bias.size();
    }

    Eigen::MatrixXd delta = grad_out;
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const Layer& layer = layers_[l];
        const Eigen::MatrixXd gw = delta * acts[l].transpose();
        grad.segment(offsets[l], gw.size()) = Eigen::Map<const Eigen::VectorXd>(gw.data(), gw.size());
        grad.segment(offsets[l] + gw.size(), layer.bias.size()) = delta.rowwise().sum();
        if (l > 0) {
            delta = ((layer.weight.transpose() * delta).array() * (1.0 - acts[l].array().square()))
                        .matrix();
        }
    }
    return grad;
}

Eigen::Index Mlp::parameter_count() const
{
    Eigen::Index n = 0;
    for (const Layer& layer : layers_) n += layer.weight.size() + layer.bias.size();
    return n;
}

Eigen::VectorXd Mlp::parameters() const
{
    Eigen::VectorXd p(parameter_count());
    Eigen::Index off = 0;
    for (const Layer& layer : layers_) {
        p.segment(off, layer.weight.size()) =
            Eigen::Map<const Eigen::VectorXd>(layer.weight.data(), layer.weight.size());
        off += layer.weight.size();
        p.segment(off, layer.bias.size()) = layer.bias;
        off += layer.bias.size();
    }
    return p;
}

void Mlp::set_parameters(const Eigen::VectorXd& p)
{
    if (p.size() != parameter_count()) {
        throw DimensionMismatch("mlp: parameter vector length mismatch");
    }
    Eigen::Index off = 0;
    for (Layer& layer : layers_) {
        Eigen::Map<Eigen::VectorXd>(layer.weight.data(), layer.weight.size()) =
            p.segment(off, layer.weight.size());
        off += layer.weight.size();
        layer.bias = p.segment(off, layer.bias.size());
        off += layer.bias.size();
    }
}

void TrainConfig::validate() const
{
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw Error("train config: learning_rate must be a finite nonnegative number");
    }
    if (batch_size < 1) throw Error("train config: batch_size must be >= 1");
    if (epochs < 1) throw Error("train config: epochs must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
        throw Error("train config: Adam betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw Error("train config: epsilon must be positive");
    for (int h : hidden) {
        if (h < 1) throw Error("train config: hidden sizes must be positive");
    }
}

void to_json(nlohmann::json& j, const TrainConfig& c)
{
    j = {{"learning_rate", c.learning_rate},
         {"batch_size", c.batch_size},
         {"epochs", c.epochs},
         {"beta1", c.beta1},
         {"beta2", c.beta2},
         {"epsilon", c.epsilon},
         {"hidden", c.hidden},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c)
{
    c = TrainConfig{};
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.hidden = j.value("hidden", c.hidden);
    c.seed = j.value("seed", c.seed);
}

Adam::Adam(const TrainConfig& cfg, Eigen::Index n)
    : lr_(cfg.learning_rate), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.epsilon),
      m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n))
{
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad)
{
    beta1_t_ *= beta1_;
    beta2_t_ *= beta2_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
    const double a = lr_ / (1.0 - beta1_t_);
    const double b = 1.0 / (1.0 - beta2_t_);
    params.array() -= a * m_.array() / ((v_.array() * b).sqrt() + eps_);
}

std::vector<double> fit(Mlp& net, const Eigen::MatrixXd& inputs, const BatchObjective& objective,
                        const TrainConfig& cfg)
{
    cfg.validate();
    const Eigen::Index n = inputs.cols();
    if (n == 0) throw Error("fit: no training samples");
    Adam adam(cfg, net.parameter_count());
    Eigen::VectorXd params = net.parameters();
    const std::vector<int> all = iota_indices(n);
    std::vector<int> order = all;
    std::vector<double> curve;
    curve.reserve(static_cast<std::size_t>(cfg.epochs));
    Eigen::MatrixXd grad_out;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::copy(all.begin(), all.end(), order.begin());
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.below(i)]);
        }
        int batch = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const std::span<const int> idx(order.data() + start, stop - start);
            const Eigen::MatrixXd x = gather_columns(inputs, idx);
            const double loss = objective(net.forward(x), idx, grad_out);
            const Eigen::VectorXd g = net.backward(x, grad_out);
            if (!std::isfinite(loss) || !g.allFinite()) {
                std::ostringstream os;
                os << "training diverged: non-finite loss or gradient at epoch " << epoch << ", batch "
                   << batch << " (loss " << loss << ")";
                throw Error(os.str());
            }
            adam.step(params, g);
            net.set_parameters(params);
        }
        const double full = objective(net.forward(inputs), all, grad_out);
        if (!std::isfinite(full)) {
            throw Error("training diverged: non-finite loss after epoch " + std::to_string(epoch));
        }
        curve.push_back(full);
    }
    return curve;
}

Eigen::VectorXd PolicyModel::scores(const FrameFeatures& features) const
{
    if (features.frames != frames) {
        throw DimensionMismatch("policy: features were sampled on different frames");
    }
    return net.forward(normalizer.apply(features.flat()));
}

int PolicyModel::decide(const FrameFeatures& features) const
{
    return reprompt::decide(scores(features), candidates);
}

TrainResult train(std::span<const TrainingSample> samples, const TrainConfig& cfg)
{
    cfg.validate();
    require_aligned(samples);

    TrainResult out;
    PolicyModel& model = out.model;
    model.frames = samples.front().features.frames;
    model.candidates = samples.front().table.candidates;
    model.config = cfg;
    const Eigen::MatrixXd rows = feature_matrix(samples);
    model.normalizer = Normalizer::fit(rows);
    const Eigen::MatrixXd inputs = model.normalizer.apply_rows(rows).transpose();

    std::vector<int> sizes{static_cast<int>(inputs.rows())};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(static_cast<int>(model.candidates.size()));
    model.net = Mlp(sizes, derive_seed(cfg.seed, kInitStream));
    // Start with no-defer holding half the probability mass (p_0 = 1/2 at
    // zero hidden output); from the uniform start a shared "defer" direction
    // saturates the softmax before clip-specific signal is learned.
    model.net.layers().back().bias.setConstant(std::log(static_cast<double>(model.candidates.size())));

    std::vector<ComplementWeights> weights;
    weights.reserve(samples.size());
    for (const TrainingSample& s : samples) weights.push_back(complement_costs(s.table));

    const BatchObjective objective = [&](const Eigen::MatrixXd& outputs, std::span<const int> idx,
                                         Eigen::MatrixXd& grad) {
        const double inv = 1.0 / static_cast<double>(idx.size());
        grad.resize(outputs.rows(), outputs.cols());
        double loss = 0.0;
        for (std::size_t j = 0; j < idx.size(); ++j) {
            const auto col = static_cast<Eigen::Index>(j);
            const ComplementWeights& w = weights[static_cast<std::size_t>(idx[j])];
            loss += surrogate_mae(outputs.col(col), w);
            grad.col(col) = inv * surrogate_grad(outputs.col(col), w);
        }
        return loss * inv;
    };
    out.loss_curve = fit(model.net, inputs, objective, cfg);
    if (out.loss_curve.back() > out.loss_curve.front()) {
        throw Error("train: final-epoch loss exceeds first-epoch loss");
    }
    return out;
}

double mean_surrogate(const PolicyModel& model, std::span<const TrainingSample> samples)
{
    if (samples.empty()) return 0.0;
    double sum = 0.0;
    for (const TrainingSample& s : samples) {
        sum += surrogate_mae(model.scores(s.features), complement_costs(s.table));
    }
    return sum / static_cast<double>(samples.size());
}

double grad_check(const PolicyModel& model, const TrainingSample& sample, double h)
{
    if (!(h > 0.0)) throw Error("grad_check: step must be positive");
    const Eigen::MatrixXd x = model.normalizer.apply(sample.features.flat());
    const ComplementWeights w = complement_costs(sample.table);
    Mlp net = model.net;

    const Eigen::MatrixXd out = net.forward(x);
    const Eigen::MatrixXd grad_out = surrogate_grad(out.col(0), w);
    const Eigen::VectorXd analytic = net.backward(x, grad_out);

    const Eigen::VectorXd p0 = net.parameters();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < p0.size(); ++i) {
        Eigen::VectorXd p = p0;
        p(i) = p0(i) + h;
        net.set_parameters(p);
        const double up = surrogate_mae(net.forward(x).col(0), w);
        p(i) = p0(i) - h;
        net.set_parameters(p);
        const double down = surrogate_mae(net.forward(x).col(0), w);
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(analytic(i)), std::abs(numeric), 1e-4});
        worst = std::max(worst, std::abs(analytic(i) - numeric) / denom);
    }
    return worst;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck)
{
    nlohmann::json blocks = nlohmann::json::array();
    for (std::size_t l = 0; l < ck.net.layers().size(); ++l) {
        const Layer& layer = ck.net.layers()[l];
        blocks.push_back({{"name", "layer" + std::to_string(l) + ".weight"},
                          {"rows", layer.weight.rows()},
                          {"cols", layer.weight.cols()},
                          {"order", "column-major"}});
        blocks.push_back({{"name", "layer" + std::to_string(l) + ".bias"},
                          {"rows", layer.bias.size()},
                          {"cols", 1},
                          {"order", "column-major"}});
    }
    nlohmann::json header = {{"format", "reprompt-checkpoint"},
                             {"version", kCheckpointVersion},
                             {"kind", ck.kind},
                             {"layer_sizes", ck.net.sizes()},
                             {"activation", "tanh"},
                             {"frames", ck.frames},
                             {"candidates", ck.candidates},
                             {"normalizer", {{"mean", vector_json(ck.normalizer.mean)},
                                             {"std", vector_json(ck.normalizer.scale)}}},
                             {"train_config", ck.config},
                             {"seed", ck.config.seed},
                             {"parameter_count", ck.net.parameter_count()},
                             {"blocks", blocks},
                             {"dtype", "f64-le"},
                             {"extra", ck.extra}};

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    detail::put_header(out, kCheckpointMagic, kCheckpointVersion, header.dump());
    const Eigen::VectorXd p = ck.net.parameters();
    for (Eigen::Index i = 0; i < p.size(); ++i) detail::put_le<double>(out, p(i));
    if (!out) throw Error("write failed: " + path.string());
}

nlohmann::json read_checkpoint_header(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact(path.string(), "reprompt train");
    return nlohmann::json::parse(detail::get_header(in, kCheckpointMagic, kCheckpointVersion));
}

Checkpoint read_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact(path.string(), "reprompt train");
    const auto header = nlohmann::json::parse(detail::get_header(in, kCheckpointMagic, kCheckpointVersion));

    Checkpoint ck;
    ck.kind = header.at("kind").get<std::string>();
    ck.frames = header.at("frames").get<std::vector<int>>();
    ck.candidates = header.at("candidates").get<std::vector<int>>();
    ck.normalizer.mean = json_vector(header.at("normalizer").at("mean"));
    ck.normalizer.scale = json_vector(header.at("normalizer").at("std"));
    ck.config = header.at("train_config").get<TrainConfig>();
    ck.extra = header.value("extra", nlohmann::json::object());
    ck.net = Mlp(header.at("layer_sizes").get<std::vector<int>>(), 0);
    Eigen::VectorXd p(ck.net.parameter_count());
    if (header.at("parameter_count").get<Eigen::Index>() != p.size()) {
        throw Error("checkpoint: parameter count does not match layer sizes");
    }
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = detail::get_le<double>(in);
    ck.net.set_parameters(p);
    return ck;
}

Checkpoint to_checkpoint(const PolicyModel& model, nlohmann::json extra)
{
    return {"policy", model.frames, model.candidates, model.normalizer, model.net, model.config, std::move(extra)};
}

PolicyModel policy_from_checkpoint(const Checkpoint& ck)
{
    if (ck.kind != "policy") {
        throw Error("checkpoint holds a " + ck.kind + " model, expected policy");
    }
    return {ck.frames, ck.candidates, ck.normalizer, ck.net, ck.config};
}

} // namespace reprompt
