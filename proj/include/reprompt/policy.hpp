#pragma once

#include "reprompt/deferral.hpp"
#include "reprompt/propagator.hpp"
#include "reprompt/synthgen.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace reprompt {

/// |J| evenly spaced frames J_i = floor(i * frame_count / n), i = 0..n-1. Always
/// starts at frame 0 and never reaches past the last frame.
std::vector<int> sample_frames(int frame_count, int n);

/// The sampled frames other than frame 0: the deferral options.
std::vector<int> candidate_frames(std::span<const int> sampled);

inline constexpr int kFeaturesPerFrame = 6;

/// Per sampled frame, in column order: temporal IoU with the previous sampled
/// prediction, area / pixel count, area change ratio, boundary / area,
/// centroid displacement / frame diagonal, position k / T.
struct FrameFeatures
{
    std::vector<int> frames;
    Eigen::MatrixXd values; // |J| x 6

    /// Row-major flattening: frame 0's six features first.
    Eigen::VectorXd flat() const;
};

FrameFeatures extract_features(const Clip& clip, const PropagationResult& result,
                               std::span<const int> frames);

/// Per-column standardization frozen from a training matrix (one sample per row).
struct Normalizer
{
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    static Normalizer fit(const Eigen::MatrixXd& samples);
    Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
    Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& samples) const;
};

struct Layer
{
    Eigen::MatrixXd weight; // out x in
    Eigen::VectorXd bias;
};

/// Fully connected network, tanh on hidden layers, affine output. Batches are
/// matrices with one sample per column.
class Mlp
{
public:
    Mlp() = default;
    /// Glorot-uniform weights, zero biases.
    Mlp(std::vector<int> sizes, std::uint64_t seed);

    const std::vector<int>& sizes() const noexcept { return sizes_; }
    int inputs() const { return sizes_.front(); }
    int outputs() const { return sizes_.back(); }

    Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
    /// Gradient of the loss with respect to every parameter, given dL/d(output)
    /// for the same batch. Laid out like parameters().
    Eigen::VectorXd backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& grad_out) const;

    Eigen::Index parameter_count() const;
    /// Per layer: weight (column-major), then bias.
    Eigen::VectorXd parameters() const;
    void set_parameters(const Eigen::VectorXd& p);

    std::vector<Layer>& layers() noexcept { return layers_; }
    const std::vector<Layer>& layers() const noexcept { return layers_; }

private:
    std::vector<int> sizes_;
    std::vector<Layer> layers_;
};

struct TrainConfig
{
    /// Reference setting for a pretrained video backbone is 1e-7; this network
    /// trains from scratch.
    double learning_rate = 1e-3;
    int batch_size = 16;
    int epochs = 1000;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::vector<int> hidden{32, 32};
    std::uint64_t seed = 0;

    void validate() const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

class Adam
{
public:
    Adam(const TrainConfig& cfg, Eigen::Index n);
    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

private:
    double lr_, beta1_, beta2_, eps_;
    Eigen::VectorXd m_, v_;
    double beta1_t_ = 1.0, beta2_t_ = 1.0;
};

/// Loss and dL/d(output) for a batch of network outputs (one column per
/// sample); indices select the samples in the batch.
using BatchObjective =
    std::function<double(const Eigen::MatrixXd& outputs, std::span<const int> indices, Eigen::MatrixXd& grad)>;

/// Mini-batch Adam over `inputs` (one sample per column). The objective must
/// return the batch *mean* loss. Returns the full-data loss after each epoch.
/// Shuffling for epoch e is seeded by derive_seed(cfg.seed, e).
std::vector<double> fit(Mlp& net, const Eigen::MatrixXd& inputs, const BatchObjective& objective,
                        const TrainConfig& cfg);

struct PolicyModel
{
    std::vector<int> frames;     // J
    std::vector<int> candidates; // J without frame 0
    Normalizer normalizer;
    Mlp net;
    TrainConfig config;

    Eigen::VectorXd scores(const FrameFeatures& features) const;
    /// 0 or the candidate frame to correct.
    int decide(const FrameFeatures& features) const;
};

struct TrainingSample
{
    FrameFeatures features;
    CostTable table;
};

struct TrainResult
{
    PolicyModel model;
    std::vector<double> loss_curve;
};

/// Minimizes the mean MAE surrogate. Throws if the loss goes non-finite or if
/// the last epoch ends above the first.
TrainResult train(std::span<const TrainingSample> samples, const TrainConfig& cfg);

/// Mean surrogate loss of a model over samples.
double mean_surrogate(const PolicyModel& model, std::span<const TrainingSample> samples);

/// Largest relative deviation between backprop and central differences over
/// every parameter, for one sample. The denominator has a 1e-4 floor.
double grad_check(const PolicyModel& model, const TrainingSample& sample, double h);

/// Network checkpoint shared by the policy and the quality regressor.
struct Checkpoint
{
    std::string kind; // "policy" or "quality"
    std::vector<int> frames;
    std::vector<int> candidates;
    Normalizer normalizer;
    Mlp net;
    TrainConfig config;
    nlohmann::json extra = nlohmann::json::object();
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::filesystem::path& path);
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

Checkpoint to_checkpoint(const PolicyModel& model, nlohmann::json extra = nlohmann::json::object());
PolicyModel policy_from_checkpoint(const Checkpoint& ck);

} // namespace reprompt
