#pragma once

#include "reprompt/error.hpp"
#include "reprompt/propagator.hpp"
#include "reprompt/synthgen.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace reprompt {

struct CostSpec
{
    /// Shared by every option, so it never changes a decision.
    double lambda_base = 0.0;
    double lambda_corr = 0.01;

    void validate() const;
    friend bool operator==(const CostSpec&, const CostSpec&) = default;
};

void to_json(nlohmann::json& j, const CostSpec& c);
void from_json(const nlohmann::json& j, CostSpec& c);

/// Option 0 accepts the initial propagation; option k requests a correction at
/// candidates[k - 1].
struct CostTable
{
    std::vector<int> candidates;
    double ell_0 = 0.0;
    Eigen::VectorXd ell_0k;
    double c_prop = 0.0;
    Eigen::VectorXd c_corr;

    Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(candidates.size()); }
    /// Cost of choosing frame `choice` (0 = no deferral).
    double cost_of(int choice) const;
    /// Index into candidates for a frame, or -1.
    Eigen::Index candidate_index(int frame) const;
};

/// c_prop = lambda_base + ell_0; c_corr(k) = lambda_base + lambda_corr + ell_0k(k).
CostTable make_cost_table(std::vector<int> candidates, double ell_0, Eigen::VectorXd ell_0k,
                          const CostSpec& spec);
/// Same segmentation errors, new prices.
CostTable reprice(const CostTable& table, const CostSpec& spec);

/// Mean over frames of 1 - dice(pred_t, gt_t).
double segmentation_error(const PropagationResult& result, const Clip& clip);

/// Propagates {p0} and {p0, p_k} for every candidate k and prices the outcomes.
CostTable build_cost_table(const Clip& clip, PromptKind kind, std::span<const int> candidates,
                           const CostSpec& spec, const PromptDynamics& dyn, std::uint64_t seed);

/// Same as build_cost_table, also handing back the initial propagation.
CostTable build_cost_table(const Clip& clip, PromptKind kind, std::span<const int> candidates,
                           const CostSpec& spec, const PromptDynamics& dyn, std::uint64_t seed,
                           PropagationResult& initial);

/// The discrete deferral loss: c_prop for choice 0, c_corr of the chosen frame otherwise.
double deferral_loss(int choice, const CostTable& table);

struct ComplementWeights
{
    double prop = 1.0;
    Eigen::VectorXd corr;
};

/// clamp(1 - c, 0, 1) elementwise.
ComplementWeights complement_costs(const CostTable& table);

void write_cost_csv(std::ostream& out, const std::string& clip_id, const CostTable& table);

// ---------------------------------------------------------------------------
// MAE surrogate. Scores d_k feed exp(-d_k); the no-deferral option has the
// fixed score 0. With Z = 1 + sum_k exp(-d_k), p_0 = 1/Z and p_k = exp(-d_k)/Z:
//
//   L = cbar_prop (1 - p_0) + sum_k cbar_k (1 - p_k)
//   dL/dd_k = p_k (cbar_k - (cbar_prop p_0 + sum_j cbar_j p_j))
//
// Exponentials are taken after shifting by min(0, min_k d_k).
// ---------------------------------------------------------------------------

/// Probabilities (p_0, p_1, ..., p_K) over the K+1 options.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1>
option_probabilities(const Eigen::MatrixBase<Derived>& scores)
{
    using Scalar = typename Derived::Scalar;
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    if (!scores.allFinite()) {
        throw Error("surrogate: scores must be finite");
    }
    const Eigen::Index k = scores.size();
    const Scalar shift = k > 0 ? std::min(Scalar(0), scores.minCoeff()) : Scalar(0);
    Vec p(k + 1);
    p(0) = std::exp(shift);
    p.tail(k) = (-(scores.array() - shift)).exp().matrix();
    return p / p.sum();
}

template <typename Derived>
typename Derived::Scalar surrogate_mae(const Eigen::MatrixBase<Derived>& scores,
                                       const ComplementWeights& w)
{
    using Scalar = typename Derived::Scalar;
    if (w.corr.size() != scores.size()) {
        throw DimensionMismatch("surrogate: weights and scores differ in length");
    }
    const auto p = option_probabilities(scores);
    Scalar loss = Scalar(w.prop) * (Scalar(1) - p(0));
    for (Eigen::Index k = 0; k < scores.size(); ++k) {
        loss += Scalar(w.corr(k)) * (Scalar(1) - p(k + 1));
    }
    return loss;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1>
surrogate_grad(const Eigen::MatrixBase<Derived>& scores, const ComplementWeights& w)
{
    using Scalar = typename Derived::Scalar;
    if (w.corr.size() != scores.size()) {
        throw DimensionMismatch("surrogate: weights and scores differ in length");
    }
    const auto p = option_probabilities(scores);
    const auto cbar = w.corr.template cast<Scalar>();
    const Scalar expected = Scalar(w.prop) * p(0) + cbar.dot(p.tail(scores.size()));
    return (p.tail(scores.size()).array() * (cbar.array() - expected)).matrix();
}

/// Index into the score vector chosen by the inference rule, or -1 for no
/// deferral. Defers unless every score is strictly positive; ties in the argmin
/// go to the lowest index.
template <typename Derived>
Eigen::Index decide_index(const Eigen::MatrixBase<Derived>& scores)
{
    if (scores.size() == 0) return -1;
    if (!scores.allFinite()) {
        throw Error("decide: scores must be finite");
    }
    Eigen::Index arg = 0;
    for (Eigen::Index k = 1; k < scores.size(); ++k) {
        if (scores(k) < scores(arg)) arg = k;
    }
    return scores(arg) > 0 ? -1 : arg;
}

/// Frame to correct, or 0 for no deferral.
template <typename Derived>
int decide(const Eigen::MatrixBase<Derived>& scores, std::span<const int> candidates)
{
    if (static_cast<std::size_t>(scores.size()) != candidates.size()) {
        throw DimensionMismatch("decide: scores and candidates differ in length");
    }
    const Eigen::Index i = decide_index(scores);
    return i < 0 ? 0 : candidates[static_cast<std::size_t>(i)];
}

} // namespace reprompt
