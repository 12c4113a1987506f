#include "reprompt/deferral.hpp"

#include <cstdio>
#include <ostream>

namespace reprompt {

void CostSpec::validate() const
{
    if (!(lambda_base >= 0.0) || !(lambda_corr >= 0.0)) {
        throw Error("cost spec: lambda_base and lambda_corr must be nonnegative");
    }
}

void to_json(nlohmann::json& j, const CostSpec& c)
{
    j = {{"lambda_base", c.lambda_base}, {"lambda_corr", c.lambda_corr}};
}

void from_json(const nlohmann::json& j, CostSpec& c)
{
    c = CostSpec{};
    c.lambda_base = j.value("lambda_base", c.lambda_base);
    c.lambda_corr = j.value("lambda_corr", c.lambda_corr);
}

Eigen::Index CostTable::candidate_index(int frame) const
{
    const auto it = std::find(candidates.begin(), candidates.end(), frame);
    return it == candidates.end() ? -1 : static_cast<Eigen::Index>(it - candidates.begin());
}

double CostTable::cost_of(int choice) const
{
    return deferral_loss(choice, *this);
}

CostTable make_cost_table(std::vector<int> candidates, double ell_0, Eigen::VectorXd ell_0k,
                          const CostSpec& spec)
{
    spec.validate();
    if (static_cast<Eigen::Index>(candidates.size()) != ell_0k.size()) {
        throw DimensionMismatch("cost table: candidates and ell_0k differ in length");
    }
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (candidates[i] < 1 || (i > 0 && candidates[i] <= candidates[i - 1])) {
            throw Error("cost table: candidates must be strictly increasing and >= 1");
        }
    }
    CostTable t;
    t.candidates = std::move(candidates);
    t.ell_0 = ell_0;
    t.ell_0k = std::move(ell_0k);
    t.c_prop = spec.lambda_base + t.ell_0;
    t.c_corr = (t.ell_0k.array() + spec.lambda_base + spec.lambda_corr).matrix();
    return t;
}

CostTable reprice(const CostTable& table, const CostSpec& spec)
{
    return make_cost_table(table.candidates, table.ell_0, table.ell_0k, spec);
}

double segmentation_error(const PropagationResult& result, const Clip& clip)
{
    if (result.pred_masks.size() != clip.gt_masks.size() || clip.gt_masks.empty()) {
        throw DimensionMismatch("segmentation_error: result length differs from clip length");
    }
    double sum = 0.0;
    for (std::size_t t = 0; t < clip.gt_masks.size(); ++t) {
        sum += dice_loss(result.pred_masks[t], clip.gt_masks[t]);
    }
    return sum / static_cast<double>(clip.gt_masks.size());
}

CostTable build_cost_table(const Clip& clip, PromptKind kind, std::span<const int> candidates,
                           const CostSpec& spec, const PromptDynamics& dyn, std::uint64_t seed,
                           PropagationResult& initial)
{
    for (int k : candidates) {
        if (k < 1 || k > clip.last_frame()) {
            throw Error("build_cost_table: candidate frame outside 1..T");
        }
    }
    const int first = 0;
    initial = propagate(clip, std::span<const int>(&first, 1), kind, dyn, seed);
    const double ell_0 = segmentation_error(initial, clip);

    Eigen::VectorXd ell_0k(static_cast<Eigen::Index>(candidates.size()));
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const int frames[2] = {0, candidates[i]};
        ell_0k(static_cast<Eigen::Index>(i)) =
            segmentation_error(propagate(clip, frames, kind, dyn, seed), clip);
    }
    return make_cost_table(std::vector<int>(candidates.begin(), candidates.end()), ell_0,
                           std::move(ell_0k), spec);
}

CostTable build_cost_table(const Clip& clip, PromptKind kind, std::span<const int> candidates,
                           const CostSpec& spec, const PromptDynamics& dyn, std::uint64_t seed)
{
    PropagationResult initial;
    return build_cost_table(clip, kind, candidates, spec, dyn, seed, initial);
}

double deferral_loss(int choice, const CostTable& table)
{
    if (choice == 0) return table.c_prop;
    const Eigen::Index i = table.candidate_index(choice);
    if (i < 0) {
        throw Error("deferral_loss: frame " + std::to_string(choice) + " is not a candidate");
    }
    return table.c_corr(i);
}

ComplementWeights complement_costs(const CostTable& table)
{
    ComplementWeights w;
    w.prop = std::clamp(1.0 - table.c_prop, 0.0, 1.0);
    w.corr = (1.0 - table.c_corr.array()).min(1.0).max(0.0).matrix();
    return w;
}

void write_cost_csv(std::ostream& out, const std::string& clip_id, const CostTable& table)
{
    char line[256];
    for (Eigen::Index i = 0; i < table.size(); ++i) {
        std::snprintf(line, sizeof line, "%s,%d,%.17g,%.17g,%.17g,%.17g\n", clip_id.c_str(),
                      table.candidates[static_cast<std::size_t>(i)], table.ell_0, table.ell_0k(i),
                      table.c_prop, table.c_corr(i));
        out << line;
    }
}

} // namespace reprompt
