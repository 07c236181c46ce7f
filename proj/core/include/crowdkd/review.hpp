#pragma once

#include <vector>

#include "crowdkd/arch.hpp"

namespace crowdkd {

struct ReviewConfig {
    enum class Norm { raw, minmax };
    enum class Resize { bilinear, nearest };

    int rounds = 2;
    Norm norm = Norm::raw;             // how the previous map is used as attention
    Resize resize = Resize::bilinear;  // map -> feature shape matching
};

/// One review round: the previous map (resized to the feature resolution if
/// needed) gates the feature, the gated and original features are summed,
/// and the shared decoder re-estimates the density map.
Var review_step(const Var& feature, const Var& prev_map, Network& net, const ReviewConfig& cfg = {});

/// [M_0, ..., M_p]; M_0 is the plain decode, each later map one review round.
std::vector<Var> review_forward(const Var& feature, Network& net, int rounds, const ReviewConfig& cfg = {});

/// Sum over rounds of the squared Frobenius distance to the ground truth.
Var review_loss(const std::vector<Var>& maps, const Var& ground_truth);
double review_loss(const std::vector<Tensor>& maps, const Tensor& ground_truth);

/// Runs the wrapped model's decoder `rounds` extra times through the review
/// recurrence. Shares the base model's parameters; owns none of its own.
class ReviewWrapper final : public Network {
public:
    ReviewWrapper(Network& base, int rounds, ReviewConfig::Norm norm = ReviewConfig::Norm::raw);

    Encoded encode(const Var& image) override { return base_->encode(image); }
    Var decode(const Var& feature) override { return base_->decode(feature); }
    Var forward(const Var& image) override;
    std::vector<Var> forward_all(const Var& image);

    ParamStore& params() override { return base_->params(); }
    ParamStore* aux_params() override { return base_->aux_params(); }
    int total_stride() const override { return base_->total_stride(); }

    int rounds() const { return cfg_.rounds; }
    Network& base() { return *base_; }

private:
    Network* base_;
    ReviewConfig cfg_;
};

/// Plug-and-play wrapping of any encoder-decoder model. The base model is
/// borrowed, not copied, so its parameter count is unchanged.
ReviewWrapper wrap_with_review(Network& model, int rounds,
                               ReviewConfig::Norm norm = ReviewConfig::Norm::raw);

}  // namespace crowdkd
