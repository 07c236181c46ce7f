#include "crowdkd/review.hpp"

#include <stdexcept>

namespace crowdkd {

Var review_step(const Var& feature, const Var& prev_map, Network& net, const ReviewConfig& cfg) {
    const Tensor& f = feature.value();
    const Tensor& m = prev_map.value();
    if (f.rank() != 3) throw std::invalid_argument("review_step: feature must be {C,H,W}");
    if (m.rank() != 3 || m.dim(0) != 1) throw std::invalid_argument("review_step: map must be {1,h,w}");

    Var attention = prev_map;
    if (m.dim(1) != f.dim(1) || m.dim(2) != f.dim(2)) {
        attention = cfg.resize == ReviewConfig::Resize::bilinear
                        ? resize_bilinear(attention, f.dim(1), f.dim(2))
                        : resize_nearest(attention, f.dim(1), f.dim(2));
    }
    if (cfg.norm == ReviewConfig::Norm::minmax) attention = minmax_norm(attention);
    const Var refined = add(broadcast_mul(feature, attention), feature);
    return net.decode(refined);
}

std::vector<Var> review_forward(const Var& feature, Network& net, int rounds, const ReviewConfig& cfg) {
    if (rounds < 0) throw std::invalid_argument("review_forward: rounds must be >= 0");
    std::vector<Var> maps;
    maps.reserve(static_cast<std::size_t>(rounds) + 1);
    maps.push_back(net.decode(feature));
    for (int i = 1; i <= rounds; ++i) {
        maps.push_back(review_step(feature, maps.back(), net, cfg));
    }
    return maps;
}

Var review_loss(const std::vector<Var>& maps, const Var& ground_truth) {
    if (maps.empty()) throw std::invalid_argument("review_loss: no maps");
    Var total = constant(Tensor::scalar(0.0));
    for (const Var& m : maps) total = add(total, sum_sq_diff(m, ground_truth));
    return total;
}

double review_loss(const std::vector<Tensor>& maps, const Tensor& ground_truth) {
    std::vector<Var> vs;
    vs.reserve(maps.size());
    for (const Tensor& m : maps) vs.push_back(constant(m));
    return review_loss(vs, constant(ground_truth)).value().item();
}

ReviewWrapper::ReviewWrapper(Network& base, int rounds, ReviewConfig::Norm norm) : base_(&base) {
    if (rounds < 0) throw std::invalid_argument("review wrapper: rounds must be >= 0");
    cfg_.rounds = rounds;
    cfg_.norm = norm;
}

Var ReviewWrapper::forward(const Var& image) { return forward_all(image).back(); }

std::vector<Var> ReviewWrapper::forward_all(const Var& image) {
    const Encoded enc = base_->encode(image);
    return review_forward(enc.tail, *base_, cfg_.rounds, cfg_);
}

ReviewWrapper wrap_with_review(Network& model, int rounds, ReviewConfig::Norm norm) {
    if (!model.has_review_seam()) {
        throw std::runtime_error("wrap_with_review: model does not expose an encoder/decoder seam");
    }
    return ReviewWrapper(model, rounds, norm);
}

}  // namespace crowdkd
