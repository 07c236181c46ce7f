#include "crowdkd/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace crowdkd {

Var ParamStore::create(const std::string& name, Tensor init, bool trainable) {
    Var v(std::move(init), trainable);
    adopt(name, v);
    return v;
}

void ParamStore::adopt(const std::string& name, Var param) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    entries_.push_back({name, std::move(param)});
}

Var ParamStore::find(const std::string& name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return e.var;
    }
    throw std::out_of_range("no parameter named " + name);
}

bool ParamStore::contains(const std::string& name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return true;
    }
    return false;
}

std::int64_t ParamStore::total_size() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) n += e.var.value().size();
    return n;
}

void ParamStore::set_requires_grad(bool on) {
    for (auto& e : entries_) e.var.set_requires_grad(on);
}

void ParamStore::zero_grad() {
    for (auto& e : entries_) e.var.zero_grad();
}

std::uint64_t ParamStore::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* p, std::size_t len) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& e : entries_) {
        mix(e.name.data(), e.name.size());
        mix(e.var.value().data(), static_cast<std::size_t>(e.var.value().size()) * sizeof(double));
    }
    return h;
}

Conv2dLayer make_conv(ParamStore& store, const std::string& name, int in_c, int out_c, int kernel,
                      const ConvOpts& opts, Rng& rng, bool with_bias) {
    if (in_c < 1 || out_c < 1 || kernel < 1) throw std::invalid_argument("make_conv: bad layer configuration");
    const int cig = in_c / opts.groups;
    Tensor w({out_c, cig, kernel, kernel});
    const double stddev = std::sqrt(2.0 / (static_cast<double>(cig) * kernel * kernel));
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, stddev);

    Conv2dLayer layer;
    layer.opts = opts;
    layer.weight = store.create(name + ".weight", std::move(w));
    if (with_bias) layer.bias = store.create(name + ".bias", Tensor::zeros({out_c}));
    return layer;
}

Adam::Adam(std::vector<Var> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    if (cfg_.lr <= 0.0) throw std::invalid_argument("Adam: learning rate must be positive");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.push_back(Tensor::zeros(p.value().shape()));
        v_.push_back(Tensor::zeros(p.value().shape()));
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

    double clip_scale = 1.0;
    if (cfg_.clip_norm > 0.0) {
        double sq = 0.0;
        for (auto& p : params_) {
            const Tensor& g = p.grad();
            if (g.empty()) continue;
            for (std::int64_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
        }
        const double norm = std::sqrt(sq);
        if (norm > cfg_.clip_norm) clip_scale = cfg_.clip_norm / norm;
    }

    for (std::size_t k = 0; k < params_.size(); ++k) {
        Var& p = params_[k];
        const Tensor& g = p.grad();
        if (g.empty()) continue;
        Tensor& theta = p.mutable_value();
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        for (std::int64_t i = 0; i < theta.size(); ++i) {
            double gi = g[i] * clip_scale + cfg_.weight_decay * theta[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace crowdkd
