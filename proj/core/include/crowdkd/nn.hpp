#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crowdkd/autograd.hpp"
#include "crowdkd/rng.hpp"

namespace crowdkd {

struct NamedParam {
    std::string name;
    Var var;
};

/// Ordered registry of a network's learnable tensors. Registration order is
/// the checkpoint serialization order.
class ParamStore {
public:
    Var create(const std::string& name, Tensor init, bool trainable = true);
    void adopt(const std::string& name, Var param);

    const std::vector<NamedParam>& entries() const { return entries_; }
    std::vector<NamedParam>& entries() { return entries_; }
    Var find(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::int64_t total_size() const;
    void set_requires_grad(bool on);
    void zero_grad();

    /// FNV-1a over the bit patterns of every parameter, in order.
    std::uint64_t checksum() const;

private:
    std::vector<NamedParam> entries_;
};

struct Conv2dLayer {
    Var weight;
    Var bias;
    ConvOpts opts;

    Var operator()(const Var& x) const { return conv2d(x, weight, bias, opts); }
    bool defined() const { return weight.defined(); }
};

/// He-normal initialized conv layer registered under `name`.weight/.bias.
Conv2dLayer make_conv(ParamStore& store, const std::string& name, int in_c, int out_c, int kernel,
                      const ConvOpts& opts, Rng& rng, bool with_bias = true);

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // L2 coupled into the gradient
    double clip_norm = 0.0;     // 0 disables global-norm clipping
};

class Adam {
public:
    Adam(std::vector<Var> params, AdamConfig cfg);

    void step();
    void zero_grad();
    std::int64_t steps_taken() const { return t_; }

private:
    std::vector<Var> params_;
    std::vector<Tensor> m_, v_;
    AdamConfig cfg_;
    std::int64_t t_ = 0;
};

}  // namespace crowdkd
