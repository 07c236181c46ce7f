#include "crowdkd/autograd.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <utility>

namespace crowdkd {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

Tensor& Node::grad_buffer() {
    if (grad.empty()) grad = Tensor::zeros(value.shape());
    return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

void Var::set_requires_grad(bool on) {
    if (!node_->inputs.empty()) throw std::invalid_argument("set_requires_grad is for leaf nodes only");
    node_->requires_grad = on;
}

void Var::zero_grad() {
    if (node_ && !node_->grad.empty()) node_->grad.fill(0.0);
}

Var Var::from_node(NodePtr n) {
    Var v;
    v.node_ = std::move(n);
    return v;
}

Var constant(Tensor t) { return Var(std::move(t), false); }

namespace {

Var make_op(Tensor value, std::vector<NodePtr> inputs, std::function<void(Node&)> bw) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool req = false;
    for (const auto& in : inputs) req = req || (in && in->requires_grad);
    n->requires_grad = req;
    if (req) {
        n->inputs = std::move(inputs);
        n->backward = std::move(bw);
    }
    return Var::from_node(std::move(n));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a.value().same_shape(b.value())) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.value().shape_str() + " vs " +
                                    b.value().shape_str());
    }
}

void axpy(Tensor& dst, const Tensor& src, double s) {
    const double* p = src.data();
    double* q = dst.data();
    for (std::int64_t i = 0; i < src.size(); ++i) q[i] += s * p[i];
}

}  // namespace

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a.value();
    axpy(out, b.value(), 1.0);
    return make_op(std::move(out), {a.node(), b.node()}, [](Node& n) {
        for (auto& in : n.inputs) {
            if (in->requires_grad) axpy(in->grad_buffer(), n.grad, 1.0);
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a.value();
    axpy(out, b.value(), -1.0);
    return make_op(std::move(out), {a.node(), b.node()}, [](Node& n) {
        if (n.inputs[0]->requires_grad) axpy(n.inputs[0]->grad_buffer(), n.grad, 1.0);
        if (n.inputs[1]->requires_grad) axpy(n.inputs[1]->grad_buffer(), n.grad, -1.0);
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a.value();
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return make_op(std::move(out), {a.node(), b.node()}, [](Node& n) {
        const Tensor& av = n.inputs[0]->value;
        const Tensor& bv = n.inputs[1]->value;
        if (n.inputs[0]->requires_grad) {
            Tensor& ga = n.inputs[0]->grad_buffer();
            for (std::int64_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * bv[i];
        }
        if (n.inputs[1]->requires_grad) {
            Tensor& gb = n.inputs[1]->grad_buffer();
            for (std::int64_t i = 0; i < n.grad.size(); ++i) gb[i] += n.grad[i] * av[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a.value();
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= s;
    return make_op(std::move(out), {a.node()}, [s](Node& n) {
        if (n.inputs[0]->requires_grad) axpy(n.inputs[0]->grad_buffer(), n.grad, s);
    });
}

Var relu(const Var& a) {
    Tensor out = a.value();
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return make_op(std::move(out), {a.node()}, [](Node& n) {
        if (!n.inputs[0]->requires_grad) return;
        const Tensor& x = n.inputs[0]->value;
        Tensor& g = n.inputs[0]->grad_buffer();
        for (std::int64_t i = 0; i < x.size(); ++i) {
            if (x[i] > 0.0) g[i] += n.grad[i];
        }
    });
}

Var relu6(const Var& a) {
    Tensor out = a.value();
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = out[i] < 0.0 ? 0.0 : (out[i] > 6.0 ? 6.0 : out[i]);
    return make_op(std::move(out), {a.node()}, [](Node& n) {
        if (!n.inputs[0]->requires_grad) return;
        const Tensor& x = n.inputs[0]->value;
        Tensor& g = n.inputs[0]->grad_buffer();
        for (std::int64_t i = 0; i < x.size(); ++i) {
            if (x[i] > 0.0 && x[i] < 6.0) g[i] += n.grad[i];
        }
    });
}

Var sum(const Var& a) {
    Tensor out = Tensor::scalar(a.value().sum());
    return make_op(std::move(out), {a.node()}, [](Node& n) {
        if (!n.inputs[0]->requires_grad) return;
        Tensor& g = n.inputs[0]->grad_buffer();
        const double go = n.grad[0];
        for (std::int64_t i = 0; i < g.size(); ++i) g[i] += go;
    });
}

Var sum_sq_diff(const Var& a, const Var& b) {
    check_same_shape(a, b, "sum_sq_diff");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    double acc = 0.0;
    for (std::int64_t i = 0; i < av.size(); ++i) {
        double d = av[i] - bv[i];
        acc += d * d;
    }
    return make_op(Tensor::scalar(acc), {a.node(), b.node()}, [](Node& n) {
        const Tensor& av = n.inputs[0]->value;
        const Tensor& bv = n.inputs[1]->value;
        double g = n.grad[0];
        if (n.inputs[0]->requires_grad) {
            Tensor& ga = n.inputs[0]->grad_buffer();
            for (std::int64_t i = 0; i < av.size(); ++i) ga[i] += 2.0 * (av[i] - bv[i]) * g;
        }
        if (n.inputs[1]->requires_grad) {
            Tensor& gb = n.inputs[1]->grad_buffer();
            for (std::int64_t i = 0; i < av.size(); ++i) gb[i] -= 2.0 * (av[i] - bv[i]) * g;
        }
    });
}

namespace {

struct ConvDims {
    int ci, h, w;
    int co, cig, kh, kw;
    int ho, wo;
    int cog;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const ConvOpts& o) {
    if (x.rank() != 3 || w.rank() != 4) throw std::invalid_argument("conv2d: expected {C,H,W} input and {Co,Ci/g,kh,kw} weight");
    ConvDims d;
    d.ci = x.dim(0);
    d.h = x.dim(1);
    d.w = x.dim(2);
    d.co = w.dim(0);
    d.cig = w.dim(1);
    d.kh = w.dim(2);
    d.kw = w.dim(3);
    if (o.groups < 1 || d.ci % o.groups != 0 || d.co % o.groups != 0 || d.cig != d.ci / o.groups) {
        throw std::invalid_argument("conv2d: inconsistent group/channel configuration");
    }
    d.cog = d.co / o.groups;
    d.ho = (d.h + 2 * o.pad - o.dilation * (d.kh - 1) - 1) / o.stride + 1;
    d.wo = (d.w + 2 * o.pad - o.dilation * (d.kw - 1) - 1) / o.stride + 1;
    if (d.ho < 1 || d.wo < 1) throw std::invalid_argument("conv2d: output would be empty");
    return d;
}

// Gather the group-g input patch matrix, rows (cig*kh*kw) x cols (ho*wo).
void im2col(const Tensor& x, const ConvDims& d, const ConvOpts& o, int g, RowMat& col) {
    col.setZero(static_cast<Eigen::Index>(d.cig) * d.kh * d.kw, static_cast<Eigen::Index>(d.ho) * d.wo);
    const int c0 = g * d.cig;
    for (int c = 0; c < d.cig; ++c) {
        for (int ky = 0; ky < d.kh; ++ky) {
            for (int kx = 0; kx < d.kw; ++kx) {
                const Eigen::Index row = (static_cast<Eigen::Index>(c) * d.kh + ky) * d.kw + kx;
                for (int oy = 0; oy < d.ho; ++oy) {
                    const int iy = oy * o.stride - o.pad + ky * o.dilation;
                    if (iy < 0 || iy >= d.h) continue;
                    for (int ox = 0; ox < d.wo; ++ox) {
                        const int ix = ox * o.stride - o.pad + kx * o.dilation;
                        if (ix < 0 || ix >= d.w) continue;
                        col(row, static_cast<Eigen::Index>(oy) * d.wo + ox) = x.at(c0 + c, iy, ix);
                    }
                }
            }
        }
    }
}

// Scatter-add of the patch matrix back onto the group-g input slice.
void col2im(const RowMat& col, const ConvDims& d, const ConvOpts& o, int g, Tensor& gx) {
    const int c0 = g * d.cig;
    for (int c = 0; c < d.cig; ++c) {
        for (int ky = 0; ky < d.kh; ++ky) {
            for (int kx = 0; kx < d.kw; ++kx) {
                const Eigen::Index row = (static_cast<Eigen::Index>(c) * d.kh + ky) * d.kw + kx;
                for (int oy = 0; oy < d.ho; ++oy) {
                    const int iy = oy * o.stride - o.pad + ky * o.dilation;
                    if (iy < 0 || iy >= d.h) continue;
                    for (int ox = 0; ox < d.wo; ++ox) {
                        const int ix = ox * o.stride - o.pad + kx * o.dilation;
                        if (ix < 0 || ix >= d.w) continue;
                        gx.at(c0 + c, iy, ix) += col(row, static_cast<Eigen::Index>(oy) * d.wo + ox);
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& bias, const ConvOpts& opts) {
    const ConvDims d = conv_dims(x.value(), w.value(), opts);
    if (bias.defined() && (bias.value().rank() != 1 || bias.value().dim(0) != d.co)) {
        throw std::invalid_argument("conv2d: bias shape must be {Co}");
    }

    Tensor out({d.co, d.ho, d.wo});
    const Eigen::Index k = static_cast<Eigen::Index>(d.cig) * d.kh * d.kw;
    const Eigen::Index plane = static_cast<Eigen::Index>(d.ho) * d.wo;
    RowMat col;
    for (int g = 0; g < opts.groups; ++g) {
        im2col(x.value(), d, opts, g, col);
        ConstMapMat wm(w.value().data() + static_cast<std::int64_t>(g) * d.cog * k, d.cog, k);
        MapMat om(out.data() + static_cast<std::int64_t>(g) * d.cog * plane, d.cog, plane);
        om.noalias() = wm * col;
    }
    if (bias.defined()) {
        for (int c = 0; c < d.co; ++c) {
            double b = bias.value()[c];
            double* p = out.data() + static_cast<std::int64_t>(c) * plane;
            for (Eigen::Index i = 0; i < plane; ++i) p[i] += b;
        }
    }

    ConvOpts o = opts;
    std::vector<NodePtr> inputs = {x.node(), w.node()};
    if (bias.defined()) inputs.push_back(bias.node());
    return make_op(std::move(out), std::move(inputs), [d, o](Node& n) {
        const NodePtr& xn = n.inputs[0];
        const NodePtr& wn = n.inputs[1];
        const Eigen::Index k = static_cast<Eigen::Index>(d.cig) * d.kh * d.kw;
        const Eigen::Index plane = static_cast<Eigen::Index>(d.ho) * d.wo;

        if (n.inputs.size() > 2 && n.inputs[2]->requires_grad) {
            Tensor& gb = n.inputs[2]->grad_buffer();
            for (int c = 0; c < d.co; ++c) {
                const double* p = n.grad.data() + static_cast<std::int64_t>(c) * plane;
                double acc = 0.0;
                for (Eigen::Index i = 0; i < plane; ++i) acc += p[i];
                gb[c] += acc;
            }
        }
        if (!xn->requires_grad && !wn->requires_grad) return;

        RowMat col;
        RowMat dcol;
        for (int g = 0; g < o.groups; ++g) {
            ConstMapMat gom(n.grad.data() + static_cast<std::int64_t>(g) * d.cog * plane, d.cog, plane);
            if (wn->requires_grad) {
                im2col(xn->value, d, o, g, col);
                MapMat gwm(wn->grad_buffer().data() + static_cast<std::int64_t>(g) * d.cog * k, d.cog, k);
                gwm.noalias() += gom * col.transpose();
            }
            if (xn->requires_grad) {
                ConstMapMat wm(wn->value.data() + static_cast<std::int64_t>(g) * d.cog * k, d.cog, k);
                dcol.noalias() = wm.transpose() * gom;
                col2im(dcol, d, o, g, xn->grad_buffer());
            }
        }
    });
}

Var maxpool2x2(const Var& x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 3) throw std::invalid_argument("maxpool2x2: expected {C,H,W}");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    const int ho = h / 2, wo = w / 2;
    if (ho < 1 || wo < 1) throw std::invalid_argument("maxpool2x2: input too small");

    Tensor out({c, ho, wo});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(out.size()));
    std::int64_t oi = 0;
    for (int ch = 0; ch < c; ++ch) {
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox, ++oi) {
                double best = -1e308;
                std::int64_t bi = 0;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const int iy = 2 * oy + dy, ix = 2 * ox + dx;
                        const std::int64_t idx = (static_cast<std::int64_t>(ch) * h + iy) * w + ix;
                        if (xv[idx] > best) {
                            best = xv[idx];
                            bi = idx;
                        }
                    }
                }
                out[oi] = best;
                (*argmax)[static_cast<std::size_t>(oi)] = bi;
            }
        }
    }
    return make_op(std::move(out), {x.node()}, [argmax](Node& n) {
        if (!n.inputs[0]->requires_grad) return;
        Tensor& g = n.inputs[0]->grad_buffer();
        for (std::int64_t i = 0; i < n.grad.size(); ++i) g[(*argmax)[static_cast<std::size_t>(i)]] += n.grad[i];
    });
}

namespace {

struct LerpAxis {
    std::vector<int> lo, hi;
    std::vector<double> t;  // weight on hi
};

LerpAxis lerp_axis(int in, int out) {
    LerpAxis a;
    a.lo.resize(static_cast<std::size_t>(out));
    a.hi.resize(static_cast<std::size_t>(out));
    a.t.resize(static_cast<std::size_t>(out));
    const double s = (out > 1 && in > 1) ? static_cast<double>(in - 1) / (out - 1) : 0.0;
    for (int o = 0; o < out; ++o) {
        double src = s * o;
        int lo = static_cast<int>(src);
        if (lo > in - 1) lo = in - 1;
        int hi = lo + 1 < in ? lo + 1 : in - 1;
        a.lo[static_cast<std::size_t>(o)] = lo;
        a.hi[static_cast<std::size_t>(o)] = hi;
        a.t[static_cast<std::size_t>(o)] = src - lo;
    }
    return a;
}

}  // namespace

Var resize_bilinear(const Var& x, int out_h, int out_w) {
    const Tensor& xv = x.value();
    if (xv.rank() != 3) throw std::invalid_argument("resize_bilinear: expected {C,H,W}");
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bilinear: target must be >= 1x1");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);

    if (out_h == h && out_w == w) {
        Tensor out = xv;
        return make_op(std::move(out), {x.node()}, [](Node& n) {
            if (n.inputs[0]->requires_grad) axpy(n.inputs[0]->grad_buffer(), n.grad, 1.0);
        });
    }

    auto ay = std::make_shared<LerpAxis>(lerp_axis(h, out_h));
    auto ax = std::make_shared<LerpAxis>(lerp_axis(w, out_w));
    Tensor out({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch) {
        for (int oy = 0; oy < out_h; ++oy) {
            const int y0 = ay->lo[oy], y1 = ay->hi[oy];
            const double ty = ay->t[oy];
            for (int ox = 0; ox < out_w; ++ox) {
                const int x0 = ax->lo[ox], x1 = ax->hi[ox];
                const double tx = ax->t[ox];
                const double v00 = xv.at(ch, y0, x0), v01 = xv.at(ch, y0, x1);
                const double v10 = xv.at(ch, y1, x0), v11 = xv.at(ch, y1, x1);
                out.at(ch, oy, ox) =
                    (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
            }
        }
    }
    return make_op(std::move(out), {x.node()}, [ay, ax, c, out_h, out_w](Node& n) {
        if (!n.inputs[0]->requires_grad) return;
        Tensor& g = n.inputs[0]->grad_buffer();
        for (int ch = 0; ch < c; ++ch) {
            for (int oy = 0; oy < out_h; ++oy) {
                const int y0 = ay->lo[oy], y1 = ay->hi[oy];
                const double ty = ay->t[oy];
                for (int ox = 0; ox < out_w; ++ox) {
                    const int x0 = ax->lo[ox], x1 = ax->hi[ox];
                    const double tx = ax->t[ox];
                    const double go = n.grad.at(ch, oy, ox);
                    g.at(ch, y0, x0) += (1 - ty) * (1 - tx) * go;
                    g.at(ch, y0, x1) += (1 - ty) * tx * go;
                    g.at(ch, y1, x0) += ty * (1 - tx) * go;
                    g.at(ch, y1, x1) += ty * tx * go;
                }
            }
        }
    });
}

Var resize_nearest(const Var& x, int out_h, int out_w) {
    const Tensor& xv = x.value();
    if (xv.rank() != 3) throw std::invalid_argument("resize_nearest: expected {C,H,W}");
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_nearest: target must be >= 1x1");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);

    auto nearest_axis = [](int in, int out) {
        std::vector<int> idx(static_cast<std::size_t>(out));
        const double s = (out > 1 && in > 1) ? static_cast<double>(in - 1) / (out - 1) : 0.0;
        for (int o = 0; o < out; ++o) {
            int i = static_cast<int>(std::lround(s * o));
            idx[static_cast<std::size_t>(o)] = i < in ? i : in - 1;
        }
        return idx;
    };
    auto ys = std::make_shared<std::vector<int>>(nearest_axis(h, out_h));
    auto xs = std::make_shared<std::vector<int>>(nearest_axis(w, out_w));

    Tensor out({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch) {
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                out.at(ch, oy, ox) = xv.at(ch, (*ys)[oy], (*xs)[ox]);
            }
        }
    }
    return make_op(std::move(out), {x.node()}, [ys, xs, c, out_h, out_w](Node& n) {
        if (!n.inputs[0]->requires_grad) return;
        Tensor& g = n.inputs[0]->grad_buffer();
        for (int ch = 0; ch < c; ++ch) {
            for (int oy = 0; oy < out_h; ++oy) {
                for (int ox = 0; ox < out_w; ++ox) {
                    g.at(ch, (*ys)[oy], (*xs)[ox]) += n.grad.at(ch, oy, ox);
                }
            }
        }
    });
}

Var broadcast_mul(const Var& x, const Var& m) {
    const Tensor& xv = x.value();
    const Tensor& mv = m.value();
    if (xv.rank() != 3 || mv.rank() != 3 || mv.dim(0) != 1 || mv.dim(1) != xv.dim(1) || mv.dim(2) != xv.dim(2)) {
        throw std::invalid_argument("broadcast_mul: expected {C,H,W} and {1,H,W} with matching spatial shape");
    }
    const int c = xv.dim(0);
    const std::int64_t plane = static_cast<std::int64_t>(xv.dim(1)) * xv.dim(2);
    Tensor out(xv.shape());
    for (int ch = 0; ch < c; ++ch) {
        const double* xp = xv.data() + ch * plane;
        double* op = out.data() + ch * plane;
        for (std::int64_t i = 0; i < plane; ++i) op[i] = xp[i] * mv[i];
    }
    return make_op(std::move(out), {x.node(), m.node()}, [c, plane](Node& n) {
        const Tensor& xv = n.inputs[0]->value;
        const Tensor& mv = n.inputs[1]->value;
        if (n.inputs[0]->requires_grad) {
            Tensor& gx = n.inputs[0]->grad_buffer();
            for (int ch = 0; ch < c; ++ch) {
                const double* gp = n.grad.data() + ch * plane;
                double* xg = gx.data() + ch * plane;
                for (std::int64_t i = 0; i < plane; ++i) xg[i] += gp[i] * mv[i];
            }
        }
        if (n.inputs[1]->requires_grad) {
            Tensor& gm = n.inputs[1]->grad_buffer();
            for (int ch = 0; ch < c; ++ch) {
                const double* gp = n.grad.data() + ch * plane;
                const double* xp = xv.data() + ch * plane;
                for (std::int64_t i = 0; i < plane; ++i) gm[i] += gp[i] * xp[i];
            }
        }
    });
}

Var similarity_map(const Var& t, const Var& s, double eps, Similarity kind) {
    check_same_shape(t, s, "similarity_map");
    const Tensor& tv = t.value();
    const Tensor& sv = s.value();
    if (tv.rank() != 3) throw std::invalid_argument("similarity_map: expected {C,H,W}");
    const int c = tv.dim(0), h = tv.dim(1), w = tv.dim(2);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;

    Tensor out({1, h, w});
    for (std::int64_t i = 0; i < plane; ++i) {
        double dot = 0.0, nt2 = 0.0, ns2 = 0.0;
        for (int ch = 0; ch < c; ++ch) {
            const double a = tv[ch * plane + i];
            const double b = sv[ch * plane + i];
            dot += a * b;
            nt2 += a * a;
            ns2 += b * b;
        }
        const double denom = kind == Similarity::cosine ? std::sqrt(nt2) * std::sqrt(ns2) + eps : nt2 + eps;
        out[i] = dot / denom;
    }
    return make_op(std::move(out), {t.node(), s.node()}, [c, plane, eps, kind](Node& n) {
        const Tensor& tv = n.inputs[0]->value;
        const Tensor& sv = n.inputs[1]->value;
        const bool need_t = n.inputs[0]->requires_grad;
        const bool need_s = n.inputs[1]->requires_grad;
        if (!need_t && !need_s) return;
        Tensor* gt = need_t ? &n.inputs[0]->grad_buffer() : nullptr;
        Tensor* gs = need_s ? &n.inputs[1]->grad_buffer() : nullptr;
        for (std::int64_t i = 0; i < plane; ++i) {
            const double go = n.grad[i];
            if (go == 0.0) continue;
            double dot = 0.0, nt2 = 0.0, ns2 = 0.0;
            for (int ch = 0; ch < c; ++ch) {
                const double a = tv[ch * plane + i];
                const double b = sv[ch * plane + i];
                dot += a * b;
                nt2 += a * a;
                ns2 += b * b;
            }
            if (kind == Similarity::cosine) {
                const double nt = std::sqrt(nt2), ns = std::sqrt(ns2);
                const double denom = nt * ns + eps;
                const double d2 = denom * denom;
                for (int ch = 0; ch < c; ++ch) {
                    const double a = tv[ch * plane + i];
                    const double b = sv[ch * plane + i];
                    if (need_s) {
                        double grad = a / denom;
                        if (ns > 0.0) grad -= dot * nt * (b / ns) / d2;
                        (*gs)[ch * plane + i] += go * grad;
                    }
                    if (need_t) {
                        double grad = b / denom;
                        if (nt > 0.0) grad -= dot * ns * (a / nt) / d2;
                        (*gt)[ch * plane + i] += go * grad;
                    }
                }
            } else {
                const double denom = nt2 + eps;
                for (int ch = 0; ch < c; ++ch) {
                    const double a = tv[ch * plane + i];
                    const double b = sv[ch * plane + i];
                    if (need_s) (*gs)[ch * plane + i] += go * a / denom;
                    if (need_t) (*gt)[ch * plane + i] += go * (b / denom - dot * 2.0 * a / (denom * denom));
                }
            }
        }
    });
}

Var fsp(const Var& f1, const Var& f2) {
    const Tensor& a = f1.value();
    const Tensor& b = f2.value();
    if (a.rank() != 3 || b.rank() != 3 || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
        throw std::invalid_argument("fsp: features must be {C,H,W} with identical spatial shape, got " +
                                    a.shape_str() + " vs " + b.shape_str());
    }
    const int m = a.dim(0), nch = b.dim(0);
    const Eigen::Index plane = static_cast<Eigen::Index>(a.dim(1)) * a.dim(2);
    const double inv = 1.0 / static_cast<double>(plane);

    Tensor out({m, nch});
    {
        ConstMapMat am(a.data(), m, plane);
        ConstMapMat bm(b.data(), nch, plane);
        MapMat om(out.data(), m, nch);
        om.noalias() = am * bm.transpose() * inv;
    }
    return make_op(std::move(out), {f1.node(), f2.node()}, [m, nch, plane, inv](Node& n) {
        ConstMapMat gm(n.grad.data(), m, nch);
        if (n.inputs[0]->requires_grad) {
            ConstMapMat bm(n.inputs[1]->value.data(), nch, plane);
            MapMat ga(n.inputs[0]->grad_buffer().data(), m, plane);
            ga.noalias() += gm * bm * inv;
        }
        if (n.inputs[1]->requires_grad) {
            ConstMapMat am(n.inputs[0]->value.data(), m, plane);
            MapMat gb(n.inputs[1]->grad_buffer().data(), nch, plane);
            gb.noalias() += gm.transpose() * am * inv;
        }
    });
}

Var minmax_norm(const Var& x, double eps) {
    const Tensor& xv = x.value();
    if (xv.size() < 1) throw std::invalid_argument("minmax_norm: empty tensor");
    std::int64_t imin = 0, imax = 0;
    for (std::int64_t i = 1; i < xv.size(); ++i) {
        if (xv[i] < xv[imin]) imin = i;
        if (xv[i] > xv[imax]) imax = i;
    }
    const double mn = xv[imin];
    const double d = xv[imax] - mn + eps;
    Tensor out(xv.shape());
    for (std::int64_t i = 0; i < xv.size(); ++i) out[i] = (xv[i] - mn) / d;
    return make_op(std::move(out), {x.node()}, [imin, imax, mn, d](Node& n) {
        if (!n.inputs[0]->requires_grad) return;
        const Tensor& xv = n.inputs[0]->value;
        Tensor& g = n.inputs[0]->grad_buffer();
        double gsum = 0.0, q = 0.0;
        for (std::int64_t i = 0; i < n.grad.size(); ++i) {
            gsum += n.grad[i];
            q += n.grad[i] * (xv[i] - mn);
        }
        for (std::int64_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] / d;
        g[imin] += -gsum / d + q / (d * d);
        g[imax] += -q / (d * d);
    });
}

void backward(const Var& root) {
    if (!root.defined() || root.value().size() != 1) {
        throw std::invalid_argument("backward: root must be a defined scalar");
    }
    if (!root.requires_grad()) {
        throw std::invalid_argument("backward: graph has no trainable inputs");
    }

    enum class Mark : unsigned char { open, done };
    std::unordered_map<Node*, Mark> mark;
    std::vector<Node*> order;
    std::vector<Node*> stack{root.node().get()};
    while (!stack.empty()) {
        Node* n = stack.back();
        auto it = mark.find(n);
        if (it == mark.end()) {
            mark.emplace(n, Mark::open);
            for (const auto& in : n->inputs) {
                if (in->requires_grad && mark.find(in.get()) == mark.end()) stack.push_back(in.get());
            }
        } else {
            stack.pop_back();
            if (it->second == Mark::open) {
                it->second = Mark::done;
                order.push_back(n);
            }
        }
    }

    root.node()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

}  // namespace crowdkd
