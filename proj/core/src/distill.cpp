#include "crowdkd/distill.hpp"

#include <algorithm>
#include <stdexcept>

namespace crowdkd {

namespace {

std::vector<Var> as_vars(const std::vector<Tensor>& ts) {
    std::vector<Var> out;
    out.reserve(ts.size());
    for (const Tensor& t : ts) out.push_back(constant(t));
    return out;
}

}  // namespace

Var cosine_similarity_map(const Var& t, const Var& s_hat, double eps, Similarity kind) {
    return similarity_map(t, s_hat, eps, kind);
}

Tensor cosine_similarity_map(const Tensor& t, const Tensor& s_hat, double eps, Similarity kind) {
    return similarity_map(constant(t), constant(s_hat), eps, kind).value();
}

Var intra_pt_loss(const std::vector<Var>& teacher, const std::vector<Var>& aligned, const IntraOptions& opts) {
    if (teacher.size() != aligned.size()) {
        throw std::invalid_argument("intra_pt_loss: mismatched list lengths");
    }
    Var total = constant(Tensor::scalar(0.0));
    for (std::size_t k = 0; k < teacher.size(); ++k) {
        const Var map = similarity_map(teacher[k], aligned[k], opts.eps, opts.kind);
        const double hw = static_cast<double>(map.value().size());
        total = add(total, sub(constant(Tensor::scalar(hw)), sum(map)));
    }
    return total;
}

double intra_pt_loss(const std::vector<Tensor>& teacher, const std::vector<Tensor>& aligned,
                     const IntraOptions& opts) {
    return intra_pt_loss(as_vars(teacher), as_vars(aligned), opts).value().item();
}

FSPMatrix fsp_matrix(const Tensor& f1, const Tensor& f2) {
    const Var v = fsp(constant(f1), constant(f2));
    FSPMatrix m;
    m.values = v.value();
    m.source1 = {f1.dim(0), f1.dim(1), f1.dim(2)};
    m.source2 = {f2.dim(0), f2.dim(1), f2.dim(2)};
    return m;
}

Var resize_feature(const Var& f, int target_h, int target_w) { return resize_bilinear(f, target_h, target_w); }

Tensor resize_feature(const Tensor& f, int target_h, int target_w) {
    return resize_bilinear(constant(f), target_h, target_w).value();
}

Var inter_rt_loss(const std::vector<Var>& teacher, const std::vector<Var>& aligned, int ref_index) {
    if (teacher.size() != aligned.size()) {
        throw std::invalid_argument("inter_rt_loss: mismatched list lengths");
    }
    const int n = static_cast<int>(teacher.size());
    if (n == 0) throw std::invalid_argument("inter_rt_loss: empty tap lists");
    if (ref_index < 0) ref_index = std::min(4, n - 1);
    if (ref_index >= n) throw std::invalid_argument("inter_rt_loss: ref_index out of range");

    const int th = teacher[static_cast<std::size_t>(ref_index)].value().dim(1);
    const int tw = teacher[static_cast<std::size_t>(ref_index)].value().dim(2);

    std::vector<Var> rt, rs;
    rt.reserve(static_cast<std::size_t>(n));
    rs.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        rt.push_back(resize_bilinear(teacher[static_cast<std::size_t>(k)], th, tw));
        rs.push_back(resize_bilinear(aligned[static_cast<std::size_t>(k)], th, tw));
    }

    Var total = constant(Tensor::scalar(0.0));
    for (int k1 = 0; k1 < n; ++k1) {
        for (int k2 = k1 + 1; k2 < n; ++k2) {
            const Var ft = fsp(rt[static_cast<std::size_t>(k1)], rt[static_cast<std::size_t>(k2)]);
            const Var fs = fsp(rs[static_cast<std::size_t>(k1)], rs[static_cast<std::size_t>(k2)]);
            total = add(total, sum_sq_diff(ft, fs));
        }
    }
    return total;
}

double inter_rt_loss(const std::vector<Tensor>& teacher, const std::vector<Tensor>& aligned, int ref_index) {
    return inter_rt_loss(as_vars(teacher), as_vars(aligned), ref_index).value().item();
}

}  // namespace crowdkd
