#pragma once

#include <array>
#include <vector>

#include "crowdkd/autograd.hpp"

namespace crowdkd {

enum class FeatureOrigin { teacher, student, aligned };

/// Channel-relation matrix between two equal-resolution features, with the
/// source shapes kept for diagnostics.
struct FSPMatrix {
    Tensor values;  // {m,n}
    std::array<int, 3> source1{};  // {m,h,w}
    std::array<int, 3> source2{};  // {n,h,w}
};

struct IntraOptions {
    double eps = 1e-8;
    Similarity kind = Similarity::cosine;
};

/// Per-location channel cosine map between a teacher feature and the
/// aligned student feature; values in [-1,1] up to the eps guard.
Var cosine_similarity_map(const Var& t, const Var& s_hat, double eps = 1e-8,
                          Similarity kind = Similarity::cosine);
Tensor cosine_similarity_map(const Tensor& t, const Tensor& s_hat, double eps = 1e-8,
                             Similarity kind = Similarity::cosine);

/// Sum over taps and locations of (1 - similarity); bounded by
/// 2 * sum_k H_k*W_k for the cosine kind.
Var intra_pt_loss(const std::vector<Var>& teacher, const std::vector<Var>& aligned,
                  const IntraOptions& opts = {});
double intra_pt_loss(const std::vector<Tensor>& teacher, const std::vector<Tensor>& aligned,
                     const IntraOptions& opts = {});

FSPMatrix fsp_matrix(const Tensor& f1, const Tensor& f2);

/// Bilinear spatial resample of a {C,H,W} feature; channels unchanged.
Var resize_feature(const Var& f, int target_h, int target_w);
Tensor resize_feature(const Tensor& f, int target_h, int target_w);

/// Dense relation-transfer loss: all features resized to the resolution of
/// taps[ref_index], then for every unordered tap pair the squared Frobenius
/// distance between teacher and student relation matrices is accumulated.
/// ref_index < 0 selects the conventional reference slot min(4, n-1).
Var inter_rt_loss(const std::vector<Var>& teacher, const std::vector<Var>& aligned, int ref_index = -1);
double inter_rt_loss(const std::vector<Tensor>& teacher, const std::vector<Tensor>& aligned,
                     int ref_index = -1);

}  // namespace crowdkd
