#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace crowdkd {

/// Dense row-major tensor of doubles. Feature maps use {C,H,W} order,
/// conv weights {Cout,Cin/groups,kh,kw}, density grids {H,W}.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);
    static Tensor scalar(double value);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // Indexed access for the common ranks.
    double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    double& at(int c, int y, int x) {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    double at(int c, int y, int x) const {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    double& at(int o, int i, int ky, int kx) {
        return data_[((static_cast<std::size_t>(o) * shape_[1] + i) * shape_[2] + ky) * shape_[3] + kx];
    }
    double at(int o, int i, int ky, int kx) const {
        return data_[((static_cast<std::size_t>(o) * shape_[1] + i) * shape_[2] + ky) * shape_[3] + kx];
    }

    double item() const;  // value of a 1-element tensor
    double sum() const;
    double min() const;
    double max() const;
    bool all_finite() const;

    void fill(double value);
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    std::string shape_str() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

std::int64_t numel(const std::vector<int>& shape);

}  // namespace crowdkd
