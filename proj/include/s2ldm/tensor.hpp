#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace s2ldm {

// Dense n-dimensional array of doubles, row-major. The universal carrier for
// images, latents, parameters and gradients.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> dims);
    Tensor(std::vector<int64_t> dims, std::vector<double> data);

    static Tensor full(std::vector<int64_t> dims, double value);

    const std::vector<int64_t>& dims() const { return dims_; }
    int64_t dim(size_t i) const { return dims_.at(i); }
    size_t ndim() const { return dims_.size(); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // Indexed access for the common 2-D [h,w] and 3-D [c,h,w] layouts.
    double& at(int64_t y, int64_t x) { return data_[static_cast<size_t>(y * dims_[1] + x)]; }
    double at(int64_t y, int64_t x) const { return data_[static_cast<size_t>(y * dims_[1] + x)]; }
    double& at(int64_t c, int64_t y, int64_t x) {
        return data_[static_cast<size_t>((c * dims_[1] + y) * dims_[2] + x)];
    }
    double at(int64_t c, int64_t y, int64_t x) const {
        return data_[static_cast<size_t>((c * dims_[1] + y) * dims_[2] + x)];
    }

    bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }
    bool all_finite() const;

    void fill(double v);

private:
    std::vector<int64_t> dims_;
    std::vector<double> data_;
};

std::string shape_str(const std::vector<int64_t>& dims);
std::string shape_str(const Tensor& t);

// Throws std::invalid_argument naming `what` if the shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

} // namespace s2ldm
