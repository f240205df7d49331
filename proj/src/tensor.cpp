#include "s2ldm/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace s2ldm {

static size_t checked_numel(const std::vector<int64_t>& dims) {
    size_t n = 1;
    for (int64_t d : dims) {
        if (d <= 0) throw std::invalid_argument("tensor dims must be positive, got " + shape_str(dims));
        n *= static_cast<size_t>(d);
    }
    return n;
}

Tensor::Tensor(std::vector<int64_t> dims) : dims_(std::move(dims)), data_(checked_numel(dims_), 0.0) {}

Tensor::Tensor(std::vector<int64_t> dims, std::vector<double> data) : dims_(std::move(dims)), data_(std::move(data)) {
    if (checked_numel(dims_) != data_.size())
        throw std::invalid_argument("tensor data length does not match dims " + shape_str(dims_));
}

Tensor Tensor::full(std::vector<int64_t> dims, double value) {
    Tensor t(std::move(dims));
    t.fill(value);
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

std::string shape_str(const std::vector<int64_t>& dims) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
    os << "]";
    return os.str();
}

std::string shape_str(const Tensor& t) { return shape_str(t.dims()); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

} // namespace s2ldm
