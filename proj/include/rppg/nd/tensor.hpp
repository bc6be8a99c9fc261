#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rppg/errors.hpp"

namespace rppg::nd {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_size(const Shape& s);

// Immutable n-d array of doubles. Values are shared, never mutated in place.
// A tensor may carry a handle into the tape that produced it; tensors without
// a handle are constants for autodiff purposes.
class Tensor {
public:
    Tensor() : Tensor(scalar(0.0)) {}

    static Tensor scalar(double v);
    static Tensor zeros(Shape s);
    static Tensor full(Shape s, double v);
    // Takes ownership of vals. Rejects shape/size mismatch and non-finite
    // values, which keeps NaN/Inf from propagating silently through training.
    static Tensor from(Shape s, std::vector<double> vals);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_->size(); }
    const std::vector<double>& values() const noexcept { return *data_; }
    std::shared_ptr<const std::vector<double>> data() const noexcept { return data_; }

    double operator[](std::size_t flat) const { return (*data_)[flat]; }

    // Value of a single-element tensor.
    double value() const;

    bool tracked() const noexcept { return node_ >= 0; }
    std::size_t node() const;
    std::uint64_t tape_id() const noexcept { return tape_; }

    // Copy of this tensor bound to a tape node. Used by ops and track().
    Tensor with_node(std::size_t node, std::uint64_t tape) const;

private:
    struct Raw {};
    explicit Tensor(Raw) {}

    Shape shape_;
    std::shared_ptr<const std::vector<double>> data_;
    std::ptrdiff_t node_ = -1;
    std::uint64_t tape_ = 0;
};

} // namespace rppg::nd
