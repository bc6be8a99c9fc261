#include "rppg/nd/tensor.hpp"

#include <cmath>
#include <sstream>

namespace rppg::nd {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

Tensor Tensor::scalar(double v) {
    return from({}, std::vector<double>{v});
}

Tensor Tensor::zeros(Shape s) {
    std::size_t n = shape_size(s);
    Tensor t{Raw{}};
    t.shape_ = std::move(s);
    t.data_ = std::make_shared<const std::vector<double>>(n, 0.0);
    return t;
}

Tensor Tensor::full(Shape s, double v) {
    if (!std::isfinite(v))
        throw ContractError("tensor fill value is non-finite");
    std::size_t n = shape_size(s);
    Tensor t{Raw{}};
    t.shape_ = std::move(s);
    t.data_ = std::make_shared<const std::vector<double>>(n, v);
    return t;
}

Tensor Tensor::from(Shape s, std::vector<double> vals) {
    std::size_t n = shape_size(s);
    if (n != vals.size()) {
        std::ostringstream os;
        os << "tensor shape " << shape_str(s) << " needs " << n
           << " values, got " << vals.size();
        throw DimensionError(os.str());
    }
    for (std::size_t d : s) {
        if (d == 0) throw DimensionError("tensor dimension of size 0 in " + shape_str(s));
    }
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (!std::isfinite(vals[i])) {
            std::ostringstream os;
            os << "non-finite tensor value at flat index " << i
               << " of shape " << shape_str(s);
            throw ContractError(os.str());
        }
    }
    Tensor t{Raw{}};
    t.shape_ = std::move(s);
    t.data_ = std::make_shared<const std::vector<double>>(std::move(vals));
    return t;
}

double Tensor::value() const {
    if (size() != 1)
        throw ContractError("value() on tensor of shape " + shape_str(shape_) +
                            ", expected a single element");
    return (*data_)[0];
}

std::size_t Tensor::node() const {
    if (node_ < 0) throw ContractError("node() on an untracked tensor");
    return static_cast<std::size_t>(node_);
}

Tensor Tensor::with_node(std::size_t node, std::uint64_t tape) const {
    Tensor t = *this;
    t.node_ = static_cast<std::ptrdiff_t>(node);
    t.tape_ = tape;
    return t;
}

} // namespace rppg::nd
