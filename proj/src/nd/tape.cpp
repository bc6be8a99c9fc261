#include "rppg/nd/tape.hpp"

#include <atomic>

namespace rppg::nd {

namespace {
thread_local Tape* g_active = nullptr;
std::atomic<std::uint64_t> g_next_id{1};
} // namespace

Tape::Tape() : id_(g_next_id.fetch_add(1)), prev_(g_active) {
    g_active = this;
}

Tape::~Tape() {
    g_active = prev_;
}

Tape* Tape::active() noexcept {
    return g_active;
}

std::size_t Tape::record(std::size_t value_size, BackwardFn back) {
    nodes_.push_back(Node{value_size, std::move(back)});
    grads_.emplace_back();
    return nodes_.size() - 1;
}

Tensor Tape::track(const Tensor& t) {
    if (tracks(t)) return t;
    return t.with_node(record(t.size()), id_);
}

std::vector<double>& Tape::grad(std::size_t node) {
    auto& g = grads_.at(node);
    if (g.empty()) g.assign(nodes_[node].value_size, 0.0);
    return g;
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw ContractError("backward() needs a scalar loss, got shape " +
                            shape_str(loss.shape()));
    if (!tracks(loss))
        throw ContractError("backward() loss is not tracked on this tape");
    if (swept_)
        throw ContractError("backward() already ran on this tape");
    swept_ = true;

    std::size_t root = loss.node();
    grad(root)[0] = 1.0;
    for (std::size_t i = root + 1; i-- > 0;) {
        if (!grads_[i].empty() && nodes_[i].back) nodes_[i].back(*this, i);
    }
}

std::vector<double> Tape::grad_of(const Tensor& t) const {
    if (!tracks(t))
        throw ContractError("grad_of() on a tensor not tracked by this tape");
    const auto& g = grads_.at(t.node());
    if (g.empty()) return std::vector<double>(t.size(), 0.0);
    return g;
}

} // namespace rppg::nd
