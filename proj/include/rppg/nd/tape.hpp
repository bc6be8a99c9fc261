#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "rppg/nd/tensor.hpp"

namespace rppg::nd {

// Reverse-mode tape. Constructing a Tape makes it the active tape for the
// current thread; destruction restores the previous one. Ops record nodes in
// creation order, so parents always precede children and a single reverse
// sweep propagates gradients. Gradient buffers are allocated lazily: a node
// no gradient ever reached is skipped during backward.
class Tape {
public:
    // Backward closure: (tape, id of the node being visited).
    using BackwardFn = std::function<void(Tape&, std::size_t)>;

    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active() noexcept;

    std::uint64_t id() const noexcept { return id_; }
    std::size_t node_count() const noexcept { return nodes_.size(); }

    // Records a node of the given value size; leaf nodes have no backward fn.
    std::size_t record(std::size_t value_size, BackwardFn back = nullptr);

    // Registers t's values as a leaf of this tape so gradients accumulate
    // into grad(node). No-op passthrough when t is already on this tape.
    Tensor track(const Tensor& t);

    // True when t participates in this tape's graph.
    bool tracks(const Tensor& t) const noexcept {
        return t.tracked() && t.tape_id() == id_;
    }

    // Mutable gradient buffer of a node, zero-filled on first touch.
    std::vector<double>& grad(std::size_t node);

    // Runs the reverse sweep from a scalar loss. Single use per tape.
    void backward(const Tensor& loss);

    // Gradient of a tracked tensor after backward; zeros if nothing reached it.
    std::vector<double> grad_of(const Tensor& t) const;

private:
    struct Node {
        std::size_t value_size;
        BackwardFn back;
    };

    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
    std::uint64_t id_;
    Tape* prev_;
    bool swept_ = false;
};

} // namespace rppg::nd
