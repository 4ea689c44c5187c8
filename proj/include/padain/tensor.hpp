#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "padain/shape.hpp"

namespace padain {

template <typename T>
class Tape;

// Value handle. Holds the data buffer plus an optional link to a tape node.
// node < 0 means detached: the value participates in computation but no
// gradient is recorded for it or through it.
template <typename T>
struct TensorT {
    Shape4 shape{};
    std::shared_ptr<std::vector<T>> store;
    Tape<T>* tape = nullptr;
    int node = -1;

    TensorT() = default;
    TensorT(Shape4 s, std::shared_ptr<std::vector<T>> st, Tape<T>* tp = nullptr, int nd = -1)
        : shape(s), store(std::move(st)), tape(tp), node(nd) {}

    std::size_t numel() const { return shape.numel(); }
    bool attached() const { return tape != nullptr && node >= 0; }

    T* data() { return store->data(); }
    const T* data() const { return store->data(); }

    T& at(int n, int c, int h, int w) { return (*store)[shape.index(n, c, h, w)]; }
    const T& at(int n, int c, int h, int w) const { return (*store)[shape.index(n, c, h, w)]; }

    // Gradient buffer populated by Tape::backward; nullptr when the tensor is
    // detached or was not reached from the loss.
    const std::vector<T>* grad() const {
        return attached() ? tape->grad_if(node) : nullptr;
    }
};

template <typename T>
TensorT<T> make_tensor(Shape4 s, T fill = T(0)) {
    if (s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0) {
        throw DimError("make_tensor: all axes must be positive, got " + to_string(s));
    }
    return TensorT<T>(s, std::make_shared<std::vector<T>>(s.numel(), fill));
}

template <typename T>
TensorT<T> make_tensor(Shape4 s, std::vector<T> values) {
    if (values.size() != s.numel()) {
        throw DimError("make_tensor: " + std::to_string(values.size()) +
                       " values for shape " + to_string(s));
    }
    return TensorT<T>(s, std::make_shared<std::vector<T>>(std::move(values)));
}

// Record of one forward op. backward reads the node's own grad buffer and
// accumulates (never overwrites) into its parents' buffers.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape<T>&, int self)>;

    TensorT<T> leaf(const TensorT<T>& value) {
        if (value.store == nullptr) throw UsageError("Tape::leaf: empty tensor");
        TensorT<T> out = value;
        out.tape = this;
        out.node = add_node(value.shape, value.store, nullptr);
        return out;
    }

    int add_node(Shape4 shape, std::shared_ptr<std::vector<T>> value, BackwardFn bw) {
        nodes_.push_back(Node{shape, std::move(value), nullptr, std::move(bw)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    // Reverse-insertion-order sweep. Nodes never reached from the loss keep a
    // null grad buffer and their backward is skipped.
    void backward(const TensorT<T>& loss) {
        if (loss.tape != this || loss.node < 0) {
            throw UsageError("backward: loss is not recorded on this tape");
        }
        if (loss.numel() != 1) {
            throw UsageError("backward: loss must be scalar, got shape " +
                             to_string(loss.shape));
        }
        for (Node& nd : nodes_) nd.grad.reset();
        grad_buf(loss.node)[0] = T(1);
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
            Node& nd = nodes_[static_cast<std::size_t>(i)];
            if (nd.grad != nullptr && nd.backward) nd.backward(*this, i);
        }
    }

    std::vector<T>& grad_buf(int id) {
        Node& nd = nodes_.at(static_cast<std::size_t>(id));
        if (nd.grad == nullptr) {
            nd.grad = std::make_unique<std::vector<T>>(nd.shape.numel(), T(0));
        }
        return *nd.grad;
    }

    const std::vector<T>* grad_if(int id) const {
        const Node& nd = nodes_.at(static_cast<std::size_t>(id));
        return nd.grad.get();
    }

    std::size_t size() const { return nodes_.size(); }

    void reset() { nodes_.clear(); }

private:
    struct Node {
        Shape4 shape;
        std::shared_ptr<std::vector<T>> value;  // keeps activation memory alive
        std::unique_ptr<std::vector<T>> grad;
        BackwardFn backward;                    // null for leaves
    };

    std::vector<Node> nodes_;
};

using Tensor = TensorT<float>;
using TapeF = Tape<float>;

}  // namespace padain
