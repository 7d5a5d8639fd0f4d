#pragma once

#include <wavemlp/tensor.hpp>

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace wavemlp {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
public:
    Var() = default;

    Tape<T>* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

    const Tensor<T>& value() const { return tape_->value(id_); }
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const { return tape_->requires_grad(id_); }

private:
    friend class Tape<T>;
    Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape<T>* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode differentiation record.
///
/// Nodes are appended in evaluation order, which is a topological order of the
/// graph, so backward simply walks the node list from the loss downwards. Each
/// recorded op owns a closure that receives the gradient of its output and
/// accumulates into the gradients of its inputs through grad_accum().
///
/// Leaves created with leaf() borrow the referenced tensor instead of copying
/// it; the caller keeps the tensor alive for the lifetime of the tape.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Disabling gradients turns every subsequent op into a plain forward
    /// evaluation (no closures stored).
    void set_grad_enabled(bool enabled) noexcept { grad_enabled_ = enabled; }
    bool grad_enabled() const noexcept { return grad_enabled_; }

    Var<T> constant(Tensor<T> value) { return push(std::move(value), false, "constant"); }
    Var<T> variable(Tensor<T> value) { return push(std::move(value), grad_enabled_, "variable"); }

    /// Borrowing leaf. The same tensor address always maps to the same node.
    Var<T> leaf(const Tensor<T>& ref, bool requires_grad = true) {
        if (auto it = leaf_ids_.find(&ref); it != leaf_ids_.end()) return Var<T>(this, it->second);
        auto node = std::make_unique<Node>();
        node->value = &ref;
        node->requires_grad = requires_grad && grad_enabled_;
        node->op = "leaf";
        nodes_.push_back(std::move(node));
        const std::size_t id = nodes_.size() - 1;
        leaf_ids_.emplace(&ref, id);
        return Var<T>(this, id);
    }

    /// Appends an op output. The closure is kept only when some input requires
    /// a gradient.
    Var<T> record(std::string_view op, Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward) {
        bool needs = false;
        if (grad_enabled_) {
            for (const auto& in : inputs) {
                check_owner(in);
                needs = needs || nodes_[in.id_]->requires_grad;
            }
        }
        Var<T> out = push(std::move(value), needs, op);
        if (needs) nodes_.back()->backward = std::move(backward);
        return out;
    }

    const Tensor<T>& value(std::size_t id) const { return *nodes_.at(id)->value; }
    bool requires_grad(std::size_t id) const { return nodes_.at(id)->requires_grad; }
    const std::string& op_name(std::size_t id) const { return nodes_.at(id)->op; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Gradient buffer of a node, zero-initialised on first touch. Used by
    /// backward closures to accumulate.
    Tensor<T>& grad_accum(std::size_t id) {
        Node& n = *nodes_.at(id);
        if (!n.has_grad) {
            n.grad = Tensor<T>(n.value->shape());
            n.has_grad = true;
        }
        return n.grad;
    }

    /// Gradient of the last backward pass (zeros if the node was unreachable).
    const Tensor<T>& grad(const Var<T>& v) {
        check_owner(v);
        return grad_accum(v.id_);
    }

    /// Gradient for a tensor previously bound with leaf(), or nullptr.
    const Tensor<T>* grad_of(const Tensor<T>& ref) {
        auto it = leaf_ids_.find(&ref);
        if (it == leaf_ids_.end()) return nullptr;
        return &grad_accum(it->second);
    }

    void backward(const Var<T>& loss) {
        check_owner(loss);
        if (loss.value().size() != 1) {
            throw ContractError("backward requires a scalar output, got shape " + to_string(loss.shape()));
        }
        for (auto& n : nodes_) {
            n->has_grad = false;
            n->grad = Tensor<T>();
        }
        grad_accum(loss.id_).fill(T{1});
        for (std::size_t i = loss.id_ + 1; i-- > 0;) {
            Node& n = *nodes_[i];
            if (n.backward && n.has_grad) n.backward(*this, n.grad);
        }
    }

private:
    struct Node {
        const Tensor<T>* value = nullptr;
        Tensor<T> owned;
        Tensor<T> grad;
        bool has_grad = false;
        bool requires_grad = false;
        BackwardFn backward;
        std::string op;
    };

    Var<T> push(Tensor<T> value, bool requires_grad, std::string_view op) {
        auto node = std::make_unique<Node>();
        node->owned = std::move(value);
        node->value = &node->owned;
        node->requires_grad = requires_grad;
        node->op = std::string(op);
        nodes_.push_back(std::move(node));
        return Var<T>(this, nodes_.size() - 1);
    }

    void check_owner(const Var<T>& v) const {
        if (v.tape_ != this) throw ContractError("variable belongs to a different tape");
    }

    std::vector<std::unique_ptr<Node>> nodes_;
    std::unordered_map<const Tensor<T>*, std::size_t> leaf_ids_;
    bool grad_enabled_ = true;
};

} // namespace wavemlp
