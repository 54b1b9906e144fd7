#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "segkit/tensor.hpp"

namespace segkit {

/// One differentiable operation in a Graph. Implementations may cache forward
/// context (pool argmax, batch statistics) as members; a graph is
/// single-writer during forward/backward, so no synchronization is needed.
template <typename T>
class OpT {
public:
    virtual ~OpT() = default;

    virtual const char* kind() const = 0;

    virtual TensorT<T> forward(const std::vector<const TensorT<T>*>& xs, bool training) = 0;

    /// Accumulate input gradients: dxs[i] may be null when no gradient is
    /// requested for that input.
    virtual void backward(const TensorT<T>& dy, const std::vector<const TensorT<T>*>& xs,
                          const TensorT<T>& y, const std::vector<TensorT<T>*>& dxs) = 0;

    virtual std::unique_ptr<OpT<T>> clone() const = 0;

    /// Non-trainable persistent tensors (batch-norm running stats). Saved in
    /// checkpoints, copied on clone.
    virtual std::vector<std::pair<std::string, TensorT<T>*>> state() { return {}; }
};

enum class NodeKind { input, parameter, op };

/// A DAG of tensor operations with named trainable parameters and
/// reverse-mode gradient computation. Node indices are topologically ordered
/// by construction: an op may only consume lower-numbered nodes.
template <typename T>
class GraphT {
public:
    GraphT() = default;
    GraphT(const GraphT& other) { copy_from(other); }
    GraphT& operator=(const GraphT& other) {
        if (this != &other) copy_from(other);
        return *this;
    }
    GraphT(GraphT&&) noexcept = default;
    GraphT& operator=(GraphT&&) noexcept = default;

    int add_input(std::string name);
    int add_parameter(std::string name, TensorT<T> init);
    int add_op(std::string name, std::unique_ptr<OpT<T>> op, std::vector<int> inputs);

    /// Set an input node's value. Persists until re-fed.
    void feed(int node, TensorT<T> value);

    /// Evaluate the node and all of its ancestors; other nodes are untouched.
    const TensorT<T>& forward(int node);

    /// Populate gradients of every node evaluated by the last forward pass,
    /// plus a zero gradient for every parameter (a disconnected parameter
    /// reads back exactly zero). The loss node must be scalar.
    void backward(int loss_node);

    const TensorT<T>& value(int node) const;
    const TensorT<T>& grad(int node) const;

    struct ParamRef {
        std::string name;
        int node;
        TensorT<T>* value;
        TensorT<T>* grad;
    };

    /// Trainable parameters in creation order. Gradients are valid after
    /// backward(); before the first backward they are zero-sized.
    std::vector<ParamRef> parameters();

    /// Op-owned persistent tensors, keyed "<node name>.<state name>".
    std::vector<std::pair<std::string, TensorT<T>*>> state_tensors();

    bool has_parameter(const std::string& name) const;
    TensorT<T>& parameter_value(const std::string& name);

    void set_training(bool training) { training_ = training; }
    bool training() const { return training_; }

    std::size_t node_count() const { return nodes_.size(); }

    /// First node with the given name, or -1.
    int find_node(const std::string& name) const {
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (nodes_[i].name == name) return int(i);
        return -1;
    }

    NodeKind node_kind(int node) const { return nodes_.at(node).kind; }
    const std::string& node_name(int node) const { return nodes_.at(node).name; }
    const OpT<T>* node_op(int node) const { return nodes_.at(node).op.get(); }
    const std::vector<int>& node_inputs(int node) const { return nodes_.at(node).inputs; }

private:
    struct Node {
        std::string name;
        NodeKind kind = NodeKind::op;
        std::unique_ptr<OpT<T>> op;
        std::vector<int> inputs;
        TensorT<T> value;
        TensorT<T> grad;
        bool has_value = false;
        std::uint64_t stamp = 0; // forward pass that last computed this node
    };

    void copy_from(const GraphT& other);
    void check_node(int node, const char* what) const;

    std::vector<Node> nodes_;
    std::vector<int> params_;
    std::uint64_t pass_ = 0;
    std::uint64_t grad_pass_ = 0;
    bool training_ = true;
};

using Graph = GraphT<float>;
using Graph64 = GraphT<double>;

} // namespace segkit
