#include "segkit/graph.hpp"

#include <algorithm>

#include "segkit/errors.hpp"

namespace segkit {

template <typename T>
void GraphT<T>::copy_from(const GraphT& other) {
    nodes_.clear();
    nodes_.reserve(other.nodes_.size());
    for (const Node& n : other.nodes_) {
        Node c;
        c.name = n.name;
        c.kind = n.kind;
        c.op = n.op ? n.op->clone() : nullptr;
        c.inputs = n.inputs;
        c.value = n.value;
        c.grad = n.grad;
        c.has_value = n.has_value;
        c.stamp = n.stamp;
        nodes_.push_back(std::move(c));
    }
    params_ = other.params_;
    pass_ = other.pass_;
    grad_pass_ = other.grad_pass_;
    training_ = other.training_;
}

template <typename T>
void GraphT<T>::check_node(int node, const char* what) const {
    if (node < 0 || node >= int(nodes_.size()))
        throw state_error(std::string(what) + ": node " + std::to_string(node) +
                          " is not in the graph");
}

template <typename T>
int GraphT<T>::add_input(std::string name) {
    Node n;
    n.name = std::move(name);
    n.kind = NodeKind::input;
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
}

template <typename T>
int GraphT<T>::add_parameter(std::string name, TensorT<T> init) {
    if (has_parameter(name))
        throw state_error("duplicate parameter name '" + name + "'");
    Node n;
    n.name = std::move(name);
    n.kind = NodeKind::parameter;
    n.value = std::move(init);
    n.has_value = true;
    nodes_.push_back(std::move(n));
    params_.push_back(int(nodes_.size()) - 1);
    return int(nodes_.size()) - 1;
}

template <typename T>
int GraphT<T>::add_op(std::string name, std::unique_ptr<OpT<T>> op, std::vector<int> inputs) {
    const int id = int(nodes_.size());
    for (int in : inputs) {
        check_node(in, "add_op");
        if (in >= id) throw state_error("add_op: inputs must precede the new node");
    }
    Node n;
    n.name = std::move(name);
    n.kind = NodeKind::op;
    n.op = std::move(op);
    n.inputs = std::move(inputs);
    nodes_.push_back(std::move(n));
    return id;
}

template <typename T>
void GraphT<T>::feed(int node, TensorT<T> value) {
    check_node(node, "feed");
    if (nodes_[node].kind != NodeKind::input)
        throw state_error("feed: node '" + nodes_[node].name + "' is not an input");
    nodes_[node].value = std::move(value);
    nodes_[node].has_value = true;
}

template <typename T>
const TensorT<T>& GraphT<T>::forward(int node) {
    check_node(node, "forward");
    // mark ancestors
    std::vector<char> needed(nodes_.size(), 0);
    std::vector<int> stack{node};
    while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        if (needed[cur]) continue;
        needed[cur] = 1;
        for (int in : nodes_[cur].inputs) stack.push_back(in);
    }

    ++pass_;
    std::vector<const TensorT<T>*> xs;
    for (int i = 0; i <= node; ++i) {
        if (!needed[i]) continue;
        Node& n = nodes_[i];
        switch (n.kind) {
        case NodeKind::input:
            if (!n.has_value)
                throw state_error("forward: input '" + n.name + "' has no fed value");
            break;
        case NodeKind::parameter:
            break;
        case NodeKind::op:
            xs.clear();
            for (int in : n.inputs) xs.push_back(&nodes_[in].value);
            n.value = n.op->forward(xs, training_);
            n.has_value = true;
            break;
        }
        n.stamp = pass_;
    }
    return nodes_[node].value;
}

template <typename T>
void GraphT<T>::backward(int loss_node) {
    check_node(loss_node, "backward");
    Node& loss = nodes_[loss_node];
    if (loss.stamp != pass_ || pass_ == 0)
        throw state_error("backward: node '" + loss.name +
                          "' was not computed by the last forward pass");
    if (loss.value.size() != 1)
        throw state_error("backward: loss node '" + loss.name + "' is not scalar (shape " +
                          shape_str(loss.value) + ")");

    for (Node& n : nodes_) {
        if (n.stamp == pass_) {
            n.grad = TensorT<T>(n.value.shape());
        } else if (n.kind == NodeKind::parameter) {
            n.grad = TensorT<T>(n.value.shape()); // disconnected parameters read zero
        }
    }
    loss.grad[0] = T(1);

    std::vector<const TensorT<T>*> xs;
    std::vector<TensorT<T>*> dxs;
    for (int i = loss_node; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.stamp != pass_ || n.kind != NodeKind::op) continue;
        xs.clear();
        dxs.clear();
        for (int in : n.inputs) {
            xs.push_back(&nodes_[in].value);
            dxs.push_back(&nodes_[in].grad);
        }
        n.op->backward(n.grad, xs, n.value, dxs);
    }
    grad_pass_ = pass_;
}

template <typename T>
const TensorT<T>& GraphT<T>::value(int node) const {
    check_node(node, "value");
    if (!nodes_[node].has_value)
        throw state_error("value: node '" + nodes_[node].name + "' has not been computed");
    return nodes_[node].value;
}

template <typename T>
const TensorT<T>& GraphT<T>::grad(int node) const {
    check_node(node, "grad");
    if (grad_pass_ == 0)
        throw state_error("grad: backward has not been run");
    return nodes_[node].grad;
}

template <typename T>
std::vector<typename GraphT<T>::ParamRef> GraphT<T>::parameters() {
    std::vector<ParamRef> out;
    out.reserve(params_.size());
    for (int id : params_) {
        Node& n = nodes_[id];
        out.push_back(ParamRef{n.name, id, &n.value, &n.grad});
    }
    return out;
}

template <typename T>
std::vector<std::pair<std::string, TensorT<T>*>> GraphT<T>::state_tensors() {
    std::vector<std::pair<std::string, TensorT<T>*>> out;
    for (Node& n : nodes_) {
        if (!n.op) continue;
        for (auto& [key, tensor] : n.op->state())
            out.emplace_back(n.name + "." + key, tensor);
    }
    return out;
}

template <typename T>
bool GraphT<T>::has_parameter(const std::string& name) const {
    for (int id : params_)
        if (nodes_[id].name == name) return true;
    return false;
}

template <typename T>
TensorT<T>& GraphT<T>::parameter_value(const std::string& name) {
    for (int id : params_)
        if (nodes_[id].name == name) return nodes_[id].value;
    throw state_error("no parameter named '" + name + "'");
}

template class GraphT<float>;
template class GraphT<double>;

} // namespace segkit
