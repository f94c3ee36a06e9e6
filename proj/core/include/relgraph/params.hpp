#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "relgraph/tape.hpp"
#include "relgraph/tensor.hpp"

namespace relgraph {

// Ordered collection of named tensors. Registration order is the
// canonical parameter order used for gradient extraction, optimizer
// state, and checkpoints.
class ParameterStore {
public:
    size_t add(const std::string& name, Tensor t);
    size_t index(const std::string& name) const;  // throws on unknown name
    bool contains(const std::string& name) const { return index_.contains(name); }
    Tensor& at(size_t i) { return tensors_[i]; }
    const Tensor& at(size_t i) const { return tensors_[i]; }
    Tensor& at(const std::string& name) { return tensors_[index(name)]; }
    const std::string& name(size_t i) const { return names_[i]; }
    size_t size() const { return tensors_.size(); }
    std::vector<Tensor>& tensors() { return tensors_; }
    const std::vector<Tensor>& tensors() const { return tensors_; }

private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
    std::unordered_map<std::string, size_t> index_;
};

// One leaf per parameter, in store order.
std::vector<Var> bind_parameters(Tape& tape, const ParameterStore& store);

}  // namespace relgraph
