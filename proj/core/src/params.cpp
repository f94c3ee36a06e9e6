#include "relgraph/params.hpp"

#include <stdexcept>

namespace relgraph {

size_t ParameterStore::add(const std::string& name, Tensor t) {
    if (index_.contains(name)) throw std::logic_error("duplicate parameter name: " + name);
    size_t i = tensors_.size();
    index_.emplace(name, i);
    names_.push_back(name);
    tensors_.push_back(std::move(t));
    return i;
}

size_t ParameterStore::index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::logic_error("unknown parameter name: " + name);
    return it->second;
}

std::vector<Var> bind_parameters(Tape& tape, const ParameterStore& store) {
    std::vector<Var> bound;
    bound.reserve(store.size());
    for (size_t i = 0; i < store.size(); ++i) bound.push_back(tape.leaf(store.at(i)));
    return bound;
}

}  // namespace relgraph
