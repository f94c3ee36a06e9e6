#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "relgraph/encoders.hpp"
#include "relgraph/model.hpp"
#include "relgraph/retrieval.hpp"
#include "relgraph/synthetic.hpp"
#include "relgraph/train.hpp"

namespace relgraph::cli {

// Flat key = value configuration with documented defaults. Unknown
// keys are rejected; precedence is defaults < environment < config
// file < command-line flags.
class RunConfig {
public:
    RunConfig();  // defaults

    void set(const std::string& key, const std::string& value);  // UsageError on unknown key
    void load_file(const std::string& path);
    const std::string& get(const std::string& key) const;
    int64_t get_int(const std::string& key) const;
    uint64_t get_u64(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    // sorted `key = value` lines with a header comment
    void emit(const std::string& path) const;
    std::string render() const;

    model::ModelConfig model_config() const;
    train::TrainConfig train_config() const;
    retrieval::PprConfig ppr_config() const;
    kg::SyntheticConfig gen_config() const;
    encoders::TranseConfig transe_config() const;

    static const std::map<std::string, std::string>& defaults();

private:
    std::map<std::string, std::string> values_;
};

}  // namespace relgraph::cli
