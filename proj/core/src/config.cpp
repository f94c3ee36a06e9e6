#include "relgraph/config.hpp"

#include <fstream>
#include <sstream>

#include "relgraph/errors.hpp"

namespace relgraph::cli {

const std::map<std::string, std::string>& RunConfig::defaults() {
    static const std::map<std::string, std::string> kDefaults = {
        {"seed", "42"},
        {"threads", "1"},
        {"out", "out"},
        {"data", ""},       // empty: same directory as `out`
        {"model_dir", ""},
        {"split", "test"},
        {"model.layers", "3"},
        {"model.d_kb", "16"},
        {"model.d_w", "16"},
        {"model.d_r", "16"},
        {"model.d_v", "16"},
        {"model.clusters", "8"},
        {"model.max_doc_tokens", "32"},
        {"model.dropout", "0.2"},
        {"model.mask_doc_relations", "false"},
        {"model.mask_bidir_attention", "false"},
        {"model.mask_coarsening", "false"},
        {"train.max_epochs", "100"},
        {"train.batch_size", "10"},
        {"train.lr", "0.001"},
        {"train.lr_decay", "0.8"},
        {"train.lr_period", "10"},
        {"train.patience", "10"},
        {"train.clip_norm", "5"},
        {"train.monitor_threshold", "0.5"},
        {"retrieval.damping", "0.8"},
        {"retrieval.tol", "1e-8"},
        {"retrieval.max_iter", "1000"},
        {"retrieval.budget", "50"},
        {"gen.entities", "50"},
        {"gen.relations", "4"},
        {"gen.triples", "200"},
        {"gen.documents", "150"},
        {"gen.train", "120"},
        {"gen.val", "20"},
        {"gen.test", "40"},
        {"gen.doc_only_fraction", "0.3"},
        {"gen.unanswerable_fraction", "0"},
        {"link.noise", "0"},
        {"pretrain.margin", "1"},
        {"pretrain.epochs", "200"},
        {"pretrain.lr", "0.01"},
        {"ablate.seeds", "5"},
        {"eval.threshold", "auto"},
    };
    return kDefaults;
}

RunConfig::RunConfig() : values_(defaults()) {}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("unknown configuration key: " + key);
    it->second = value;
}

namespace {
std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}
}  // namespace

void RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError(path + ": line " + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        try {
            set(key, value);
        } catch (const UsageError&) {
            throw DataError(path + ": line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
    }
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("unknown configuration key: " + key);
    return it->second;
}

int64_t RunConfig::get_int(const std::string& key) const {
    try {
        size_t pos = 0;
        int64_t v = std::stoll(get(key), &pos);
        if (pos != get(key).size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw DataError("configuration key '" + key + "' is not an integer: " + get(key));
    }
}

uint64_t RunConfig::get_u64(const std::string& key) const {
    try {
        size_t pos = 0;
        uint64_t v = std::stoull(get(key), &pos);
        if (pos != get(key).size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw DataError("configuration key '" + key + "' is not an unsigned integer: " + get(key));
    }
}

double RunConfig::get_double(const std::string& key) const {
    try {
        size_t pos = 0;
        double v = std::stod(get(key), &pos);
        if (pos != get(key).size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw DataError("configuration key '" + key + "' is not a number: " + get(key));
    }
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw DataError("configuration key '" + key + "' is not a boolean: " + v);
}

std::string RunConfig::render() const {
    std::ostringstream os;
    os << "# effective configuration\n";
    for (const auto& [key, value] : values_) os << key << " = " << value << "\n";
    return os.str();
}

void RunConfig::emit(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open file for writing: " + path);
    out << render();
}

model::ModelConfig RunConfig::model_config() const {
    model::ModelConfig c;
    c.layers = get_int("model.layers");
    c.d_kb = get_int("model.d_kb");
    c.d_w = get_int("model.d_w");
    c.d_r = get_int("model.d_r");
    c.d_v = get_int("model.d_v");
    c.clusters = get_int("model.clusters");
    c.max_doc_tokens = get_int("model.max_doc_tokens");
    c.dropout = get_double("model.dropout");
    c.use_doc_relations = !get_bool("model.mask_doc_relations");
    c.use_bidir_attention = !get_bool("model.mask_bidir_attention");
    c.use_coarsening = !get_bool("model.mask_coarsening");
    c.validate();
    return c;
}

train::TrainConfig RunConfig::train_config() const {
    train::TrainConfig c;
    c.max_epochs = get_int("train.max_epochs");
    c.batch_size = get_int("train.batch_size");
    c.lr = get_double("train.lr");
    c.lr_decay = get_double("train.lr_decay");
    c.lr_period = get_int("train.lr_period");
    c.patience = get_int("train.patience");
    c.clip_norm = get_double("train.clip_norm");
    c.monitor_threshold = get_double("train.monitor_threshold");
    c.seed = get_u64("seed");
    c.threads = get_int("threads");
    return c;
}

retrieval::PprConfig RunConfig::ppr_config() const {
    retrieval::PprConfig c;
    c.damping = get_double("retrieval.damping");
    c.tol = get_double("retrieval.tol");
    c.max_iter = get_int("retrieval.max_iter");
    return c;
}

kg::SyntheticConfig RunConfig::gen_config() const {
    kg::SyntheticConfig c;
    c.entities = get_int("gen.entities");
    c.relations = get_int("gen.relations");
    c.triples = get_int("gen.triples");
    c.documents = get_int("gen.documents");
    c.train_questions = get_int("gen.train");
    c.val_questions = get_int("gen.val");
    c.test_questions = get_int("gen.test");
    c.doc_only_fraction = get_double("gen.doc_only_fraction");
    c.unanswerable_fraction = get_double("gen.unanswerable_fraction");
    c.seed = get_u64("seed");
    return c;
}

encoders::TranseConfig RunConfig::transe_config() const {
    encoders::TranseConfig c;
    c.dim = get_int("model.d_kb");
    c.margin = get_double("pretrain.margin");
    c.epochs = get_int("pretrain.epochs");
    c.lr = get_double("pretrain.lr");
    return c;
}

}  // namespace relgraph::cli
