#include "relgraph/kg.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "relgraph/errors.hpp"

namespace relgraph::kg {

namespace {

std::string triple_key(int64_t s, int64_t r, int64_t o) {
    return std::to_string(s) + "|" + std::to_string(r) + "|" + std::to_string(o);
}

std::vector<std::string> split_on(const std::string& line, char sep) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == sep) {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

std::vector<std::string> split_csv(const std::string& s) {
    if (s.empty()) return {};
    return split_on(s, ',');
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    return in;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open file for writing: " + path);
    return out;
}

}  // namespace

std::vector<std::string> split_tokens(const std::string& line) {
    std::vector<std::string> tokens;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) tokens.push_back(tok);
    return tokens;
}

int64_t KnowledgeGraph::intern_entity(const std::string& name) {
    auto it = entity_ids_.find(name);
    if (it != entity_ids_.end()) return it->second;
    int64_t id = static_cast<int64_t>(entity_names_.size());
    entity_names_.push_back(name);
    entity_ids_.emplace(name, id);
    return id;
}

int64_t KnowledgeGraph::intern_relation(const std::string& name) {
    auto it = relation_ids_.find(name);
    if (it != relation_ids_.end()) return it->second;
    int64_t id = static_cast<int64_t>(relation_names_.size());
    relation_names_.push_back(name);
    relation_ids_.emplace(name, id);
    return id;
}

int64_t KnowledgeGraph::entity_id(const std::string& name) const {
    auto it = entity_ids_.find(name);
    return it == entity_ids_.end() ? -1 : it->second;
}

int64_t KnowledgeGraph::relation_id(const std::string& name) const {
    auto it = relation_ids_.find(name);
    return it == relation_ids_.end() ? -1 : it->second;
}

bool KnowledgeGraph::add_triple(int64_t s, int64_t r, int64_t o) {
    std::string key = triple_key(s, r, o);
    if (triple_index_.contains(key)) return false;
    triple_index_.emplace(std::move(key), static_cast<int64_t>(triples_.size()));
    triples_.push_back({s, r, o});
    return true;
}

KgLoadResult load_kg(const std::string& path) {
    std::ifstream in = open_input(path);
    KgLoadResult result;
    std::string line;
    int64_t line_no = 0;
    int64_t parsed = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_on(line, '\t');
        if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
            throw DataError(path + ": line " + std::to_string(line_no) + ": expected 3 fields");
        }
        int64_t s = result.graph.intern_entity(fields[0]);
        int64_t r = result.graph.intern_relation(fields[1]);
        int64_t o = result.graph.intern_entity(fields[2]);
        if (!result.graph.add_triple(s, r, o)) ++result.duplicates_dropped;
        ++parsed;
    }
    if (parsed == 0) throw DataError(path + ": empty triples file");
    return result;
}

void save_kg(const KnowledgeGraph& kg, const std::string& path) {
    std::ofstream out = open_output(path);
    for (const Triple& t : kg.triples()) {
        out << kg.entity_name(t.subject) << '\t' << kg.relation_name(t.relation) << '\t'
            << kg.entity_name(t.object) << '\n';
    }
}

std::vector<Document> load_documents(const std::string& path, int64_t max_tokens) {
    std::ifstream in = open_input(path);
    std::vector<Document> docs;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_on(line, '\t');
        if (fields.size() != 2 || fields[0].empty()) {
            throw DataError(path + ": line " + std::to_string(line_no) + ": expected 2 fields");
        }
        Document d;
        d.id = fields[0];
        d.tokens = split_tokens(fields[1]);
        if (static_cast<int64_t>(d.tokens.size()) > max_tokens) {
            d.tokens.resize(static_cast<size_t>(max_tokens));
            d.truncated = true;
        }
        docs.push_back(std::move(d));
    }
    return docs;
}

void save_documents(const std::vector<Document>& docs, const std::string& path) {
    std::ofstream out = open_output(path);
    for (const Document& d : docs) {
        out << d.id << '\t';
        for (size_t i = 0; i < d.tokens.size(); ++i) {
            if (i) out << ' ';
            out << d.tokens[i];
        }
        out << '\n';
    }
}

std::vector<QuestionInstance> load_questions(const std::string& path, const KnowledgeGraph& kg) {
    std::ifstream in = open_input(path);
    std::vector<QuestionInstance> questions;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_on(line, '\t');
        if (fields.size() != 4) {
            throw DataError(path + ": line " + std::to_string(line_no) + ": expected 4 fields");
        }
        QuestionInstance q;
        q.id = fields[0];
        q.tokens = split_tokens(fields[1]);
        for (const std::string& name : split_csv(fields[2])) {
            int64_t id = kg.entity_id(name);
            if (id < 0)
                throw DataError(path + ": line " + std::to_string(line_no) + ": unknown seed entity '" +
                                name + "'");
            q.seed_entities.push_back(id);
        }
        for (const std::string& name : split_csv(fields[3])) {
            int64_t id = kg.entity_id(name);
            if (id < 0)
                throw DataError(path + ": line " + std::to_string(line_no) + ": unknown answer entity '" +
                                name + "'");
            q.answers.push_back(id);
        }
        questions.push_back(std::move(q));
    }
    return questions;
}

void save_questions(const std::vector<QuestionInstance>& questions, const KnowledgeGraph& kg,
                    const std::string& path) {
    std::ofstream out = open_output(path);
    for (const QuestionInstance& q : questions) {
        out << q.id << '\t';
        for (size_t i = 0; i < q.tokens.size(); ++i) {
            if (i) out << ' ';
            out << q.tokens[i];
        }
        out << '\t';
        for (size_t i = 0; i < q.seed_entities.size(); ++i) {
            if (i) out << ',';
            out << kg.entity_name(q.seed_entities[i]);
        }
        out << '\t';
        for (size_t i = 0; i < q.answers.size(); ++i) {
            if (i) out << ',';
            out << kg.entity_name(q.answers[i]);
        }
        out << '\n';
    }
}

std::vector<Mention> load_mentions(const std::string& path, const KnowledgeGraph& kg,
                                   const std::vector<Document>& docs) {
    std::unordered_map<std::string, int64_t> doc_index;
    for (size_t i = 0; i < docs.size(); ++i) doc_index.emplace(docs[i].id, static_cast<int64_t>(i));
    std::ifstream in = open_input(path);
    std::vector<Mention> mentions;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_on(line, '\t');
        if (fields.size() != 3) {
            throw DataError(path + ": line " + std::to_string(line_no) + ": expected 3 fields");
        }
        auto dit = doc_index.find(fields[0]);
        if (dit == doc_index.end())
            throw DataError(path + ": line " + std::to_string(line_no) + ": unknown document '" +
                            fields[0] + "'");
        int64_t entity = kg.entity_id(fields[1]);
        if (entity < 0)
            throw DataError(path + ": line " + std::to_string(line_no) + ": unknown entity '" +
                            fields[1] + "'");
        Mention m;
        m.document = dit->second;
        m.entity = entity;
        int64_t prev = -1;
        for (const std::string& p : split_csv(fields[2])) {
            int64_t pos = std::stoll(p);
            if (pos <= prev || pos >= static_cast<int64_t>(docs[static_cast<size_t>(m.document)].tokens.size()))
                throw DataError(path + ": line " + std::to_string(line_no) + ": bad mention positions");
            m.positions.push_back(pos);
            prev = pos;
        }
        if (m.positions.empty())
            throw DataError(path + ": line " + std::to_string(line_no) + ": mention with no positions");
        mentions.push_back(std::move(m));
    }
    return mentions;
}

void save_mentions(const std::vector<Mention>& mentions, const KnowledgeGraph& kg,
                   const std::vector<Document>& docs, const std::string& path) {
    std::ofstream out = open_output(path);
    for (const Mention& m : mentions) {
        out << docs[static_cast<size_t>(m.document)].id << '\t' << kg.entity_name(m.entity) << '\t';
        for (size_t i = 0; i < m.positions.size(); ++i) {
            if (i) out << ',';
            out << m.positions[i];
        }
        out << '\n';
    }
}

std::vector<Mention> link_documents(const KnowledgeGraph& kg, const std::vector<Document>& docs,
                                    double noise_rate, RngStream& rng) {
    if (noise_rate < 0.0 || noise_rate >= 1.0)
        throw std::invalid_argument("link_documents: noise_rate must lie in [0,1)");

    // entity name tokens, lowercased, in id order
    std::vector<std::vector<std::string>> name_tokens(static_cast<size_t>(kg.num_entities()));
    for (int64_t e = 0; e < kg.num_entities(); ++e) {
        name_tokens[static_cast<size_t>(e)] = split_tokens(lower(kg.entity_name(e)));
    }

    std::vector<Mention> mentions;
    for (size_t d = 0; d < docs.size(); ++d) {
        std::vector<std::string> doc_tokens;
        doc_tokens.reserve(docs[d].tokens.size());
        for (const std::string& t : docs[d].tokens) doc_tokens.push_back(lower(t));

        for (int64_t e = 0; e < kg.num_entities(); ++e) {
            const auto& name = name_tokens[static_cast<size_t>(e)];
            if (name.empty() || name.size() > doc_tokens.size()) continue;
            Mention m;
            m.entity = e;
            m.document = static_cast<int64_t>(d);
            for (size_t start = 0; start + name.size() <= doc_tokens.size(); ++start) {
                bool match = true;
                for (size_t k = 0; k < name.size(); ++k) {
                    if (doc_tokens[start + k] != name[k]) {
                        match = false;
                        break;
                    }
                }
                if (!match) continue;
                bool keep = noise_rate == 0.0 || !rng.bernoulli(noise_rate);
                if (!keep) continue;
                for (size_t k = 0; k < name.size(); ++k)
                    m.positions.push_back(static_cast<int64_t>(start + k));
            }
            if (!m.positions.empty()) {
                std::sort(m.positions.begin(), m.positions.end());
                m.positions.erase(std::unique(m.positions.begin(), m.positions.end()),
                                  m.positions.end());
                mentions.push_back(std::move(m));
            }
        }
    }
    return mentions;
}

std::vector<double> make_labels(const std::vector<int64_t>& nodes,
                                const std::vector<int64_t>& answers) {
    std::vector<double> labels(nodes.size(), 0.0);
    for (size_t i = 0; i < nodes.size(); ++i) {
        if (std::find(answers.begin(), answers.end(), nodes[i]) != answers.end()) labels[i] = 1.0;
    }
    return labels;
}

}  // namespace relgraph::kg
