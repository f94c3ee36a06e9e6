#include "relgraph/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "relgraph/errors.hpp"

namespace relgraph::retrieval {

namespace {

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

}  // namespace

PprResult ppr(const kg::KnowledgeGraph& graph, const std::vector<int64_t>& seeds,
              const PprConfig& config) {
    if (seeds.empty()) throw DataError("ppr: empty seed set");
    int64_t n = graph.num_entities();
    for (int64_t s : seeds) {
        if (s < 0 || s >= n) throw DataError("ppr: seed entity out of range");
    }
    if (config.damping <= 0.0 || config.damping >= 1.0)
        throw std::invalid_argument("ppr: damping must lie in (0,1)");

    // undirected multigraph adjacency; each triple contributes one walkable edge
    std::vector<std::vector<int64_t>> adj(static_cast<size_t>(n));
    for (const kg::Triple& t : graph.triples()) {
        adj[static_cast<size_t>(t.subject)].push_back(t.object);
        if (t.object != t.subject) adj[static_cast<size_t>(t.object)].push_back(t.subject);
    }

    std::vector<double> restart(static_cast<size_t>(n), 0.0);
    double seed_mass = 1.0 / static_cast<double>(seeds.size());
    for (int64_t s : seeds) restart[static_cast<size_t>(s)] += seed_mass;

    PprResult result;
    result.scores = restart;
    std::vector<double> next(static_cast<size_t>(n));
    for (int64_t it = 1; it <= config.max_iter; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        double dangling_mass = 0.0;
        for (int64_t u = 0; u < n; ++u) {
            double mass = result.scores[static_cast<size_t>(u)];
            if (mass == 0.0) continue;
            const auto& nbrs = adj[static_cast<size_t>(u)];
            if (nbrs.empty()) {
                dangling_mass += mass;
                continue;
            }
            double share = mass / static_cast<double>(nbrs.size());
            for (int64_t v : nbrs) next[static_cast<size_t>(v)] += share;
        }
        double residual = 0.0;
        for (int64_t u = 0; u < n; ++u) {
            double updated = (1.0 - config.damping) * restart[static_cast<size_t>(u)] +
                             config.damping * (next[static_cast<size_t>(u)] +
                                               dangling_mass * restart[static_cast<size_t>(u)]);
            residual += std::abs(updated - result.scores[static_cast<size_t>(u)]);
            next[static_cast<size_t>(u)] = updated;
        }
        result.scores.swap(next);
        result.iterations = it;
        result.residual = residual;
        if (residual < config.tol) return result;
    }
    throw NumericError("ppr: no convergence after " + std::to_string(config.max_iter) +
                       " iterations, residual " + std::to_string(result.residual));
}

kg::QuestionSubgraph extract_subgraph(const kg::KnowledgeGraph& graph,
                                      const kg::QuestionInstance& question,
                                      const std::vector<kg::Mention>& mentions, int64_t node_budget,
                                      const PprConfig& config) {
    if (node_budget < static_cast<int64_t>(question.seed_entities.size()))
        throw DataError("extract_subgraph: node budget below seed count");
    PprResult scores = ppr(graph, question.seed_entities, config);

    std::set<int64_t> seed_set(question.seed_entities.begin(), question.seed_entities.end());
    std::vector<int64_t> candidates;
    for (int64_t e = 0; e < graph.num_entities(); ++e) {
        if (seed_set.contains(e)) continue;
        if (scores.scores[static_cast<size_t>(e)] > 0.0) candidates.push_back(e);
    }
    std::stable_sort(candidates.begin(), candidates.end(), [&](int64_t a, int64_t b) {
        double sa = scores.scores[static_cast<size_t>(a)];
        double sb = scores.scores[static_cast<size_t>(b)];
        if (sa != sb) return sa > sb;
        return a < b;
    });
    int64_t take = std::min<int64_t>(node_budget - static_cast<int64_t>(seed_set.size()),
                                     static_cast<int64_t>(candidates.size()));

    kg::QuestionSubgraph sg;
    sg.question_id = question.id;
    sg.nodes.assign(seed_set.begin(), seed_set.end());
    sg.nodes.insert(sg.nodes.end(), candidates.begin(), candidates.begin() + take);
    std::sort(sg.nodes.begin(), sg.nodes.end());

    std::set<int64_t> node_set(sg.nodes.begin(), sg.nodes.end());
    for (const kg::Triple& t : graph.triples()) {
        if (node_set.contains(t.subject) && node_set.contains(t.object)) sg.edges.push_back(t);
    }

    // document co-occurrence inside the node set; pairs keyed (a < b)
    std::map<int64_t, std::vector<int64_t>> doc_entities;  // doc -> in-set mentioned entities
    for (const kg::Mention& m : mentions) {
        if (node_set.contains(m.entity)) doc_entities[m.document].push_back(m.entity);
    }
    for (auto& [doc, ents] : doc_entities) {
        std::sort(ents.begin(), ents.end());
        ents.erase(std::unique(ents.begin(), ents.end()), ents.end());
        for (size_t i = 0; i < ents.size(); ++i)
            for (size_t j = i + 1; j < ents.size(); ++j)
                sg.doc_edges.push_back({ents[i], ents[j], doc});
    }

    sg.labels = kg::make_labels(sg.nodes, question.answers);
    return sg;
}

double answer_recall(const std::vector<kg::QuestionSubgraph>& subgraphs,
                     const std::vector<kg::QuestionInstance>& questions) {
    if (subgraphs.size() != questions.size())
        throw DataError("answer_recall: subgraph/question count mismatch");
    int64_t answerable = 0, hit = 0;
    for (size_t i = 0; i < questions.size(); ++i) {
        if (questions[i].answers.empty()) continue;
        ++answerable;
        std::set<int64_t> node_set(subgraphs[i].nodes.begin(), subgraphs[i].nodes.end());
        for (int64_t a : questions[i].answers) {
            if (node_set.contains(a)) {
                ++hit;
                break;
            }
        }
    }
    return answerable == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(answerable);
}

void save_subgraphs(const std::vector<kg::QuestionSubgraph>& subgraphs,
                    const kg::KnowledgeGraph& graph, const std::vector<kg::Document>& docs,
                    const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open file for writing: " + path);
    for (const kg::QuestionSubgraph& sg : subgraphs) {
        out << sg.question_id << '\t';
        for (size_t i = 0; i < sg.nodes.size(); ++i) {
            if (i) out << ' ';
            out << graph.entity_name(sg.nodes[i]);
        }
        out << '\t';
        for (size_t i = 0; i < sg.edges.size(); ++i) {
            if (i) out << ';';
            out << graph.entity_name(sg.edges[i].subject) << ',' << graph.relation_name(sg.edges[i].relation)
                << ',' << graph.entity_name(sg.edges[i].object);
        }
        out << '\t';
        for (size_t i = 0; i < sg.doc_edges.size(); ++i) {
            if (i) out << ';';
            out << graph.entity_name(sg.doc_edges[i].entity_a) << ','
                << graph.entity_name(sg.doc_edges[i].entity_b) << ','
                << docs[static_cast<size_t>(sg.doc_edges[i].document)].id;
        }
        out << '\t';
        for (size_t i = 0; i < sg.labels.size(); ++i) {
            if (i) out << ' ';
            out << static_cast<int>(sg.labels[i]);
        }
        out << '\n';
    }
}

std::vector<kg::QuestionSubgraph> load_subgraphs(const std::string& path,
                                                 const kg::KnowledgeGraph& graph,
                                                 const std::vector<kg::Document>& docs) {
    std::unordered_map<std::string, int64_t> doc_index;
    for (size_t i = 0; i < docs.size(); ++i) doc_index.emplace(docs[i].id, static_cast<int64_t>(i));

    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::vector<kg::QuestionSubgraph> result;
    std::string line;
    int64_t line_no = 0;
    auto entity = [&](const std::string& name) {
        int64_t id = graph.entity_id(name);
        if (id < 0)
            throw DataError(path + ": line " + std::to_string(line_no) + ": unknown entity '" + name + "'");
        return id;
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_on(line, '\t');
        if (fields.size() != 5)
            throw DataError(path + ": line " + std::to_string(line_no) + ": expected 5 fields");
        kg::QuestionSubgraph sg;
        sg.question_id = fields[0];
        for (const std::string& tok : kg::split_tokens(fields[1])) sg.nodes.push_back(entity(tok));
        if (!fields[2].empty()) {
            for (const std::string& part : split_on(fields[2], ';')) {
                auto cols = split_on(part, ',');
                if (cols.size() != 3)
                    throw DataError(path + ": line " + std::to_string(line_no) + ": bad edge record");
                int64_t r = graph.relation_id(cols[1]);
                if (r < 0)
                    throw DataError(path + ": line " + std::to_string(line_no) + ": unknown relation '" +
                                    cols[1] + "'");
                sg.edges.push_back({entity(cols[0]), r, entity(cols[2])});
            }
        }
        if (!fields[3].empty()) {
            for (const std::string& part : split_on(fields[3], ';')) {
                auto cols = split_on(part, ',');
                if (cols.size() != 3)
                    throw DataError(path + ": line " + std::to_string(line_no) + ": bad doc edge record");
                auto dit = doc_index.find(cols[2]);
                if (dit == doc_index.end())
                    throw DataError(path + ": line " + std::to_string(line_no) + ": unknown document '" +
                                    cols[2] + "'");
                sg.doc_edges.push_back({entity(cols[0]), entity(cols[1]), dit->second});
            }
        }
        for (const std::string& tok : kg::split_tokens(fields[4]))
            sg.labels.push_back(tok == "1" ? 1.0 : 0.0);
        if (sg.labels.size() != sg.nodes.size())
            throw DataError(path + ": line " + std::to_string(line_no) + ": label/node count mismatch");
        result.push_back(std::move(sg));
    }
    return result;
}

}  // namespace relgraph::retrieval
