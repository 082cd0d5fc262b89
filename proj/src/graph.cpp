#include "kgcal/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "kgcal/error.hpp"
#include "kgcal/rng.hpp"

namespace kgcal {

std::int32_t Vocabulary::add(std::string_view label) {
    auto it = index_.find(std::string(label));
    if (it != index_.end()) return it->second;
    const auto idx = static_cast<std::int32_t>(labels_.size());
    labels_.emplace_back(label);
    index_.emplace(labels_.back(), idx);
    return idx;
}

std::optional<std::int32_t> Vocabulary::find(std::string_view label) const {
    auto it = index_.find(std::string(label));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

void SplitConfig::validate() const {
    if (!(train_fraction > 0.0) || !(valid_fraction > 0.0) || !(test_fraction > 0.0))
        throw ConfigError("split fractions must be positive");
    if (std::abs(train_fraction + valid_fraction + test_fraction - 1.0) > 1e-12)
        throw ConfigError("split fractions must sum to 1");
}

SplitConfig SplitConfig::parse_fractions(std::string_view text, std::uint64_t seed) {
    std::vector<double> parts;
    std::stringstream ss{std::string(text)};
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            parts.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("bad split fraction '" + item + "'");
        }
    }
    if (parts.size() != 3) throw ConfigError("split needs three comma-separated fractions");
    SplitConfig cfg{parts[0], parts[1], parts[2], seed};
    cfg.validate();
    return cfg;
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "valid") return Split::Valid;
    if (name == "test") return Split::Test;
    throw ConfigError("unknown split '" + std::string(name) + "'");
}

std::string_view to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Valid: return "valid";
        case Split::Test: return "test";
    }
    return "?";
}

KnowledgeGraph::KnowledgeGraph(Vocabulary entities, Vocabulary relations, std::vector<Triple> train,
                               std::vector<Triple> valid, std::vector<Triple> test)
    : entities_(std::move(entities)),
      relations_(std::move(relations)),
      train_(std::move(train)),
      valid_(std::move(valid)),
      test_(std::move(test)) {
    known_.reserve(train_.size() + valid_.size() + test_.size());
    for (const auto* part : {&train_, &valid_, &test_}) {
        for (const auto& t : *part) {
            check_indices(t);
            if (!known_.insert(key(t)).second)
                throw DataError("duplicate triple (" + std::to_string(t.head) + ", " + std::to_string(t.relation) +
                                ", " + std::to_string(t.tail) + ") across or within splits");
        }
    }
}

const std::vector<Triple>& KnowledgeGraph::split(Split s) const {
    switch (s) {
        case Split::Train: return train_;
        case Split::Valid: return valid_;
        case Split::Test: return test_;
    }
    return test_;
}

void KnowledgeGraph::check_indices(const Triple& t) const {
    const auto ne = static_cast<std::int32_t>(entities_.size());
    const auto nr = static_cast<std::int32_t>(relations_.size());
    if (t.head < 0 || t.head >= ne || t.tail < 0 || t.tail >= ne || t.relation < 0 || t.relation >= nr)
        throw DataError("triple index out of range (" + std::to_string(t.head) + ", " + std::to_string(t.relation) +
                        ", " + std::to_string(t.tail) + ")");
}

bool KnowledgeGraph::is_known(const Triple& t) const {
    check_indices(t);
    return contains(t);
}

std::optional<Triple> KnowledgeGraph::resolve(const LabeledTriple& t) const {
    auto h = entities_.find(t.head);
    auto r = relations_.find(t.relation);
    auto tl = entities_.find(t.tail);
    if (!h || !r || !tl) return std::nullopt;
    return Triple{*h, *r, *tl};
}

LabeledTriple KnowledgeGraph::labels_of(const Triple& t) const {
    return {entities_.label(t.head), relations_.label(t.relation), entities_.label(t.tail)};
}

std::vector<LabeledTriple> load_triples(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open triple file " + path.string());
    std::vector<LabeledTriple> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (;;) {
            const auto tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != 3)
            throw ParseError(path.string(), lineno,
                             "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
        for (const auto& f : fields)
            if (f.empty()) throw ParseError(path.string(), lineno, "empty field");
        out.push_back({std::move(fields[0]), std::move(fields[1]), std::move(fields[2])});
    }
    if (out.empty()) throw DataError("triple file " + path.string() + " contains no triples");
    return out;
}

KnowledgeGraph build_graph(const std::vector<LabeledTriple>& triples, const SplitConfig& split) {
    split.validate();
    Vocabulary entities;
    Vocabulary relations;
    std::vector<Triple> distinct;
    std::unordered_set<Triple> seen;
    for (const auto& lt : triples) {
        Triple t;
        t.head = entities.add(lt.head);
        t.relation = relations.add(lt.relation);
        t.tail = entities.add(lt.tail);
        if (seen.insert(t).second) distinct.push_back(t);
    }
    const std::size_t n = distinct.size();
    if (n < 10) throw DataError("need at least 10 distinct triples, got " + std::to_string(n));

    // The epsilon absorbs representation error so that e.g. 100 * 0.1 floors to 10.
    const auto n_valid = static_cast<std::size_t>(std::floor(static_cast<double>(n) * split.valid_fraction + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * split.test_fraction + 1e-9));
    if (n_valid < 1 || n_test < 1 || n_valid + n_test >= n)
        throw DataError("split leaves an empty partition for " + std::to_string(n) + " triples");
    const std::size_t n_train = n - n_valid - n_test;

    Engine eng(derive_seed(split.seed, "split"));
    shuffle(distinct, eng);

    std::vector<Triple> train(distinct.begin(), distinct.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<Triple> valid(distinct.begin() + static_cast<std::ptrdiff_t>(n_train),
                              distinct.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
    std::vector<Triple> test(distinct.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), distinct.end());
    return KnowledgeGraph(std::move(entities), std::move(relations), std::move(train), std::move(valid),
                          std::move(test));
}

namespace {

using PairKey = std::pair<std::string, std::string>;

struct RelationIndex {
    std::map<std::string, std::vector<PairKey>> pairs_by_relation;
    std::map<PairKey, std::set<std::string>> relations_by_pair;
};

RelationIndex index_relations(const std::vector<LabeledTriple>& triples) {
    RelationIndex idx;
    for (const auto& t : triples) {
        PairKey p{t.head, t.tail};
        if (idx.relations_by_pair[p].insert(t.relation).second) idx.pairs_by_relation[t.relation].push_back(p);
    }
    return idx;
}

}  // namespace

double inverse_overlap(const std::vector<LabeledTriple>& triples, std::string_view r1, std::string_view r2) {
    const auto idx = index_relations(triples);
    auto it = idx.pairs_by_relation.find(std::string(r1));
    if (it == idx.pairs_by_relation.end() || it->second.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& [h, t] : it->second) {
        auto rev = idx.relations_by_pair.find({t, h});
        if (rev != idx.relations_by_pair.end() && rev->second.count(std::string(r2))) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(it->second.size());
}

std::vector<LabeledTriple> remove_inverse_relations(const std::vector<LabeledTriple>& triples,
                                                    double overlap_threshold) {
    if (!(overlap_threshold > 0.0 && overlap_threshold <= 1.0))
        throw ConfigError("inverse overlap threshold must be in (0, 1]");

    std::vector<LabeledTriple> unique;
    {
        std::set<std::tuple<std::string, std::string, std::string>> seen;
        for (const auto& t : triples)
            if (seen.emplace(t.head, t.relation, t.tail).second) unique.push_back(t);
    }

    const auto idx = index_relations(unique);
    // overlap counts: hits[r1][r2] = #(h, r1, t) with (t, r2, h) present
    std::map<std::string, std::map<std::string, std::size_t>> hits;
    for (const auto& [rel, pairs] : idx.pairs_by_relation) {
        auto& row = hits[rel];
        for (const auto& [h, t] : pairs) {
            auto rev = idx.relations_by_pair.find({t, h});
            if (rev == idx.relations_by_pair.end()) continue;
            for (const auto& r2 : rev->second)
                if (r2 != rel) ++row[r2];
        }
    }

    std::set<std::string> dropped;
    for (const auto& [r1, row] : hits) {
        const double n1 = static_cast<double>(idx.pairs_by_relation.at(r1).size());
        for (const auto& [r2, count12] : row) {
            if (!(r1 < r2)) continue;
            const double n2 = static_cast<double>(idx.pairs_by_relation.at(r2).size());
            const auto back = hits.find(r2);
            std::size_t count21 = 0;
            if (back != hits.end()) {
                auto c = back->second.find(r1);
                if (c != back->second.end()) count21 = c->second;
            }
            if (static_cast<double>(count12) / n1 >= overlap_threshold &&
                static_cast<double>(count21) / n2 >= overlap_threshold)
                dropped.insert(r2);
        }
    }

    std::vector<LabeledTriple> out;
    out.reserve(unique.size());
    for (auto& t : unique)
        if (!dropped.count(t.relation)) out.push_back(std::move(t));
    return out;
}

namespace {

nlohmann::json triples_to_json(const std::vector<Triple>& v) {
    auto arr = nlohmann::json::array();
    for (const auto& t : v) arr.push_back({t.head, t.relation, t.tail});
    return arr;
}

std::vector<Triple> triples_from_json(const nlohmann::json& arr) {
    std::vector<Triple> out;
    out.reserve(arr.size());
    for (const auto& row : arr) {
        if (!row.is_array() || row.size() != 3) throw DataError("graph checkpoint: triple must be [h, r, t]");
        out.push_back({row[0].get<std::int32_t>(), row[1].get<std::int32_t>(), row[2].get<std::int32_t>()});
    }
    return out;
}

}  // namespace

void save_graph(const KnowledgeGraph& graph, const std::filesystem::path& path) {
    nlohmann::json j;
    j["format"] = "kgcal.graph";
    j["version"] = 1;
    j["entities"] = graph.entities().labels();
    j["relations"] = graph.relations().labels();
    j["train"] = triples_to_json(graph.train());
    j["valid"] = triples_to_json(graph.valid());
    j["test"] = triples_to_json(graph.test());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write graph checkpoint " + path.string());
    out << j.dump() << '\n';
}

KnowledgeGraph load_graph(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open graph checkpoint " + path.string());
    nlohmann::json j;
    try {
        in >> j;
        if (j.value("format", "") != "kgcal.graph") throw DataError("not a graph checkpoint: " + path.string());
        if (j.at("version").get<int>() != 1) throw DataError("unsupported graph checkpoint version");
        Vocabulary entities;
        Vocabulary relations;
        for (const auto& s : j.at("entities")) entities.add(s.get<std::string>());
        for (const auto& s : j.at("relations")) relations.add(s.get<std::string>());
        if (entities.size() != j.at("entities").size() || relations.size() != j.at("relations").size())
            throw DataError("graph checkpoint has duplicate vocabulary labels");
        return KnowledgeGraph(std::move(entities), std::move(relations), triples_from_json(j.at("train")),
                              triples_from_json(j.at("valid")), triples_from_json(j.at("test")));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed graph checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace kgcal
