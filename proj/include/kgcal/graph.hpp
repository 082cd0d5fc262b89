#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace kgcal {

struct LabeledTriple {
    std::string head;
    std::string relation;
    std::string tail;

    friend bool operator==(const LabeledTriple&, const LabeledTriple&) = default;
};

struct Triple {
    std::int32_t head = 0;
    std::int32_t relation = 0;
    std::int32_t tail = 0;

    friend bool operator==(const Triple&, const Triple&) = default;
};

/// Entity/relation query (h, ?, t).
struct PairQuery {
    std::int32_t head = 0;
    std::int32_t tail = 0;

    friend bool operator==(const PairQuery&, const PairQuery&) = default;
};

/// Label <-> dense index map; indices assigned in insertion order.
class Vocabulary {
public:
    std::int32_t add(std::string_view label);
    std::optional<std::int32_t> find(std::string_view label) const;
    const std::string& label(std::int32_t index) const { return labels_.at(static_cast<std::size_t>(index)); }
    std::size_t size() const noexcept { return labels_.size(); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.labels_ == b.labels_; }

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, std::int32_t> index_;
};

struct SplitConfig {
    double train_fraction = 0.8;
    double valid_fraction = 0.1;
    double test_fraction = 0.1;
    std::uint64_t seed = 0;

    /// Throws ConfigError unless all fractions are positive and sum to 1 within 1e-12.
    void validate() const;
    /// Parses "0.8,0.1,0.1".
    static SplitConfig parse_fractions(std::string_view text, std::uint64_t seed);
};

enum class Split { Train, Valid, Test };

Split parse_split(std::string_view name);
std::string_view to_string(Split split);

class KnowledgeGraph {
public:
    KnowledgeGraph() = default;
    KnowledgeGraph(Vocabulary entities, Vocabulary relations, std::vector<Triple> train,
                   std::vector<Triple> valid, std::vector<Triple> test);

    const Vocabulary& entities() const noexcept { return entities_; }
    const Vocabulary& relations() const noexcept { return relations_; }
    std::size_t num_entities() const noexcept { return entities_.size(); }
    std::size_t num_relations() const noexcept { return relations_.size(); }

    const std::vector<Triple>& train() const noexcept { return train_; }
    const std::vector<Triple>& valid() const noexcept { return valid_; }
    const std::vector<Triple>& test() const noexcept { return test_; }
    const std::vector<Triple>& split(Split s) const;

    /// True iff the triple is in any split. Throws DataError on out-of-range indices.
    bool is_known(const Triple& t) const;
    /// Unchecked variant for hot loops; indices must be in range.
    bool contains(const Triple& t) const { return known_.count(key(t)) != 0; }

    void check_indices(const Triple& t) const;

    /// Resolves labels; nullopt if any label is missing from the vocabularies.
    std::optional<Triple> resolve(const LabeledTriple& t) const;
    LabeledTriple labels_of(const Triple& t) const;

    friend bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b) {
        return a.entities_ == b.entities_ && a.relations_ == b.relations_ && a.train_ == b.train_ &&
               a.valid_ == b.valid_ && a.test_ == b.test_;
    }

private:
    std::uint64_t key(const Triple& t) const {
        return (static_cast<std::uint64_t>(t.head) * relations_.size() + static_cast<std::uint64_t>(t.relation)) *
                   entities_.size() +
               static_cast<std::uint64_t>(t.tail);
    }

    Vocabulary entities_;
    Vocabulary relations_;
    std::vector<Triple> train_;
    std::vector<Triple> valid_;
    std::vector<Triple> test_;
    std::unordered_set<std::uint64_t> known_;
};

/// Reads tab-separated head/relation/tail lines in file order. Blank lines are skipped.
std::vector<LabeledTriple> load_triples(const std::filesystem::path& path);

/// Assigns vocabularies by first appearance, removes duplicates, then shuffles and
/// partitions by the split fractions. Valid/test sizes are floor(n * fraction);
/// the residue goes to train.
KnowledgeGraph build_graph(const std::vector<LabeledTriple>& triples, const SplitConfig& split);

/// Removes exact duplicate triples and every relation that is a near-inverse of a
/// lexicographically smaller relation (overlap >= threshold in both directions).
std::vector<LabeledTriple> remove_inverse_relations(const std::vector<LabeledTriple>& triples,
                                                    double overlap_threshold = 0.8);

/// Fraction of (h, r1, t) triples whose reverse (t, r2, h) exists.
double inverse_overlap(const std::vector<LabeledTriple>& triples, std::string_view r1, std::string_view r2);

void save_graph(const KnowledgeGraph& graph, const std::filesystem::path& path);
KnowledgeGraph load_graph(const std::filesystem::path& path);

}  // namespace kgcal

template <>
struct std::hash<kgcal::Triple> {
    std::size_t operator()(const kgcal::Triple& t) const noexcept {
        std::uint64_t h = static_cast<std::uint32_t>(t.head);
        h = h * 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint32_t>(t.relation);
        h = h * 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint32_t>(t.tail);
        return static_cast<std::size_t>(h ^ (h >> 29));
    }
};
