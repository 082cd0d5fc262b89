#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgcal/calibration.hpp"
#include "kgcal/graph.hpp"
#include "kgcal/model.hpp"

namespace kgcal {

struct ReliabilityBin {
    double lower = 0.0;
    double upper = 0.0;
    std::size_t count = 0;
    double mean_confidence = 0.0;  // 0 for empty bins
    double accuracy = 0.0;         // 0 for empty bins
};

struct ReliabilityReport {
    std::vector<ReliabilityBin> bins;
    std::size_t n = 0;
    double ece = 0.0;
};

/// Bin of a confidence among `bins` equal-width bins over [0, 1]. Bins are
/// (m/M, (m+1)/M]; an exact multiple of 1/M falls into the lower bin and 0
/// falls into the first bin.
std::size_t confidence_bin(double confidence, std::size_t bins);

/// sum_m |B_m|/n * |acc(B_m) - conf(B_m)|. Empty input gives n = 0 and ECE 0.
ReliabilityReport reliability_report(std::span<const double> confidence, std::span<const char> correct,
                                     std::size_t bins = 10);

struct CwaResult {
    double accuracy = 0.0;
    ReliabilityReport report;
    std::vector<Prediction> predictions;
    std::vector<std::int32_t> golds;
};

/// Scores of every split query over all relations: rows line up with the split.
CalibrationSet calibration_set(const KgeModel& model, const KnowledgeGraph& graph, Split split, int threads = 1);

/// Relation-prediction accuracy and calibration over one split.
CwaResult evaluate_cwa(const KgeModel& model, const Calibrator& calibrator, const KnowledgeGraph& graph, Split split,
                       std::size_t bins = 10, int threads = 1);

/// 1 + number of relations i != gold with (h, i, t) unknown and score >= gold's
/// score (ties count against the gold).
std::size_t filtered_rank(const KgeModel& model, const KnowledgeGraph& graph, const PairQuery& query,
                          std::int32_t gold);

struct RelationReport {
    ReliabilityReport report;
    bool small_sample = false;  // fewer predictions than bins
};

/// Reliability report per gold relation; relations without predictions are absent.
std::map<std::int32_t, RelationReport> per_relation_report(std::span<const Prediction> predictions,
                                                           std::span<const std::int32_t> golds,
                                                           std::size_t bins = 10);

struct OwaCandidate {
    std::int32_t head = 0;
    std::int32_t relation = 0;
    std::int32_t tail = 0;
    double confidence = 0.0;
    ModelKind model = ModelKind::TransE;
    CalibrationMethod calibrator = CalibrationMethod::Softmax;
};

/// Distinct (h, t) pairs of a split in first-appearance order.
std::vector<PairQuery> split_queries(const KnowledgeGraph& graph, Split split);
/// Distinct (h, t) pairs across all splits.
std::vector<PairQuery> all_queries(const KnowledgeGraph& graph);

/// Top-1 calibrated predictions with confidence >= threshold that are not in
/// the graph, sorted by descending confidence (stable in query order).
std::vector<OwaCandidate> generate_owa_candidates(const KgeModel& model, const Calibrator& calibrator,
                                                  const KnowledgeGraph& graph, std::span<const PairQuery> queries,
                                                  double threshold = 0.8, int threads = 1);

enum class Verdict { True, False, Unsure };

struct LabelRecord {
    LabeledTriple triple;
    Verdict verdict = Verdict::Unsure;
};

struct LabelFile {
    std::vector<LabelRecord> records;

    /// Verdict of a resolved triple, if labeled.
    std::optional<Verdict> find(const Triple& t) const;
    /// Resolves every record against the graph; throws DataError on unknown labels.
    void resolve(const KnowledgeGraph& graph);

private:
    std::unordered_map<Triple, Verdict> index_;
};

/// Tab-separated head/relation/tail/verdict; verdict in {true, false, unsure}.
LabelFile load_label_file(const std::filesystem::path& path, const KnowledgeGraph& graph);

struct OwaResult {
    bool defined = false;  // false when every candidate was unsure
    double accuracy = 0.0;
    ReliabilityReport report;
    std::size_t evaluated = 0;
    std::size_t unsure = 0;
};

/// Throws DataError listing candidates without a verdict.
OwaResult evaluate_owa(std::span<const OwaCandidate> candidates, const LabelFile& labels, std::size_t bins = 10);

void save_candidates(std::span<const OwaCandidate> candidates, const KnowledgeGraph& graph,
                     const std::filesystem::path& path);
std::vector<OwaCandidate> load_candidates(const std::filesystem::path& path, const KnowledgeGraph& graph);

}  // namespace kgcal
