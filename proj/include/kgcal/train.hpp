#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "kgcal/graph.hpp"
#include "kgcal/matrix.hpp"
#include "kgcal/model.hpp"
#include "kgcal/rng.hpp"

namespace kgcal {

enum class LossKind { MarginRanking, BinaryCrossEntropy };
enum class OptimizerKind { SGD, Adagrad };

std::string_view to_string(LossKind loss);
std::string_view to_string(OptimizerKind opt);
LossKind parse_loss(std::string_view name);
OptimizerKind parse_optimizer(std::string_view name);

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 100;
    std::size_t dim = 50;
    std::size_t negatives = 1;
    double margin = 1.0;
    OptimizerKind optimizer = OptimizerKind::SGD;
    double learning_rate = 0.01;
    LossKind loss = LossKind::MarginRanking;
    double adagrad_epsilon = 1e-10;
    std::uint64_t seed = 0;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Loss and optimizer of the model's original recipe, other fields default.
TrainConfig default_config(ModelKind kind);

/// Throws ConfigError for illegal (kind, loss, optimizer) combinations or
/// non-positive sizes. learning_rate must be >= 0 (0 freezes the model).
void validate(ModelKind kind, const TrainConfig& config);

struct TrainReport {
    std::vector<double> epoch_loss;  // mean per-positive loss of each epoch
    double valid_accuracy = 0.0;     // uncalibrated top-1 relation accuracy
    double seconds = 0.0;
};

/// `n` copies of the triple with the relation replaced by a uniformly drawn
/// different relation.
std::vector<Triple> sample_negative_relations(const Triple& triple, std::size_t n, std::size_t num_relations,
                                              Engine& eng);

/// sum over negatives of max(0, margin - pos + neg)
double margin_ranking_loss(double pos_score, std::span<const double> neg_scores, double margin);
/// softplus(-pos) + sum softplus(neg)
double bce_loss(double pos_score, std::span<const double> neg_scores);

double softplus(double x);
double sigmoid(double x);

/// Dense gradient buffers shaped like a model, with the list of rows touched
/// since the last clear() so sparse updates stay cheap.
class GradientBuffer {
public:
    explicit GradientBuffer(const KgeModel& model);

    std::span<double> entity(std::int32_t row);
    std::span<double> relation(std::int32_t row);
    std::span<double> normal(std::int32_t row);

    const Matrix& entity_grad() const noexcept { return entity_; }
    const Matrix& relation_grad() const noexcept { return relation_; }
    const Matrix& normal_grad() const noexcept { return normals_; }
    const std::vector<std::int32_t>& touched_entities() const noexcept { return touched_entities_; }
    const std::vector<std::int32_t>& touched_relations() const noexcept { return touched_relations_; }

    void clear();

private:
    Matrix entity_;
    Matrix relation_;
    Matrix normals_;
    std::vector<char> entity_mark_;
    std::vector<char> relation_mark_;
    std::vector<std::int32_t> touched_entities_;
    std::vector<std::int32_t> touched_relations_;
};

/// Adds coeff * d score(t) / d params into grad.
void accumulate_score_gradient(const KgeModel& model, const Triple& t, double coeff, GradientBuffer& grad);

/// Loss of one positive with its negatives, and (if grad != nullptr) its
/// gradient scaled by `scale` added into grad.
double example_loss(const KgeModel& model, LossKind loss, double margin, const Triple& positive,
                    std::span<const Triple> negatives, GradientBuffer* grad = nullptr, double scale = 1.0);

struct TrainResult {
    KgeModel model;
    TrainReport report;
};

/// Single-threaded, deterministic given config.seed.
TrainResult train(const KnowledgeGraph& graph, ModelKind kind, const TrainConfig& config);

/// Uncalibrated top-1 relation accuracy (lowest-index tie rule) on a split.
double raw_top1_accuracy(const KgeModel& model, const KnowledgeGraph& graph, Split split, int threads = 1);

/// Standard search grid for a model kind; margin values only for margin-ranking models.
std::vector<TrainConfig> standard_grid(ModelKind kind, const TrainConfig& base);

struct GridResult {
    std::size_t best_index = 0;
    TrainConfig best_config;
    KgeModel best_model;
    TrainReport best_report;
    std::vector<double> valid_accuracy;  // per grid entry
};

/// Trains every config and keeps the best validation accuracy (first wins
/// ties). Configs run concurrently when threads > 1; each owns its model.
GridResult grid_search(const KnowledgeGraph& graph, ModelKind kind, const std::vector<TrainConfig>& grid,
                       int threads = 1);

}  // namespace kgcal
