#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kgcal/calibration.hpp"
#include "kgcal/error.hpp"
#include "kgcal/graph.hpp"
#include "kgcal/model.hpp"
#include "kgcal/train.hpp"

namespace kgcal {

/// Declarative description of an end-to-end run. Parsed from JSON; CLI flags
/// are applied on top by the caller.
struct RunConfig {
    std::vector<std::filesystem::path> triples;   // concatenated, then split
    std::optional<std::filesystem::path> graph;   // prebuilt checkpoint instead of triples
    std::optional<double> remove_inverse;         // overlap threshold
    SplitConfig split;
    std::vector<ModelKind> models;
    nlohmann::json train = nlohmann::json::object();  // TrainConfig overrides
    nlohmann::json grid;                              // null, "standard", or array of overrides
    std::vector<CalibrationMethod> methods;
    bool cwa = true;
    Split cwa_split = Split::Test;
    bool owa = false;
    double owa_threshold = 0.8;
    std::string owa_queries = "test";  // "test" or "all"
    std::optional<std::filesystem::path> labels;
    std::size_t bins = 10;
    double matrix_l2 = 0.0;
    std::filesystem::path output = "runs";
    bool timestamp = true;
    std::uint64_t seed = 0;
    int threads = 1;

    static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    nlohmann::json to_json() const;

    /// Fails fast on missing files or illegal training combinations.
    void validate() const;
};

/// Applies JSON overrides (epochs, batch_size, dim, negatives, margin,
/// learning_rate, optimizer, loss, seed) to a config.
TrainConfig apply_overrides(TrainConfig config, const nlohmann::json& overrides);

/// Per-kind base training config: recipe defaults, then overrides, then the
/// derived seed.
TrainConfig resolve_train_config(const RunConfig& config, ModelKind kind);
std::vector<TrainConfig> resolve_grid(const RunConfig& config, ModelKind kind);

struct PipelineResult {
    ExitCode status = ExitCode::Ok;
    std::filesystem::path directory;
    std::string error;
};

/// Runs ingest -> train/grid -> calibrate -> evaluate and writes every
/// artifact plus manifest.json under a fresh run directory. Stage errors are
/// recorded in the manifest rather than thrown; config validation errors throw.
PipelineResult run_pipeline(const RunConfig& config);

/// Loads triple files, optionally strips inverse relations, then splits.
KnowledgeGraph ingest(const std::vector<std::filesystem::path>& files, const SplitConfig& split,
                      std::optional<double> remove_inverse);

}  // namespace kgcal
