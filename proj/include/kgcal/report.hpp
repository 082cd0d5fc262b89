#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "kgcal/eval.hpp"

namespace kgcal {

nlohmann::json to_json(const ReliabilityReport& report);
ReliabilityReport reliability_from_json(const nlohmann::json& j);

/// accuracy, full reliability report and per-relation ECE, keyed by relation label.
nlohmann::json cwa_to_json(const CwaResult& result, const KnowledgeGraph& graph, std::size_t bins);
nlohmann::json owa_to_json(const OwaResult& result);

/// One row per bin: bin,lower,upper,count,mean_confidence,accuracy
std::string bins_csv(const ReliabilityReport& report);

/// Accuracy bars per confidence bin against the identity diagonal.
std::string reliability_svg(const ReliabilityReport& report, const std::string& title);

void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace kgcal
