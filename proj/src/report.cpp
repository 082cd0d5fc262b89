#include "kgcal/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "kgcal/error.hpp"

namespace kgcal {

nlohmann::json to_json(const ReliabilityReport& report) {
    nlohmann::json j;
    j["n"] = report.n;
    j["ece"] = report.ece;
    auto bins = nlohmann::json::array();
    for (const auto& b : report.bins)
        bins.push_back({{"lower", b.lower},
                        {"upper", b.upper},
                        {"count", b.count},
                        {"mean_confidence", b.mean_confidence},
                        {"accuracy", b.accuracy}});
    j["bins"] = bins;
    return j;
}

ReliabilityReport reliability_from_json(const nlohmann::json& j) {
    try {
        ReliabilityReport r;
        r.n = j.at("n").get<std::size_t>();
        r.ece = j.at("ece").get<double>();
        for (const auto& b : j.at("bins"))
            r.bins.push_back({b.at("lower").get<double>(), b.at("upper").get<double>(), b.at("count").get<std::size_t>(),
                              b.at("mean_confidence").get<double>(), b.at("accuracy").get<double>()});
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed reliability report: ") + e.what());
    }
}

nlohmann::json cwa_to_json(const CwaResult& result, const KnowledgeGraph& graph, std::size_t bins) {
    nlohmann::json j;
    j["accuracy"] = result.accuracy;
    j["ece"] = result.report.ece;
    j["reliability"] = to_json(result.report);
    auto per = nlohmann::json::object();
    for (const auto& [rel, rr] : per_relation_report(result.predictions, result.golds, bins)) {
        per[graph.relations().label(rel)] = {
            {"n", rr.report.n}, {"ece", rr.report.ece}, {"small_sample", rr.small_sample}};
    }
    j["per_relation"] = per;
    return j;
}

nlohmann::json owa_to_json(const OwaResult& result) {
    nlohmann::json j;
    j["defined"] = result.defined;
    j["evaluated"] = result.evaluated;
    j["unsure"] = result.unsure;
    j["accuracy"] = result.defined ? nlohmann::json(result.accuracy) : nlohmann::json(nullptr);
    j["ece"] = result.defined ? nlohmann::json(result.report.ece) : nlohmann::json(nullptr);
    j["reliability"] = to_json(result.report);
    return j;
}

std::string bins_csv(const ReliabilityReport& report) {
    std::ostringstream out;
    out << "bin,lower,upper,count,mean_confidence,accuracy\n";
    char buf[160];
    for (std::size_t m = 0; m < report.bins.size(); ++m) {
        const auto& b = report.bins[m];
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%zu,%.17g,%.17g\n", m, b.lower, b.upper, b.count,
                      b.mean_confidence, b.accuracy);
        out << buf;
    }
    return out.str();
}

std::string reliability_svg(const ReliabilityReport& report, const std::string& title) {
    constexpr double size = 300.0, margin = 40.0;
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(2);
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * margin << "\" height=\""
      << size + 2 * margin << "\">\n";
    s << "<text x=\"" << margin << "\" y=\"" << margin / 2 << "\" font-size=\"12\">" << title
      << " (ECE " << report.ece << ")</text>\n";
    const double bw = size / static_cast<double>(report.bins.size());
    for (std::size_t m = 0; m < report.bins.size(); ++m) {
        const auto& b = report.bins[m];
        if (b.count == 0) continue;
        const double h = b.accuracy * size;
        s << "<rect x=\"" << margin + static_cast<double>(m) * bw << "\" y=\"" << margin + size - h << "\" width=\""
          << bw << "\" height=\"" << h << "\" fill=\"steelblue\" stroke=\"black\"/>\n";
    }
    s << "<line x1=\"" << margin << "\" y1=\"" << margin + size << "\" x2=\"" << margin + size << "\" y2=\"" << margin
      << "\" stroke=\"gray\" stroke-dasharray=\"4\"/>\n";
    s << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << size << "\" height=\"" << size
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    s << "<text x=\"" << margin + size / 2 - 30 << "\" y=\"" << size + 1.8 * margin
      << "\" font-size=\"11\">confidence</text>\n";
    s << "<text x=\"4\" y=\"" << margin + size / 2 << "\" font-size=\"11\">acc</text>\n";
    s << "</svg>\n";
    return s.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

}  // namespace kgcal
