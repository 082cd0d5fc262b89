#include "kgcal/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "kgcal/error.hpp"
#include "kgcal/kernels.hpp"

namespace kgcal {

std::size_t confidence_bin(double confidence, std::size_t bins) {
    if (!(confidence > 0.0)) return 0;
    const double scaled = std::ceil(confidence * static_cast<double>(bins));
    std::size_t m = scaled < 1.0 ? 0 : std::min(bins - 1, static_cast<std::size_t>(scaled) - 1);
    // Snap against the boundaries as doubles so exact multiples of 1/M go down.
    while (m > 0 && confidence <= static_cast<double>(m) / static_cast<double>(bins)) --m;
    while (m + 1 < bins && confidence > static_cast<double>(m + 1) / static_cast<double>(bins)) ++m;
    return m;
}

ReliabilityReport reliability_report(std::span<const double> confidence, std::span<const char> correct,
                                     std::size_t bins) {
    if (bins == 0) throw ConfigError("bin count must be positive");
    if (confidence.size() != correct.size()) throw DataError("confidence and correctness lengths differ");
    ReliabilityReport rep;
    rep.n = confidence.size();
    rep.bins.resize(bins);
    std::vector<double> conf_sum(bins, 0.0), hit_sum(bins, 0.0);
    for (std::size_t i = 0; i < confidence.size(); ++i) {
        const auto m = confidence_bin(confidence[i], bins);
        ++rep.bins[m].count;
        conf_sum[m] += confidence[i];
        hit_sum[m] += correct[i] ? 1.0 : 0.0;
    }
    for (std::size_t m = 0; m < bins; ++m) {
        auto& b = rep.bins[m];
        b.lower = static_cast<double>(m) / static_cast<double>(bins);
        b.upper = static_cast<double>(m + 1) / static_cast<double>(bins);
        if (b.count == 0) continue;
        const double c = static_cast<double>(b.count);
        b.mean_confidence = conf_sum[m] / c;
        b.accuracy = hit_sum[m] / c;
        rep.ece += c / static_cast<double>(rep.n) * std::abs(b.accuracy - b.mean_confidence);
    }
    return rep;
}

namespace {

std::vector<PairQuery> queries_of(const std::vector<Triple>& triples) {
    std::vector<PairQuery> q;
    q.reserve(triples.size());
    for (const auto& t : triples) q.push_back({t.head, t.tail});
    return q;
}

}  // namespace

CalibrationSet calibration_set(const KgeModel& model, const KnowledgeGraph& graph, Split split, int threads) {
    const auto& triples = graph.split(split);
    if (triples.empty()) throw DataError(std::string(to_string(split)) + " split is empty");
    CalibrationSet data;
    data.scores = kernels::score_queries(model, queries_of(triples), resolve_threads(threads));
    data.labels.reserve(triples.size());
    for (const auto& t : triples) data.labels.push_back(t.relation);
    return data;
}

CwaResult evaluate_cwa(const KgeModel& model, const Calibrator& calibrator, const KnowledgeGraph& graph, Split split,
                       std::size_t bins, int threads) {
    const auto& triples = graph.split(split);
    if (triples.empty()) throw DataError(std::string(to_string(split)) + " split is empty");
    if (calibrator.num_classes() != graph.num_relations() &&
        !(calibrator.method() == CalibrationMethod::Softmax && calibrator.num_classes() == 0))
        throw DataError("calibrator was fit for " + std::to_string(calibrator.num_classes()) + " relations, graph has " +
                        std::to_string(graph.num_relations()));
    const int nthreads = resolve_threads(threads);
    const Matrix scores = kernels::score_queries(model, queries_of(triples), nthreads);

    CwaResult res;
    res.predictions.resize(triples.size());
    const auto n = static_cast<std::ptrdiff_t>(triples.size());
#pragma omp parallel for schedule(static) num_threads(nthreads)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto q = static_cast<std::size_t>(i);
        auto& p = res.predictions[q];
        p.head = triples[q].head;
        p.tail = triples[q].tail;
        p.probs = calibrator.probabilities(scores.row(q));
        p.predicted = argmax(p.probs);
        p.confidence = p.probs[static_cast<std::size_t>(p.predicted)];
    }

    std::vector<double> conf(triples.size());
    std::vector<char> hit(triples.size());
    std::size_t correct = 0;
    for (std::size_t q = 0; q < triples.size(); ++q) {
        res.golds.push_back(triples[q].relation);
        conf[q] = res.predictions[q].confidence;
        hit[q] = res.predictions[q].predicted == triples[q].relation;
        correct += hit[q] ? 1 : 0;
    }
    res.accuracy = static_cast<double>(correct) / static_cast<double>(triples.size());
    res.report = reliability_report(conf, hit, bins);
    return res;
}

std::size_t filtered_rank(const KgeModel& model, const KnowledgeGraph& graph, const PairQuery& query,
                          std::int32_t gold) {
    const auto z = score_all_relations(model, query.head, query.tail);
    if (gold < 0 || static_cast<std::size_t>(gold) >= z.values.size())
        throw DataError("gold relation " + std::to_string(gold) + " out of range");
    const double gold_score = z.values[static_cast<std::size_t>(gold)];
    std::size_t rank = 1;
    for (std::size_t r = 0; r < z.values.size(); ++r) {
        const auto ri = static_cast<std::int32_t>(r);
        if (ri == gold) continue;
        if (graph.contains({query.head, ri, query.tail})) continue;
        if (z.values[r] >= gold_score) ++rank;
    }
    return rank;
}

std::map<std::int32_t, RelationReport> per_relation_report(std::span<const Prediction> predictions,
                                                           std::span<const std::int32_t> golds, std::size_t bins) {
    if (predictions.size() != golds.size()) throw DataError("predictions and gold relations differ in length");
    std::map<std::int32_t, std::pair<std::vector<double>, std::vector<char>>> groups;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        auto& g = groups[golds[i]];
        g.first.push_back(predictions[i].confidence);
        g.second.push_back(predictions[i].predicted == golds[i]);
    }
    std::map<std::int32_t, RelationReport> out;
    for (const auto& [rel, g] : groups) {
        RelationReport r;
        r.report = reliability_report(g.first, g.second, bins);
        r.small_sample = g.first.size() < bins;
        out.emplace(rel, std::move(r));
    }
    return out;
}

namespace {

std::vector<PairQuery> distinct_pairs(std::initializer_list<const std::vector<Triple>*> parts) {
    std::vector<PairQuery> out;
    std::unordered_set<std::uint64_t> seen;
    for (const auto* part : parts)
        for (const auto& t : *part) {
            const auto key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(t.head)) << 32) |
                             static_cast<std::uint32_t>(t.tail);
            if (seen.insert(key).second) out.push_back({t.head, t.tail});
        }
    return out;
}

}  // namespace

std::vector<PairQuery> split_queries(const KnowledgeGraph& graph, Split split) {
    return distinct_pairs({&graph.split(split)});
}

std::vector<PairQuery> all_queries(const KnowledgeGraph& graph) {
    return distinct_pairs({&graph.train(), &graph.valid(), &graph.test()});
}

std::vector<OwaCandidate> generate_owa_candidates(const KgeModel& model, const Calibrator& calibrator,
                                                  const KnowledgeGraph& graph, std::span<const PairQuery> queries,
                                                  double threshold, int threads) {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("OWA threshold must be in (0, 1]");
    const Matrix scores = kernels::score_queries(model, queries, resolve_threads(threads));
    std::vector<OwaCandidate> out;
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const auto probs = calibrator.probabilities(scores.row(q));
        const auto r = argmax(probs);
        const double conf = probs[static_cast<std::size_t>(r)];
        if (conf < threshold) continue;
        const Triple t{queries[q].head, r, queries[q].tail};
        if (graph.contains(t)) continue;
        out.push_back({t.head, t.relation, t.tail, conf, model.kind, calibrator.method()});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const OwaCandidate& a, const OwaCandidate& b) { return a.confidence > b.confidence; });
    return out;
}

std::optional<Verdict> LabelFile::find(const Triple& t) const {
    auto it = index_.find(t);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

void LabelFile::resolve(const KnowledgeGraph& graph) {
    index_.clear();
    for (const auto& rec : records) {
        const auto t = graph.resolve(rec.triple);
        if (!t)
            throw DataError("label for unknown entity or relation: " + rec.triple.head + " " + rec.triple.relation +
                            " " + rec.triple.tail);
        if (!index_.emplace(*t, rec.verdict).second)
            throw DataError("duplicate label for " + rec.triple.head + " " + rec.triple.relation + " " +
                            rec.triple.tail);
    }
}

namespace {

Verdict parse_verdict(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (s == "true") return Verdict::True;
    if (s == "false") return Verdict::False;
    if (s == "unsure") return Verdict::Unsure;
    throw std::invalid_argument(s);
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
        const auto tab = line.find('\t', start);
        f.push_back(line.substr(start, tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return f;
}

}  // namespace

LabelFile load_label_file(const std::filesystem::path& path, const KnowledgeGraph& graph) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open label file " + path.string());
    LabelFile lf;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        auto f = split_tabs(line);
        if (f.size() != 4) throw ParseError(path.string(), lineno, "expected head, relation, tail, verdict");
        LabelRecord rec;
        rec.triple = {f[0], f[1], f[2]};
        try {
            rec.verdict = parse_verdict(f[3]);
        } catch (const std::invalid_argument&) {
            throw ParseError(path.string(), lineno, "verdict must be true, false or unsure, got '" + f[3] + "'");
        }
        lf.records.push_back(std::move(rec));
    }
    lf.resolve(graph);
    return lf;
}

OwaResult evaluate_owa(std::span<const OwaCandidate> candidates, const LabelFile& labels, std::size_t bins) {
    std::vector<double> conf;
    std::vector<char> hit;
    OwaResult res;
    std::ostringstream missing;
    std::size_t n_missing = 0;
    for (const auto& c : candidates) {
        const auto v = labels.find({c.head, c.relation, c.tail});
        if (!v) {
            missing << (n_missing++ ? ", " : "") << "(" << c.head << ", " << c.relation << ", " << c.tail << ")";
            continue;
        }
        if (*v == Verdict::Unsure) {
            ++res.unsure;
            continue;
        }
        conf.push_back(c.confidence);
        hit.push_back(*v == Verdict::True);
    }
    if (n_missing) throw DataError(std::to_string(n_missing) + " candidate(s) have no label: " + missing.str());
    res.evaluated = conf.size();
    res.report = reliability_report(conf, hit, bins);
    res.defined = res.evaluated > 0;
    if (res.defined) {
        std::size_t correct = 0;
        for (char h : hit) correct += h ? 1 : 0;
        res.accuracy = static_cast<double>(correct) / static_cast<double>(res.evaluated);
    }
    return res;
}

void save_candidates(std::span<const OwaCandidate> candidates, const KnowledgeGraph& graph,
                     const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write candidates " + path.string());
    out << "# head\trelation\ttail\tconfidence\tmodel\tcalibrator\n";
    char buf[32];
    for (const auto& c : candidates) {
        const auto lt = graph.labels_of({c.head, c.relation, c.tail});
        std::snprintf(buf, sizeof(buf), "%.17g", c.confidence);
        out << lt.head << '\t' << lt.relation << '\t' << lt.tail << '\t' << buf << '\t' << to_string(c.model) << '\t'
            << to_string(c.calibrator) << '\n';
    }
}

std::vector<OwaCandidate> load_candidates(const std::filesystem::path& path, const KnowledgeGraph& graph) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open candidates " + path.string());
    std::vector<OwaCandidate> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.front() == '#') continue;
        const auto f = split_tabs(line);
        if (f.size() != 6) throw ParseError(path.string(), lineno, "expected 6 tab-separated fields");
        const auto t = graph.resolve({f[0], f[1], f[2]});
        if (!t) throw ParseError(path.string(), lineno, "candidate names an unknown entity or relation");
        OwaCandidate c;
        c.head = t->head;
        c.relation = t->relation;
        c.tail = t->tail;
        try {
            c.confidence = std::stod(f[3]);
            c.model = parse_model_kind(f[4]);
            c.calibrator = parse_calibration_method(f[5]);
        } catch (const std::exception& e) {
            throw ParseError(path.string(), lineno, std::string("bad candidate field: ") + e.what());
        }
        out.push_back(c);
    }
    return out;
}

}  // namespace kgcal
