#include "kgcal/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <functional>

#include "kgcal/eval.hpp"
#include "kgcal/kernels.hpp"
#include "kgcal/report.hpp"
#include "kgcal/rng.hpp"

namespace kgcal {

namespace fs = std::filesystem;

namespace {

fs::path resolve_path(const fs::path& p, const fs::path& base) {
    if (p.is_absolute() || base.empty()) return p;
    return base / p;
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
    RunConfig c;
    try {
        if (j.contains("data")) {
            const auto& d = j.at("data");
            if (d.contains("triples")) {
                if (d.at("triples").is_string())
                    c.triples.push_back(resolve_path(d.at("triples").get<std::string>(), base_dir));
                else
                    for (const auto& p : d.at("triples")) c.triples.push_back(resolve_path(p.get<std::string>(), base_dir));
            }
            if (d.contains("graph") && !d.at("graph").is_null())
                c.graph = resolve_path(d.at("graph").get<std::string>(), base_dir);
            if (d.contains("remove_inverse") && !d.at("remove_inverse").is_null()) {
                if (d.at("remove_inverse").is_boolean()) {
                    if (d.at("remove_inverse").get<bool>()) c.remove_inverse = 0.8;
                } else {
                    c.remove_inverse = d.at("remove_inverse").get<double>();
                }
            }
            if (d.contains("split")) {
                const auto f = d.at("split").get<std::vector<double>>();
                if (f.size() != 3) throw ConfigError("data.split needs three fractions");
                c.split.train_fraction = f[0];
                c.split.valid_fraction = f[1];
                c.split.test_fraction = f[2];
            }
        }
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& m : j.value("models", nlohmann::json::array())) c.models.push_back(parse_model_kind(m.get<std::string>()));
        if (j.contains("train")) c.train = j.at("train");
        if (j.contains("grid")) c.grid = j.at("grid");
        for (const auto& m : j.value("calibration", nlohmann::json::array()))
            c.methods.push_back(parse_calibration_method(m.get<std::string>()));
        if (j.contains("eval")) {
            const auto& e = j.at("eval");
            c.cwa = e.value("cwa", c.cwa);
            if (e.contains("split")) c.cwa_split = parse_split(e.at("split").get<std::string>());
            c.owa = e.value("owa", c.owa);
            c.owa_threshold = e.value("threshold", c.owa_threshold);
            c.owa_queries = e.value("queries", c.owa_queries);
            if (e.contains("labels") && !e.at("labels").is_null())
                c.labels = resolve_path(e.at("labels").get<std::string>(), base_dir);
            c.bins = e.value("bins", c.bins);
        }
        c.matrix_l2 = j.value("matrix_l2", c.matrix_l2);
        if (j.contains("output")) c.output = resolve_path(j.at("output").get<std::string>(), base_dir);
        c.timestamp = j.value("timestamp", c.timestamp);
        c.threads = j.value("threads", c.threads);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad run config: ") + e.what());
    }
    c.split.seed = derive_seed(c.seed, "split");
    return c;
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    auto files = nlohmann::json::array();
    for (const auto& p : triples) files.push_back(p.string());
    j["data"] = {{"triples", files},
                 {"graph", graph ? nlohmann::json(graph->string()) : nlohmann::json(nullptr)},
                 {"remove_inverse", remove_inverse ? nlohmann::json(*remove_inverse) : nlohmann::json(nullptr)},
                 {"split", {split.train_fraction, split.valid_fraction, split.test_fraction}}};
    auto kinds = nlohmann::json::array();
    for (auto k : models) kinds.push_back(std::string(to_string(k)));
    j["models"] = kinds;
    j["train"] = train;
    j["grid"] = grid;
    auto ms = nlohmann::json::array();
    for (auto m : methods) ms.push_back(std::string(to_string(m)));
    j["calibration"] = ms;
    j["eval"] = {{"cwa", cwa},
                 {"split", std::string(to_string(cwa_split))},
                 {"owa", owa},
                 {"threshold", owa_threshold},
                 {"queries", owa_queries},
                 {"labels", labels ? nlohmann::json(labels->string()) : nlohmann::json(nullptr)},
                 {"bins", bins}};
    j["matrix_l2"] = matrix_l2;
    j["output"] = output.string();
    j["timestamp"] = timestamp;
    j["seed"] = seed;
    j["threads"] = threads;
    return j;
}

TrainConfig apply_overrides(TrainConfig c, const nlohmann::json& o) {
    if (o.is_null()) return c;
    if (!o.is_object()) throw ConfigError("training overrides must be an object");
    try {
        for (const auto& [key, value] : o.items()) {
            if (key == "epochs") c.epochs = value.get<std::size_t>();
            else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
            else if (key == "dim") c.dim = value.get<std::size_t>();
            else if (key == "negatives") c.negatives = value.get<std::size_t>();
            else if (key == "margin") c.margin = value.get<double>();
            else if (key == "learning_rate") c.learning_rate = value.get<double>();
            else if (key == "optimizer") c.optimizer = parse_optimizer(value.get<std::string>());
            else if (key == "loss") c.loss = parse_loss(value.get<std::string>());
            else if (key == "adagrad_epsilon") c.adagrad_epsilon = value.get<double>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else throw ConfigError("unknown training option '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad training option: ") + e.what());
    }
    return c;
}

TrainConfig resolve_train_config(const RunConfig& config, ModelKind kind) {
    TrainConfig c = default_config(kind);
    c.seed = derive_seed(config.seed, "train/" + std::string(to_string(kind)));
    return apply_overrides(c, config.train);
}

std::vector<TrainConfig> resolve_grid(const RunConfig& config, ModelKind kind) {
    const TrainConfig base = resolve_train_config(config, kind);
    if (config.grid.is_null()) return {base};
    if (config.grid.is_string()) {
        if (config.grid.get<std::string>() != "standard") throw ConfigError("grid must be \"standard\" or a list");
        return standard_grid(kind, base);
    }
    if (!config.grid.is_array() || config.grid.empty()) throw ConfigError("grid must be a non-empty list");
    std::vector<TrainConfig> out;
    for (const auto& o : config.grid) out.push_back(apply_overrides(base, o));
    return out;
}

void RunConfig::validate() const {
    if (graph && !triples.empty()) throw ConfigError("give either data.graph or data.triples, not both");
    if (!graph && triples.empty()) throw ConfigError("no input data: set data.triples or data.graph");
    if (graph && !fs::exists(*graph)) throw ConfigError("graph checkpoint not found: " + graph->string());
    for (const auto& p : triples)
        if (!fs::exists(p)) throw ConfigError("triple file not found: " + p.string());
    if (labels && !fs::exists(*labels)) throw ConfigError("label file not found: " + labels->string());
    if (labels && !owa) throw ConfigError("eval.labels requires eval.owa");
    if (models.empty()) throw ConfigError("no models selected");
    if (methods.empty()) throw ConfigError("no calibration methods selected");
    if (bins == 0) throw ConfigError("bins must be positive");
    if (!(owa_threshold > 0.0 && owa_threshold <= 1.0)) throw ConfigError("OWA threshold must be in (0, 1]");
    if (owa_queries != "test" && owa_queries != "all") throw ConfigError("eval.queries must be \"test\" or \"all\"");
    if (remove_inverse && !(*remove_inverse > 0.0 && *remove_inverse <= 1.0))
        throw ConfigError("remove_inverse threshold must be in (0, 1]");
    split.validate();
    for (auto kind : models)
        for (const auto& c : resolve_grid(*this, kind)) kgcal::validate(kind, c);
}

KnowledgeGraph ingest(const std::vector<fs::path>& files, const SplitConfig& split, std::optional<double> remove_inverse) {
    std::vector<LabeledTriple> all;
    for (const auto& f : files) {
        auto part = load_triples(f);
        all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    if (remove_inverse) all = remove_inverse_relations(all, *remove_inverse);
    return build_graph(all, split);
}

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string utc_stamp(const char* fmt) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), fmt, &tm);
    return buf;
}

fs::path make_run_dir(const RunConfig& config, const std::string& hash) {
    fs::path dir = config.output;
    if (config.timestamp) {
        const fs::path base = config.output / ("run-" + utc_stamp("%Y%m%d-%H%M%S") + "-" + hash.substr(0, 8));
        dir = base;
        for (int i = 1; fs::exists(dir); ++i) dir = base.string() + "-" + std::to_string(i);
    }
    fs::create_directories(dir);
    for (const char* sub : {"models", "calibrators", "reports", "owa"}) fs::create_directories(dir / sub);
    return dir;
}

class Manifest {
public:
    Manifest(fs::path dir, const RunConfig& config, std::string hash) : dir_(std::move(dir)) {
        j_["config"] = config.to_json();
        j_["config_hash"] = std::move(hash);
        j_["seed"] = config.seed;
        j_["started_at"] = utc_stamp("%Y-%m-%dT%H:%M:%SZ");
        j_["threads"] = config.threads;
        j_["seeds"] = {{"split", config.split.seed}};
        j_["stages"] = nlohmann::json::array();
        j_["status"] = "running";
    }

    void seed(const std::string& name, std::uint64_t value) { j_["seeds"][name] = value; }

    void stage(const std::string& name, const std::function<void()>& body) {
        try {
            body();
            j_["stages"].push_back({{"name", name}, {"status", "ok"}});
            write();
        } catch (const Error& e) {
            j_["stages"].push_back({{"name", name}, {"status", "failed"}, {"error", e.what()}});
            j_["status"] = "failed";
            j_["failed_stage"] = name;
            write();
            throw;
        }
    }

    void finish() {
        j_["status"] = "ok";
        write();
    }

    void write() const { write_json(dir_ / "manifest.json", j_); }

private:
    fs::path dir_;
    nlohmann::json j_;
};

}  // namespace

PipelineResult run_pipeline(const RunConfig& config) {
    config.validate();
    const std::string hash = hex64(fnv1a64(config.to_json().dump()));
    PipelineResult result;
    result.directory = make_run_dir(config, hash);
    const fs::path& dir = result.directory;
    Manifest manifest(dir, config, hash);
    manifest.write();
    const int threads = resolve_threads(config.threads);

    try {
        KnowledgeGraph graph;
        manifest.stage("ingest", [&] {
            graph = config.graph ? load_graph(*config.graph) : ingest(config.triples, config.split, config.remove_inverse);
            save_graph(graph, dir / "graph.json");
        });

        LabelFile labels;
        if (config.labels) manifest.stage("labels", [&] { labels = load_label_file(*config.labels, graph); });

        auto summary = nlohmann::json::array();
        for (const auto kind : config.models) {
            const std::string kname(to_string(kind));
            KgeModel model;
            manifest.stage("train/" + kname, [&] {
                const auto grid = resolve_grid(config, kind);
                manifest.seed("train/" + kname, grid.front().seed);
                nlohmann::json train_report;
                if (grid.size() == 1) {
                    auto res = train(graph, kind, grid.front());
                    model = std::move(res.model);
                    train_report = {{"epoch_loss", res.report.epoch_loss},
                                    {"valid_accuracy", res.report.valid_accuracy},
                                    {"seconds", res.report.seconds}};
                } else {
                    auto res = grid_search(graph, kind, grid, threads);
                    model = std::move(res.best_model);
                    train_report = {{"epoch_loss", res.best_report.epoch_loss},
                                    {"valid_accuracy", res.best_report.valid_accuracy},
                                    {"seconds", res.best_report.seconds},
                                    {"grid_size", grid.size()},
                                    {"best_index", res.best_index},
                                    {"grid_valid_accuracy", res.valid_accuracy}};
                }
                save_model(model, dir / "models" / (kname + ".bin"));
                write_json(dir / "models" / (kname + ".train.json"), train_report);
            });

            CalibrationSet calib_data;
            manifest.stage("score/" + kname, [&] { calib_data = calibration_set(model, graph, Split::Valid, threads); });

            for (const auto method : config.methods) {
                const std::string tag = kname + "." + std::string(to_string(method));
                Calibrator calibrator;
                manifest.stage("calibrate/" + tag, [&] {
                    AffineFitOptions opt;
                    opt.l2 = method == CalibrationMethod::Matrix ? config.matrix_l2 : 0.0;
                    opt.threads = threads;
                    calibrator = fit_calibrator(method, calib_data, opt);
                    save_calibrator(calibrator, dir / "calibrators" / (tag + ".json"));
                });
                if (config.cwa) {
                    manifest.stage("eval-cwa/" + tag, [&] {
                        const auto res = evaluate_cwa(model, calibrator, graph, config.cwa_split, config.bins, threads);
                        write_json(dir / "reports" / ("cwa." + tag + ".json"), cwa_to_json(res, graph, config.bins));
                        write_text(dir / "reports" / ("cwa." + tag + ".csv"), bins_csv(res.report));
                        write_text(dir / "reports" / ("cwa." + tag + ".svg"), reliability_svg(res.report, tag));
                        summary.push_back({{"model", kname},
                                           {"method", std::string(to_string(method))},
                                           {"split", std::string(to_string(config.cwa_split))},
                                           {"accuracy", res.accuracy},
                                           {"ece", res.report.ece}});
                    });
                }
                if (config.owa) {
                    manifest.stage("owa/" + tag, [&] {
                        const auto queries = config.owa_queries == "all" ? all_queries(graph)
                                                                          : split_queries(graph, Split::Test);
                        const auto cands =
                            generate_owa_candidates(model, calibrator, graph, queries, config.owa_threshold, threads);
                        save_candidates(cands, graph, dir / "owa" / (tag + ".candidates.tsv"));
                        if (config.labels) {
                            const auto res = evaluate_owa(cands, labels, config.bins);
                            write_json(dir / "reports" / ("owa." + tag + ".json"), owa_to_json(res));
                            write_text(dir / "reports" / ("owa." + tag + ".csv"), bins_csv(res.report));
                        }
                    });
                }
            }
        }
        if (config.cwa) write_json(dir / "reports" / "summary.json", summary);
        manifest.finish();
    } catch (const Error& e) {
        result.status = e.code();
        result.error = e.what();
    }
    return result;
}

}  // namespace kgcal
