// kgcal command-line driver. Every subcommand reads and writes plain files so
// stages can be run one at a time or chained through `run`.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kgcal/calibration.hpp"
#include "kgcal/error.hpp"
#include "kgcal/eval.hpp"
#include "kgcal/graph.hpp"
#include "kgcal/kernels.hpp"
#include "kgcal/model.hpp"
#include "kgcal/pipeline.hpp"
#include "kgcal/report.hpp"
#include "kgcal/train.hpp"

namespace fs = std::filesystem;
using namespace kgcal;

namespace {

struct DataArgs {
    std::string data;
    std::string graph;
    std::string split = "0.8,0.1,0.1";
    std::uint64_t seed = 0;
    std::optional<double> remove_inverse;
};

void add_data_options(CLI::App* app, DataArgs& a, bool with_split = true) {
    app->add_option("--data", a.data, "triple file or directory of triple files");
    app->add_option("--graph", a.graph, "graph checkpoint written by `ingest`");
    if (with_split) {
        app->add_option("--split", a.split, "train,valid,test fractions");
        app->add_option("--remove-inverse", a.remove_inverse, "drop near-inverse relations at this overlap");
    }
}

std::vector<fs::path> triple_files(const fs::path& p) {
    if (!fs::exists(p)) throw ConfigError("no such file or directory: " + p.string());
    if (!fs::is_directory(p)) return {p};
    std::vector<fs::path> out;
    for (const char* name : {"train.txt", "valid.txt", "test.txt"})
        if (fs::exists(p / name)) out.push_back(p / name);
    if (out.empty()) {
        for (const auto& e : fs::directory_iterator(p))
            if (e.is_regular_file() && (e.path().extension() == ".txt" || e.path().extension() == ".tsv"))
                out.push_back(e.path());
        std::sort(out.begin(), out.end());
    }
    if (out.empty()) throw ConfigError("no triple files in " + p.string());
    return out;
}

KnowledgeGraph load_input(const DataArgs& a) {
    if (!a.graph.empty() && !a.data.empty()) throw ConfigError("give --data or --graph, not both");
    if (!a.graph.empty()) return load_graph(a.graph);
    if (a.data.empty()) throw ConfigError("--data or --graph is required");
    const SplitConfig split = SplitConfig::parse_fractions(a.split, derive_seed(a.seed, "split"));
    return ingest(triple_files(a.data), split, a.remove_inverse);
}

nlohmann::json report_json(const TrainReport& r) {
    return {{"epoch_loss", r.epoch_loss}, {"valid_accuracy", r.valid_accuracy}, {"seconds", r.seconds}};
}

nlohmann::json config_json(ModelKind kind, const TrainConfig& c) {
    return {{"model", std::string(to_string(kind))},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"dim", c.dim},
            {"negatives", c.negatives},
            {"margin", c.margin},
            {"optimizer", std::string(to_string(c.optimizer))},
            {"loss", std::string(to_string(c.loss))},
            {"learning_rate", c.learning_rate},
            {"seed", c.seed}};
}

void emit(const nlohmann::json& j, const std::string& path) {
    if (path.empty())
        std::cout << j.dump(2) << "\n";
    else
        write_json(path, j);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Knowledge-graph embedding training, calibration and evaluation"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (default: KGCAL_THREADS or 1)");

    // ingest
    DataArgs ingest_args;
    std::string ingest_out;
    auto* ingest_cmd = app.add_subcommand("ingest", "load triples, dedup, split and write a graph checkpoint");
    add_data_options(ingest_cmd, ingest_args);
    ingest_cmd->add_option("--seed", ingest_args.seed);
    ingest_cmd->add_option("--out", ingest_out)->required();

    // train / grid
    DataArgs train_args;
    std::string train_model, train_out, train_report;
    std::optional<std::size_t> epochs, batch, dim, neg;
    std::optional<double> margin, lr;
    std::optional<std::string> optimizer, loss;
    auto* train_cmd = app.add_subcommand("train", "train one model with a single config");
    auto* grid_cmd = app.add_subcommand("grid", "grid-search a model on validation accuracy");
    for (auto* cmd : {train_cmd, grid_cmd}) {
        add_data_options(cmd, train_args);
        cmd->add_option("--model", train_model, "transe | transh | distmult | complex")->required();
        cmd->add_option("--seed", train_args.seed);
        cmd->add_option("--out", train_out, "model checkpoint")->required();
        cmd->add_option("--report", train_report, "write the training report here instead of stdout");
    }
    train_cmd->add_option("--epochs", epochs);
    train_cmd->add_option("--batch", batch);
    train_cmd->add_option("--dim", dim);
    train_cmd->add_option("--neg", neg);
    train_cmd->add_option("--margin", margin);
    train_cmd->add_option("--lr", lr);
    train_cmd->add_option("--optimizer", optimizer, "sgd | adagrad");
    train_cmd->add_option("--loss", loss, "margin | bce");

    // calibrate
    DataArgs cal_args;
    std::string cal_model, cal_method, cal_out, cal_split = "valid";
    double cal_l2 = 0.0;
    auto* cal_cmd = app.add_subcommand("calibrate", "fit a calibrator on held-out scores");
    add_data_options(cal_cmd, cal_args, false);
    cal_cmd->add_option("--model", cal_model, "model checkpoint")->required();
    cal_cmd->add_option("--method", cal_method, "softmax | platt | isotonic | vector | matrix")->required();
    cal_cmd->add_option("--split", cal_split, "split to fit on");
    cal_cmd->add_option("--l2", cal_l2, "L2 pull toward identity for vector/matrix scaling");
    cal_cmd->add_option("--out", cal_out)->required();

    // eval-cwa
    DataArgs cwa_args;
    std::string cwa_model, cwa_cal, cwa_split = "test", cwa_out, cwa_csv, cwa_svg;
    std::size_t cwa_bins = 10;
    auto* cwa_cmd = app.add_subcommand("eval-cwa", "closed-world accuracy and reliability on a split");
    add_data_options(cwa_cmd, cwa_args, false);
    cwa_cmd->add_option("--model", cwa_model)->required();
    cwa_cmd->add_option("--calibrator", cwa_cal)->required();
    cwa_cmd->add_option("--split", cwa_split);
    cwa_cmd->add_option("--bins", cwa_bins);
    cwa_cmd->add_option("--out", cwa_out, "JSON report (stdout if omitted)");
    cwa_cmd->add_option("--csv", cwa_csv);
    cwa_cmd->add_option("--svg", cwa_svg);

    // predict-owa
    DataArgs owa_args;
    std::string owa_model, owa_cal, owa_queries = "test", owa_out;
    double owa_threshold = 0.8;
    auto* owa_cmd = app.add_subcommand("predict-owa", "emit confident predictions absent from the graph");
    add_data_options(owa_cmd, owa_args, false);
    owa_cmd->add_option("--model", owa_model)->required();
    owa_cmd->add_option("--calibrator", owa_cal)->required();
    owa_cmd->add_option("--threshold", owa_threshold);
    owa_cmd->add_option("--queries", owa_queries, "test | all")->check(CLI::IsMember({"test", "all"}));
    owa_cmd->add_option("--out", owa_out)->required();

    // eval-owa
    DataArgs eowa_args;
    std::string eowa_cands, eowa_labels, eowa_out;
    std::size_t eowa_bins = 10;
    auto* eowa_cmd = app.add_subcommand("eval-owa", "score candidates against human verdicts");
    add_data_options(eowa_cmd, eowa_args, false);
    eowa_cmd->add_option("--candidates", eowa_cands)->required();
    eowa_cmd->add_option("--labels", eowa_labels)->required();
    eowa_cmd->add_option("--bins", eowa_bins);
    eowa_cmd->add_option("--out", eowa_out);

    // report
    std::string rep_in, rep_csv, rep_svg, rep_title = "reliability";
    auto* rep_cmd = app.add_subcommand("report", "render a JSON reliability report as CSV and/or SVG");
    rep_cmd->add_option("--in", rep_in, "report JSON from eval-cwa or eval-owa")->required();
    rep_cmd->add_option("--csv", rep_csv);
    rep_cmd->add_option("--svg", rep_svg);
    rep_cmd->add_option("--title", rep_title);

    // run
    std::string run_config;
    std::optional<std::uint64_t> run_seed;
    std::optional<std::string> run_out;
    auto* run_cmd = app.add_subcommand("run", "run the whole pipeline from a JSON config");
    run_cmd->add_option("--config", run_config)->required();
    run_cmd->add_option("--seed", run_seed);
    run_cmd->add_option("--out", run_out, "output root");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ExitCode::Usage);
    }

    try {
        const int nthreads = resolve_threads(threads);

        if (ingest_cmd->parsed()) {
            if (!ingest_args.graph.empty()) throw ConfigError("ingest takes --data, not --graph");
            const auto g = load_input(ingest_args);
            save_graph(g, ingest_out);
            std::cout << nlohmann::json{{"entities", g.num_entities()},
                                        {"relations", g.num_relations()},
                                        {"train", g.split(Split::Train).size()},
                                        {"valid", g.split(Split::Valid).size()},
                                        {"test", g.split(Split::Test).size()}}
                             .dump()
                      << "\n";
        } else if (train_cmd->parsed()) {
            const ModelKind kind = parse_model_kind(train_model);
            TrainConfig c = default_config(kind);
            c.seed = derive_seed(train_args.seed, "train/" + std::string(to_string(kind)));
            if (epochs) c.epochs = *epochs;
            if (batch) c.batch_size = *batch;
            if (dim) c.dim = *dim;
            if (neg) c.negatives = *neg;
            if (margin) c.margin = *margin;
            if (lr) c.learning_rate = *lr;
            if (optimizer) c.optimizer = parse_optimizer(*optimizer);
            if (loss) c.loss = parse_loss(*loss);
            validate(kind, c);
            const auto g = load_input(train_args);
            const auto res = train(g, kind, c);
            save_model(res.model, train_out);
            auto j = report_json(res.report);
            j["config"] = config_json(kind, c);
            emit(j, train_report);
        } else if (grid_cmd->parsed()) {
            const ModelKind kind = parse_model_kind(train_model);
            TrainConfig base = default_config(kind);
            base.seed = derive_seed(train_args.seed, "train/" + std::string(to_string(kind)));
            const auto grid = standard_grid(kind, base);
            const auto g = load_input(train_args);
            const auto res = grid_search(g, kind, grid, nthreads);
            save_model(res.best_model, train_out);
            auto j = report_json(res.best_report);
            j["config"] = config_json(kind, res.best_config);
            j["best_index"] = res.best_index;
            j["grid_valid_accuracy"] = res.valid_accuracy;
            emit(j, train_report);
        } else if (cal_cmd->parsed()) {
            const auto g = load_input(cal_args);
            const auto model = load_model(cal_model);
            const auto data = calibration_set(model, g, parse_split(cal_split), nthreads);
            AffineFitOptions opt;
            opt.l2 = cal_l2;
            opt.threads = nthreads;
            const auto cal = fit_calibrator(parse_calibration_method(cal_method), data, opt);
            save_calibrator(cal, cal_out);
        } else if (cwa_cmd->parsed()) {
            const auto g = load_input(cwa_args);
            const auto model = load_model(cwa_model);
            const auto cal = load_calibrator(cwa_cal);
            const auto res = evaluate_cwa(model, cal, g, parse_split(cwa_split), cwa_bins, nthreads);
            emit(cwa_to_json(res, g, cwa_bins), cwa_out);
            if (!cwa_csv.empty()) write_text(cwa_csv, bins_csv(res.report));
            if (!cwa_svg.empty()) write_text(cwa_svg, reliability_svg(res.report, "CWA"));
        } else if (owa_cmd->parsed()) {
            const auto g = load_input(owa_args);
            const auto model = load_model(owa_model);
            const auto cal = load_calibrator(owa_cal);
            const auto queries = owa_queries == "all" ? all_queries(g) : split_queries(g, Split::Test);
            const auto cands = generate_owa_candidates(model, cal, g, queries, owa_threshold, nthreads);
            save_candidates(cands, g, owa_out);
            std::cout << nlohmann::json{{"queries", queries.size()}, {"candidates", cands.size()}}.dump() << "\n";
        } else if (eowa_cmd->parsed()) {
            const auto g = load_input(eowa_args);
            const auto cands = load_candidates(eowa_cands, g);
            const auto labels = load_label_file(eowa_labels, g);
            emit(owa_to_json(evaluate_owa(cands, labels, eowa_bins)), eowa_out);
        } else if (rep_cmd->parsed()) {
            const auto j = read_json(rep_in);
            const auto r = reliability_from_json(j.contains("reliability") ? j.at("reliability") : j);
            if (rep_csv.empty() && rep_svg.empty()) std::cout << bins_csv(r);
            if (!rep_csv.empty()) write_text(rep_csv, bins_csv(r));
            if (!rep_svg.empty()) write_text(rep_svg, reliability_svg(r, rep_title));
        } else if (run_cmd->parsed()) {
            const fs::path path(run_config);
            RunConfig c = RunConfig::from_json(read_json(path), path.parent_path());
            if (run_seed) {
                c.seed = *run_seed;
                c.split.seed = derive_seed(c.seed, "split");
            }
            if (run_out) c.output = *run_out;
            if (app.get_option("--threads")->count() > 0) c.threads = threads;
            const auto res = run_pipeline(c);
            std::cout << res.directory.string() << "\n";
            if (res.status != ExitCode::Ok) {
                std::cerr << "kgcal: " << res.error << "\n";
                return static_cast<int>(res.status);
            }
        }
    } catch (const Error& e) {
        std::cerr << "kgcal: " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::cerr << "kgcal: " << e.what() << "\n";
        return static_cast<int>(ExitCode::Data);
    }
    return 0;
}
