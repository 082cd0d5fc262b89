#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "kgcal/error.hpp"
#include "kgcal/eval.hpp"
#include "kgcal/report.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace kgcal;
using kgcal::testing::TempDir;
using kgcal::testing::write_file;

namespace {

// 1-d DistMult where every entity is 1, so score(h, r, t) = relation value.
KgeModel constant_model(std::size_t entities, const std::vector<double>& relation_scores) {
    KgeModel m;
    m.kind = ModelKind::DistMult;
    m.dim = 1;
    m.entity = Matrix(entities, 1, 1.0);
    m.relation = Matrix(relation_scores.size(), 1);
    for (std::size_t r = 0; r < relation_scores.size(); ++r) m.relation(r, 0) = relation_scores[r];
    return m;
}

Vocabulary vocab(std::initializer_list<const char*> labels) {
    Vocabulary v;
    for (const char* l : labels) v.add(l);
    return v;
}

Prediction pred(std::int32_t predicted, double confidence) {
    Prediction p;
    p.predicted = predicted;
    p.confidence = confidence;
    return p;
}

}  // namespace

TEST_CASE("confidence bins") {
    CHECK(confidence_bin(0.0, 10) == 0);
    CHECK(confidence_bin(0.05, 10) == 0);
    CHECK(confidence_bin(0.1, 10) == 0);
    CHECK(confidence_bin(0.3, 10) == 2);
    CHECK(confidence_bin(0.30000000000000004, 10) == 3);
    CHECK(confidence_bin(0.9, 10) == 8);
    CHECK(confidence_bin(0.95, 10) == 9);
    CHECK(confidence_bin(1.0, 10) == 9);
    for (std::size_t m = 1; m <= 10; ++m) CHECK(confidence_bin(static_cast<double>(m) / 10.0, 10) == m - 1);
}

TEST_CASE("reliability report examples") {
    const std::vector<double> ones(5, 1.0);
    const std::vector<char> right(5, 1);
    auto r = reliability_report(ones, right);
    CHECK(r.ece == 0.0);
    CHECK(r.n == 5);
    CHECK(r.bins.size() == 10);
    CHECK(r.bins[9].count == 5);
    CHECK(r.bins[9].accuracy == 1.0);

    r = reliability_report(std::vector<double>{0.9, 0.9}, std::vector<char>{1, 0});
    CHECK(r.ece == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(r.bins[8].count == 2);

    r = reliability_report(std::vector<double>{}, std::vector<char>{});
    CHECK(r.n == 0);
    CHECK(r.ece == 0.0);
    CHECK_THROWS_AS(reliability_report(std::vector<double>{0.5}, std::vector<char>{}), DataError);
    CHECK_THROWS_AS(reliability_report(std::vector<double>{0.5}, std::vector<char>{1}, 0), ConfigError);

    // accuracy equal to mean confidence in every occupied bin gives zero
    r = reliability_report(std::vector<double>{0.75, 0.75, 0.75, 0.75, 0.5, 0.5}, std::vector<char>{1, 1, 1, 0, 1, 0});
    CHECK(r.ece == 0.0);
}

TEST_CASE("ECE matches the brute-force oracle") {
    Engine eng(17);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> conf(1000);
        std::vector<char> hit(1000);
        for (std::size_t i = 0; i < conf.size(); ++i) {
            // mix of bin-interior values and exact bin edges
            conf[i] = i % 7 == 0 ? static_cast<double>(uniform_index(eng, 11)) / 10.0 : uniform01(eng);
            hit[i] = uniform01(eng) < conf[i];
        }
        const auto r = reliability_report(conf, hit, 10);
        CHECK(std::abs(r.ece - oracle::ece(conf, hit, 10)) <= 1e-12);
        CHECK(r.ece <= 0.05);
        std::size_t total = 0;
        for (const auto& b : r.bins) total += b.count;
        CHECK(total == 1000);
    }
}

TEST_CASE("filtered rank") {
    // four relations scoring 4, 3, 2, 1; relation 0 is a known fact for (a, b)
    const KnowledgeGraph g(vocab({"a", "b", "c"}), vocab({"r0", "r1", "r2", "r3"}), {{0, 0, 1}}, {}, {{0, 2, 1}});
    const auto m = constant_model(3, {4, 3, 2, 1});
    CHECK(filtered_rank(m, g, {0, 1}, 2) == 2);
    CHECK(filtered_rank(m, g, {1, 0}, 2) == 3);  // nothing to filter in this direction
    CHECK(filtered_rank(m, g, {0, 1}, 1) == 1);
    CHECK(filtered_rank(m, g, {0, 1}, 3) == 2);  // r2 is also known for (a, b)
    CHECK_THROWS_AS(filtered_rank(m, g, {0, 1}, 4), DataError);

    // ties count against the gold
    const auto tied = constant_model(3, {2, 2, 2, 1});
    CHECK(filtered_rank(tied, g, {1, 2}, 1) == 3);

    const KnowledgeGraph single(vocab({"a", "b"}), vocab({"r"}), {{0, 0, 1}}, {}, {});
    CHECK(filtered_rank(constant_model(2, {5}), single, {0, 1}, 0) == 1);
}

TEST_CASE("filtered rank against enumeration") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto g = kgcal::testing::random_graph(5, 4, 30, seed);
        const auto m = init_model(ModelKind::TransE, 3, g.num_entities(), g.num_relations(), seed);
        for (std::int32_t h = 0; h < static_cast<std::int32_t>(g.num_entities()); ++h)
            for (std::int32_t t = 0; t < static_cast<std::int32_t>(g.num_entities()); ++t)
                for (std::int32_t r = 0; r < static_cast<std::int32_t>(g.num_relations()); ++r)
                    CHECK(filtered_rank(m, g, {h, t}, r) == oracle::filtered_rank(m, g, h, t, r));
    }
}

TEST_CASE("per-relation reports") {
    std::vector<Prediction> p{pred(0, 1.0), pred(0, 1.0), pred(1, 0.9), pred(1, 0.9)};
    std::vector<std::int32_t> gold{0, 0, 0, 0};
    auto by = per_relation_report(p, gold);
    REQUIRE(by.size() == 1);
    std::vector<double> conf{1.0, 1.0, 0.9, 0.9};
    std::vector<char> hit{1, 1, 0, 0};
    CHECK(by.at(0).report.ece == reliability_report(conf, hit).ece);
    CHECK(by.at(0).small_sample);

    // relation 0 perfectly calibrated, relation 1 always wrong at confidence 1
    p = {pred(0, 1.0), pred(0, 1.0), pred(0, 1.0), pred(0, 1.0)};
    gold = {0, 0, 1, 1};
    by = per_relation_report(p, gold);
    REQUIRE(by.size() == 2);
    CHECK(by.at(0).report.ece == 0.0);
    CHECK(by.at(1).report.ece == 1.0);
    CHECK(by.count(2) == 0);
    const double global = reliability_report(std::vector<double>(4, 1.0), std::vector<char>{1, 1, 0, 0}).ece;
    CHECK(global > 0.0);
    CHECK(global < 1.0);
}

TEST_CASE("evaluate_cwa and the calibration set line up with the split") {
    const auto g = kgcal::testing::random_graph(12, 3, 50, 4);
    const auto m = init_model(ModelKind::DistMult, 3, g.num_entities(), g.num_relations(), 1);
    const auto data = calibration_set(m, g, Split::Test, 2);
    REQUIRE(data.size() == g.test().size());
    for (std::size_t i = 0; i < data.size(); ++i) CHECK(data.labels[i] == g.test()[i].relation);

    const Calibrator soft(IdentitySoftmax{g.num_relations()});
    const auto res1 = evaluate_cwa(m, soft, g, Split::Test, 10, 1);
    const auto res4 = evaluate_cwa(m, soft, g, Split::Test, 10, 4);
    CHECK(res1.accuracy == res4.accuracy);
    CHECK(res1.report.ece == res4.report.ece);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) correct += argmax(data.scores.row(i)) == data.labels[i];
    CHECK(res1.accuracy == doctest::Approx(static_cast<double>(correct) / static_cast<double>(data.size())));

    CHECK_THROWS_AS(evaluate_cwa(m, Calibrator(IdentitySoftmax{7}), g, Split::Test), DataError);
}

TEST_CASE("OWA candidate generation") {
    const auto g = load_graph(kgcal::testing::data_dir() / "owa" / "graph.json");
    const auto m = fixtures::owa_model(g);
    const Calibrator soft(IdentitySoftmax{2});
    const auto cands = generate_owa_candidates(m, soft, g, split_queries(g, Split::Test), 0.8);
    const auto heads = fixtures::owa_expected_heads();
    REQUIRE(cands.size() == heads.size());
    for (std::size_t i = 0; i < cands.size(); ++i) {
        CHECK(g.entities().label(cands[i].head) == heads[i]);
        CHECK(g.relations().label(cands[i].relation) == "p");
        CHECK(cands[i].confidence == doctest::Approx(fixtures::owa_confidence().at(heads[i])).epsilon(1e-12));
        CHECK_FALSE(g.is_known({cands[i].head, cands[i].relation, cands[i].tail}));
        if (i > 0) CHECK(cands[i - 1].confidence >= cands[i].confidence);
    }

    // uniform calibrator never clears 0.8
    const Calibrator flat(PlattOvA{{0, 0}, {0, 0}});
    CHECK(generate_owa_candidates(m, flat, g, all_queries(g), 0.8).empty());
    CHECK_THROWS_AS(generate_owa_candidates(m, soft, g, all_queries(g), 0.0), ConfigError);
    CHECK_THROWS_AS(generate_owa_candidates(m, soft, g, all_queries(g), 1.5), ConfigError);

    // a 0.5 query and a known 0.99 query yield nothing
    const auto some = generate_owa_candidates(
        m, soft, g, std::vector<PairQuery>{{*g.entities().find("h13"), 0}, {*g.entities().find("h11"), 0}}, 0.8);
    CHECK(some.empty());
}

TEST_CASE("OWA evaluation") {
    const auto g = load_graph(kgcal::testing::data_dir() / "owa" / "graph.json");
    const auto m = fixtures::owa_model(g);
    const auto cands =
        generate_owa_candidates(m, Calibrator(IdentitySoftmax{2}), g, split_queries(g, Split::Test), 0.8);
    const auto labels = load_label_file(kgcal::testing::data_dir() / "owa" / "labels.tsv", g);
    const auto res = evaluate_owa(cands, labels);
    CHECK(res.defined);
    CHECK(res.evaluated == fixtures::kOwaEvaluated);
    CHECK(res.unsure == fixtures::kOwaUnsure);
    CHECK(res.accuracy == fixtures::kOwaAccuracy);
    CHECK(std::abs(res.report.ece - fixtures::kOwaEce) <= 1e-12);

    TempDir dir;
    const auto p = *g.entities().find("h1");
    const auto t = *g.entities().find("T");
    OwaCandidate c{p, 0, t, 0.8, ModelKind::DistMult, CalibrationMethod::Softmax};
    write_file(dir / "all_true.tsv", "h1\tp\tT\ttrue\n");
    const auto yes = evaluate_owa(std::vector<OwaCandidate>{c, c}, load_label_file(dir / "all_true.tsv", g));
    CHECK(yes.accuracy == 1.0);
    CHECK(yes.report.ece == doctest::Approx(0.2).epsilon(1e-15));

    write_file(dir / "unsure.tsv", "h1\tp\tT\tUnsure\n");
    const auto none = evaluate_owa(std::vector<OwaCandidate>{c}, load_label_file(dir / "unsure.tsv", g));
    CHECK_FALSE(none.defined);
    CHECK(none.evaluated == 0);
    CHECK(none.unsure == 1);
    CHECK(owa_to_json(none)["ece"].is_null());

    write_file(dir / "other.tsv", "h2\tp\tT\ttrue\n");
    CHECK_THROWS_AS(evaluate_owa(std::vector<OwaCandidate>{c}, load_label_file(dir / "other.tsv", g)), DataError);
}

TEST_CASE("label file errors") {
    const auto g = load_graph(kgcal::testing::data_dir() / "owa" / "graph.json");
    TempDir dir;
    write_file(dir / "a.tsv", "h1\tp\tT\tmaybe\n");
    CHECK_THROWS_AS(load_label_file(dir / "a.tsv", g), ParseError);
    write_file(dir / "b.tsv", "h1\tp\tT\n");
    CHECK_THROWS_AS(load_label_file(dir / "b.tsv", g), ParseError);
    write_file(dir / "c.tsv", "nobody\tp\tT\ttrue\n");
    CHECK_THROWS_AS(load_label_file(dir / "c.tsv", g), DataError);
    write_file(dir / "d.tsv", "h1\tp\tT\ttrue\nh1\tp\tT\tfalse\n");
    CHECK_THROWS_AS(load_label_file(dir / "d.tsv", g), DataError);
}

TEST_CASE("candidate file round trip") {
    const auto g = load_graph(kgcal::testing::data_dir() / "owa" / "graph.json");
    const auto m = fixtures::owa_model(g);
    const auto cands =
        generate_owa_candidates(m, Calibrator(IdentitySoftmax{2}), g, split_queries(g, Split::Test), 0.8);
    TempDir dir;
    save_candidates(cands, g, dir / "c.tsv");
    const auto back = load_candidates(dir / "c.tsv", g);
    REQUIRE(back.size() == cands.size());
    for (std::size_t i = 0; i < cands.size(); ++i) {
        CHECK(back[i].head == cands[i].head);
        CHECK(back[i].relation == cands[i].relation);
        CHECK(back[i].tail == cands[i].tail);
        CHECK(back[i].confidence == cands[i].confidence);
        CHECK(back[i].model == cands[i].model);
        CHECK(back[i].calibrator == cands[i].calibrator);
    }
}

TEST_CASE("report rendering") {
    const auto r = reliability_report(std::vector<double>{0.15, 0.95, 0.95}, std::vector<char>{0, 1, 0}, 10);
    const auto csv = bins_csv(r);
    CHECK(csv.rfind("bin,lower,upper,count,mean_confidence,accuracy\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
    const auto back = reliability_from_json(to_json(r));
    CHECK(back.ece == r.ece);
    CHECK(back.bins.size() == 10);
    CHECK(back.bins[9].count == 2);
    const auto svg = reliability_svg(r, "demo");
    CHECK(svg.find("<svg") == 0);
    CHECK(svg.find("stroke-dasharray") != std::string::npos);
}
