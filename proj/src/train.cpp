#include "kgcal/train.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <sstream>
#include <string>

#include "kgcal/error.hpp"
#include "kgcal/kernels.hpp"

namespace kgcal {

std::string_view to_string(LossKind loss) {
    return loss == LossKind::MarginRanking ? "margin" : "bce";
}

std::string_view to_string(OptimizerKind opt) { return opt == OptimizerKind::SGD ? "sgd" : "adagrad"; }

LossKind parse_loss(std::string_view name) {
    if (name == "margin" || name == "margin-ranking") return LossKind::MarginRanking;
    if (name == "bce" || name == "binary-cross-entropy") return LossKind::BinaryCrossEntropy;
    throw ConfigError("unknown loss '" + std::string(name) + "'");
}

OptimizerKind parse_optimizer(std::string_view name) {
    if (name == "sgd") return OptimizerKind::SGD;
    if (name == "adagrad") return OptimizerKind::Adagrad;
    throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

TrainConfig default_config(ModelKind kind) {
    TrainConfig c;
    switch (kind) {
        case ModelKind::TransE:
        case ModelKind::TransH:
            c.loss = LossKind::MarginRanking;
            c.optimizer = OptimizerKind::SGD;
            break;
        case ModelKind::DistMult:
            c.loss = LossKind::MarginRanking;
            c.optimizer = OptimizerKind::Adagrad;
            break;
        case ModelKind::ComplEx:
            c.loss = LossKind::BinaryCrossEntropy;
            c.optimizer = OptimizerKind::Adagrad;
            break;
    }
    return c;
}

void validate(ModelKind kind, const TrainConfig& config) {
    const TrainConfig expected = default_config(kind);
    if (config.loss != expected.loss || config.optimizer != expected.optimizer) {
        throw ConfigError(std::string(to_string(kind)) + " must be trained with " +
                          std::string(to_string(expected.loss)) + " loss and " +
                          std::string(to_string(expected.optimizer)) + ", got " + std::string(to_string(config.loss)) +
                          "/" + std::string(to_string(config.optimizer)));
    }
    if (config.epochs == 0 || config.batch_size == 0 || config.dim == 0 || config.negatives == 0)
        throw ConfigError("epochs, batch size, dim and negatives must be positive");
    if (!(config.learning_rate >= 0.0) || !std::isfinite(config.learning_rate))
        throw ConfigError("learning rate must be finite and non-negative");
    if (config.loss == LossKind::MarginRanking && !(config.margin > 0.0))
        throw ConfigError("margin must be positive");
    if (!(config.adagrad_epsilon > 0.0)) throw ConfigError("adagrad epsilon must be positive");
}

std::vector<Triple> sample_negative_relations(const Triple& triple, std::size_t n, std::size_t num_relations,
                                              Engine& eng) {
    if (num_relations < 2) throw DataError("negative relation sampling needs at least two relations");
    if (n == 0) throw ConfigError("negative sample count must be >= 1");
    std::vector<Triple> out(n, triple);
    for (auto& t : out) {
        auto r = static_cast<std::int32_t>(uniform_index(eng, num_relations - 1));
        if (r >= triple.relation) ++r;
        t.relation = r;
    }
    return out;
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double margin_ranking_loss(double pos_score, std::span<const double> neg_scores, double margin) {
    double loss = 0.0;
    for (double s : neg_scores) loss += std::max(0.0, margin - pos_score + s);
    return loss;
}

double bce_loss(double pos_score, std::span<const double> neg_scores) {
    double loss = softplus(-pos_score);
    for (double s : neg_scores) loss += softplus(s);
    return loss;
}

GradientBuffer::GradientBuffer(const KgeModel& model)
    : entity_(model.entity.rows(), model.entity.cols()),
      relation_(model.relation.rows(), model.relation.cols()),
      normals_(model.normals.rows(), model.normals.cols()),
      entity_mark_(model.entity.rows(), 0),
      relation_mark_(model.relation.rows(), 0) {}

std::span<double> GradientBuffer::entity(std::int32_t row) {
    const auto r = static_cast<std::size_t>(row);
    if (!entity_mark_[r]) {
        entity_mark_[r] = 1;
        touched_entities_.push_back(row);
    }
    return entity_.row(r);
}

std::span<double> GradientBuffer::relation(std::int32_t row) {
    const auto r = static_cast<std::size_t>(row);
    if (!relation_mark_[r]) {
        relation_mark_[r] = 1;
        touched_relations_.push_back(row);
    }
    return relation_.row(r);
}

std::span<double> GradientBuffer::normal(std::int32_t row) {
    relation(row);
    return normals_.row(static_cast<std::size_t>(row));
}

void GradientBuffer::clear() {
    for (auto r : touched_entities_) {
        auto row = entity_.row(static_cast<std::size_t>(r));
        std::fill(row.begin(), row.end(), 0.0);
        entity_mark_[static_cast<std::size_t>(r)] = 0;
    }
    for (auto r : touched_relations_) {
        auto row = relation_.row(static_cast<std::size_t>(r));
        std::fill(row.begin(), row.end(), 0.0);
        if (!normals_.empty()) {
            auto nrow = normals_.row(static_cast<std::size_t>(r));
            std::fill(nrow.begin(), nrow.end(), 0.0);
        }
        relation_mark_[static_cast<std::size_t>(r)] = 0;
    }
    touched_entities_.clear();
    touched_relations_.clear();
}

void accumulate_score_gradient(const KgeModel& model, const Triple& t, double coeff, GradientBuffer& grad) {
    const auto h = model.entity.row(static_cast<std::size_t>(t.head));
    const auto r = model.relation.row(static_cast<std::size_t>(t.relation));
    const auto tl = model.entity.row(static_cast<std::size_t>(t.tail));
    const std::size_t d = model.dim;
    // Spans are fetched one at a time: head and tail may be the same row.
    switch (model.kind) {
        case ModelKind::TransE: {
            std::vector<double> u(d);
            double sq = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                u[i] = h[i] + r[i] - tl[i];
                sq += u[i] * u[i];
            }
            const double norm = std::sqrt(sq);
            if (norm == 0.0) return;
            // d score / d v = -v / ||v||
            for (auto& x : u) x = -coeff * x / norm;
            auto gh = grad.entity(t.head);
            for (std::size_t i = 0; i < d; ++i) gh[i] += u[i];
            auto gr = grad.relation(t.relation);
            for (std::size_t i = 0; i < d; ++i) gr[i] += u[i];
            auto gt = grad.entity(t.tail);
            for (std::size_t i = 0; i < d; ++i) gt[i] -= u[i];
            break;
        }
        case ModelKind::TransH: {
            const auto w = model.normals.row(static_cast<std::size_t>(t.relation));
            std::vector<double> diff(d), v(d);
            double wd = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                diff[i] = h[i] - tl[i];
                wd += w[i] * diff[i];
            }
            double sq = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                v[i] = diff[i] - wd * w[i] + r[i];
                sq += v[i] * v[i];
            }
            const double norm = std::sqrt(sq);
            if (norm == 0.0) return;
            std::vector<double> u(d);
            double wu = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                u[i] = -coeff * v[i] / norm;
                wu += w[i] * u[i];
            }
            auto gr = grad.relation(t.relation);
            for (std::size_t i = 0; i < d; ++i) gr[i] += u[i];
            auto gh = grad.entity(t.head);
            for (std::size_t i = 0; i < d; ++i) gh[i] += u[i] - wu * w[i];
            auto gt = grad.entity(t.tail);
            for (std::size_t i = 0; i < d; ++i) gt[i] -= u[i] - wu * w[i];
            auto gw = grad.normal(t.relation);
            for (std::size_t i = 0; i < d; ++i) gw[i] -= diff[i] * wu + wd * u[i];
            break;
        }
        case ModelKind::DistMult: {
            auto gh = grad.entity(t.head);
            for (std::size_t i = 0; i < d; ++i) gh[i] += coeff * r[i] * tl[i];
            auto gt = grad.entity(t.tail);
            for (std::size_t i = 0; i < d; ++i) gt[i] += coeff * h[i] * r[i];
            auto gr = grad.relation(t.relation);
            for (std::size_t i = 0; i < d; ++i) gr[i] += coeff * h[i] * tl[i];
            break;
        }
        case ModelKind::ComplEx: {
            // h = a + ib, r = c + i e, t = f + i g
            auto gh = grad.entity(t.head);
            for (std::size_t i = 0; i < d; ++i) {
                const double c = r[i], e = r[d + i], f = tl[i], g = tl[d + i];
                gh[i] += coeff * (c * f + e * g);
                gh[d + i] += coeff * (c * g - e * f);
            }
            auto gt = grad.entity(t.tail);
            for (std::size_t i = 0; i < d; ++i) {
                const double a = h[i], b = h[d + i], c = r[i], e = r[d + i];
                gt[i] += coeff * (a * c - b * e);
                gt[d + i] += coeff * (b * c + a * e);
            }
            auto gr = grad.relation(t.relation);
            for (std::size_t i = 0; i < d; ++i) {
                const double a = h[i], b = h[d + i], f = tl[i], g = tl[d + i];
                gr[i] += coeff * (a * f + b * g);
                gr[d + i] += coeff * (a * g - b * f);
            }
            break;
        }
    }
}

double example_loss(const KgeModel& model, LossKind loss, double margin, const Triple& positive,
                    std::span<const Triple> negatives, GradientBuffer* grad, double scale) {
    const double pos = score_unchecked(model, positive.head, positive.relation, positive.tail);
    double total = 0.0;
    double pos_coeff = 0.0;
    if (loss == LossKind::MarginRanking) {
        for (const auto& n : negatives) {
            const double neg = score_unchecked(model, n.head, n.relation, n.tail);
            const double term = margin - pos + neg;
            if (term <= 0.0) continue;
            total += term;
            if (grad) {
                pos_coeff -= scale;
                accumulate_score_gradient(model, n, scale, *grad);
            }
        }
    } else {
        total = softplus(-pos);
        pos_coeff = (sigmoid(pos) - 1.0) * scale;
        for (const auto& n : negatives) {
            const double neg = score_unchecked(model, n.head, n.relation, n.tail);
            total += softplus(neg);
            if (grad) accumulate_score_gradient(model, n, sigmoid(neg) * scale, *grad);
        }
    }
    if (grad && pos_coeff != 0.0) accumulate_score_gradient(model, positive, pos_coeff, *grad);
    return total;
}

namespace {

struct Optimizer {
    OptimizerKind kind;
    double lr;
    double eps;
    Matrix entity_acc;
    Matrix relation_acc;
    Matrix normal_acc;

    Optimizer(const KgeModel& m, const TrainConfig& c) : kind(c.optimizer), lr(c.learning_rate), eps(c.adagrad_epsilon) {
        if (kind == OptimizerKind::Adagrad) {
            entity_acc = Matrix(m.entity.rows(), m.entity.cols());
            relation_acc = Matrix(m.relation.rows(), m.relation.cols());
            normal_acc = Matrix(m.normals.rows(), m.normals.cols());
        }
    }

    void step(std::span<double> param, std::span<const double> g, Matrix& acc, std::size_t row) {
        if (kind == OptimizerKind::SGD) {
            for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * g[i];
            return;
        }
        auto a = acc.row(row);
        for (std::size_t i = 0; i < param.size(); ++i) {
            a[i] += g[i] * g[i];
            param[i] -= lr * g[i] / (std::sqrt(a[i]) + eps);
        }
    }

    void apply(KgeModel& m, const GradientBuffer& grad) {
        for (auto r : grad.touched_entities()) {
            const auto row = static_cast<std::size_t>(r);
            step(m.entity.row(row), grad.entity_grad().row(row), entity_acc, row);
        }
        for (auto r : grad.touched_relations()) {
            const auto row = static_cast<std::size_t>(r);
            step(m.relation.row(row), grad.relation_grad().row(row), relation_acc, row);
            if (m.kind == ModelKind::TransH) step(m.normals.row(row), grad.normal_grad().row(row), normal_acc, row);
        }
    }
};

bool translational(ModelKind kind) { return kind == ModelKind::TransE || kind == ModelKind::TransH; }

}  // namespace

TrainResult train(const KnowledgeGraph& graph, ModelKind kind, const TrainConfig& config) {
    validate(kind, config);
    if (graph.train().empty()) throw DataError("training split is empty");
    const auto start = std::chrono::steady_clock::now();

    TrainResult result;
    KgeModel& model = result.model;
    model = init_model(kind, config.dim, graph.num_entities(), graph.num_relations(), derive_seed(config.seed, "init"));
    if (translational(kind))
        for (std::size_t e = 0; e < model.num_entities(); ++e) normalize_row(model.entity.row(e));

    Engine eng(derive_seed(config.seed, "train"));
    Optimizer opt(model, config);
    GradientBuffer grad(model);
    const auto& positives = graph.train();
    std::vector<std::size_t> order(positives.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle(order, eng);
        double epoch_total = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            const double scale = 1.0 / static_cast<double>(end - begin);
            grad.clear();
            double batch_total = 0.0;
            for (std::size_t i = begin; i < end; ++i) {
                const Triple& pos = positives[order[i]];
                const auto negs = sample_negative_relations(pos, config.negatives, graph.num_relations(), eng);
                batch_total += example_loss(model, config.loss, config.margin, pos, negs, &grad, scale);
            }
            if (!std::isfinite(batch_total)) {
                std::ostringstream msg;
                msg << "non-finite loss in epoch " << epoch << " at batch starting " << begin << " ("
                    << to_string(kind) << ", lr " << config.learning_rate << ", dim " << config.dim << ")";
                throw NumericalError(msg.str());
            }
            epoch_total += batch_total;
            opt.apply(model, grad);
            if (translational(kind)) {
                for (auto e : grad.touched_entities()) normalize_row(model.entity.row(static_cast<std::size_t>(e)));
            }
            if (kind == ModelKind::TransH) {
                for (auto r : grad.touched_relations()) normalize_row(model.normals.row(static_cast<std::size_t>(r)));
            }
        }
        result.report.epoch_loss.push_back(epoch_total / static_cast<double>(positives.size()));
    }

    model.validate();
    result.report.valid_accuracy = raw_top1_accuracy(model, graph, Split::Valid);
    result.report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

double raw_top1_accuracy(const KgeModel& model, const KnowledgeGraph& graph, Split split, int threads) {
    const auto& triples = graph.split(split);
    if (triples.empty()) return 0.0;
    std::vector<PairQuery> queries;
    queries.reserve(triples.size());
    for (const auto& t : triples) queries.push_back({t.head, t.tail});
    const Matrix scores = kernels::score_queries(model, queries, resolve_threads(threads));
    std::size_t correct = 0;
    for (std::size_t q = 0; q < triples.size(); ++q) {
        const auto row = scores.row(q);
        std::size_t best = 0;
        for (std::size_t r = 1; r < row.size(); ++r)
            if (row[r] > row[best]) best = r;
        if (static_cast<std::int32_t>(best) == triples[q].relation) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(triples.size());
}

std::vector<TrainConfig> standard_grid(ModelKind kind, const TrainConfig& base) {
    const TrainConfig recipe = default_config(kind);
    std::vector<double> margins{1.0, 5.0, 10.0};
    if (recipe.loss != LossKind::MarginRanking) margins = {base.margin};
    std::vector<TrainConfig> grid;
    for (std::size_t epochs : {200, 300, 500})
        for (std::size_t batch : {100, 200, 500})
            for (std::size_t dim : {50, 100})
                for (std::size_t neg : {1, 5})
                    for (double margin : margins) {
                        TrainConfig c = base;
                        c.loss = recipe.loss;
                        c.optimizer = recipe.optimizer;
                        c.epochs = epochs;
                        c.batch_size = batch;
                        c.dim = dim;
                        c.negatives = neg;
                        c.margin = margin;
                        grid.push_back(c);
                    }
    return grid;
}

namespace {

std::string describe(const TrainConfig& c) {
    std::ostringstream s;
    s << "epochs=" << c.epochs << " batch=" << c.batch_size << " dim=" << c.dim << " neg=" << c.negatives
      << " margin=" << c.margin << " lr=" << c.learning_rate << " seed=" << c.seed;
    return s.str();
}

}  // namespace

GridResult grid_search(const KnowledgeGraph& graph, ModelKind kind, const std::vector<TrainConfig>& grid,
                       int threads) {
    if (grid.empty()) throw ConfigError("grid search needs at least one configuration");
    for (const auto& c : grid) validate(kind, c);

    // Only the current best model is kept, so memory stays at one model per
    // worker. Ties go to the lowest index whatever the completion order.
    GridResult out;
    out.valid_accuracy.assign(grid.size(), 0.0);
    bool have_best = false;
    std::vector<std::exception_ptr> errors(grid.size());
    const auto n = static_cast<std::ptrdiff_t>(grid.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(resolve_threads(threads))
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        try {
            TrainResult res = train(graph, kind, grid[idx]);
            const double acc = res.report.valid_accuracy;
#pragma omp critical(kgcal_grid_best)
            {
                out.valid_accuracy[idx] = acc;
                const double best = have_best ? out.valid_accuracy[out.best_index] : 0.0;
                if (!have_best || acc > best || (acc == best && idx < out.best_index)) {
                    have_best = true;
                    out.best_index = idx;
                    out.best_model = std::move(res.model);
                    out.best_report = std::move(res.report);
                }
            }
        } catch (...) {
            errors[idx] = std::current_exception();
        }
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!errors[i]) continue;
        const std::string prefix = "grid config #" + std::to_string(i) + " (" + describe(grid[i]) + "): ";
        try {
            std::rethrow_exception(errors[i]);
        } catch (const Error& e) {
            throw Error(e.code(), prefix + e.what());
        }
    }
    out.best_config = grid[out.best_index];
    return out;
}

}  // namespace kgcal
