#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "kgcal/matrix.hpp"

namespace kgcal {

enum class ModelKind { TransE, TransH, DistMult, ComplEx };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

/// Embedding tables for one model. ComplEx rows hold the real half followed
/// by the imaginary half, so every kind shares the same container.
struct KgeModel {
    ModelKind kind = ModelKind::TransE;
    std::size_t dim = 0;
    Matrix entity;    // |E| x width()
    Matrix relation;  // |R| x width()
    Matrix normals;   // |R| x dim, TransH only

    std::size_t width() const noexcept { return kind == ModelKind::ComplEx ? 2 * dim : dim; }
    std::size_t num_entities() const noexcept { return entity.rows(); }
    std::size_t num_relations() const noexcept { return relation.rows(); }

    /// Throws DataError if shapes are inconsistent, values are non-finite or a
    /// TransH normal is not unit length within 1e-6.
    void validate() const;

    friend bool operator==(const KgeModel&, const KgeModel&) = default;
};

struct ScoreVector {
    std::vector<double> values;
    std::int32_t head = 0;
    std::int32_t tail = 0;
};

// Raw scoring functions over embedding rows.
namespace scoring {

double transe(std::span<const double> h, std::span<const double> r, std::span<const double> t);
double transh(std::span<const double> h, std::span<const double> r, std::span<const double> w,
              std::span<const double> t);
double distmult(std::span<const double> h, std::span<const double> r, std::span<const double> t);
/// Rows are [re | im] with half-width `dim`.
double complex(std::span<const double> h, std::span<const double> r, std::span<const double> t);

/// e - (w.e) w
void project_to_hyperplane(std::span<const double> e, std::span<const double> w, std::span<double> out);

}  // namespace scoring

/// Unchecked score; indices must be valid.
double score_unchecked(const KgeModel& model, std::int32_t h, std::int32_t r, std::int32_t t);

/// f(h, r, t). Throws DataError on out-of-range indices.
double score_triple(const KgeModel& model, std::int32_t h, std::int32_t r, std::int32_t t);

/// Scores of (h, r_i, t) for every relation i.
ScoreVector score_all_relations(const KgeModel& model, std::int32_t h, std::int32_t t);

/// Uniform init in [-6/sqrt(dim), 6/sqrt(dim)]; TransH normals are then
/// rescaled to unit norm.
KgeModel init_model(ModelKind kind, std::size_t dim, std::size_t num_entities, std::size_t num_relations,
                    std::uint64_t seed);

void normalize_row(std::span<double> row);

void save_model(const KgeModel& model, const std::filesystem::path& path);
KgeModel load_model(const std::filesystem::path& path);

}  // namespace kgcal
