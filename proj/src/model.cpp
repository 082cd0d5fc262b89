#include "kgcal/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "kgcal/error.hpp"
#include "kgcal/rng.hpp"

namespace kgcal {

std::string_view to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::TransE: return "transe";
        case ModelKind::TransH: return "transh";
        case ModelKind::DistMult: return "distmult";
        case ModelKind::ComplEx: return "complex";
    }
    return "?";
}

ModelKind parse_model_kind(std::string_view name) {
    std::string s(name);
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (s == "transe") return ModelKind::TransE;
    if (s == "transh") return ModelKind::TransH;
    if (s == "distmult") return ModelKind::DistMult;
    if (s == "complex") return ModelKind::ComplEx;
    throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

void KgeModel::validate() const {
    if (dim == 0) throw DataError("model dimension must be positive");
    if (entity.cols() != width() || relation.cols() != width())
        throw DataError("embedding width does not match model kind and dimension");
    if (kind == ModelKind::TransH) {
        if (normals.rows() != relation.rows() || normals.cols() != dim)
            throw DataError("TransH normals must be |R| x dim");
    } else if (!normals.empty()) {
        throw DataError("only TransH carries hyperplane normals");
    }
    for (const Matrix* m : {&entity, &relation, &normals})
        for (double v : m->values())
            if (!std::isfinite(v)) throw DataError("model contains non-finite values");
    for (std::size_t r = 0; r < normals.rows(); ++r) {
        double sq = 0.0;
        for (double v : normals.row(r)) sq += v * v;
        if (std::abs(std::sqrt(sq) - 1.0) > 1e-6)
            throw DataError("TransH normal " + std::to_string(r) + " is not unit length");
    }
}

namespace scoring {

double transe(std::span<const double> h, std::span<const double> r, std::span<const double> t) {
    double sq = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double d = h[i] + r[i] - t[i];
        sq += d * d;
    }
    return -std::sqrt(sq);
}

void project_to_hyperplane(std::span<const double> e, std::span<const double> w, std::span<double> out) {
    double dot = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) dot += w[i] * e[i];
    for (std::size_t i = 0; i < e.size(); ++i) out[i] = e[i] - dot * w[i];
}

double transh(std::span<const double> h, std::span<const double> r, std::span<const double> w,
              std::span<const double> t) {
    double wh = 0.0;
    double wt = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        wh += w[i] * h[i];
        wt += w[i] * t[i];
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double d = (h[i] - wh * w[i]) + r[i] - (t[i] - wt * w[i]);
        sq += d * d;
    }
    return -std::sqrt(sq);
}

double distmult(std::span<const double> h, std::span<const double> r, std::span<const double> t) {
    double s = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) s += h[i] * r[i] * t[i];
    return s;
}

double complex(std::span<const double> h, std::span<const double> r, std::span<const double> t) {
    const std::size_t d = h.size() / 2;
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double hr = h[i], hi = h[d + i];
        const double rr = r[i], ri = r[d + i];
        const double tr = t[i], ti = t[d + i];
        // Re(h * r * conj(t))
        s += hr * rr * tr + hi * rr * ti + hr * ri * ti - hi * ri * tr;
    }
    return s;
}

}  // namespace scoring

double score_unchecked(const KgeModel& model, std::int32_t h, std::int32_t r, std::int32_t t) {
    const auto hrow = model.entity.row(static_cast<std::size_t>(h));
    const auto rrow = model.relation.row(static_cast<std::size_t>(r));
    const auto trow = model.entity.row(static_cast<std::size_t>(t));
    switch (model.kind) {
        case ModelKind::TransE: return scoring::transe(hrow, rrow, trow);
        case ModelKind::TransH:
            return scoring::transh(hrow, rrow, model.normals.row(static_cast<std::size_t>(r)), trow);
        case ModelKind::DistMult: return scoring::distmult(hrow, rrow, trow);
        case ModelKind::ComplEx: return scoring::complex(hrow, rrow, trow);
    }
    return 0.0;
}

namespace {

void check_entity(const KgeModel& model, std::int32_t e) {
    if (e < 0 || static_cast<std::size_t>(e) >= model.num_entities())
        throw DataError("entity index " + std::to_string(e) + " out of range");
}

void check_relation(const KgeModel& model, std::int32_t r) {
    if (r < 0 || static_cast<std::size_t>(r) >= model.num_relations())
        throw DataError("relation index " + std::to_string(r) + " out of range");
}

}  // namespace

double score_triple(const KgeModel& model, std::int32_t h, std::int32_t r, std::int32_t t) {
    check_entity(model, h);
    check_entity(model, t);
    check_relation(model, r);
    return score_unchecked(model, h, r, t);
}

ScoreVector score_all_relations(const KgeModel& model, std::int32_t h, std::int32_t t) {
    check_entity(model, h);
    check_entity(model, t);
    ScoreVector z;
    z.head = h;
    z.tail = t;
    z.values.resize(model.num_relations());
    for (std::size_t r = 0; r < z.values.size(); ++r)
        z.values[r] = score_unchecked(model, h, static_cast<std::int32_t>(r), t);
    return z;
}

void normalize_row(std::span<double> row) {
    double sq = 0.0;
    for (double v : row) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm == 0.0) return;
    for (double& v : row) v /= norm;
}

KgeModel init_model(ModelKind kind, std::size_t dim, std::size_t num_entities, std::size_t num_relations,
                    std::uint64_t seed) {
    if (dim < 1) throw ConfigError("embedding dimension must be >= 1");
    if (num_entities == 0 || num_relations == 0) throw DataError("cannot initialise a model over empty vocabularies");
    KgeModel m;
    m.kind = kind;
    m.dim = dim;
    m.entity = Matrix(num_entities, m.width());
    m.relation = Matrix(num_relations, m.width());
    const double bound = 6.0 / std::sqrt(static_cast<double>(dim));
    Engine eng(seed);
    for (double& v : m.entity.values()) v = uniform(eng, -bound, bound);
    for (double& v : m.relation.values()) v = uniform(eng, -bound, bound);
    if (kind == ModelKind::TransH) {
        m.normals = Matrix(num_relations, dim);
        for (double& v : m.normals.values()) v = uniform(eng, -bound, bound);
        for (std::size_t r = 0; r < num_relations; ++r) {
            auto row = m.normals.row(r);
            // A zero draw has probability ~0, but a zero row cannot be normalised.
            double sq = 0.0;
            for (double v : row) sq += v * v;
            if (sq == 0.0) row[0] = 1.0;
            normalize_row(row);
        }
    }
    return m;
}

// Checkpoint layout: "KGCALMDL", u32 version, u32 kind, u64 dim, u64 |E|, u64 |R|,
// then entity, relation and (TransH) normal matrices, row-major little-endian f64.
namespace {

constexpr char kMagic[8] = {'K', 'G', 'C', 'A', 'L', 'M', 'D', 'L'};

template <typename T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
        std::memcpy(&v, bytes, sizeof(T));
    }
    return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
    v = to_little(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("truncated model checkpoint");
    return to_little(v);
}

void write_matrix(std::ostream& out, const Matrix& m) {
    for (double v : m.values()) write_le(out, v);
}

void read_matrix(std::istream& in, Matrix& m) {
    for (double& v : m.values()) v = read_le<double>(in);
}

}  // namespace

void save_model(const KgeModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write model checkpoint " + path.string());
    out.write(kMagic, sizeof(kMagic));
    write_le<std::uint32_t>(out, 1);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.kind));
    write_le<std::uint64_t>(out, model.dim);
    write_le<std::uint64_t>(out, model.num_entities());
    write_le<std::uint64_t>(out, model.num_relations());
    write_matrix(out, model.entity);
    write_matrix(out, model.relation);
    if (model.kind == ModelKind::TransH) write_matrix(out, model.normals);
    if (!out) throw DataError("failed writing model checkpoint " + path.string());
}

KgeModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model checkpoint " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError("not a model checkpoint: " + path.string());
    if (read_le<std::uint32_t>(in) != 1) throw DataError("unsupported model checkpoint version");
    const auto kind = read_le<std::uint32_t>(in);
    if (kind > static_cast<std::uint32_t>(ModelKind::ComplEx)) throw DataError("unknown model kind in checkpoint");
    KgeModel m;
    m.kind = static_cast<ModelKind>(kind);
    m.dim = read_le<std::uint64_t>(in);
    const auto ne = read_le<std::uint64_t>(in);
    const auto nr = read_le<std::uint64_t>(in);
    if (m.dim == 0 || ne == 0 || nr == 0 || m.dim > (1u << 20) || ne > (1ull << 32) || nr > (1ull << 32))
        throw DataError("implausible model checkpoint header");
    m.entity = Matrix(ne, m.width());
    m.relation = Matrix(nr, m.width());
    read_matrix(in, m.entity);
    read_matrix(in, m.relation);
    if (m.kind == ModelKind::TransH) {
        m.normals = Matrix(nr, m.dim);
        read_matrix(in, m.normals);
    }
    m.validate();
    return m;
}

}  // namespace kgcal
