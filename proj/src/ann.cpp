#include "flatnn/ann.hpp"

#include "flatnn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace flatnn {

namespace {

std::uint64_t mix_hash(std::uint64_t h, std::int64_t v) {
    h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
}

double sampled_median_distance(const Matrix& points, std::mt19937_64& rng) {
    const int n = static_cast<int>(points.cols());
    if (n < 2) return 1.0;
    std::uniform_int_distribution<int> pick(0, n - 1);
    std::vector<double> dists;
    dists.reserve(256);
    for (int i = 0; i < 256; ++i) {
        const int a = pick(rng), b = pick(rng);
        if (a == b) continue;
        dists.push_back((points.col(a) - points.col(b)).norm());
    }
    if (dists.empty()) return 1.0;
    std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
    const double med = dists[dists.size() / 2];
    return med > 0 ? med : 1.0;
}

}  // namespace

PointAnnStructure PointAnnStructure::build(const Matrix& points, AnnKind kind,
                                           const AnnConfig& cfg) {
    if (points.cols() == 0) throw EmptyInput("ann_build: empty point set");
    cfg.validate();

    PointAnnStructure s;
    s.kind_ = kind;
    s.cfg_ = cfg.resolved();
    s.points_ = points;
    if (kind == AnnKind::oracle) return s;

    const int d = static_cast<int>(points.rows());
    auto rng = make_rng(cfg.rng_seed);
    if (s.cfg_.hash_width <= 0.0) {
        s.cfg_.hash_width = 4.0 * sampled_median_distance(points, rng);
    }
    const double w = s.cfg_.hash_width;

    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> shift(0.0, w);
    s.tables_.resize(static_cast<std::size_t>(s.cfg_.tables));
    for (auto& table : s.tables_) {
        table.projections = Matrix(s.cfg_.hashes_per_table, d);
        table.offsets = Vector(s.cfg_.hashes_per_table);
        for (int i = 0; i < s.cfg_.hashes_per_table; ++i) {
            for (int j = 0; j < d; ++j) table.projections(i, j) = gauss(rng);
            table.offsets(i) = shift(rng);
        }
        for (int p = 0; p < points.cols(); ++p) {
            table.buckets[s.bucket_key(table, points.col(p))].push_back(p);
        }
    }
    return s;
}

std::uint64_t PointAnnStructure::bucket_key(const Table& t, const Vector& q) const {
    const Vector h = (t.projections * q + t.offsets) / cfg_.hash_width;
    std::uint64_t key = 0xcbf29ce484222325ULL;
    for (Eigen::Index i = 0; i < h.size(); ++i) {
        key = mix_hash(key, static_cast<std::int64_t>(std::floor(h(i))));
    }
    return key;
}

AnnAnswer PointAnnStructure::scan(const Vector& q) const {
    if (q.size() != points_.rows()) throw DimensionMismatch("ann_query: dimension mismatch");
    AnnAnswer best{0, (points_.col(0) - q).norm()};
    for (int i = 1; i < points_.cols(); ++i) {
        const double dist = (points_.col(i) - q).norm();
        if (dist < best.distance) best = {i, dist};
    }
    return best;
}

std::optional<AnnAnswer> PointAnnStructure::query(const Vector& q) const {
    if (kind_ == AnnKind::oracle) return scan(q);
    if (q.size() != points_.rows()) throw DimensionMismatch("ann_query: dimension mismatch");
    AnnAnswer best{-1, 0.0};
    for (const auto& table : tables_) {
        const auto it = table.buckets.find(bucket_key(table, q));
        if (it == table.buckets.end()) continue;
        for (int idx : it->second) {
            const double dist = (points_.col(idx) - q).norm();
            if (best.index < 0 || dist < best.distance ||
                (dist == best.distance && idx < best.index)) {
                best = {idx, dist};
            }
        }
    }
    if (best.index < 0) return std::nullopt;  // bucket miss
    return best;
}

int PointAnnStructure::nonempty_tables() const {
    int n = 0;
    for (const auto& t : tables_) n += t.buckets.empty() ? 0 : 1;
    return n;
}

}  // namespace flatnn
