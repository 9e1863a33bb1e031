#include "flatnn/projection.hpp"

#include "flatnn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace flatnn {

Flat RandomProjection::apply_flat(const Flat& f) const {
    std::vector<Vector> generators;
    generators.reserve(static_cast<std::size_t>(f.k) + 1);
    generators.push_back(apply(f.offset));
    for (int i = 0; i < f.k; ++i) {
        generators.push_back(apply(Vector(f.offset + f.basis.col(i))));
    }
    return flat_from_points(generators);  // DegenerateInput on rank collapse
}

RandomProjection make_projection(int d, double t, int k, std::uint64_t seed) {
    require(t > 0, "make_projection: t must be positive");
    const int d_prime = static_cast<int>(std::ceil(2.0 / t)) + 2;
    if (d_prime >= d) throw InvalidParams("make_projection: d' must be below d");
    if (t > 2.0 / (2.0 + 40.0 * k) + 1e-12) {
        throw InvalidParams("make_projection: t too large for the requested k");
    }

    // Uniformly random subspace: orthonormalized Gaussian rows.
    auto rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix gaussian(d, d_prime);
    for (int j = 0; j < d_prime; ++j) {
        for (int i = 0; i < d; ++i) gaussian(i, j) = gauss(rng);
    }
    const Matrix q = orthonormalize_columns(gaussian);
    require(q.cols() == d_prime, "make_projection: Gaussian draw was rank deficient");

    RandomProjection p;
    p.input_dim = d;
    p.output_dim = d_prime;
    p.seed = seed;
    p.matrix = std::sqrt(static_cast<double>(d) / (4.0 * d_prime)) * q.transpose();
    return p;
}

ProjectionStructure build_projection_structure(const Matrix& points, std::vector<int> owner_ids,
                                               int k, double t,
                                               const ProjectionBuildOptions& opts) {
    require(points.cols() >= 1, "build_projection_structure: empty point set");
    require(owner_ids.size() == static_cast<std::size_t>(points.cols()),
            "build_projection_structure: id map size mismatch");
    ProjectionStructure ps;
    ps.k = k;
    ps.t = t;
    ps.owner_ids = std::move(owner_ids);
    ps.points = points;

    // When the data dimension does not exceed d' = ceil(2/t) + 2, projecting
    // cannot help: the search structure runs on the original coordinates with
    // no distortion, and one distortion-free repeat is enough.
    const int d = static_cast<int>(points.rows());
    const int d_prime = static_cast<int>(std::ceil(2.0 / t)) + 2;
    const bool identity = d_prime >= d;
    const int repeats = identity ? 1 : opts.repeats;

    ps.repeats.reserve(static_cast<std::size_t>(repeats));
    for (int i = 0; i < repeats; ++i) {
        ProjectionRepeat rep;
        if (identity) {
            rep.proj.matrix = Matrix::Identity(d, d);
            rep.proj.input_dim = rep.proj.output_dim = d;
            rep.proj.seed = 0;
        } else {
            rep.proj = make_projection(d, t, k, derive_seed(opts.seed, i));
        }
        LowdimBuildOptions lopts;
        lopts.r = opts.r;
        lopts.seed = derive_seed(opts.seed, 1000 + i);
        rep.structure = build_search_structure(rep.proj.apply_points(points), k, lopts);
        ps.repeats.push_back(std::move(rep));
    }
    return ps;
}

Q1Answer q1_query(const ProjectionStructure& ps, const Flat& f, std::uint64_t seed) {
    Q1Answer best;
    int repeat_index = 0;
    for (const auto& rep : ps.repeats) {
        const Flat projected = rep.proj.apply_flat(f);
        const auto ans =
            query_ann_sampled(rep.structure, projected, derive_seed(seed, repeat_index++));
        if (ans.index < 0) continue;
        const double true_dist = dist_point_flat(ps.points.col(ans.index), f);
        if (best.owner < 0 || true_dist < best.distance) {
            best = {ps.owner_ids[static_cast<std::size_t>(ans.index)], true_dist};
        }
    }
    return best;
}

Q3Answer q3_query(const ProjectionStructure& ps, const Flat& f, double alpha) {
    std::set<int> columns;
    for (const auto& rep : ps.repeats) {
        const Flat projected = rep.proj.apply_flat(f);
        for (int local : query_near(rep.structure, projected, alpha)) {
            columns.insert(local);
        }
    }
    Q3Answer best;
    best.reported_size = columns.size();
    for (int col : columns) {
        const double dist = dist_point_flat(ps.points.col(col), f);
        if (best.owner < 0 || dist < best.distance) {
            best.owner = ps.owner_ids[static_cast<std::size_t>(col)];
            best.distance = dist;
        }
    }
    return best;
}

}  // namespace flatnn
