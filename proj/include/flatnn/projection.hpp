#pragma once

#include "flatnn/linalg.hpp"
#include "flatnn/lowdim.hpp"

#include <cstdint>
#include <vector>

namespace flatnn {

/// Projection onto a uniformly random d'-dimensional subspace, scaled by
/// sqrt(d / 4d'): matrix * matrix^T = (d / 4d') * I.
struct RandomProjection {
    Matrix matrix;  // d' x d
    int input_dim = 0;
    int output_dim = 0;
    std::uint64_t seed = 0;

    Vector apply(const Vector& x) const { return matrix * x; }
    Matrix apply_points(const Matrix& pts) const { return matrix * pts; }

    /// Projected flat: image of k+1 affine generators. Throws DegenerateInput
    /// if the projection collapses a direction (probability zero).
    Flat apply_flat(const Flat& f) const;
};

/// d' = ceil(2/t) + 2; requires d' < d and t small enough that d' >= 40k + 4.
RandomProjection make_projection(int d, double t, int k, std::uint64_t seed);

struct ProjectionRepeat {
    RandomProjection proj;
    SearchStructure structure;
};

/// Q1/Q3 query structure: `repeats` independent random projections, each
/// feeding a low-dimensional search structure over the projected points.
struct ProjectionStructure {
    int k = 0;
    double t = 0.0;
    std::vector<int> owner_ids;       // local column -> owner index
    Matrix points;                    // d x n, original coordinates
    std::vector<ProjectionRepeat> repeats;

    int size() const { return static_cast<int>(points.cols()); }
};

struct ProjectionBuildOptions {
    int repeats = 3;
    int r = 16;
    std::uint64_t seed = 0;
};

ProjectionStructure build_projection_structure(const Matrix& points, std::vector<int> owner_ids,
                                               int k, double t,
                                               const ProjectionBuildOptions& opts = {});

struct Q1Answer {
    int owner = -1;
    double distance = 0.0;  // measured in the original space: the estimate r~
};

/// Rough nearest neighbor: best true distance among the per-repeat winners of
/// the sampled low-dimensional queries.
Q1Answer q1_query(const ProjectionStructure& ps, const Flat& f, std::uint64_t seed);

struct Q3Answer {
    int owner = -1;
    double distance = 0.0;
    std::size_t reported_size = 0;
};

/// Threshold query: report candidates within alpha in each projection, return
/// the true-distance minimum over the union.
Q3Answer q3_query(const ProjectionStructure& ps, const Flat& f, double alpha);

}  // namespace flatnn
