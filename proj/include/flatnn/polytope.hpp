#pragma once

#include "flatnn/linalg.hpp"
#include "flatnn/partition_tree.hpp"
#include "flatnn/types.hpp"

#include <optional>
#include <vector>

namespace flatnn {

/// Convex polytope as an ambient halfspace list { x : <normal_i, x> <= offset_i }.
struct HalfspacePolytope {
    std::vector<Vector> normals;
    std::vector<double> offsets;
    bool empty_flag = false;

    void add(const Vector& normal, double offset) {
        normals.push_back(normal);
        offsets.push_back(offset);
    }
    int dim() const { return normals.empty() ? 0 : static_cast<int>(normals[0].size()); }
};

/// Exact Euclidean projection onto a nonempty halfspace intersection
/// (Dykstra's cyclic algorithm).
Vector project_onto_halfspaces(const HalfspacePolytope& poly, const Vector& x,
                               int max_cycles = 200, double tol = 1e-12);

double dist_point_halfspaces(const HalfspacePolytope& poly, const Vector& p);

/// Distance between an axis-aligned box and a halfspace polytope, by
/// alternating projections (box side is a clamp; polytope side is Dykstra).
double dist_box_halfspaces(const Box& box, const HalfspacePolytope& poly,
                           int max_iters = 200, double tol = 1e-9);

/// Exactly the leaves whose cell lies within distance alpha of the polytope.
std::vector<const PartitionNode*> cells_near_polytope(const PartitionNode& root,
                                                      const HalfspacePolytope& poly,
                                                      double alpha);

/// A k-dimensional polytope carried on a flat, in parametric form:
/// { anchor + directions * w : ineq_normals * w <= ineq_offsets }. The
/// directions start as an orthonormal flat basis and may lose orthonormality
/// (never gain norm) as the polytope is pushed through projections; all
/// distance computations treat them as a general linear map.
struct QueryPolytope {
    Vector anchor;        // ambient
    Matrix directions;    // ambient_dim x k
    Matrix ineq_normals;  // m x k
    Vector ineq_offsets;  // m

    int intrinsic_dim() const { return static_cast<int>(directions.cols()); }
    int ambient_dim() const { return static_cast<int>(anchor.size()); }
    int halfspace_count() const { return static_cast<int>(ineq_offsets.size()); }

    Vector at(const Vector& w) const { return anchor + directions * w; }

    /// Query flat clipped to a bounding box: 2 * dim parameter constraints.
    static QueryPolytope from_flat(const Flat& f, const Box& bounds);

    /// Intersect with the ambient halfspace <normal, x> <= offset.
    QueryPolytope with_halfspace(const Vector& normal, double offset) const;

    /// Intersect with the slab |<h.normal, x> - h.offset| <= half_width.
    QueryPolytope clipped_to_slab(const Hyperplane& h, double half_width) const;

    /// Orthogonal projection onto a hyperplane, re-expressed in the
    /// (dim-1)-dimensional coordinates given by frame (columns orthonormal,
    /// orthogonal to the plane normal) anchored at origin_on_plane.
    QueryPolytope projected_to_frame(const Matrix& frame, const Vector& origin_on_plane) const;

    /// Projection onto the first j ambient coordinates.
    QueryPolytope projected_prefix(int j) const;

    /// Any parameter point satisfying the constraints, or nullopt if the
    /// constraint polytope is empty (within tol).
    std::optional<Vector> feasible_param(double tol = 1e-9) const;

    bool empty(double tol = 1e-9) const { return !feasible_param(tol).has_value(); }

    /// Exact Euclidean distance from p to the polytope.
    double dist_point(const Vector& p) const;

    /// Exact l1 distance from p to the polytope (Minkowski report region).
    double dist_point_l1(const Vector& p) const;

    /// Distance from an axis-aligned box to the polytope. Converges from
    /// above; callers comparing against a threshold should allow the given
    /// slack. Returns +inf when the polytope is empty.
    double dist_box(const Box& box, int max_iters = 200, double tol = 1e-10) const;
};

namespace detail {

/// Interval [lo, hi] described by one-dimensional constraints a*w <= b.
/// Returns nullopt when infeasible.
std::optional<std::pair<double, double>> constraint_interval(const Matrix& normals,
                                                             const Vector& offsets,
                                                             double tol = 1e-12);

}  // namespace detail

}  // namespace flatnn
