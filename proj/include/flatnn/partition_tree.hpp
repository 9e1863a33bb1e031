#pragma once

#include "flatnn/types.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace flatnn {

struct Box {
    Vector lower;
    Vector upper;

    int dim() const { return static_cast<int>(lower.size()); }
    Vector center() const { return 0.5 * (lower + upper); }
    Vector clamp(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

    bool contains(const Vector& x, double tol = 1e-9) const {
        return (x.array() >= lower.array() - tol).all() &&
               (x.array() <= upper.array() + tol).all();
    }
};

struct Hyperplane {
    Vector normal;  // unit length
    double offset = 0.0;  // plane = { x : <normal, x> = offset }

    static Hyperplane through(const Vector& normal, double offset) {
        Hyperplane h;
        const double n = normal.norm();
        require(n > 0, "Hyperplane: zero normal");
        h.normal = normal / n;
        h.offset = offset / n;
        return h;
    }
};

struct PartitionNode {
    Box cell;
    std::vector<int> point_indices;
    std::vector<std::unique_ptr<PartitionNode>> children;
    int level = 0;

    bool is_leaf() const { return children.empty(); }
};

struct PartitionTree {
    std::unique_ptr<PartitionNode> root;
    int branching = 0;  // r

    const PartitionNode& root_node() const { return *root; }
};

/// kd-style box partition tree: cyclic median splits grouped into one tree
/// level per ceil(log2 r) splits, recursing while a node holds more than 2r
/// points. Deterministic: median ties break by (coordinate, index) and points
/// on a splitting plane go left.
PartitionTree build_tree(const Matrix& points, int r);

/// One frontier entry: the highest node whose cell crosses none of the query
/// planes, labeled by the sign (-1 / 0 / +1) of its cell against each plane.
struct FrontierEntry {
    const PartitionNode* node;
    std::vector<std::int8_t> label;
};

struct FrontierResult {
    std::vector<FrontierEntry> frontier;
    std::vector<const PartitionNode*> crossed_leaves;  // residual
};

/// Highest nodes whose cells cross none of the given planes, plus the leaves
/// that still cross some plane. `prune` (optional) skips subtrees whose cells
/// do not intersect the given box.
FrontierResult uncrossed_frontier(const PartitionNode& root,
                                  const std::vector<Hyperplane>& planes,
                                  const Box* prune = nullptr);

/// Leaves whose cell lies within Euclidean distance alpha of a convex set,
/// given its box-distance functional. Internal nodes are pruned with a small
/// margin so that leaf membership is decided by the exact leaf test alone.
std::vector<const PartitionNode*> leaves_near(
    const PartitionNode& root, const std::function<double(const Box&)>& dist_to_cell,
    double alpha, double prune_margin = 1e-7);

}  // namespace flatnn
