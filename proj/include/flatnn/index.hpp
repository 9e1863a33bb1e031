#pragma once

#include "flatnn/cluster.hpp"
#include "flatnn/projection.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace flatnn {

struct IndexParams {
    int k = 1;
    double c = 2.0;
    double t = 1.0 / 21.0;
    double rho = 0.0;        // <= 0: derive 1/c^2
    int m_override = 0;      // > 0: bypass the m formula (tests)
    AnnKind ann_kind = AnnKind::oracle;
    int repeats = 3;
    std::uint64_t seed = 0;
    double subset_cap = 2e6;  // full-cluster search enumeration cap
    int cluster_tree_r = 8;
    int lowdim_r = 16;
    std::size_t cluster_budget = 1'000'000;
    double cluster_eps = 0.0;  // <= 0: derive 1/(100 ln n)

    double resolved_rho() const { return rho > 0 ? rho : 1.0 / (c * c); }
};

struct FullClusterResult {
    Flat flat;
    double alpha = 0.0;
    std::vector<int> members;  // the m closest active points, ties by index
    bool sampled = false;      // search was sampled rather than exhaustive
};

/// Smallest flat-cluster over flats spanned by k+1 active points: enumerates
/// all C(n, k+1) anchor subsets up to `subset_cap`, sampling uniformly above
/// it. alpha is the m-th smallest distance of active points to the flat.
FullClusterResult find_min_full_cluster(const Matrix& points,
                                        const std::vector<int>& active, int k, int m,
                                        double subset_cap = 2e6, std::uint64_t seed = 0);

struct Q3TreeNode {
    int leaf_begin = 0;  // cluster range [leaf_begin, leaf_end)
    int leaf_end = 0;
    std::unique_ptr<ProjectionStructure> structure;  // null for padding nodes
};

struct FlatIndex {
    FlatIndex() = default;
    FlatIndex(const FlatIndex&) = delete;
    FlatIndex& operator=(const FlatIndex&) = delete;
    FlatIndex(FlatIndex&&) = default;
    FlatIndex& operator=(FlatIndex&&) = default;

    IndexParams params;
    Matrix points;  // d x n
    int m = 0;
    bool cluster_search_sampled = false;
    std::vector<ClusterStructure> clusters;  // decreasing radius
    // Perfect binary q3 tree in heap layout (1-based); leaves padded to a
    // power of two, leaf i <-> cluster i.
    std::vector<Q3TreeNode> q3_nodes;
    int q3_leaf_count = 0;
    ProjectionStructure q1_root;

    int size() const { return static_cast<int>(points.cols()); }
    int cluster_count() const { return static_cast<int>(clusters.size()); }
    int q3_depth() const;  // number of node structures on a leaf-root path

    /// Maximal aligned subtrees covering leaves [0, prefix): the Q3 query
    /// set for i* = prefix. At most ceil(log2(cluster_count)) nodes.
    std::vector<int> q3_prefix_cover(int prefix) const;
};

FlatIndex build_index(const Matrix& points, const IndexParams& params);

/// Assembly of the derived structures from a finished extraction (the load
/// path; bit-deterministic given the same inputs and seeds).
FlatIndex assemble_index(Matrix points, const IndexParams& params, int m,
                         std::vector<Cluster> clusters_decreasing, bool sampled);

struct IndexAnswer {
    int index = -1;
    double distance = 0.0;
    double r_tilde = 0.0;  // the q1 estimate used for dispatch
    int i_star = 0;
};

IndexAnswer query_index(const FlatIndex& idx, const Flat& f, std::uint64_t seed);

/// Exact linear-scan nearest neighbor (the test oracle).
IndexAnswer index_linear_scan(const Matrix& points, const Flat& f);

}  // namespace flatnn
