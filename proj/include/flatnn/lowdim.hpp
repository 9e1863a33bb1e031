#pragma once

#include "flatnn/linalg.hpp"
#include "flatnn/partition_tree.hpp"
#include "flatnn/polytope.hpp"

#include <cstdint>
#include <memory>
#include <unordered_map>
#include <vector>

namespace flatnn {

/// Approximation factor of the reporting structure: sqrt(k+1) at the base
/// dimension plus (4k+3) per level of slab recursion.
double lowdim_kappa(int dim, int k);

struct LowdimQueryStats {
    std::size_t slabs_visited = 0;
    double max_visited_slab_width = 0.0;
    std::size_t max_polytope_halfspaces = 0;
    std::size_t leaf_points_tested = 0;
    std::size_t reported = 0;
};

struct SearchStructure;

/// One slab at a tree node: the subspace recursion over the points of the
/// cells extracted into the slab.
struct SlabStructure {
    Hyperplane median_plane;       // lifted to this level's coordinates
    double width = 0.0;            // w_j
    std::vector<int> extracted_children;  // child positions removed at this slab
    int extracted_cells = 0;
    Matrix frame;                  // dim x (dim-1), orthonormal, orthogonal to the normal
    Vector plane_origin;           // point on the lifted hyperplane
    std::unique_ptr<SearchStructure> inner;
};

struct NodeSlabs {
    std::vector<SlabStructure> slabs;  // widths nondecreasing
};

/// Recursive near-neighbor reporting structure: a partition tree over the
/// projection onto the first k+1 coordinates, plus per-node slab structures
/// that recurse one dimension down, until dimension k+1 or a constant-size
/// point list.
struct SearchStructure {
    int dim = 0;
    int k = 0;
    int r = 16;
    Matrix points;                  // dim x n, coordinates of this level
    std::vector<int> original_ids;  // local column -> top-level input index
    bool leaf_list = false;
    PartitionTree tree;             // absent when leaf_list
    std::unordered_map<const PartitionNode*, NodeSlabs> node_slabs;

    int size() const { return static_cast<int>(points.cols()); }

    /// Total stored point slots of this structure and all inner structures.
    std::size_t point_slots() const;

    /// Depth of the dimension recursion actually realized.
    int recursion_depth() const;

    template <typename F>
    void visit(F&& fn) const {
        fn(*this);
        for (const auto& [node, slabs] : node_slabs) {
            (void)node;
            for (const auto& slab : slabs.slabs) {
                if (slab.inner) slab.inner->visit(fn);
            }
        }
    }
};

/// Build options; `subset_cap` bounds the number of (k+1)-vertex subsets
/// scanned per slab iteration (uniform sample above the cap).
struct LowdimBuildOptions {
    int r = 16;
    std::uint64_t seed = 0;
    int subset_cap = 20000;
};

SearchStructure build_search_structure(const Matrix& points, int k,
                                       const LowdimBuildOptions& opts = {});

/// All points within distance alpha of the query polytope, possibly plus
/// points up to lowdim_kappa(dim, k) * alpha away; never beyond.
std::vector<int> query_near(const SearchStructure& s, const QueryPolytope& f, double alpha,
                            LowdimQueryStats* stats = nullptr);

/// Convenience overload: clips the flat to the data bounding box extended by
/// alpha.
std::vector<int> query_near(const SearchStructure& s, const Flat& f, double alpha,
                            LowdimQueryStats* stats = nullptr);

struct NearestResult {
    int index = -1;
    double distance = 0.0;
    std::size_t reported_size = 0;
};

/// Sampling-based approximate nearest neighbor: Bernoulli(1/sqrt(n)) sample,
/// exact scan of the sample, then a near query at the implied radius.
NearestResult query_ann_sampled(const SearchStructure& s, const Flat& f, std::uint64_t seed,
                                LowdimQueryStats* stats = nullptr);

}  // namespace flatnn
