#pragma once

#include "flatnn/ann.hpp"
#include "flatnn/linalg.hpp"
#include "flatnn/partition_tree.hpp"

#include <cstdint>
#include <unordered_map>
#include <vector>

namespace flatnn {

/// Points within `radius` of the flat K, with their per-side projections:
/// coords_on_K are parameter coordinates in K's basis, complement_projections
/// live in the orthogonal complement of K's direction space (offset removed,
/// so members exactly on K project to zero).
struct Cluster {
    Flat K;
    double radius = 0.0;
    std::vector<int> members;        // owner-level indices, parallel to columns
    Matrix points;                   // d x m original coordinates
    Matrix coords_on_K;              // k x m
    Matrix complement_projections;   // d x m

    static Cluster from_points(const Flat& K, double radius, std::vector<int> members,
                               Matrix points);
    int size() const { return static_cast<int>(points.cols()); }
};

struct ClusterParams {
    double c = 2.0;
    double n = 1024;    // global point count; drives c', eps and the n^t scale
    double t = 1.0 / 21.0;
    double eps = 0.0;   // <= 0: derive 1/(100 ln n), clamped to 1/16
    std::size_t budget = 1'000'000;  // grid cells + patches per query
    int tree_r = 8;
    AnnKind ann_kind = AnnKind::oracle;
    AnnConfig ann_config;

    double resolved_eps() const;
    double c_prime() const;  // (1 - 1/ln n) c, kept above 1
    double nt() const;       // n^t
    double n2t() const;      // n^{2t}
};

/// A bounded patch parallel to K: { basis_parallel * w + anchor : 0 <= w_i <=
/// box_widths_i }. Columns of basis_parallel are orthogonal with norms
/// sigma_i, so point-to-patch distances are separable.
struct Patch {
    Matrix basis_parallel;  // d x l
    Vector anchor;          // d
    Vector box_widths;      // l

    double dist_point(const Vector& q) const;
    Vector closest_point(const Vector& q) const;
};

struct ClusterStructure {
    Cluster cluster;
    ClusterParams params;
    PartitionTree tree;  // over coords_on_K
    std::unordered_map<const PartitionNode*, PointAnnStructure> node_ann;

    const PointAnnStructure& ann_at(const PartitionNode& node) const {
        return node_ann.at(&node);
    }
};

struct ClusterAnswer {
    int member = -1;    // owner-level index (members[...])
    int column = -1;    // column in the cluster's matrices
    double distance = 0.0;
};

ClusterStructure build_cluster_structure(Cluster cluster, const ClusterParams& params);

/// The l-flats of the near case: pieces of F whose directions are nearly
/// parallel to K, discretized along the substantially-tilted directions on a
/// grid of spacing alpha*eps/(n^{2t} sqrt(k)). Throws BudgetExceeded when the
/// grid is larger than `budget`.
std::vector<Flat> enumerate_l_flats(const FlatPairFrame& frame, const Flat& F, double alpha,
                                    const ClusterParams& params, std::size_t* budget);

/// Patches parallel to K covering the reachable part of an l-flat; every
/// patch point is within eps*alpha/n^{2t} of L. `member_points` supplies the
/// extent of the box along directions shared exactly with K.
std::vector<Patch> enumerate_patches(const Flat& L, const FlatPairFrame& frame,
                                     const Matrix& member_points, double alpha,
                                     const ClusterParams& params, std::size_t* budget);

/// Near-case query for one patch: cube grid over the K-side window, ANN in
/// the complement per uncrossed tree node, true patch distances decide.
ClusterAnswer patch_nn_query(const ClusterStructure& cs, const Patch& patch,
                             std::size_t* budget);

/// Far-case query: hyperrectangle grid around the closest point of K to F,
/// one representative member per uncrossed node, exact flat distances decide.
ClusterAnswer far_query(const ClusterStructure& cs, const Flat& F, double r_tilde,
                        std::size_t* budget);

/// Exact linear scan over the cluster members (the BudgetExceeded fallback).
ClusterAnswer cluster_linear_scan(const ClusterStructure& cs, const Flat& F);

/// Full query dispatch: parallel / near / far cases, best true distance wins.
/// r_tilde is an n^t-range overestimate of d(F, members).
ClusterAnswer query_cluster(const ClusterStructure& cs, const Flat& F, double r_tilde);

}  // namespace flatnn
