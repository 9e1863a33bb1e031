#include "flatnn/index.hpp"

#include "flatnn/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace flatnn {

namespace {

// Distances of all active points to the affine hull of a (k+1)-subset,
// expressed through the active Gram matrix so the cost per subset is
// dimension-free. Returns false when the subset is affinely degenerate.
struct GramDistance {
    const Matrix& gram;       // n_act x n_act
    const Vector& sq_norms;   // diag
    int k;

    Matrix chol;      // k x k lower factor of the difference Gram
    std::vector<int> subset;

    bool prepare(const std::vector<int>& anchor_subset) {
        subset = anchor_subset;
        const int p0 = subset[0];
        Matrix diff_gram(k, k);
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j <= i; ++j) {
                const int pi = subset[static_cast<std::size_t>(i + 1)];
                const int pj = subset[static_cast<std::size_t>(j + 1)];
                const double g = gram(pi, pj) - gram(pi, p0) - gram(pj, p0) + gram(p0, p0);
                diff_gram(i, j) = g;
                diff_gram(j, i) = g;
            }
        }
        Eigen::LLT<Matrix> llt(diff_gram);
        if (llt.info() != Eigen::Success) return false;
        chol = llt.matrixL();
        // Reject near-degenerate subsets: tiny pivots make the hull unstable.
        for (int i = 0; i < k; ++i) {
            if (chol(i, i) < 1e-9 * std::sqrt(std::max(1.0, diff_gram(0, 0)))) return false;
        }
        return true;
    }

    double squared_distance(int x) const {
        const int p0 = subset[0];
        const double base = sq_norms(x) - 2.0 * gram(x, p0) + gram(p0, p0);
        if (k == 0) return std::max(0.0, base);
        // coeffs = L^{-1} <x - p0, p_i - p0>; distance^2 = base - |coeffs|^2.
        double coeffs[8];
        for (int i = 0; i < k; ++i) {
            const int pi = subset[static_cast<std::size_t>(i + 1)];
            double v = gram(x, pi) - gram(x, p0) - gram(pi, p0) + gram(p0, p0);
            for (int j = 0; j < i; ++j) v -= chol(i, j) * coeffs[j];
            coeffs[i] = v / chol(i, i);
        }
        double proj = 0.0;
        for (int i = 0; i < k; ++i) proj += coeffs[i] * coeffs[i];
        return std::max(0.0, base - proj);
    }
};

Flat flat_of_subset(const Matrix& points, const std::vector<int>& active,
                    const std::vector<int>& subset) {
    std::vector<Vector> pts;
    pts.reserve(subset.size());
    for (int s : subset) pts.push_back(points.col(active[static_cast<std::size_t>(s)]));
    return flat_from_points(pts);
}

// Any k-flat through the active points when no spanning subset exists: extend
// the affine hull with canonical directions.
Flat degenerate_fallback_flat(const Matrix& points, const std::vector<int>& active, int k) {
    const int d = static_cast<int>(points.rows());
    Matrix gen(d, static_cast<Eigen::Index>(active.size()));
    for (std::size_t i = 0; i < active.size(); ++i) {
        gen.col(static_cast<Eigen::Index>(i)) = points.col(active[i]);
    }
    const Vector anchor = gen.col(0);
    Matrix diffs = gen.rightCols(gen.cols() - 1).colwise() - anchor;
    Matrix hull = orthonormalize_columns(diffs);
    if (hull.cols() > k) hull = hull.leftCols(k);
    while (hull.cols() < k) {
        Matrix extended(d, hull.cols() + d);
        extended.leftCols(hull.cols()) = hull;
        extended.rightCols(d) = Matrix::Identity(d, d);
        Matrix on = orthonormalize_columns(extended);
        hull = on.leftCols(std::min<Eigen::Index>(k, on.cols()));
    }
    Flat f;
    f.k = k;
    f.basis = hull;
    f.offset = anchor - hull * (hull.transpose() * anchor);
    return f;
}

}  // namespace

FullClusterResult find_min_full_cluster(const Matrix& points, const std::vector<int>& active,
                                        int k, int m, double subset_cap, std::uint64_t seed) {
    require(!active.empty(), "find_min_full_cluster: no active points");
    require(k + 1 <= 8, "find_min_full_cluster: k too large");
    const int n_act = static_cast<int>(active.size());
    const int m_eff = std::min(m, n_act);

    // Gram matrix of the active subset.
    Matrix sub(points.rows(), n_act);
    for (int i = 0; i < n_act; ++i) sub.col(i) = points.col(active[static_cast<std::size_t>(i)]);
    const Matrix gram = sub.transpose() * sub;
    const Vector sq_norms = gram.diagonal();

    GramDistance dist{gram, sq_norms, k, {}, {}};

    double best_alpha_sq = std::numeric_limits<double>::infinity();
    std::vector<int> best_subset;
    std::vector<double> scratch(static_cast<std::size_t>(n_act));

    auto consider = [&](const std::vector<int>& subset) {
        if (!dist.prepare(subset)) return;
        // Count points within the current best radius; only compute the
        // m-th smallest when this flat could win.
        int within = 0;
        for (int x = 0; x < n_act; ++x) {
            const double d2 = dist.squared_distance(x);
            scratch[static_cast<std::size_t>(x)] = d2;
            within += d2 <= best_alpha_sq ? 1 : 0;
        }
        if (within < m_eff && std::isfinite(best_alpha_sq)) return;
        std::vector<double> copy(scratch);
        std::nth_element(copy.begin(), copy.begin() + (m_eff - 1), copy.end());
        const double alpha_sq = copy[static_cast<std::size_t>(m_eff - 1)];
        if (alpha_sq < best_alpha_sq) {
            best_alpha_sq = alpha_sq;
            best_subset = subset;
        }
    };

    FullClusterResult result;
    const int kp1 = k + 1;
    double combos = 1.0;
    for (int i = 0; i < kp1; ++i) combos *= static_cast<double>(n_act - i);
    for (int i = 2; i <= kp1; ++i) combos /= i;

    if (n_act <= kp1) {
        // Not enough points to choose among subsets; the hull (extended if
        // degenerate) covers everything.
        result.flat = degenerate_fallback_flat(points, active, k);
        result.alpha = 0.0;
        for (int i = 0; i < n_act; ++i) {
            result.alpha = std::max(result.alpha, dist_point_flat(sub.col(i), result.flat));
        }
        result.members = active;
        std::sort(result.members.begin(), result.members.end());
        return result;
    }

    if (combos <= subset_cap) {
        std::vector<int> subset(static_cast<std::size_t>(kp1));
        auto rec = [&](auto&& self, int start, int depth) -> void {
            if (depth == kp1) {
                consider(subset);
                return;
            }
            for (int i = start; i < n_act; ++i) {
                subset[static_cast<std::size_t>(depth)] = i;
                self(self, i + 1, depth + 1);
            }
        };
        rec(rec, 0, 0);
    } else {
        result.sampled = true;
        auto rng = make_rng(seed);
        std::uniform_int_distribution<int> pick(0, n_act - 1);
        std::vector<int> subset(static_cast<std::size_t>(kp1));
        for (double trial = 0; trial < subset_cap; ++trial) {
            bool distinct = true;
            for (int i = 0; i < kp1; ++i) {
                subset[static_cast<std::size_t>(i)] = pick(rng);
                for (int j = 0; j < i; ++j) {
                    distinct &= subset[static_cast<std::size_t>(i)] !=
                                subset[static_cast<std::size_t>(j)];
                }
            }
            if (distinct) consider(subset);
        }
    }

    if (best_subset.empty()) {
        result.flat = degenerate_fallback_flat(points, active, k);
    } else {
        result.flat = flat_of_subset(points, active, best_subset);
    }

    // Members: the m_eff closest, ties by original index.
    std::vector<std::pair<double, int>> order(static_cast<std::size_t>(n_act));
    for (int i = 0; i < n_act; ++i) {
        order[static_cast<std::size_t>(i)] = {
            dist_point_flat(sub.col(i), result.flat), active[static_cast<std::size_t>(i)]};
    }
    std::sort(order.begin(), order.end());
    result.members.resize(static_cast<std::size_t>(m_eff));
    for (int i = 0; i < m_eff; ++i) result.members[static_cast<std::size_t>(i)] = order[static_cast<std::size_t>(i)].second;
    result.alpha = order[static_cast<std::size_t>(m_eff - 1)].first;
    std::sort(result.members.begin(), result.members.end());
    return result;
}

int FlatIndex::q3_depth() const {
    int depth = 1, leaves = q3_leaf_count;
    while (leaves > 1) {
        leaves /= 2;
        ++depth;
    }
    return depth;
}

std::vector<int> FlatIndex::q3_prefix_cover(int prefix) const {
    // Maximal aligned subtrees covering leaf range [0, prefix).
    std::vector<int> cover;
    int lo = 0;
    while (lo < prefix) {
        // Largest power-of-two block starting at lo that fits in the prefix.
        int size = 1;
        while (lo % (2 * size) == 0 && lo + 2 * size <= prefix) size *= 2;
        // Heap id of the subtree of `size` leaves starting at `lo`.
        int node = (q3_leaf_count + lo) / size;
        cover.push_back(node);
        lo += size;
    }
    return cover;
}

FlatIndex build_index(const Matrix& points, const IndexParams& params) {
    const int n = static_cast<int>(points.cols());
    const int k = params.k;
    require(n >= 2, "build_index: need at least two points");
    require(k >= 0, "build_index: k must be nonnegative");
    require(params.t > 0 && params.t <= 2.0 / (2.0 + 40.0 * k),
            "build_index: t out of range");

    int m;
    if (params.m_override > 0) {
        m = params.m_override;
    } else {
        const double rho = params.resolved_rho();
        const double m_raw =
            std::round(std::pow(static_cast<double>(n), k / (k + 1.0 - rho)));
        m = static_cast<int>(std::clamp(m_raw, static_cast<double>(k + 2),
                                        static_cast<double>(n) / 2.0));
    }
    require(m >= 1 && m <= n, "build_index: invalid m");

    // Greedy extraction, smallest radius first.
    std::vector<int> active(static_cast<std::size_t>(n));
    std::iota(active.begin(), active.end(), 0);
    std::vector<Cluster> extracted;
    bool sampled = false;
    std::uint64_t extraction = 0;
    while (!active.empty()) {
        auto found = find_min_full_cluster(points, active, k, m, params.subset_cap,
                                           derive_seed(params.seed, 7000 + extraction));
        sampled |= found.sampled;
        Matrix member_pts(points.rows(), static_cast<Eigen::Index>(found.members.size()));
        for (std::size_t i = 0; i < found.members.size(); ++i) {
            member_pts.col(static_cast<Eigen::Index>(i)) = points.col(found.members[i]);
        }
        extracted.push_back(Cluster::from_points(found.flat, found.alpha, found.members,
                                                 std::move(member_pts)));
        std::vector<int> rest;
        rest.reserve(active.size() - found.members.size());
        std::set_difference(active.begin(), active.end(), found.members.begin(),
                            found.members.end(), std::back_inserter(rest));
        active = std::move(rest);
        ++extraction;
    }

    // Stored order: decreasing radius = reverse extraction order.
    std::reverse(extracted.begin(), extracted.end());
    return assemble_index(points, params, m, std::move(extracted), sampled);
}

FlatIndex assemble_index(Matrix points, const IndexParams& params, int m,
                         std::vector<Cluster> clusters_decreasing, bool sampled) {
    const int n = static_cast<int>(points.cols());
    FlatIndex idx;
    idx.params = params;
    idx.points = std::move(points);
    idx.m = m;
    idx.cluster_search_sampled = sampled;

    ClusterParams cluster_params;
    cluster_params.c = params.c;
    cluster_params.n = static_cast<double>(n);
    cluster_params.t = params.t;
    cluster_params.eps = params.cluster_eps;
    cluster_params.budget = params.cluster_budget;
    cluster_params.tree_r = params.cluster_tree_r;
    cluster_params.ann_kind = params.ann_kind;
    cluster_params.ann_config.c = params.c;

    idx.clusters.reserve(clusters_decreasing.size());
    for (std::size_t i = 0; i < clusters_decreasing.size(); ++i) {
        ClusterParams cp = cluster_params;
        cp.ann_config.rng_seed = derive_seed(params.seed, 100 + i);
        idx.clusters.push_back(build_cluster_structure(std::move(clusters_decreasing[i]), cp));
    }

    const int n_clusters = idx.cluster_count();
    const int k = params.k;
    ProjectionBuildOptions popts;
    popts.repeats = params.repeats;
    popts.r = params.lowdim_r;

    // Q1 over the whole set.
    std::vector<int> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    popts.seed = derive_seed(params.seed, 1);
    idx.q1_root = build_projection_structure(idx.points, all, k, params.t, popts);

    // Q3 tree: perfect binary tree over the clusters, padded to a power of 2.
    int leaves = 1;
    while (leaves < n_clusters) leaves *= 2;
    idx.q3_leaf_count = leaves;
    idx.q3_nodes.resize(static_cast<std::size_t>(2 * leaves));
    for (int node = 2 * leaves - 1; node >= 1; --node) {
        Q3TreeNode& entry = idx.q3_nodes[static_cast<std::size_t>(node)];
        if (node >= leaves) {
            entry.leaf_begin = node - leaves;
            entry.leaf_end = node - leaves + 1;
        } else {
            entry.leaf_begin = idx.q3_nodes[static_cast<std::size_t>(2 * node)].leaf_begin;
            entry.leaf_end = idx.q3_nodes[static_cast<std::size_t>(2 * node + 1)].leaf_end;
        }
        const int begin = std::min(entry.leaf_begin, n_clusters);
        const int end = std::min(entry.leaf_end, n_clusters);
        if (begin >= end) continue;
        std::vector<int> ids;
        for (int c = begin; c < end; ++c) {
            ids.insert(ids.end(), idx.clusters[static_cast<std::size_t>(c)].cluster.members.begin(),
                       idx.clusters[static_cast<std::size_t>(c)].cluster.members.end());
        }
        Matrix sub(idx.points.rows(), static_cast<Eigen::Index>(ids.size()));
        for (std::size_t i = 0; i < ids.size(); ++i) {
            sub.col(static_cast<Eigen::Index>(i)) = idx.points.col(ids[i]);
        }
        ProjectionBuildOptions node_opts = popts;
        node_opts.seed = derive_seed(params.seed, 2000 + node);
        entry.structure = std::make_unique<ProjectionStructure>(
            build_projection_structure(sub, std::move(ids), k, params.t, node_opts));
    }
    return idx;
}

IndexAnswer index_linear_scan(const Matrix& points, const Flat& f) {
    IndexAnswer best;
    for (int i = 0; i < points.cols(); ++i) {
        const double dist = dist_point_flat(points.col(i), f);
        if (best.index < 0 || dist < best.distance) best = {i, dist, 0.0, 0};
    }
    return best;
}

IndexAnswer query_index(const FlatIndex& idx, const Flat& f, std::uint64_t seed) {
    require(f.k == idx.params.k, "query_index: flat dimension mismatch");
    const double nt = std::pow(static_cast<double>(idx.size()), idx.params.t);

    const Q1Answer rough = q1_query(idx.q1_root, f, derive_seed(seed, 0));
    IndexAnswer best{rough.owner, rough.distance, rough.distance, 0};
    if (rough.distance <= 0.0) return best;  // exact hit short-circuits
    const double r_tilde = rough.distance;

    // i* = number of leading (largest-radius) clusters with alpha > r n^t.
    int i_star = 0;
    while (i_star < idx.cluster_count() &&
           idx.clusters[static_cast<std::size_t>(i_star)].cluster.radius > r_tilde * nt) {
        ++i_star;
    }
    best.i_star = i_star;

    auto consider = [&](int owner, double distance) {
        if (owner < 0) return;
        if (distance < best.distance || (distance == best.distance && owner < best.index)) {
            best.index = owner;
            best.distance = distance;
        }
    };

    // Q2 on the remaining (small) clusters.
    for (int ci = i_star; ci < idx.cluster_count(); ++ci) {
        const auto& cs = idx.clusters[static_cast<std::size_t>(ci)];
        ClusterAnswer ans;
        try {
            ans = query_cluster(cs, f, r_tilde);
        } catch (const BudgetExceeded&) {
            ans = cluster_linear_scan(cs, f);
        }
        consider(ans.member, ans.distance);
    }

    // Q3 on the union of the big clusters, through the dyadic cover.
    for (int node : idx.q3_prefix_cover(i_star)) {
        const auto& entry = idx.q3_nodes[static_cast<std::size_t>(node)];
        if (!entry.structure) continue;
        const Q3Answer ans = q3_query(*entry.structure, f, r_tilde);
        consider(ans.owner, ans.distance);
    }

    best.r_tilde = r_tilde;
    best.i_star = i_star;
    return best;
}

}  // namespace flatnn
