#include "flatnn/cluster.hpp"

#include "flatnn/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace flatnn {

namespace {

constexpr double kParallelTol = 1e-9;   // dispatch test on 1 - sigma_k
constexpr double kExactDirTol = 1e-12;  // grid degeneracy test on 1 - sigma^2
constexpr double kInf = std::numeric_limits<double>::infinity();

void charge_budget(std::size_t* budget, double amount, const char* what) {
    if (!budget) return;
    if (!(amount <= static_cast<double>(*budget))) throw BudgetExceeded(what);
    *budget -= static_cast<std::size_t>(amount);
}

// Odometer over per-dimension value lists.
template <typename F>
void for_each_combination(const std::vector<std::vector<double>>& values, F&& fn) {
    const std::size_t dims = values.size();
    Vector current(static_cast<Eigen::Index>(dims));
    if (dims == 0) {
        fn(current);
        return;
    }
    std::vector<std::size_t> pos(dims, 0);
    for (;;) {
        for (std::size_t i = 0; i < dims; ++i) {
            current(static_cast<Eigen::Index>(i)) = values[i][pos[i]];
        }
        fn(current);
        std::size_t i = 0;
        while (i < dims && ++pos[i] == values[i].size()) {
            pos[i] = 0;
            ++i;
        }
        if (i == dims) break;
    }
}

}  // namespace

double ClusterParams::resolved_eps() const {
    if (eps > 0) return eps;
    const double ln_n = std::log(std::max(2.0, n));
    return std::min(1.0 / 16.0, 1.0 / (100.0 * ln_n));
}

double ClusterParams::c_prime() const {
    const double ln_n = std::log(std::max(2.0, n));
    return std::max(1.0 + 0.5 * (c - 1.0), (1.0 - 1.0 / ln_n) * c);
}

double ClusterParams::nt() const { return std::pow(std::max(2.0, n), t); }
double ClusterParams::n2t() const { return std::pow(std::max(2.0, n), 2.0 * t); }

Cluster Cluster::from_points(const Flat& K, double radius, std::vector<int> members,
                             Matrix points) {
    Cluster c;
    c.K = K;
    c.radius = radius;
    c.members = std::move(members);
    c.points = std::move(points);
    const Matrix centered = c.points.colwise() - K.offset;
    c.coords_on_K = K.basis.transpose() * centered;
    c.complement_projections = centered - K.basis * c.coords_on_K;
    return c;
}

double Patch::dist_point(const Vector& q) const { return (q - closest_point(q)).norm(); }

Vector Patch::closest_point(const Vector& q) const {
    // Columns are orthogonal, so per-column clamps are jointly optimal.
    const Vector r = q - anchor;
    Vector x = anchor;
    for (Eigen::Index i = 0; i < basis_parallel.cols(); ++i) {
        const double nn = basis_parallel.col(i).squaredNorm();
        if (nn <= 0) continue;
        const double w = std::clamp(basis_parallel.col(i).dot(r) / nn, 0.0, box_widths(i));
        x += w * basis_parallel.col(i);
    }
    return x;
}

ClusterStructure build_cluster_structure(Cluster cluster, const ClusterParams& params) {
    require(cluster.size() >= 1, "build_cluster_structure: empty cluster");
    ClusterStructure cs;
    cs.cluster = std::move(cluster);
    cs.params = params;
    cs.tree = build_tree(cs.cluster.coords_on_K, params.tree_r);

    AnnConfig cfg = params.ann_config;
    cfg.c = params.c_prime();
    std::uint64_t counter = 0;
    std::vector<const PartitionNode*> stack{cs.tree.root.get()};
    while (!stack.empty()) {
        const PartitionNode* node = stack.back();
        stack.pop_back();
        Matrix sub(cs.cluster.complement_projections.rows(),
                   static_cast<Eigen::Index>(node->point_indices.size()));
        for (std::size_t i = 0; i < node->point_indices.size(); ++i) {
            sub.col(static_cast<Eigen::Index>(i)) =
                cs.cluster.complement_projections.col(node->point_indices[i]);
        }
        AnnConfig node_cfg = cfg;
        node_cfg.rng_seed = derive_seed(cfg.rng_seed, counter++);
        cs.node_ann.emplace(node, ann_build(sub, params.ann_kind, node_cfg));
        for (const auto& child : node->children) stack.push_back(child.get());
    }
    return cs;
}

std::vector<Flat> enumerate_l_flats(const FlatPairFrame& frame, const Flat& F, double alpha,
                                    const ClusterParams& params, std::size_t* budget) {
    (void)F;  // the frame already carries F in its rotated basis
    const int k = static_cast<int>(frame.singular_values.size());
    const double eps = params.resolved_eps();
    const double threshold = std::sqrt(1.0 - eps) - 1e-9;
    int l = 0;
    while (l < k && frame.singular_values(l) >= threshold) ++l;

    if (l == k) {
        charge_budget(budget, 1.0, "enumerate_l_flats");
        Flat whole;
        whole.k = k;
        whole.basis = frame.basis_F;
        whole.offset = frame.offset_F;
        return {whole};
    }

    const double n2t = params.n2t();
    const double sqrt_k = std::sqrt(static_cast<double>(std::max(1, k)));
    const double tau = alpha * eps / (n2t * sqrt_k);
    const double o_tau = std::ceil(n2t * sqrt_k / std::pow(eps, 2.5));

    std::vector<double> steps;
    if (tau <= 0) {
        charge_budget(budget, 1.0, "enumerate_l_flats");
        steps = {0.0};
    } else {
        charge_budget(budget, std::pow(2.0 * o_tau + 1.0, k - l), "enumerate_l_flats");
        steps.reserve(static_cast<std::size_t>(2 * o_tau + 1));
        for (double m = -o_tau; m <= o_tau; ++m) steps.push_back(m * tau);
    }

    const Matrix basis_par = frame.basis_F.leftCols(l);
    const Matrix basis_tilt = frame.basis_F.rightCols(k - l);
    const Vector vk_tail = frame.v_K.tail(k - l);

    std::vector<std::vector<double>> grids(static_cast<std::size_t>(k - l), steps);
    std::vector<Flat> out;
    for_each_combination(grids, [&](const Vector& index) {
        Flat lf;
        lf.k = l;
        lf.basis = basis_par;
        Vector raw = basis_tilt * (vk_tail + index) + frame.offset_F;
        if (l > 0) raw -= basis_par * (basis_par.transpose() * raw);
        lf.offset = std::move(raw);
        out.push_back(std::move(lf));
    });
    return out;
}

std::vector<Patch> enumerate_patches(const Flat& L, const FlatPairFrame& frame,
                                     const Matrix& member_points, double alpha,
                                     const ClusterParams& params, std::size_t* budget) {
    const int l = L.k;
    const double eps = params.resolved_eps();
    const double n2t = params.n2t();
    const Matrix& a_basis = frame.basis_K;

    if (l == 0) {
        charge_budget(budget, 1.0, "enumerate_patches");
        Patch p;
        p.basis_parallel = Matrix(L.dim(), 0);
        p.anchor = L.offset;
        p.box_widths = Vector(0);
        return {p};
    }

    const Matrix c_mat = a_basis * (a_basis.transpose() * L.basis);  // d x l

    // Closest point of L to K via ridge-regularized normal equations;
    // directions shared with K contribute nothing, any minimizer works.
    Matrix normal_mat = L.basis.transpose() * L.basis - c_mat.transpose() * c_mat;
    normal_mat.diagonal().array() += 1e-12;
    const Vector rel = L.offset - frame.offset_K;
    const Vector perp_rel = rel - a_basis * (a_basis.transpose() * rel);
    const Vector rhs = -(L.basis.transpose() * perp_rel);
    const Vector w_K = normal_mat.ldlt().solve(rhs);
    const Vector base_anchor = L.basis * w_K + L.offset;

    const double o_tau =
        std::ceil(2.0 * n2t * std::sqrt(static_cast<double>(l)) / (eps * eps));

    std::vector<std::vector<double>> grids(static_cast<std::size_t>(l));
    Vector widths(l);
    Vector exact_lo = Vector::Zero(l);
    double combos = 1.0;
    for (int i = 0; i < l; ++i) {
        const double s2 = c_mat.col(i).squaredNorm();
        const double perp2 = std::max(0.0, 1.0 - s2);
        if (perp2 <= kExactDirTol) {
            // Direction shared with K: no discretization error; one box
            // spanning the members' extent.
            double lo = kInf, hi = -kInf;
            for (Eigen::Index j = 0; j < member_points.cols(); ++j) {
                const double w = L.basis.col(i).dot(member_points.col(j) - base_anchor);
                lo = std::min(lo, w);
                hi = std::max(hi, w);
            }
            const double slack = alpha + 1.0;
            exact_lo(i) = lo - slack;
            widths(i) = (hi - lo) + 2 * slack;
            grids[static_cast<std::size_t>(i)] = {0.0};
        } else {
            const double tau_i =
                alpha * eps / (n2t * std::sqrt(static_cast<double>(l) * perp2));
            widths(i) = tau_i;
            if (tau_i <= 0) {
                grids[static_cast<std::size_t>(i)] = {0.0};
            } else {
                combos *= 2.0 * o_tau + 1.0;
                if (budget && combos > static_cast<double>(*budget)) {
                    throw BudgetExceeded("enumerate_patches");
                }
                auto& g = grids[static_cast<std::size_t>(i)];
                g.reserve(static_cast<std::size_t>(2 * o_tau + 1));
                for (double m = -o_tau; m <= o_tau; ++m) g.push_back(m * tau_i);
            }
        }
    }
    charge_budget(budget, combos, "enumerate_patches");

    std::vector<Patch> out;
    for_each_combination(grids, [&](const Vector& index) {
        Patch p;
        p.basis_parallel = c_mat;
        p.anchor = base_anchor + L.basis * (index + exact_lo);
        p.box_widths = widths;
        out.push_back(std::move(p));
    });
    return out;
}

namespace {

ClusterAnswer make_answer(const ClusterStructure& cs, int column, double distance) {
    return ClusterAnswer{cs.cluster.members[static_cast<std::size_t>(column)], column, distance};
}

ClusterAnswer patch_linear_scan(const ClusterStructure& cs, const Patch& patch) {
    ClusterAnswer best;
    best.distance = kInf;
    for (int col = 0; col < cs.cluster.size(); ++col) {
        const double dist = patch.dist_point(cs.cluster.points.col(col));
        if (dist < best.distance) best = make_answer(cs, col, dist);
    }
    return best;
}

// Axis-aligned grid over (rotated) cluster coordinates, walked through the
// partition tree: candidates come from each uncrossed node plus every member
// of a crossed leaf.
struct GridQuery {
    const ClusterStructure& cs;
    Matrix rotation;  // tree coords = rotation * grid coords

    std::vector<Hyperplane> planes;
    Box prune_box;
    bool has_prune = false;

    void add_axis(int axis, double lo, double hi, double side, std::size_t* budget) {
        double count = 2.0;
        if (side > 0 && hi > lo) count += std::ceil((hi - lo) / side);
        charge_budget(budget, count, "grid query");
        const Vector normal = rotation.col(axis);
        planes.push_back(Hyperplane{normal, lo});
        if (side > 0) {
            for (double v = lo + side; v < hi; v += side) {
                planes.push_back(Hyperplane{normal, v});
            }
        }
        planes.push_back(Hyperplane{normal, hi});
    }

    void set_prune(const Vector& lo, const Vector& hi) {
        const int k = static_cast<int>(lo.size());
        if (k == 0) return;
        Box box;
        box.lower = Vector::Constant(k, kInf);
        box.upper = Vector::Constant(k, -kInf);
        for (int mask = 0; mask < (1 << k); ++mask) {
            Vector u(k);
            for (int i = 0; i < k; ++i) u(i) = (mask >> i) & 1 ? hi(i) : lo(i);
            const Vector mapped = rotation * u;
            box.lower = box.lower.cwiseMin(mapped);
            box.upper = box.upper.cwiseMax(mapped);
        }
        prune_box = std::move(box);
        has_prune = true;
    }

    template <typename NodeFn, typename ColumnFn>
    void run(NodeFn&& on_frontier_node, ColumnFn&& on_column) const {
        const auto result =
            uncrossed_frontier(*cs.tree.root, planes, has_prune ? &prune_box : nullptr);
        for (const auto& entry : result.frontier) {
            if (!entry.node->point_indices.empty()) on_frontier_node(*entry.node);
        }
        for (const auto* leaf : result.crossed_leaves) {
            for (int col : leaf->point_indices) on_column(col);
        }
    }
};

}  // namespace

ClusterAnswer patch_nn_query(const ClusterStructure& cs, const Patch& patch,
                             std::size_t* budget) {
    const Cluster& cl = cs.cluster;
    const int k = cl.K.k;
    const double eps = cs.params.resolved_eps();
    const double n2t = cs.params.n2t();
    const double alpha = cl.radius;
    const int l = static_cast<int>(patch.basis_parallel.cols());

    // The patch is parallel to K, so its K-side image is a box image under
    // orthogonal directions; the cube grid lives directly in the cluster
    // basis (any orthonormal basis of K serves the cube-diameter argument).
    GridQuery grid{cs, Matrix::Identity(k, k), {}, {}, false};

    const Vector anchor_coords = cl.K.basis.transpose() * (patch.anchor - cl.K.offset);
    Matrix dir_coords(k, l);
    for (int i = 0; i < l; ++i) {
        dir_coords.col(i) = cl.K.basis.transpose() * patch.basis_parallel.col(i);
    }

    const double sqrt_k = std::sqrt(static_cast<double>(std::max(1, k)));
    const double window = 3.0 * alpha * sqrt_k / eps;
    const double side = eps * alpha / (2.0 * n2t * sqrt_k);

    Vector lo(k), hi(k);
    for (int axis = 0; axis < k; ++axis) {
        double a_lo = anchor_coords(axis), a_hi = anchor_coords(axis);
        for (int i = 0; i < l; ++i) {
            const double span = dir_coords(axis, i) * patch.box_widths(i);
            (span >= 0 ? a_hi : a_lo) += span;
        }
        lo(axis) = a_lo - window;
        hi(axis) = a_hi + window;
    }
    for (int axis = 0; axis < k; ++axis) grid.add_axis(axis, lo(axis), hi(axis), side, budget);
    grid.set_prune(lo, hi);

    const Vector rel = patch.anchor - cl.K.offset;
    const Vector g = rel - cl.K.basis * (cl.K.basis.transpose() * rel);

    ClusterAnswer best;
    best.distance = kInf;
    auto consider_column = [&](int col) {
        const double dist = patch.dist_point(cl.points.col(col));
        if (dist < best.distance || (dist == best.distance && col < best.column)) {
            best = make_answer(cs, col, dist);
        }
    };
    grid.run(
        [&](const PartitionNode& node) {
            const auto& ann = cs.ann_at(node);
            auto ans = ann.query(g);
            if (!ans) ans = ann.scan(g);  // NearMiss: per-node linear scan
            consider_column(node.point_indices[static_cast<std::size_t>(ans->index)]);
        },
        consider_column);

    if (best.column < 0) return patch_linear_scan(cs, patch);
    return best;
}

ClusterAnswer far_query(const ClusterStructure& cs, const Flat& F, double r_tilde,
                        std::size_t* budget) {
    const Cluster& cl = cs.cluster;
    const int k = cl.K.k;
    const double eps = cs.params.resolved_eps();
    const double nt = cs.params.nt();

    const FlatPairFrame frame = align_flats(cl.K, F);
    // Tree coords u' relate to the rotated coords u by u' = U u.
    const Matrix rotation = cl.K.basis.transpose() * frame.basis_K;
    GridQuery grid{cs, rotation, {}, {}, false};

    const Matrix rotated_coords = rotation.transpose() * cl.coords_on_K;

    Vector lo(k), hi(k);
    for (int axis = 0; axis < k; ++axis) {
        const double sigma = frame.singular_values(axis);
        const double perp2 = std::max(0.0, 1.0 - sigma * sigma);
        double side;
        if (perp2 <= kExactDirTol) {
            // Direction parallel to F: no contribution to the distance, one
            // cell spanning the members.
            lo(axis) = rotated_coords.row(axis).minCoeff();
            hi(axis) = rotated_coords.row(axis).maxCoeff();
            side = 0.0;
        } else {
            const double half = 2.0 * r_tilde / std::sqrt(perp2);
            lo(axis) = frame.u_F(axis) - half;
            hi(axis) = frame.u_F(axis) + half;
            side = eps * r_tilde /
                   (2.0 * nt * std::sqrt(static_cast<double>(std::max(1, k)) * perp2));
        }
        grid.add_axis(axis, lo(axis), hi(axis), side, budget);
    }
    grid.set_prune(lo, hi);

    ClusterAnswer best;
    best.distance = kInf;
    auto consider_column = [&](int col) {
        const double dist = dist_point_flat(cl.points.col(col), F);
        if (dist < best.distance || (dist == best.distance && col < best.column)) {
            best = make_answer(cs, col, dist);
        }
    };
    grid.run(
        [&](const PartitionNode& node) {
            // One representative per uncrossed node.
            const int col =
                *std::min_element(node.point_indices.begin(), node.point_indices.end());
            consider_column(col);
        },
        consider_column);
    return best;
}

ClusterAnswer cluster_linear_scan(const ClusterStructure& cs, const Flat& F) {
    ClusterAnswer best;
    best.distance = kInf;
    for (int col = 0; col < cs.cluster.size(); ++col) {
        const double dist = dist_point_flat(cs.cluster.points.col(col), F);
        if (dist < best.distance) best = make_answer(cs, col, dist);
    }
    return best;
}

ClusterAnswer query_cluster(const ClusterStructure& cs, const Flat& F, double r_tilde) {
    const Cluster& cl = cs.cluster;
    const int k = cl.K.k;
    const double eps = cs.params.resolved_eps();
    const double alpha = cl.radius;

    const FlatPairFrame frame = align_flats(cl.K, F);
    const bool parallel = k == 0 || frame.singular_values(k - 1) >= 1.0 - kParallelTol;
    if (parallel) {
        // F and K share all directions; one complement-space ANN decides.
        const Vector rel = F.offset - cl.K.offset;
        const Vector trace = rel - cl.K.basis * (cl.K.basis.transpose() * rel);
        const auto& ann = cs.ann_at(*cs.tree.root);
        auto ans = ann.query(trace);
        if (!ans) ans = ann.scan(trace);
        const int col = cs.tree.root->point_indices[static_cast<std::size_t>(ans->index)];
        return make_answer(cs, col, dist_point_flat(cl.points.col(col), F));
    }

    std::size_t budget = cs.params.budget;
    ClusterAnswer best;
    best.distance = kInf;
    auto consider = [&](const ClusterAnswer& cand) {
        if (cand.column < 0) return;
        const double true_dist = dist_point_flat(cl.points.col(cand.column), F);
        if (true_dist < best.distance ||
            (true_dist == best.distance && cand.column < best.column)) {
            best = ClusterAnswer{cand.member, cand.column, true_dist};
        }
    };

    // The estimate window [r/n^t, r] may straddle the near/far boundary at
    // alpha/eps; run every branch whose regime is possible.
    const bool near_possible = alpha > 0 &&
                               r_tilde / cs.params.nt() <= alpha / eps * (1 + 1e-12) &&
                               r_tilde >= alpha / cs.params.n2t() * (1 - 1e-12);
    const bool far_possible = alpha <= 0 || r_tilde >= alpha / eps * (1 - 1e-12);

    if (near_possible) {
        const auto flats = enumerate_l_flats(frame, F, alpha, cs.params, &budget);
        for (const Flat& lf : flats) {
            const auto patches =
                enumerate_patches(lf, frame, cl.points, alpha, cs.params, &budget);
            for (const Patch& patch : patches) consider(patch_nn_query(cs, patch, &budget));
        }
    }
    if (far_possible) consider(far_query(cs, F, r_tilde, &budget));
    if (best.column < 0) return cluster_linear_scan(cs, F);
    return best;
}

}  // namespace flatnn
