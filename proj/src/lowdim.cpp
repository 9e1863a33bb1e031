#include "flatnn/lowdim.hpp"

#include "flatnn/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace flatnn {

double lowdim_kappa(int dim, int k) {
    require(dim >= k + 1, "lowdim_kappa: dim must be at least k+1");
    return (4.0 * k + 3.0) * (dim - k - 1) + std::sqrt(static_cast<double>(k + 1));
}

namespace {

// Corners of a box, as columns.
Matrix box_corners(const Box& box) {
    const int d = box.dim();
    const int n = 1 << d;
    Matrix corners(d, n);
    for (int mask = 0; mask < n; ++mask) {
        for (int i = 0; i < d; ++i) {
            corners(i, mask) = (mask >> i) & 1 ? box.upper(i) : box.lower(i);
        }
    }
    return corners;
}

// Hyperplane through dim points in R^dim (affine hull), or nullopt when the
// points do not determine one.
std::optional<Hyperplane> plane_through(const Matrix& pts) {
    const int d = static_cast<int>(pts.rows());
    if (d == 1) {
        Hyperplane h;
        h.normal = Vector::Ones(1);
        h.offset = pts(0, 0);
        return h;
    }
    Matrix diffs(d, pts.cols() - 1);
    for (Eigen::Index j = 1; j < pts.cols(); ++j) diffs.col(j - 1) = pts.col(j) - pts.col(0);
    Eigen::JacobiSVD<Matrix> svd(diffs.transpose(), Eigen::ComputeFullV);
    const Vector normal = svd.matrixV().col(d - 1);
    if (normal.norm() < 0.5) return std::nullopt;
    // Require the tangent directions to actually span the plane.
    if (diffs.cols() > 0) {
        const double largest = svd.singularValues()(0);
        if (largest <= 0) return std::nullopt;
        if (d >= 2 && svd.singularValues()(d - 2) < 1e-12 * std::max(1.0, largest)) {
            return std::nullopt;
        }
    }
    Hyperplane h;
    h.normal = normal;
    h.offset = normal.dot(pts.col(0));
    return h;
}

struct CellRef {
    int child_pos;       // position in node->children
    const Box* box;
};

// Max distance of a cell's corners to the plane; the cell fits a w-slab
// around the plane iff this is <= w/2.
double cell_halfwidth(const Box& box, const Hyperplane& h) {
    double worst = 0.0;
    const Matrix corners = box_corners(box);
    for (Eigen::Index c = 0; c < corners.cols(); ++c) {
        worst = std::max(worst, std::abs(h.normal.dot(corners.col(c)) - h.offset));
    }
    return worst;
}

struct LowdimBuilder {
    const LowdimBuildOptions& opts;
    int k;
    std::uint64_t counter = 0;

    SearchStructure build(Matrix points, std::vector<int> ids, int dim) {
        SearchStructure s;
        s.dim = dim;
        s.k = k;
        s.r = opts.r;
        s.points = std::move(points);
        s.original_ids = std::move(ids);
        const int n = s.size();
        if (n < 2 * opts.r) {
            s.leaf_list = true;
            return s;
        }

        // Project to the first k+1 coordinates; symbolic tie-break for
        // coinciding projections (general-position footnote).
        Matrix proj = s.points.topRows(k + 1);
        {
            std::vector<int> order(static_cast<std::size_t>(n));
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                for (int i = 0; i <= k; ++i) {
                    if (proj(i, a) != proj(i, b)) return proj(i, a) < proj(i, b);
                }
                return a < b;
            });
            const double scale = std::max(1.0, proj.cwiseAbs().maxCoeff());
            for (int i = 1; i < n; ++i) {
                const int prev = order[static_cast<std::size_t>(i - 1)];
                const int cur = order[static_cast<std::size_t>(i)];
                if ((proj.col(prev) - proj.col(cur)).cwiseAbs().maxCoeff() == 0.0) {
                    proj(k, cur) += 1e-12 * scale * (cur + 1);
                }
            }
        }
        s.tree = build_tree(proj, opts.r);

        if (dim > k + 1) {
            build_slabs(s, *s.tree.root);
        }
        return s;
    }

    void build_slabs(SearchStructure& s, const PartitionNode& node) {
        if (node.is_leaf()) return;
        for (const auto& child : node.children) build_slabs(s, *child);

        const int min_full = static_cast<int>(
            std::ceil(std::pow(static_cast<double>(opts.r), 2.0 / 3.0)));
        const int max_slabs = static_cast<int>(
            std::floor(std::pow(static_cast<double>(opts.r), 1.0 / 3.0)));

        std::vector<CellRef> remaining;
        for (int i = 0; i < static_cast<int>(node.children.size()); ++i) {
            remaining.push_back({i, &node.children[static_cast<std::size_t>(i)]->cell});
        }

        NodeSlabs slabs;
        for (int j = 0; j < max_slabs; ++j) {
            if (static_cast<int>(remaining.size()) < min_full) break;
            auto best = find_min_width_slab(remaining, min_full);
            if (!best) break;
            SlabStructure slab;
            slab.median_plane = lift_plane(best->first, s.dim);
            slab.width = best->second;

            // Cells fully inside the slab.
            std::vector<CellRef> kept;
            std::vector<int> extracted_points;
            for (const CellRef& cell : remaining) {
                if (cell_halfwidth(*cell.box, best->first) <= slab.width / 2 + 1e-12) {
                    slab.extracted_children.push_back(cell.child_pos);
                    ++slab.extracted_cells;
                    const auto& idxs =
                        node.children[static_cast<std::size_t>(cell.child_pos)]->point_indices;
                    extracted_points.insert(extracted_points.end(), idxs.begin(), idxs.end());
                } else {
                    kept.push_back(cell);
                }
            }
            if (slab.extracted_cells < min_full) break;
            remaining = std::move(kept);

            // Project the extracted points onto the lifted hyperplane and
            // recurse one dimension down.
            const Hyperplane& h = slab.median_plane;
            Matrix basis(s.dim, s.dim + 1);
            basis.col(0) = h.normal;
            basis.rightCols(s.dim) = Matrix::Identity(s.dim, s.dim);
            const Matrix on = orthonormalize_columns(basis);
            slab.frame = on.rightCols(s.dim - 1);
            slab.plane_origin = h.offset * h.normal;

            std::sort(extracted_points.begin(), extracted_points.end());
            Matrix sub(s.dim - 1, static_cast<Eigen::Index>(extracted_points.size()));
            std::vector<int> sub_ids(extracted_points.size());
            for (std::size_t i = 0; i < extracted_points.size(); ++i) {
                const int local = extracted_points[i];
                sub.col(static_cast<Eigen::Index>(i)) =
                    slab.frame.transpose() * (s.points.col(local) - slab.plane_origin);
                sub_ids[i] = s.original_ids[static_cast<std::size_t>(local)];
            }
            slab.inner = std::make_unique<SearchStructure>(
                build(std::move(sub), std::move(sub_ids), s.dim - 1));
            slabs.slabs.push_back(std::move(slab));
        }
        // Widths are nondecreasing under exhaustive search; sampled searches
        // can scramble them, so restore the query-time ordering invariant.
        std::stable_sort(slabs.slabs.begin(), slabs.slabs.end(),
                         [](const SlabStructure& a, const SlabStructure& b) {
                             return a.width < b.width;
                         });
        if (!slabs.slabs.empty()) s.node_slabs.emplace(&node, std::move(slabs));
    }

    // Smallest full slab over (k+1)-subsets of the remaining cells' corners.
    // Returns the plane (in E coordinates) and its width.
    std::optional<std::pair<Hyperplane, double>> find_min_width_slab(
        const std::vector<CellRef>& cells, int min_full) {
        const int kp1 = k + 1;
        Matrix vertices(kp1, static_cast<Eigen::Index>(cells.size()) * (1 << kp1));
        Eigen::Index vcount = 0;
        for (const CellRef& cell : cells) {
            const Matrix corners = box_corners(*cell.box);
            vertices.middleCols(vcount, corners.cols()) = corners;
            vcount += corners.cols();
        }
        const int nv = static_cast<int>(vcount);
        if (nv < kp1) return std::nullopt;

        std::vector<double> halfwidths(cells.size());
        std::optional<std::pair<Hyperplane, double>> best;

        auto consider = [&](const std::vector<int>& subset) {
            Matrix pts(kp1, kp1);
            for (int i = 0; i < kp1; ++i) pts.col(i) = vertices.col(subset[static_cast<std::size_t>(i)]);
            const auto plane = plane_through(pts);
            if (!plane) return;
            for (std::size_t c = 0; c < cells.size(); ++c) {
                halfwidths[c] = cell_halfwidth(*cells[c].box, *plane);
            }
            std::nth_element(halfwidths.begin(), halfwidths.begin() + (min_full - 1),
                             halfwidths.end());
            const double width = 2.0 * halfwidths[static_cast<std::size_t>(min_full - 1)];
            if (!best || width < best->second) best = {*plane, width};
        };

        // Exhaustive below the cap, uniform sample above it.
        double combos = 1.0;
        for (int i = 0; i < kp1; ++i) combos *= std::max(1, nv - i);
        for (int i = 2; i <= kp1; ++i) combos /= i;
        if (combos <= opts.subset_cap) {
            std::vector<int> subset(static_cast<std::size_t>(kp1));
            auto rec = [&](auto&& self, int start, int depth) -> void {
                if (depth == kp1) {
                    consider(subset);
                    return;
                }
                for (int i = start; i < nv; ++i) {
                    subset[static_cast<std::size_t>(depth)] = i;
                    self(self, i + 1, depth + 1);
                }
            };
            rec(rec, 0, 0);
        } else {
            auto rng = make_rng(derive_seed(opts.seed, counter++));
            std::uniform_int_distribution<int> pick(0, nv - 1);
            std::vector<int> subset(static_cast<std::size_t>(kp1));
            for (int trial = 0; trial < opts.subset_cap; ++trial) {
                bool distinct = true;
                for (int i = 0; i < kp1; ++i) {
                    subset[static_cast<std::size_t>(i)] = pick(rng);
                    for (int j = 0; j < i; ++j) {
                        distinct &= subset[static_cast<std::size_t>(j)] !=
                                    subset[static_cast<std::size_t>(i)];
                    }
                }
                if (distinct) consider(subset);
            }
        }
        return best;
    }

    // Embed a hyperplane of E = R^{k+1} into the full space: the normal gains
    // trailing zeros, so the lifted plane is orthogonal to E.
    Hyperplane lift_plane(const Hyperplane& h, int dim) const {
        Hyperplane out;
        out.normal = Vector::Zero(dim);
        out.normal.head(h.normal.size()) = h.normal;
        out.offset = h.offset;
        return out;
    }
};

}  // namespace

SearchStructure build_search_structure(const Matrix& points, int k,
                                       const LowdimBuildOptions& opts) {
    require(k >= 0, "build_search_structure: k must be nonnegative");
    require(points.rows() >= k + 1, "build_search_structure: dim must be at least k+1");
    require(points.cols() >= 1, "build_search_structure: empty point set");
    LowdimBuilder builder{opts, k};
    std::vector<int> ids(static_cast<std::size_t>(points.cols()));
    std::iota(ids.begin(), ids.end(), 0);
    SearchStructure s = builder.build(points, std::move(ids), static_cast<int>(points.rows()));

    // Space sanity bound (generous constant over the O(n log^{d-k-1} n)
    // shape; a violation means the slab extraction recursion is broken).
    const double n = static_cast<double>(points.cols());
    const double depth = static_cast<double>(points.rows() - k - 1);
    const double bound = n * (1.0 + 8.0 * std::max(1.0, depth) *
                                        std::ceil(std::log2(std::max(2.0, n))));
    if (static_cast<double>(s.point_slots()) > bound) {
        throw NoConvergence("build_search_structure: space bound violated");
    }
    return s;
}

std::size_t SearchStructure::point_slots() const {
    std::size_t total = 0;
    visit([&](const SearchStructure& s) { total += static_cast<std::size_t>(s.size()); });
    return total;
}

int SearchStructure::recursion_depth() const {
    int depth = 0;
    for (const auto& [node, slabs] : node_slabs) {
        (void)node;
        for (const auto& slab : slabs.slabs) {
            if (slab.inner) depth = std::max(depth, 1 + slab.inner->recursion_depth());
        }
    }
    return depth;
}

namespace {

struct QueryContext {
    const SearchStructure& s;
    double alpha;
    LowdimQueryStats* stats;
    std::vector<int>& out;

    void note_polytope(const QueryPolytope& f) const {
        if (stats) {
            stats->max_polytope_halfspaces = std::max(
                stats->max_polytope_halfspaces, static_cast<std::size_t>(f.halfspace_count()));
        }
    }
};

void scan_points(const QueryContext& ctx, const std::vector<int>& locals,
                 const QueryPolytope& f) {
    for (int local : locals) {
        if (ctx.stats) ++ctx.stats->leaf_points_tested;
        if (f.dist_point(ctx.s.points.col(local)) <= ctx.alpha) {
            ctx.out.push_back(ctx.s.original_ids[static_cast<std::size_t>(local)]);
        }
    }
}

void query_node(const QueryContext& ctx, const PartitionNode& node, const QueryPolytope& f);

void query_structure(const SearchStructure& s, const QueryPolytope& f, double alpha,
                     LowdimQueryStats* stats, std::vector<int>& out) {
    QueryContext ctx{s, alpha, stats, out};
    ctx.note_polytope(f);
    if (f.empty()) return;

    if (s.leaf_list) {
        std::vector<int> all(static_cast<std::size_t>(s.size()));
        std::iota(all.begin(), all.end(), 0);
        scan_points(ctx, all, f);
        return;
    }

    if (s.dim == s.k + 1) {
        // Base dimension: report the l1 Minkowski region around the polytope,
        // which sandwiches the true alpha-neighborhood within sqrt(k+1).
        const double radius = std::sqrt(static_cast<double>(s.k + 1)) * alpha;
        auto leaves = leaves_near(
            *s.tree.root, [&](const Box& cell) { return f.dist_box(cell); }, radius);
        for (const auto* leaf : leaves) {
            for (int local : leaf->point_indices) {
                if (stats) ++stats->leaf_points_tested;
                if (f.dist_point_l1(s.points.col(local)) <= radius) {
                    out.push_back(s.original_ids[static_cast<std::size_t>(local)]);
                }
            }
        }
        return;
    }

    query_node(ctx, *s.tree.root, f);
}

void query_node(const QueryContext& ctx, const PartitionNode& node, const QueryPolytope& f) {
    const SearchStructure& s = ctx.s;
    if (node.is_leaf()) {
        scan_points(ctx, node.point_indices, f);
        return;
    }

    std::vector<bool> removed(node.children.size(), false);
    const auto slabs_it = s.node_slabs.find(&node);
    if (slabs_it != s.node_slabs.end()) {
        for (const auto& slab : slabs_it->second.slabs) {
            if (slab.width > (4.0 * s.k + 2.0) * ctx.alpha) break;  // widths nondecreasing
            if (ctx.stats) {
                ++ctx.stats->slabs_visited;
                ctx.stats->max_visited_slab_width =
                    std::max(ctx.stats->max_visited_slab_width, slab.width);
            }
            for (int pos : slab.extracted_children) {
                removed[static_cast<std::size_t>(pos)] = true;
            }
            // Restrict the query to the slab's reach, project onto the
            // hyperplane, and recurse one dimension down.
            QueryPolytope clipped =
                f.clipped_to_slab(slab.median_plane, ctx.alpha + slab.width / 2);
            if (clipped.empty()) continue;
            QueryPolytope projected =
                clipped.projected_to_frame(slab.frame, slab.plane_origin);
            query_structure(*slab.inner, projected, ctx.alpha, ctx.stats, ctx.out);
        }
    }

    // Residual cells: recurse into children near the projection of the query
    // onto E.
    const QueryPolytope f_hat = f.projected_prefix(s.k + 1);
    ctx.note_polytope(f);
    for (std::size_t i = 0; i < node.children.size(); ++i) {
        if (removed[i]) continue;
        const PartitionNode& child = *node.children[i];
        if (f_hat.dist_box(child.cell) <= ctx.alpha + 1e-7) {
            query_node(ctx, child, f);
        }
    }
}

}  // namespace

std::vector<int> query_near(const SearchStructure& s, const QueryPolytope& f, double alpha,
                            LowdimQueryStats* stats) {
    require(alpha >= 0, "query_near: alpha must be nonnegative");
    std::vector<int> out;
    query_structure(s, f, alpha, stats, out);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    if (stats) stats->reported = out.size();
    return out;
}

std::vector<int> query_near(const SearchStructure& s, const Flat& f, double alpha,
                            LowdimQueryStats* stats) {
    Box bounds;
    bounds.lower = s.points.rowwise().minCoeff().array() - alpha;
    bounds.upper = s.points.rowwise().maxCoeff().array() + alpha;
    return query_near(s, QueryPolytope::from_flat(f, bounds), alpha, stats);
}

NearestResult query_ann_sampled(const SearchStructure& s, const Flat& f, std::uint64_t seed,
                                LowdimQueryStats* stats) {
    const int n = s.size();
    auto rng = make_rng(seed);
    std::bernoulli_distribution coin(std::min(1.0, 1.0 / std::sqrt(static_cast<double>(n))));

    NearestResult best;
    for (int i = 0; i < n; ++i) {
        if (!coin(rng)) continue;
        const double dist = dist_point_flat(s.points.col(i), f);
        if (best.index < 0 || dist < best.distance) {
            best = {s.original_ids[static_cast<std::size_t>(i)], dist, 0};
        }
    }
    if (best.index < 0) {
        // Empty sample (rare): exact scan.
        for (int i = 0; i < n; ++i) {
            const double dist = dist_point_flat(s.points.col(i), f);
            if (best.index < 0 || dist < best.distance) {
                best = {s.original_ids[static_cast<std::size_t>(i)], dist, 0};
            }
        }
        return best;
    }

    const double kappa = lowdim_kappa(s.dim, s.k);
    const double alpha = best.distance / kappa;
    const auto reported = query_near(s, f, alpha, stats);
    for (int id : reported) {
        // Reported ids are original ids; at the top level they coincide with
        // local columns.
        const double dist = dist_point_flat(s.points.col(id), f);
        if (dist < best.distance) {
            best.index = id;
            best.distance = dist;
        }
    }
    best.reported_size = reported.size();
    return best;
}

}  // namespace flatnn
