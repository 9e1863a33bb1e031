#include "flatnn/partition_tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace flatnn {

namespace {

struct Builder {
    const Matrix& points;  // dim x n
    int r;
    int splits_per_level;

    std::unique_ptr<PartitionNode> build(std::vector<int> indices, Box cell, int level) {
        auto node = std::make_unique<PartitionNode>();
        node->cell = std::move(cell);
        node->level = level;
        node->point_indices = std::move(indices);
        if (static_cast<int>(node->point_indices.size()) <= 2 * r) return node;

        // One tree level = ceil(log2 r) median splits; children are the
        // resulting boxes, pairwise interior-disjoint inside the parent cell.
        struct Piece {
            std::vector<int> indices;
            Box cell;
            int split_depth;
        };
        std::vector<Piece> done;
        std::vector<Piece> work;
        work.push_back({node->point_indices, node->cell, 0});
        while (!work.empty()) {
            Piece piece = std::move(work.back());
            work.pop_back();
            if (piece.split_depth == splits_per_level || piece.indices.size() <= 1) {
                done.push_back(std::move(piece));
                continue;
            }
            const int axis = (level * splits_per_level + piece.split_depth) %
                             static_cast<int>(points.rows());
            auto& idx = piece.indices;
            const std::size_t half = idx.size() / 2;
            // Points on the splitting plane go left: order by (coord, index).
            std::nth_element(idx.begin(), idx.begin() + (half - 1), idx.end(),
                             [&](int a, int b) {
                                 const double xa = points(axis, a), xb = points(axis, b);
                                 return xa != xb ? xa < xb : a < b;
                             });
            const double split_value = points(axis, idx[half - 1]);

            Piece left, right;
            left.split_depth = right.split_depth = piece.split_depth + 1;
            left.indices.assign(idx.begin(), idx.begin() + half);
            right.indices.assign(idx.begin() + half, idx.end());
            left.cell = piece.cell;
            left.cell.upper(axis) = std::min(left.cell.upper(axis), split_value);
            right.cell = piece.cell;
            right.cell.lower(axis) = std::max(right.cell.lower(axis), split_value);
            work.push_back(std::move(left));
            work.push_back(std::move(right));
        }
        // Deterministic child order: by first point index.
        std::sort(done.begin(), done.end(), [](const Piece& a, const Piece& b) {
            return a.indices.front() < b.indices.front();
        });
        for (auto& piece : done) {
            node->children.push_back(build(std::move(piece.indices), std::move(piece.cell),
                                           level + 1));
        }
        return node;
    }
};

// Signed placement of a box against a plane: +1 entirely on the >= side,
// -1 entirely on the <= side, 0 crossing or contained.
int box_side(const Box& box, const Hyperplane& h, double tol = 1e-12) {
    double lo = 0.0, hi = 0.0;
    for (int i = 0; i < box.dim(); ++i) {
        const double n = h.normal(i);
        if (n >= 0) {
            lo += n * box.lower(i);
            hi += n * box.upper(i);
        } else {
            lo += n * box.upper(i);
            hi += n * box.lower(i);
        }
    }
    if (lo >= h.offset - tol) return +1;
    if (hi <= h.offset + tol) return -1;
    return 0;
}

bool boxes_intersect(const Box& a, const Box& b, double tol = 1e-12) {
    return (a.lower.array() <= b.upper.array() + tol).all() &&
           (a.upper.array() >= b.lower.array() - tol).all();
}

}  // namespace

PartitionTree build_tree(const Matrix& points, int r) {
    require(points.cols() >= 1, "build_tree: need at least one point");
    require(r >= 4, "build_tree: r must be at least 4");
    const int dim = static_cast<int>(points.rows());

    PartitionTree tree;
    tree.branching = r;
    std::vector<int> all(static_cast<std::size_t>(points.cols()));
    std::iota(all.begin(), all.end(), 0);

    Box root_cell;
    if (dim == 0) {
        root_cell.lower = Vector(0);
        root_cell.upper = Vector(0);
        tree.root = std::make_unique<PartitionNode>();
        tree.root->cell = root_cell;
        tree.root->point_indices = std::move(all);
        return tree;
    }
    root_cell.lower = points.rowwise().minCoeff();
    root_cell.upper = points.rowwise().maxCoeff();

    Builder builder{points, r, std::max(1, static_cast<int>(std::ceil(std::log2(r))))};
    tree.root = builder.build(std::move(all), std::move(root_cell), 0);
    return tree;
}

FrontierResult uncrossed_frontier(const PartitionNode& root, const std::vector<Hyperplane>& planes,
                                  const Box* prune) {
    FrontierResult result;
    // Planes resolved at an ancestor keep their sign for the whole subtree, so
    // each node only re-tests the planes its parent still crossed.
    struct Item {
        const PartitionNode* node;
        std::vector<int> open;               // indices of planes still crossing
        std::vector<std::int8_t> label;      // signs of resolved planes
    };
    std::vector<Item> stack;
    Item start;
    start.node = &root;
    start.open.resize(planes.size());
    std::iota(start.open.begin(), start.open.end(), 0);
    start.label.assign(planes.size(), 0);
    stack.push_back(std::move(start));

    while (!stack.empty()) {
        Item item = std::move(stack.back());
        stack.pop_back();
        if (prune && !boxes_intersect(item.node->cell, *prune)) continue;

        std::vector<int> still_open;
        for (int pi : item.open) {
            const int side = box_side(item.node->cell, planes[static_cast<std::size_t>(pi)]);
            if (side == 0) {
                still_open.push_back(pi);
            } else {
                item.label[static_cast<std::size_t>(pi)] = static_cast<std::int8_t>(side);
            }
        }
        if (still_open.empty()) {
            result.frontier.push_back({item.node, std::move(item.label)});
            continue;
        }
        if (item.node->is_leaf()) {
            result.crossed_leaves.push_back(item.node);
            continue;
        }
        for (const auto& child : item.node->children) {
            stack.push_back({child.get(), still_open, item.label});
        }
    }
    return result;
}

std::vector<const PartitionNode*> leaves_near(
    const PartitionNode& root, const std::function<double(const Box&)>& dist_to_cell,
    double alpha, double prune_margin) {
    std::vector<const PartitionNode*> out;
    std::vector<const PartitionNode*> stack{&root};
    while (!stack.empty()) {
        const PartitionNode* node = stack.back();
        stack.pop_back();
        const double dist = dist_to_cell(node->cell);
        if (node->is_leaf()) {
            if (dist <= alpha) out.push_back(node);
            continue;
        }
        if (dist > alpha + prune_margin) continue;
        for (const auto& child : node->children) stack.push_back(child.get());
    }
    return out;
}

}  // namespace flatnn
