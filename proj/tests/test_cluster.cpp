#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flatnn/cluster.hpp"
#include "test_helpers.hpp"

#include <algorithm>
#include <cmath>
#include <map>

using namespace flatnn;
using namespace flatnn::testing;

namespace {

Flat axis_flat(int d, int axis) {
    Flat f;
    f.k = 1;
    f.basis = Matrix::Zero(d, 1);
    f.basis(axis, 0) = 1.0;
    f.offset = Vector::Zero(d);
    return f;
}

// Members scattered near the flat K within the given radius.
Cluster make_cluster(std::mt19937_64& rng, const Flat& K, int m, double radius,
                     double spread = 4.0) {
    const int d = K.dim();
    Matrix pts(d, m);
    std::uniform_real_distribution<double> uu(-spread, spread);
    std::uniform_real_distribution<double> ur(0.0, radius);
    for (int i = 0; i < m; ++i) {
        Vector u(K.k);
        for (int j = 0; j < K.k; ++j) u(j) = uu(rng);
        Vector noise = random_vector(rng, d);
        noise -= K.basis * (K.basis.transpose() * noise);  // perpendicular part
        const double norm = noise.norm();
        Vector p = K.at(u);
        if (norm > 0 && radius > 0) p += noise * (ur(rng) / norm);
        pts.col(i) = p;
    }
    std::vector<int> members(static_cast<std::size_t>(m));
    std::iota(members.begin(), members.end(), 0);
    double actual_radius = 0.0;
    for (int i = 0; i < m; ++i) {
        actual_radius = std::max(actual_radius, dist_point_flat(pts.col(i), K));
    }
    return Cluster::from_points(K, std::max(radius, actual_radius), std::move(members),
                                std::move(pts));
}

ClusterParams test_params(double n, double eps, double t = 0.01) {
    ClusterParams p;
    p.c = 2.0;
    p.n = n;
    p.t = t;
    p.eps = eps;
    p.ann_kind = AnnKind::oracle;
    return p;
}

}  // namespace

TEST_CASE("cluster projections: members on K project to zero complement") {
    std::mt19937_64 rng(1);
    Flat K = random_flat(rng, 6, 2);
    Cluster c = make_cluster(rng, K, 32, 0.0);
    CHECK(c.complement_projections.cwiseAbs().maxCoeff() < 1e-9);
    for (int i = 0; i < c.size(); ++i) {
        CHECK(dist_point_flat(c.points.col(i), K) <= c.radius + 1e-9);
    }
}

TEST_CASE("build: single member gives a single-leaf structure") {
    std::mt19937_64 rng(2);
    Flat K = random_flat(rng, 4, 1);
    Cluster c = make_cluster(rng, K, 1, 0.1);
    auto cs = build_cluster_structure(std::move(c), test_params(64, 0.1));
    CHECK(cs.tree.root->is_leaf());
    CHECK(cs.node_ann.size() == 1);
    CHECK(cs.ann_at(*cs.tree.root).size() == 1);
}

TEST_CASE("build: frontier at every depth carries the full member multiset") {
    std::mt19937_64 rng(3);
    Flat K = random_flat(rng, 16, 1);
    Cluster c = make_cluster(rng, K, 512, 0.3);
    auto cs = build_cluster_structure(std::move(c), test_params(512, 0.1));

    int max_depth = 0;
    std::vector<const PartitionNode*> stack{cs.tree.root.get()};
    while (!stack.empty()) {
        const auto* node = stack.back();
        stack.pop_back();
        max_depth = std::max(max_depth, node->level);
        for (const auto& ch : node->children) stack.push_back(ch.get());
    }
    for (int depth = 0; depth <= max_depth; ++depth) {
        // Frontier at `depth`: nodes at that level plus shallower leaves.
        std::vector<int> gathered;
        std::vector<const PartitionNode*> walk{cs.tree.root.get()};
        while (!walk.empty()) {
            const auto* node = walk.back();
            walk.pop_back();
            if (node->level == depth || (node->is_leaf() && node->level < depth)) {
                CHECK(cs.node_ann.count(node) == 1);
                CHECK(cs.ann_at(*node).size() ==
                      static_cast<int>(node->point_indices.size()));
                gathered.insert(gathered.end(), node->point_indices.begin(),
                                node->point_indices.end());
                continue;
            }
            for (const auto& ch : node->children) walk.push_back(ch.get());
        }
        std::sort(gathered.begin(), gathered.end());
        CHECK(static_cast<int>(gathered.size()) == 512);
        for (int i = 0; i < 512; ++i) CHECK(gathered[static_cast<std::size_t>(i)] == i);
    }
}

TEST_CASE("enumerate_l_flats: fully parallel query returns F itself") {
    std::mt19937_64 rng(4);
    Flat K = axis_flat(4, 0);
    Flat F = axis_flat(4, 0);
    F.offset = Vector::Zero(4);
    F.offset(2) = 1.5;
    auto frame = align_flats(K, F);
    std::size_t budget = 1000;
    auto flats = enumerate_l_flats(frame, F, 0.5, test_params(64, 0.1), &budget);
    REQUIRE(flats.size() == 1);
    CHECK(flats[0].k == 1);
    CHECK(std::abs(std::abs(flats[0].basis(0, 0)) - 1.0) < 1e-9);
    CHECK((flats[0].offset - F.offset).norm() < 1e-9);
}

TEST_CASE("enumerate_l_flats: orthogonal line discretizes into points spaced tau") {
    Flat K = axis_flat(4, 0);
    Flat F = axis_flat(4, 1);  // orthogonal: sigma = 0, l = 0
    F.offset = Vector::Zero(4);
    F.offset(3) = 0.7;
    auto frame = align_flats(K, F);
    const auto params = test_params(64, 0.35);
    const double alpha = 1.0;
    std::size_t budget = 1'000'000;
    auto flats = enumerate_l_flats(frame, F, alpha, params, &budget);
    REQUIRE(flats.size() >= 3);
    const double eps = params.resolved_eps();
    const double tau = alpha * eps / params.n2t();
    const double o_tau = std::ceil(params.n2t() / std::pow(eps, 2.5));
    CHECK(flats.size() == static_cast<std::size_t>(2 * o_tau + 1));
    for (std::size_t i = 0; i < flats.size(); ++i) {
        CHECK(flats[i].k == 0);
        // Points on F...
        CHECK(dist_point_flat(flats[i].offset, F) < 1e-9);
        if (i > 0) {
            const double gap = (flats[i].offset - flats[i - 1].offset).norm();
            CHECK(gap == doctest::Approx(tau).epsilon(1e-9));
        }
        // ... within the index range.
        CHECK((flats[i].offset - F.offset).norm() <= o_tau * tau + 1e-9);
    }
}

TEST_CASE("enumerate_l_flats: every flat is contained in F") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        Flat K = random_flat(rng, 6, 2);
        Flat F = random_flat(rng, 6, 2);
        auto frame = align_flats(K, F);
        std::size_t budget = 200000;
        std::vector<Flat> flats;
        try {
            flats = enumerate_l_flats(frame, F, 0.8, test_params(64, 0.35), &budget);
        } catch (const BudgetExceeded&) {
            continue;
        }
        int samples = 0;
        for (const Flat& lf : flats) {
            if (samples > 100) break;
            for (int probe = 0; probe < 3; ++probe, ++samples) {
                const Vector x = lf.at(random_vector(rng, lf.k, 2.0));
                CHECK(dist_point_flat(x, F) < 1e-9);
            }
        }
    }
}

TEST_CASE("enumerate_patches: l = 0 gives the point itself") {
    std::mt19937_64 rng(6);
    Flat K = axis_flat(4, 0);
    Flat F = axis_flat(4, 1);
    auto frame = align_flats(K, F);
    Flat point;
    point.k = 0;
    point.basis = Matrix(4, 0);
    point.offset = Vector::Zero(4);
    point.offset(1) = 2.0;
    std::size_t budget = 1000;
    auto patches = enumerate_patches(point, frame, Matrix::Zero(4, 1), 1.0,
                                     test_params(64, 0.1), &budget);
    REQUIRE(patches.size() == 1);
    CHECK(patches[0].basis_parallel.cols() == 0);
    CHECK((patches[0].anchor - point.offset).norm() < 1e-12);
}

TEST_CASE("enumerate_patches: exactly shared direction gives boxes on L itself") {
    Flat K = axis_flat(4, 0);
    Flat F = axis_flat(4, 0);
    F.offset = Vector::Zero(4);
    F.offset(2) = 1.0;
    auto frame = align_flats(K, F);
    std::mt19937_64 rng(7);
    Matrix members = random_matrix(rng, 4, 16, 2.0);
    std::size_t budget = 1000;
    // L = F (l = k = 1, sigma_1 = 1).
    auto patches = enumerate_patches(F, frame, members, 1.0, test_params(64, 0.1), &budget);
    REQUIRE(patches.size() == 1);
    const Patch& p = patches[0];
    // C = B1: the patch basis is F's own direction.
    CHECK((p.basis_parallel.col(0) - F.basis.col(0)).cwiseAbs().maxCoeff() < 1e-9);
    // The box covers every member's projection onto F.
    for (int i = 0; i < members.cols(); ++i) {
        const double w = F.basis.col(0).dot(members.col(i) - p.anchor);
        CHECK(w >= -1e-9);
        CHECK(w <= p.box_widths(0) + 1e-9);
    }
    // Patch points lie on L exactly.
    for (int probe = 0; probe < 20; ++probe) {
        Vector w(1);
        w << probe / 19.0 * p.box_widths(0);
        const Vector x = p.basis_parallel * w + p.anchor;
        CHECK(dist_point_flat(x, F) < 1e-9);
    }
}

TEST_CASE("enumerate_patches: patch points stay within eps*alpha/n2t of L") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        Flat K = random_flat(rng, 6, 2);
        Flat F = random_flat(rng, 6, 2);
        auto frame = align_flats(K, F);
        const auto params = test_params(128, 0.3);
        const double alpha = 0.9;
        std::size_t budget = 500000;
        try {
            auto flats = enumerate_l_flats(frame, F, alpha, params, &budget);
            int checked = 0;
            for (const Flat& lf : flats) {
                if (lf.k == 0 || checked > 50) continue;
                auto patches =
                    enumerate_patches(lf, frame, random_matrix(rng, 6, 8), alpha, params,
                                      &budget);
                const double bound = params.resolved_eps() * alpha / params.n2t() + 1e-9;
                for (std::size_t pi = 0; pi < std::min<std::size_t>(patches.size(), 5); ++pi) {
                    const Patch& p = patches[pi];
                    ++checked;
                    for (int probe = 0; probe < 10; ++probe) {
                        Vector w(p.box_widths.size());
                        for (Eigen::Index j = 0; j < w.size(); ++j) {
                            w(j) = p.box_widths(j) * (probe / 9.0);
                        }
                        const Vector x = p.basis_parallel * w + p.anchor;
                        CHECK(dist_point_flat(x, lf) <= bound);
                    }
                }
            }
        } catch (const BudgetExceeded&) {
            continue;
        }
    }
}

TEST_CASE("patch_nn_query: member exactly on the patch wins with distance 0") {
    std::mt19937_64 rng(9);
    Flat K = axis_flat(8, 0);
    Cluster c = make_cluster(rng, K, 64, 0.5);
    // Plant member 7 exactly on the patch we will query.
    Patch g;
    g.basis_parallel = K.basis;
    g.anchor = Vector::Zero(8);
    g.anchor(1) = 0.25;  // parallel to K, shifted off it
    g.box_widths = Vector(1);
    g.box_widths << 3.0;
    c.points.col(7) = g.anchor + 1.5 * g.basis_parallel.col(0);
    Cluster rebuilt = Cluster::from_points(c.K, 0.6, c.members, c.points);
    auto cs = build_cluster_structure(std::move(rebuilt), test_params(64, 0.25));
    std::size_t budget = 1'000'000;
    auto ans = patch_nn_query(cs, g, &budget);
    CHECK(ans.column == 7);
    CHECK(ans.distance < 1e-9);
}

TEST_CASE("patch_nn_query: equal complement projections decide by the K side") {
    std::mt19937_64 rng(10);
    const int d = 6;
    Flat K = axis_flat(d, 0);
    const int m = 24;
    Matrix pts(d, m);
    Vector perp = Vector::Zero(d);
    perp(2) = 0.4;  // identical complement part for every member
    for (int i = 0; i < m; ++i) {
        pts.col(i) = Vector::Zero(d);
        pts.col(i)(0) = 10.0 * i;  // widely separated along K
        pts.col(i) += perp;
    }
    std::vector<int> members(m);
    std::iota(members.begin(), members.end(), 0);
    auto cs = build_cluster_structure(Cluster::from_points(K, 0.5, members, pts),
                                      test_params(64, 0.25));

    Patch g;
    g.basis_parallel = K.basis;
    g.anchor = Vector::Zero(d);
    g.anchor(0) = 57.0;  // between members 5 and 6, closer to 6
    g.box_widths = Vector(1);
    g.box_widths << 1.0;
    std::size_t budget = 1'000'000;
    auto ans = patch_nn_query(cs, g, &budget);

    ClusterAnswer oracle;
    oracle.distance = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
        const double dist = g.dist_point(pts.col(i));
        if (dist < oracle.distance) oracle = ClusterAnswer{i, i, dist};
    }
    CHECK(ans.column == oracle.column);
    CHECK(ans.distance == doctest::Approx(oracle.distance).epsilon(1e-12));
}

TEST_CASE("patch_nn_query: within c of the patch-distance oracle") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Flat K = random_flat(rng, 8, 1);
        Cluster c = make_cluster(rng, K, 256, 0.4);
        auto cs = build_cluster_structure(std::move(c), test_params(256, 0.25));
        // Random patch parallel to K near the cluster.
        Patch g;
        g.basis_parallel = cs.cluster.K.basis;
        g.anchor = cs.cluster.points.col(trial * 7 % 256) + random_vector(rng, 8, 0.3);
        g.box_widths = Vector(1);
        g.box_widths << 2.0;
        std::size_t budget = 1'000'000;
        ClusterAnswer ans;
        try {
            ans = patch_nn_query(cs, g, &budget);
        } catch (const BudgetExceeded&) {
            continue;
        }
        double oracle = std::numeric_limits<double>::infinity();
        for (int i = 0; i < 256; ++i) {
            oracle = std::min(oracle, g.dist_point(cs.cluster.points.col(i)));
        }
        CHECK(ans.distance <= 2.0 * oracle + 1e-9);
        CHECK(ans.distance >= oracle - 1e-12);
        // Reported distance is the recomputed true distance.
        CHECK(ans.distance ==
              doctest::Approx(g.dist_point(cs.cluster.points.col(ans.column))).epsilon(1e-12));
    }
}

TEST_CASE("far_query: all members projecting to one point of K") {
    std::mt19937_64 rng(12);
    const int d = 6;
    Flat K = axis_flat(d, 0);
    const int m = 16;
    Matrix pts(d, m);
    for (int i = 0; i < m; ++i) {
        pts.col(i) = Vector::Zero(d);
        pts.col(i)(0) = 2.5;                    // same K coordinate
        pts.col(i)(1) = 0.1 * (i % 4);          // small perpendicular scatter
        pts.col(i)(2) = 0.1 * (i / 4 % 4);
    }
    std::vector<int> members(m);
    std::iota(members.begin(), members.end(), 0);
    auto cs = build_cluster_structure(Cluster::from_points(K, 0.5, members, pts),
                                      test_params(64, 0.2));
    Flat F = axis_flat(d, 1);
    F.offset = Vector::Zero(d);
    F.offset(3) = 30.0;  // far from the members
    std::size_t budget = 1'000'000;
    auto ans = far_query(cs, F, 40.0, &budget);
    auto oracle = cluster_linear_scan(cs, F);
    CHECK(ans.column == oracle.column);
    CHECK(ans.distance == doctest::Approx(oracle.distance).epsilon(1e-12));
}

TEST_CASE("far_query: orthogonal flats, winner within (1+4eps) of oracle") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const int d = 8;
        Flat K = axis_flat(d, 0);
        Cluster c = make_cluster(rng, K, 128, 0.2);
        const auto params = test_params(128, 0.2);
        auto cs = build_cluster_structure(std::move(c), params);
        Flat F = axis_flat(d, 1);  // orthogonal to K: all sigma = 0
        F.offset = Vector::Zero(d);
        F.offset(2) = 5.0 + trial * 0.5;  // far away
        const double oracle = cluster_linear_scan(cs, F).distance;
        const double r_tilde = oracle * 1.3;  // valid window
        std::size_t budget = 1'000'000;
        auto ans = far_query(cs, F, r_tilde, &budget);
        CHECK(ans.distance <= (1.0 + 4.0 * params.resolved_eps()) * oracle + 1e-9);
    }
}

TEST_CASE("query_cluster: F = K hits the parallel case and the oracle answer") {
    std::mt19937_64 rng(14);
    Flat K = random_flat(rng, 10, 2);
    Cluster c = make_cluster(rng, K, 100, 0.5);
    auto cs = build_cluster_structure(std::move(c), test_params(128, 0.1));
    auto ans = query_cluster(cs, cs.cluster.K, 1.0);
    auto oracle = cluster_linear_scan(cs, cs.cluster.K);
    CHECK(ans.distance == doctest::Approx(oracle.distance).epsilon(1e-10));
}

TEST_CASE("query_cluster: orthogonal flat through a member returns it") {
    std::mt19937_64 rng(15);
    const int d = 8;
    Flat K = axis_flat(d, 0);
    Cluster c = make_cluster(rng, K, 64, 0.3);
    const Vector target = c.points.col(11);
    Flat F = axis_flat(d, 1);
    F.offset = target - F.basis * (F.basis.transpose() * target);
    auto cs = build_cluster_structure(std::move(c), test_params(64, 0.2));
    const double r_tilde = 0.5;
    ClusterAnswer ans;
    try {
        ans = query_cluster(cs, F, r_tilde);
    } catch (const BudgetExceeded&) {
        ans = cluster_linear_scan(cs, F);
    }
    CHECK(ans.distance <= 1e-9);
    CHECK(ans.column == 11);
}

TEST_CASE("query_cluster: randomized oracle check, 50 clusters") {
    std::mt19937_64 rng(16);
    int pass = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 1 + trial % 2;
        const int d = 16;
        Flat K = random_flat(rng, d, k);
        Cluster c = make_cluster(rng, K, 256, 0.3);
        const auto params = test_params(256, 0.2);
        auto cs = build_cluster_structure(std::move(c), params);
        Flat F = random_flat(rng, d, k);
        const double oracle = cluster_linear_scan(cs, F).distance;
        // Valid estimate window: d(F, Q) in [r/n^t, r].
        std::uniform_real_distribution<double> stretch(1.0, params.nt());
        const double r_tilde = oracle * stretch(rng);
        ClusterAnswer ans;
        try {
            ans = query_cluster(cs, F, r_tilde);
        } catch (const BudgetExceeded&) {
            ans = cluster_linear_scan(cs, F);
        }
        if (ans.distance <= params.c * oracle + 1e-9) ++pass;
        CHECK(ans.distance >= oracle - 1e-12);
        // Answers are member indices with faithful distances.
        CHECK(ans.distance ==
              doctest::Approx(dist_point_flat(cs.cluster.points.col(ans.column), F))
                  .epsilon(1e-10));
    }
    CHECK(pass == 50);
}

TEST_CASE("query_cluster: near-regime flats go through the patch machinery") {
    std::mt19937_64 rng(18);
    int near_instances = 0;
    for (int trial = 0; trial < 30; ++trial) {
        const int d = 12, k = 1;
        Flat K = random_flat(rng, d, k);
        Cluster c = make_cluster(rng, K, 128, 0.5);
        const auto params = test_params(128, 0.25);
        auto cs = build_cluster_structure(std::move(c), params);

        // Engineer a query flat at near-regime distance: anchor it a bit off
        // a member, with a direction mostly parallel to K plus a small tilt.
        const Vector anchor = cs.cluster.points.col(trial * 5 % 128);
        Vector off = random_vector(rng, d);
        off -= K.basis * (K.basis.transpose() * off);
        off *= 0.8 / off.norm();
        Matrix gen(d, 2);
        gen.col(0) = anchor + off;
        gen.col(1) = anchor + off + K.basis.col(0) + 0.05 * random_vector(rng, d);
        Flat F = flat_from_generators(gen);

        const double oracle = cluster_linear_scan(cs, F).distance;
        const double eps = params.resolved_eps();
        const double alpha = cs.cluster.radius;
        if (!(oracle >= alpha / params.n2t() && oracle <= alpha / eps)) continue;
        ++near_instances;
        const double r_tilde = oracle * 1.1;  // keeps the window in the near regime

        ClusterAnswer ans;
        try {
            ans = query_cluster(cs, F, r_tilde);
        } catch (const BudgetExceeded&) {
            ans = cluster_linear_scan(cs, F);
        }
        CHECK(ans.distance <= params.c * oracle + 1e-9);

        // The discretization really produced work for these instances.
        std::size_t budget = params.budget;
        auto frame = align_flats(cs.cluster.K, F);
        auto flats = enumerate_l_flats(frame, F, alpha, params, &budget);
        CHECK(!flats.empty());
    }
    CHECK(near_instances >= 10);
}

TEST_CASE("near-case chain factor stays below 1 for derived eps") {
    for (double n : {16.0, 64.0, 256.0, 1024.0, 65536.0}) {
        ClusterParams p = test_params(n, 0.0);  // derived eps
        const double eps = p.resolved_eps();
        const double ln_n = std::log(n);
        const double factor = (1.0 - 1.0 / (2.0 * ln_n)) * (1.0 + eps) * (1.0 + eps) /
                              (1.0 - eps);
        CHECK(factor <= 1.0);
    }
}

TEST_CASE("query_cluster: alpha = 0 cluster is handled by the far/parallel paths") {
    std::mt19937_64 rng(17);
    Flat K = random_flat(rng, 8, 1);
    Cluster c = make_cluster(rng, K, 48, 0.0);
    auto cs = build_cluster_structure(std::move(c), test_params(64, 0.15));
    for (int trial = 0; trial < 10; ++trial) {
        Flat F = random_flat(rng, 8, 1);
        const double oracle = cluster_linear_scan(cs, F).distance;
        ClusterAnswer ans;
        try {
            ans = query_cluster(cs, F, oracle * 1.2);
        } catch (const BudgetExceeded&) {
            ans = cluster_linear_scan(cs, F);
        }
        CHECK(ans.distance <= 2.0 * oracle + 1e-9);
    }
}
