#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flatnn/projection.hpp"
#include "test_helpers.hpp"

#include <cmath>
#include <numeric>

using namespace flatnn;
using namespace flatnn::testing;

TEST_CASE("make_projection: scaling invariant and determinism") {
    auto p = make_projection(64, 1.0 / 21.0, 1, 7);
    CHECK(p.output_dim == 44);
    const Matrix gram = p.matrix * p.matrix.transpose();
    const Matrix expected = (64.0 / (4.0 * 44.0)) * Matrix::Identity(44, 44);
    CHECK((gram - expected).cwiseAbs().maxCoeff() < 1e-9);

    auto q = make_projection(64, 1.0 / 21.0, 1, 7);
    CHECK((p.matrix - q.matrix).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(make_projection(30, 1.0 / 21.0, 1, 7), InvalidParams);
}

TEST_CASE("make_projection: JL scaling, mean of 4*|Mx|^2 near 1") {
    Vector x = Vector::Zero(64);
    x(5) = 1.0;
    double total = 0.0;
    const int trials = 10000;
    for (int s = 0; s < trials; ++s) {
        auto p = make_projection(64, 1.0 / 21.0, 1, 100000 + s);
        total += 4.0 * p.apply(x).squaredNorm();
    }
    CHECK(total / trials == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("JL statistics for point-flat distances (non-expansion and contraction)") {
    std::mt19937_64 rng(3);
    const int trials = 2000;
    int no_expand = 0, no_collapse = 0;
    for (int s = 0; s < trials; ++s) {
        auto p = make_projection(64, 1.0 / 21.0, 1, 555000 + s);
        const Flat f = random_flat(rng, 64, 1);
        const Vector x = random_vector(rng, 64);
        const double before = dist_point_flat(x, f);
        const Flat fbar = p.apply_flat(f);
        const double after = dist_point_flat(p.apply(x), fbar);
        if (after <= before + 1e-12) ++no_expand;
        if (after >= before / 40.0 - 1e-12) ++no_collapse;
    }
    CHECK(no_expand >= static_cast<int>(0.995 * trials));
    CHECK(no_collapse >= static_cast<int>(0.995 * trials));
}

TEST_CASE("projected flat is again a k-flat") {
    std::mt19937_64 rng(4);
    for (int s = 0; s < 20; ++s) {
        auto p = make_projection(64, 1.0 / 21.0, 1, 777 + s);
        Flat f = random_flat(rng, 64, 1);
        Flat fbar = p.apply_flat(f);
        CHECK(fbar.k == 1);
        CHECK(fbar.dim() == 44);
        // Projection commutes: points of F map into Fbar.
        for (int probe = 0; probe < 5; ++probe) {
            const Vector y = f.at(random_vector(rng, 1, 3.0));
            CHECK(dist_point_flat(p.apply(y), fbar) < 1e-9);
        }
    }
}

TEST_CASE("q1_query: single point") {
    std::mt19937_64 rng(5);
    Matrix pts = random_matrix(rng, 64, 1);
    auto ps = build_projection_structure(pts, {0}, 1, 1.0 / 21.0, {.seed = 3});
    Flat f = random_flat(rng, 64, 1);
    auto ans = q1_query(ps, f, 17);
    CHECK(ans.owner == 0);
    CHECK(ans.distance == doctest::Approx(dist_point_flat(pts.col(0), f)));
}

TEST_CASE("q1_query: flat through a data point is found almost always") {
    std::mt19937_64 rng(6);
    Matrix pts = random_matrix(rng, 64, 300);
    std::vector<int> ids(300);
    std::iota(ids.begin(), ids.end(), 0);
    auto ps = build_projection_structure(pts, ids, 1, 1.0 / 21.0, {.seed = 9});
    int hits = 0;
    const int trials = 300;
    for (int s = 0; s < trials; ++s) {
        const int target = s % 300;
        Matrix gen(64, 2);
        gen.col(0) = pts.col(target);
        gen.col(1) = pts.col(target) + random_vector(rng, 64);
        Flat f = flat_from_generators(gen);
        auto ans = q1_query(ps, f, 4000 + s);
        if (ans.distance <= 1e-9) ++hits;
    }
    CHECK(hits >= static_cast<int>(0.99 * trials));
}

TEST_CASE("q1_query: estimate within n^t of the oracle on >= 95% of queries") {
    std::mt19937_64 rng(7);
    const int n = 2000;
    Matrix pts = random_matrix(rng, 64, n);
    std::vector<int> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    auto ps = build_projection_structure(pts, ids, 1, 1.0 / 21.0, {.seed = 21});
    const double nt = std::pow(static_cast<double>(n), 1.0 / 21.0);
    int good = 0;
    for (int s = 0; s < 100; ++s) {
        Flat f = random_flat(rng, 64, 1, 2.0);
        double oracle = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) oracle = std::min(oracle, dist_point_flat(pts.col(i), f));
        auto ans = q1_query(ps, f, 9000 + s);
        CHECK(ans.distance >= oracle - 1e-12);
        if (ans.distance <= nt * oracle + 1e-12) ++good;
    }
    MESSAGE("q1 within n^t on ", good, " of 100");
    CHECK(good >= 95);
}

TEST_CASE("q3_query: huge alpha reports everything and returns the exact NN") {
    std::mt19937_64 rng(8);
    const int n = 400;
    Matrix pts = random_matrix(rng, 64, n);
    std::vector<int> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    auto ps = build_projection_structure(pts, ids, 1, 1.0 / 21.0, {.seed = 33});
    for (int s = 0; s < 5; ++s) {
        Flat f = random_flat(rng, 64, 1);
        auto ans = q3_query(ps, f, 1e9);
        CHECK(ans.reported_size == static_cast<std::size_t>(n));
        double oracle = std::numeric_limits<double>::infinity();
        int oracle_idx = -1;
        for (int i = 0; i < n; ++i) {
            const double dist = dist_point_flat(pts.col(i), f);
            if (dist < oracle) {
                oracle = dist;
                oracle_idx = i;
            }
        }
        CHECK(ans.owner == oracle_idx);
        CHECK(ans.distance == doctest::Approx(oracle).epsilon(1e-12));
    }
}

TEST_CASE("q3_query: exact hit at distance zero is always found") {
    std::mt19937_64 rng(9);
    const int n = 300;
    Matrix pts = random_matrix(rng, 64, n);
    std::vector<int> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    auto ps = build_projection_structure(pts, ids, 1, 1.0 / 21.0, {.seed = 41});
    for (int s = 0; s < 25; ++s) {
        const int target = s * 11 % n;
        Matrix gen(64, 2);
        gen.col(0) = pts.col(target);
        gen.col(1) = pts.col(target) + random_vector(rng, 64);
        Flat f = flat_from_generators(gen);
        auto ans = q3_query(ps, f, 0.5);
        CHECK(ans.distance <= 1e-9);
    }
}

TEST_CASE("q3_query: exact NN under a valid alpha on cluster-free data") {
    std::mt19937_64 rng(10);
    const int n = 500;
    Matrix pts = random_matrix(rng, 64, n);  // Gaussian cloud: cluster-free
    std::vector<int> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    auto ps = build_projection_structure(pts, ids, 1, 1.0 / 21.0, {.seed = 55});
    int exact = 0;
    const int trials = 100;
    for (int s = 0; s < trials; ++s) {
        Flat f = random_flat(rng, 64, 1, 2.0);
        double oracle = std::numeric_limits<double>::infinity();
        int oracle_idx = -1;
        for (int i = 0; i < n; ++i) {
            const double dist = dist_point_flat(pts.col(i), f);
            if (dist < oracle) {
                oracle = dist;
                oracle_idx = i;
            }
        }
        auto ans = q3_query(ps, f, oracle * 1.05);  // valid: d(F, P) <= alpha
        if (ans.owner == oracle_idx) ++exact;
    }
    MESSAGE("q3 exact NN in ", exact, " of ", trials);
    CHECK(exact >= 90);
}
