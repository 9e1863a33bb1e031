#pragma once

#include "flatnn/types.hpp"

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

namespace flatnn {

enum class AnnKind { oracle, lsh };

struct AnnConfig {
    double c = 2.0;                // approximation factor, > 1
    double rho = 0.0;              // query exponent estimate; 0 = derive 1/c^2
    double sigma_exp = 0.0;        // space exponent estimate, metadata
    int tables = 8;                // L
    double hash_width = 0.0;       // w; <= 0 = derive 4 * sampled median distance
    int hashes_per_table = 6;
    std::uint64_t rng_seed = 0;

    void validate() const {
        require(c > 1.0, "AnnConfig: c must exceed 1");
        require(tables >= 1, "AnnConfig: tables must be positive");
        require(hashes_per_table >= 1, "AnnConfig: hashes_per_table must be positive");
    }

    // Fill derived defaults (rho = 1/c^2 from the standard Euclidean LSH
    // trade-off) without touching explicitly set fields.
    AnnConfig resolved() const {
        AnnConfig r = *this;
        if (r.rho <= 0.0) r.rho = 1.0 / (c * c);
        if (r.sigma_exp <= 0.0) r.sigma_exp = 1.0 / (c * c);
        return r;
    }
};

struct AnnAnswer {
    int index = -1;
    double distance = 0.0;
};

/// Point nearest-neighbor black box. The oracle kind is an exact linear scan
/// (ties to the smallest index); the lsh kind is Gaussian-projection
/// quantized hashing (p-stable, p = 2) with `hashes_per_table` concatenated
/// hashes per table, OR-ed over `tables` tables.
class PointAnnStructure {
  public:
    static PointAnnStructure build(const Matrix& points, AnnKind kind, const AnnConfig& cfg);

    /// Nearest stored point to q. The lsh kind returns nullopt on a bucket
    /// miss; callers re-query or fall back to a scan.
    std::optional<AnnAnswer> query(const Vector& q) const;

    /// Exact linear-scan answer over the stored points (the fallback path).
    AnnAnswer scan(const Vector& q) const;

    AnnKind kind() const { return kind_; }
    const AnnConfig& config() const { return cfg_; }
    int size() const { return static_cast<int>(points_.cols()); }
    int dim() const { return static_cast<int>(points_.rows()); }
    const Matrix& points() const { return points_; }
    int nonempty_tables() const;

  private:
    struct Table {
        Matrix projections;   // hashes_per_table x d
        Vector offsets;       // hashes_per_table
        std::unordered_map<std::uint64_t, std::vector<int>> buckets;
    };

    std::uint64_t bucket_key(const Table& t, const Vector& q) const;

    AnnKind kind_ = AnnKind::oracle;
    AnnConfig cfg_;
    Matrix points_;  // d x n
    std::vector<Table> tables_;
};

inline PointAnnStructure ann_build(const Matrix& points, AnnKind kind, const AnnConfig& cfg) {
    return PointAnnStructure::build(points, kind, cfg);
}

inline std::optional<AnnAnswer> ann_query(const PointAnnStructure& s, const Vector& q) {
    return s.query(q);
}

}  // namespace flatnn
