#pragma once

#include "flatnn/index.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace flatnn {

enum class DatasetKind { uniform, planted };

struct DatasetSpec {
    int n = 1024;
    int d = 32;
    int k = 1;
    DatasetKind kind = DatasetKind::uniform;
    int num_clusters = 4;           // planted
    double cluster_radius = 0.05;   // planted
    double noise_fraction = 0.25;   // planted
    std::uint64_t seed = 0;
};

struct Dataset {
    DatasetSpec spec;
    Matrix points;
    std::vector<Flat> planted_flats;  // diagnostics for planted datasets
};

Dataset gen_dataset(const DatasetSpec& spec);

/// Query mix for verification: half anchored near data points, half uniform.
std::vector<Flat> gen_queries(const Dataset& data, int count, std::uint64_t seed);

struct QueryRecord {
    double oracle = 0.0;
    double returned = 0.0;
    double ratio = 1.0;
    double micros = 0.0;
};

struct RunReport {
    std::vector<QueryRecord> queries;
    int passed = 0;
    double success_rate = 0.0;
    double p50_micros = 0.0;
    double p95_micros = 0.0;
    double max_ratio = 0.0;
    double build_seconds = 0.0;
};

/// Runs every query through the index and the brute-force oracle. A query
/// passes when its distance is within factor c of the oracle.
RunReport verify_run(const FlatIndex& idx, const std::vector<Flat>& queries,
                     std::uint64_t seed);

void print_report(std::ostream& out, const RunReport& report, double threshold);

struct SlopeReport {
    std::vector<int> sizes;
    std::vector<double> values;  // median latency or count per size
    double slope = 0.0;          // log-log regression
    double constant = 0.0;
};

SlopeReport fit_slope(const std::vector<int>& sizes, const std::vector<double>& values);

/// Median query_near latency of the low-dimensional structure over a
/// geometric ladder of sizes (dim = 2, k = 1).
SlopeReport bench_lowdim_slope(const std::vector<int>& sizes, int queries,
                               std::uint64_t seed);

/// 95th-percentile crossed-leaf counts of the partition tree against random
/// hyperplanes.
SlopeReport bench_crossing_slope(const std::vector<int>& sizes, int planes_per_size,
                                 std::uint64_t seed);

/// Calibration: a constant-time measurement through the same timing path;
/// its slope should be ~0.
SlopeReport bench_constant_baseline(const std::vector<int>& sizes, int queries,
                                    std::uint64_t seed);

/// End-to-end query_index latency ladder.
SlopeReport bench_index_slope(const std::vector<int>& sizes, int queries, int d,
                              std::uint64_t seed);

}  // namespace flatnn
