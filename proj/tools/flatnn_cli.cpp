#include <CLI11.hpp>

#include "flatnn/harness.hpp"
#include "flatnn/io.hpp"
#include "flatnn/rng.hpp"

#include <fstream>
#include <iostream>
#include <string>

namespace {

using namespace flatnn;

struct CommonOpts {
    int n = 1024;
    int d = 32;
    int k = 1;
    double c = 2.0;
    double t = 1.0 / 21.0;
    std::string ann = "oracle";
    std::uint64_t seed = 0;
    int repeats = 3;
    std::string in;
    std::string out;
    std::string queries;
    std::string config;
};

AnnKind parse_ann(const std::string& s) {
    if (s == "oracle") return AnnKind::oracle;
    if (s == "lsh") return AnnKind::lsh;
    throw CLI::ValidationError("--ann must be 'oracle' or 'lsh'");
}

IndexParams make_params(const CommonOpts& o) {
    IndexParams p;
    p.k = o.k;
    p.c = o.c;
    p.t = o.t;
    p.ann_kind = parse_ann(o.ann);
    p.repeats = o.repeats;
    p.seed = o.seed;
    return p;
}

// Config file keys mirror the long flags (n=..., ann=..., etc.); explicit
// command-line flags win.
void apply_config(const std::string& path, CLI::App& app) {
    if (path.empty()) return;
    for (const auto& [key, value] : load_config(path)) {
        CLI::Option* opt = app.get_option_no_throw("--" + key);
        if (opt && opt->count() == 0) opt->add_result(value)->run_callback();
    }
}

int cmd_gen(const CommonOpts& o, bool binary, bool planted, int clusters, double radius,
            double noise) {
    DatasetSpec spec;
    spec.n = o.n;
    spec.d = o.d;
    spec.k = o.k;
    spec.seed = o.seed;
    spec.kind = planted ? DatasetKind::planted : DatasetKind::uniform;
    spec.num_clusters = clusters;
    spec.cluster_radius = radius;
    spec.noise_fraction = noise;
    const Dataset data = gen_dataset(spec);
    if (binary) {
        save_points_binary(o.out, data.points);
    } else {
        save_points_text(o.out, data.points);
    }
    std::cout << "wrote " << o.out << " (" << spec.n << " x " << spec.d << ")\n";
    if (planted) {
        double worst = 0.0;
        const int planted_n = static_cast<int>(
            std::ceil((1.0 - noise) * static_cast<double>(spec.n)));
        for (int i = 0; i < planted_n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& f : data.planted_flats) {
                best = std::min(best, dist_point_flat(data.points.col(i), f));
            }
            worst = std::max(worst, best);
        }
        std::cout << "planted flats: " << data.planted_flats.size()
                  << ", max planted distance: " << worst << "\n";
    }
    return 0;
}

int cmd_build(const CommonOpts& o) {
    const Matrix points = load_points(o.in);
    const auto params = make_params(o);
    const auto t0 = std::chrono::steady_clock::now();
    const FlatIndex idx = build_index(points, params);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_index(idx, o.out);
    std::cout << "built index: n=" << idx.size() << " d=" << points.rows()
              << " k=" << params.k << " m=" << idx.m << " clusters=" << idx.cluster_count()
              << (idx.cluster_search_sampled ? " (sampled cluster search)" : "")
              << " in " << secs << " s\n";
    std::cout << "wrote " << o.out << "\n";
    return 0;
}

int cmd_query(const CommonOpts& o) {
    const FlatIndex idx = load_index(o.in);
    const auto flats = load_flats(o.queries);
    std::ofstream file;
    if (!o.out.empty()) {
        file.open(o.out, std::ios::trunc);
        if (!file) throw IoError("cannot write " + o.out);
    }
    std::ostream& out = o.out.empty() ? std::cout : file;
    out << "query,index,distance,r_tilde,i_star\n";
    for (std::size_t i = 0; i < flats.size(); ++i) {
        const auto ans = query_index(idx, flats[i], derive_seed(o.seed, i));
        out << i << "," << ans.index << "," << ans.distance << "," << ans.r_tilde << ","
            << ans.i_star << "\n";
    }
    return 0;
}

int cmd_verify(const CommonOpts& o, int num_queries, double threshold, bool planted,
               int clusters, double radius, double noise) {
    Dataset data;
    if (!o.in.empty()) {
        data.points = load_points(o.in);
        data.spec.n = static_cast<int>(data.points.cols());
        data.spec.d = static_cast<int>(data.points.rows());
        data.spec.k = o.k;
        data.spec.seed = o.seed;
    } else {
        DatasetSpec spec;
        spec.n = o.n;
        spec.d = o.d;
        spec.k = o.k;
        spec.seed = o.seed;
        spec.kind = planted ? DatasetKind::planted : DatasetKind::uniform;
        spec.num_clusters = clusters;
        spec.cluster_radius = radius;
        spec.noise_fraction = noise;
        data = gen_dataset(spec);
    }
    require(data.spec.n <= 100000, "verify: dataset beyond desk scale");

    const auto params = make_params(o);
    const auto t0 = std::chrono::steady_clock::now();
    const FlatIndex idx = build_index(data.points, params);
    const double build_secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::vector<Flat> queries;
    if (!o.queries.empty()) {
        queries = load_flats(o.queries);
    } else {
        queries = gen_queries(data, num_queries, derive_seed(o.seed, 0xabcd));
    }
    RunReport report = verify_run(idx, queries, derive_seed(o.seed, 0xbeef));
    report.build_seconds = build_secs;
    std::cout << "build_seconds: " << build_secs << "\n";
    print_report(std::cout, report, threshold);
    for (const auto& q : report.queries) {
        if (q.ratio < 1.0 - 1e-9) {
            std::cerr << "impossible ratio below 1: " << q.ratio << "\n";
            return 1;
        }
    }
    return report.success_rate >= threshold ? 0 : 1;
}

int cmd_bench(const std::string& mode, const CommonOpts& o, int queries, int lo_pow,
              int hi_pow) {
    std::vector<int> sizes;
    for (int p = lo_pow; p <= hi_pow; ++p) sizes.push_back(1 << p);
    SlopeReport rep;
    double gate = 0.0;
    if (mode == "lowdim") {
        rep = bench_lowdim_slope(sizes, queries, o.seed);
        gate = 0.5 + 0.15;
    } else if (mode == "crossing") {
        rep = bench_crossing_slope(sizes, 200, o.seed);
        gate = 0.5 + 0.15;
    } else if (mode == "calib") {
        rep = bench_constant_baseline(sizes, std::max(queries, 3000), o.seed);
        gate = 0.05;
    } else if (mode == "index") {
        rep = bench_index_slope(sizes, queries, o.d, o.seed);
        gate = 0.0;  // report only
    } else {
        throw CLI::ValidationError("--mode must be lowdim|crossing|calib|index");
    }
    std::cout << "mode: " << mode << "\nsizes:";
    for (int s : rep.sizes) std::cout << " " << s;
    std::cout << "\nvalues:";
    for (double v : rep.values) std::cout << " " << v;
    std::cout << "\nslope: " << rep.slope << "\nconstant: " << rep.constant << "\n";
    if (gate > 0.0) {
        std::cout << "gate: slope <= " << gate << " -> "
                  << (rep.slope <= gate ? "pass" : "FAIL") << "\n";
        return rep.slope <= gate ? 0 : 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flatnn: approximate nearest neighbor search for k-flat queries"};
    app.require_subcommand(1);

    CommonOpts o;
    bool binary = false, planted = false;
    int clusters = 4, num_queries = 200;
    double radius = 0.05, noise = 0.25, threshold = 0.9;
    std::string mode = "lowdim";
    int lo_pow = 10, hi_pow = 14;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--n", o.n, "point count");
        cmd->add_option("--d", o.d, "dimension");
        cmd->add_option("--k", o.k, "flat dimension");
        cmd->add_option("--c", o.c, "approximation factor");
        cmd->add_option("--t", o.t, "estimate exponent t");
        cmd->add_option("--ann", o.ann, "point-ANN kind: oracle|lsh");
        cmd->add_option("--seed", o.seed, "rng seed");
        cmd->add_option("--repeats", o.repeats, "projection repeats");
        cmd->add_option("--in", o.in, "input path");
        cmd->add_option("--out", o.out, "output path");
        cmd->add_option("--queries", o.queries, "query flats path");
        cmd->add_option("--config", o.config, "key=value config file");
    };

    auto* gen = app.add_subcommand("gen", "generate a dataset file");
    add_common(gen);
    gen->add_flag("--binary", binary, "write the binary format");
    gen->add_flag("--planted", planted, "planted clusters instead of uniform");
    gen->add_option("--clusters", clusters, "planted cluster count");
    gen->add_option("--radius", radius, "planted cluster radius");
    gen->add_option("--noise", noise, "planted noise fraction");

    auto* build = app.add_subcommand("build", "build and persist an index");
    add_common(build);

    auto* query = app.add_subcommand("query", "run query flats against an index");
    add_common(query);

    auto* verify = app.add_subcommand("verify", "oracle-checked verification run");
    add_common(verify);
    verify->add_option("--num-queries", num_queries, "generated query count");
    verify->add_option("--threshold", threshold, "required success rate");
    verify->add_flag("--planted", planted, "planted dataset");
    verify->add_option("--clusters", clusters, "planted cluster count");
    verify->add_option("--radius", radius, "planted cluster radius");
    verify->add_option("--noise", noise, "planted noise fraction");

    auto* bench = app.add_subcommand("bench", "scaling benchmarks");
    add_common(bench);
    bench->add_option("--mode", mode, "lowdim|crossing|calib|index");
    bench->add_option("--num-queries", num_queries, "queries per size");
    bench->add_option("--lo", lo_pow, "smallest size as a power of two");
    bench->add_option("--hi", hi_pow, "largest size as a power of two");

    try {
        app.parse(argc, argv);
        for (auto* cmd : {gen, build, query, verify, bench}) {
            if (cmd->parsed()) apply_config(o.config, *cmd);
        }
        if (gen->parsed()) return cmd_gen(o, binary, planted, clusters, radius, noise);
        if (build->parsed()) return cmd_build(o);
        if (query->parsed()) return cmd_query(o);
        if (verify->parsed()) {
            return cmd_verify(o, num_queries, threshold, planted, clusters, radius, noise);
        }
        if (bench->parsed()) {
            return cmd_bench(mode, o, num_queries, lo_pow, hi_pow);
        }
        return 2;
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const InvalidParams& e) {
        std::cerr << "invalid parameters: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
