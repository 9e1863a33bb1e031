#include "flatnn/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace flatnn {

namespace {

constexpr char kBinaryMagic[4] = {'F', 'N', 'N', 'B'};
constexpr char kIndexMagic[4] = {'F', 'N', 'N', 'I'};
constexpr std::uint32_t kBinaryVersion = 1;
constexpr std::uint32_t kIndexVersion = 1;

// Little-endian byte buffer; this codebase targets little-endian hosts and
// the formats are defined as such.
struct Writer {
    std::string buf;

    void raw(const void* data, std::size_t len) {
        buf.append(static_cast<const char*>(data), len);
    }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void i64(std::int64_t v) { raw(&v, 8); }
    void f64(double v) { raw(&v, 8); }
    void vec(const Vector& v) {
        u64(static_cast<std::uint64_t>(v.size()));
        raw(v.data(), static_cast<std::size_t>(v.size()) * 8);
    }
    void mat(const Matrix& m) {
        u64(static_cast<std::uint64_t>(m.rows()));
        u64(static_cast<std::uint64_t>(m.cols()));
        raw(m.data(), static_cast<std::size_t>(m.size()) * 8);
    }
    void ints(const std::vector<int>& v) {
        u64(v.size());
        for (int x : v) i64(x);
    }
};

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void raw(void* out, std::size_t len) {
        if (pos + len > buf.size()) throw CorruptFile("index file truncated");
        std::memcpy(out, buf.data() + pos, len);
        pos += len;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        raw(&v, 8);
        return v;
    }
    std::int64_t i64() {
        std::int64_t v;
        raw(&v, 8);
        return v;
    }
    double f64() {
        double v;
        raw(&v, 8);
        return v;
    }
    Vector vec() {
        const auto n = u64();
        if (n > (buf.size() - pos) / 8) throw CorruptFile("bad vector length");
        Vector v(static_cast<Eigen::Index>(n));
        raw(v.data(), n * 8);
        return v;
    }
    Matrix mat() {
        const auto rows = u64();
        const auto cols = u64();
        if (rows * cols > (buf.size() - pos) / 8) throw CorruptFile("bad matrix shape");
        Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        raw(m.data(), rows * cols * 8);
        return m;
    }
    std::vector<int> ints() {
        const auto n = u64();
        if (n > (buf.size() - pos) / 8) throw CorruptFile("bad list length");
        std::vector<int> v(n);
        for (auto& x : v) x = static_cast<int>(i64());
        return v;
    }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("short write to " + path);
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

void save_points_text(const std::string& path, const Matrix& points) {
    std::ostringstream out;
    out << "flatnn-pts v1 " << points.cols() << " " << points.rows() << "\n";
    char num[64];
    for (Eigen::Index i = 0; i < points.cols(); ++i) {
        for (Eigen::Index j = 0; j < points.rows(); ++j) {
            std::snprintf(num, sizeof num, "%.17g", points(j, i));
            out << num << (j + 1 == points.rows() ? "" : " ");
        }
        out << "\n";
    }
    write_file(path, out.str());
}

void save_points_binary(const std::string& path, const Matrix& points) {
    Writer w;
    w.raw(kBinaryMagic, 4);
    w.u32(kBinaryVersion);
    w.u64(static_cast<std::uint64_t>(points.cols()));
    w.u64(static_cast<std::uint64_t>(points.rows()));
    for (Eigen::Index i = 0; i < points.cols(); ++i) {
        for (Eigen::Index j = 0; j < points.rows(); ++j) w.f64(points(j, i));
    }
    write_file(path, w.buf);
}

Matrix load_points(const std::string& path) {
    const std::string data = read_file(path);
    if (data.size() >= 4 && std::memcmp(data.data(), kBinaryMagic, 4) == 0) {
        Reader r{data, 4};
        if (r.u32() != kBinaryVersion) throw VersionMismatch("unsupported FNNB version");
        const auto n = r.u64();
        const auto d = r.u64();
        if (n * d > (data.size() - r.pos) / 8) throw CorruptFile("FNNB truncated");
        Matrix pts(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
        for (std::uint64_t i = 0; i < n; ++i) {
            for (std::uint64_t j = 0; j < d; ++j) {
                pts(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = r.f64();
            }
        }
        return pts;
    }
    std::istringstream in(data);
    std::string tag, version;
    long long n = 0, d = 0;
    in >> tag >> version >> n >> d;
    if (tag != "flatnn-pts") throw VersionMismatch("not a flatnn points file");
    if (version != "v1") throw VersionMismatch("unsupported points version");
    if (n <= 0 || d <= 0) throw CorruptFile("bad points header");
    Matrix pts(d, n);
    for (long long i = 0; i < n; ++i) {
        for (long long j = 0; j < d; ++j) {
            if (!(in >> pts(j, i))) throw CorruptFile("points file truncated");
        }
    }
    return pts;
}

void save_flats(const std::string& path, const std::vector<Flat>& flats) {
    require(!flats.empty(), "save_flats: empty list");
    const int k = flats[0].k;
    const int d = flats[0].dim();
    std::ostringstream out;
    out << "flatnn-flats v1 " << flats.size() << " " << k << " " << d << "\n";
    char num[64];
    for (const Flat& f : flats) {
        for (int g = 0; g <= k; ++g) {
            const Vector row = g == 0 ? f.offset : Vector(f.offset + f.basis.col(g - 1));
            for (int j = 0; j < d; ++j) {
                std::snprintf(num, sizeof num, "%.17g", row(j));
                out << num << (j + 1 == d ? "" : " ");
            }
            out << "\n";
        }
    }
    write_file(path, out.str());
}

std::vector<Flat> load_flats(const std::string& path) {
    std::istringstream in(read_file(path));
    std::string tag, version;
    long long q = 0, k = 0, d = 0;
    in >> tag >> version >> q >> k >> d;
    if (tag != "flatnn-flats") throw VersionMismatch("not a flatnn flats file");
    if (version != "v1") throw VersionMismatch("unsupported flats version");
    if (q <= 0 || k < 0 || d <= 0) throw CorruptFile("bad flats header");
    std::vector<Flat> flats;
    flats.reserve(static_cast<std::size_t>(q));
    for (long long i = 0; i < q; ++i) {
        Matrix gen(d, k + 1);
        for (long long g = 0; g <= k; ++g) {
            for (long long j = 0; j < d; ++j) {
                if (!(in >> gen(j, g))) throw CorruptFile("flats file truncated");
            }
        }
        flats.push_back(flat_from_generators(gen));
    }
    return flats;
}

void save_index(const FlatIndex& idx, const std::string& path) {
    Writer params;
    params.i64(idx.params.k);
    params.f64(idx.params.c);
    params.f64(idx.params.t);
    params.f64(idx.params.rho);
    params.i64(idx.params.m_override);
    params.i64(idx.params.ann_kind == AnnKind::oracle ? 0 : 1);
    params.i64(idx.params.repeats);
    params.u64(idx.params.seed);
    params.f64(idx.params.subset_cap);
    params.i64(idx.params.cluster_tree_r);
    params.i64(idx.params.lowdim_r);
    params.u64(idx.params.cluster_budget);
    params.f64(idx.params.cluster_eps);
    params.i64(idx.m);
    params.i64(idx.cluster_search_sampled ? 1 : 0);

    Writer pts;
    pts.mat(idx.points);

    Writer clusters;
    clusters.u64(static_cast<std::uint64_t>(idx.cluster_count()));
    for (const auto& cs : idx.clusters) {
        clusters.i64(cs.cluster.K.k);
        clusters.mat(cs.cluster.K.basis);
        clusters.vec(cs.cluster.K.offset);
        clusters.f64(cs.cluster.radius);
        clusters.ints(cs.cluster.members);
    }

    Writer file;
    file.raw(kIndexMagic, 4);
    file.u32(kIndexVersion);
    for (const Writer* section : {&params, &pts, &clusters}) {
        file.u64(section->buf.size());
        file.raw(section->buf.data(), section->buf.size());
    }
    file.u64(fnv1a64(file.buf.data(), file.buf.size()));
    write_file(path, file.buf);
}

FlatIndex load_index(const std::string& path) {
    const std::string data = read_file(path);
    if (data.size() < 16) throw CorruptFile("index file too small");
    if (std::memcmp(data.data(), kIndexMagic, 4) != 0) {
        throw VersionMismatch("not a flatnn index file");
    }
    std::uint64_t stored_sum;
    std::memcpy(&stored_sum, data.data() + data.size() - 8, 8);
    if (fnv1a64(data.data(), data.size() - 8) != stored_sum) {
        throw CorruptFile("index checksum mismatch");
    }
    Reader r{data, 4};
    if (r.u32() != kIndexVersion) throw VersionMismatch("unsupported index version");

    auto read_section = [&]() {
        const auto len = r.u64();
        if (len > data.size() - r.pos) throw CorruptFile("bad section length");
        std::size_t begin = r.pos;
        r.pos += len;
        return std::make_pair(begin, len);
    };
    const auto params_span = read_section();
    const auto points_span = read_section();
    const auto clusters_span = read_section();
    (void)params_span;

    Reader pr{data, params_span.first};
    IndexParams params;
    params.k = static_cast<int>(pr.i64());
    params.c = pr.f64();
    params.t = pr.f64();
    params.rho = pr.f64();
    params.m_override = static_cast<int>(pr.i64());
    params.ann_kind = pr.i64() == 0 ? AnnKind::oracle : AnnKind::lsh;
    params.repeats = static_cast<int>(pr.i64());
    params.seed = pr.u64();
    params.subset_cap = pr.f64();
    params.cluster_tree_r = static_cast<int>(pr.i64());
    params.lowdim_r = static_cast<int>(pr.i64());
    params.cluster_budget = pr.u64();
    params.cluster_eps = pr.f64();
    const int m = static_cast<int>(pr.i64());
    const bool sampled = pr.i64() != 0;

    Reader xr{data, points_span.first};
    Matrix points = xr.mat();

    Reader cr{data, clusters_span.first};
    const auto n_clusters = cr.u64();
    std::vector<Cluster> clusters;
    clusters.reserve(n_clusters);
    for (std::uint64_t i = 0; i < n_clusters; ++i) {
        Flat flat;
        flat.k = static_cast<int>(cr.i64());
        flat.basis = cr.mat();
        flat.offset = cr.vec();
        const double radius = cr.f64();
        std::vector<int> members = cr.ints();
        Matrix member_pts(points.rows(), static_cast<Eigen::Index>(members.size()));
        for (std::size_t j = 0; j < members.size(); ++j) {
            if (members[j] < 0 || members[j] >= points.cols()) {
                throw CorruptFile("member index out of range");
            }
            member_pts.col(static_cast<Eigen::Index>(j)) = points.col(members[j]);
        }
        clusters.push_back(
            Cluster::from_points(flat, radius, std::move(members), std::move(member_pts)));
    }
    return assemble_index(std::move(points), params, m, std::move(clusters), sampled);
}

std::vector<std::pair<std::string, std::string>> load_config(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!key.empty()) out.emplace_back(key, value);
    }
    return out;
}

}  // namespace flatnn
