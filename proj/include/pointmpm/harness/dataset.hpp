#pragma once

// Synthetic labeled shape corpus, point-cloud text files and the dataset
// manifest.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "pointmpm/harness/config.hpp"
#include "pointmpm/pointops.hpp"
#include "pointmpm/random.hpp"

namespace pointmpm::harness {

struct Sample {
    PointCloud cloud;
    std::string split;  // "train" or "test"
};

struct Dataset {
    std::vector<std::string> classes;
    std::vector<Sample> samples;

    std::vector<const Sample*> split(const std::string& tag) const {
        std::vector<const Sample*> out;
        for (const auto& s : samples)
            if (s.split == tag) out.push_back(&s);
        return out;
    }
};

/// splitmix64 finalizer; derives independent stream seeds from (seed, tag).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace impl {

inline Point3 sample_shape_point(const std::string& shape, Rng& rng) {
    const double two_pi = 2.0 * std::numbers::pi;
    if (shape == "sphere") {
        const double z = rng.uniform(-1.0, 1.0), phi = two_pi * rng.uniform();
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        return {r * std::cos(phi), r * std::sin(phi), z};
    }
    if (shape == "cube") {
        const std::size_t face = rng.index(6);
        const double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
        const double s = face % 2 == 0 ? 1.0 : -1.0;
        switch (face / 2) {
            case 0: return {s, u, v};
            case 1: return {u, s, v};
            default: return {u, v, s};
        }
    }
    if (shape == "cylinder") {
        // radius 0.6, height 2; side and caps sampled by area
        const double r = 0.6, side = two_pi * r * 2.0, cap = std::numbers::pi * r * r;
        const double pick = rng.uniform() * (side + 2.0 * cap);
        const double phi = two_pi * rng.uniform();
        if (pick < side) return {r * std::cos(phi), r * std::sin(phi), rng.uniform(-1.0, 1.0)};
        const double rho = r * std::sqrt(rng.uniform());
        return {rho * std::cos(phi), rho * std::sin(phi), pick < side + cap ? 1.0 : -1.0};
    }
    if (shape == "cone") {
        // base radius 0.8 at z=-1, apex at z=1
        const double r = 0.8, h = 2.0, slant = std::sqrt(r * r + h * h);
        const double lateral = std::numbers::pi * r * slant, base = std::numbers::pi * r * r;
        const double phi = two_pi * rng.uniform();
        if (rng.uniform() * (lateral + base) < lateral) {
            const double t = std::sqrt(rng.uniform());  // distance from apex, area-uniform
            return {t * r * std::cos(phi), t * r * std::sin(phi), 1.0 - t * h};
        }
        const double rho = r * std::sqrt(rng.uniform());
        return {rho * std::cos(phi), rho * std::sin(phi), -1.0};
    }
    if (shape == "torus") {
        const double big = 0.7, small = 0.3;
        double theta;
        // rejection on the tube angle so samples are area-uniform
        do {
            theta = two_pi * rng.uniform();
        } while (rng.uniform() * (big + small) > big + small * std::cos(theta));
        const double phi = two_pi * rng.uniform();
        const double ring = big + small * std::cos(theta);
        return {ring * std::cos(phi), ring * std::sin(phi), small * std::sin(theta)};
    }
    if (shape == "plane-pair") {
        return {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform() < 0.5 ? 0.5 : -0.5};
    }
    throw ArgumentError("unknown shape class '" + shape + "'");
}

/// Uniformly random rotation from a normalized Gaussian quaternion.
inline std::array<double, 9> random_rotation(Rng& rng) {
    double q[4], n = 0;
    do {
        n = 0;
        for (double& v : q) {
            v = rng.normal();
            n += v * v;
        }
    } while (n < 1e-12);
    n = std::sqrt(n);
    const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
    return {1 - 2 * (y * y + z * z), 2 * (x * y - z * w),     2 * (x * z + y * w),
            2 * (x * y + z * w),     1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
            2 * (x * z - y * w),     2 * (y * z + x * w),     1 - 2 * (x * x + y * y)};
}

} // namespace impl

/// One shape instance: surface samples, anisotropic scale in [0.8, 1.2],
/// random rotation, clipped Gaussian jitter. Not normalized.
inline PointCloud sample_shape(const std::string& shape, std::size_t n, double jitter, double jitter_clip, Rng& rng) {
    if (known_classes().count(shape) == 0) throw ArgumentError("unknown shape class '" + shape + "'");
    const double scale[3] = {rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2)};
    const auto rot = impl::random_rotation(rng);
    PointCloud cloud;
    cloud.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Point3 p = impl::sample_shape_point(shape, rng);
        for (int d = 0; d < 3; ++d) p[d] *= scale[d];
        Point3 r{};
        for (int a = 0; a < 3; ++a) r[a] = rot[a * 3] * p[0] + rot[a * 3 + 1] * p[1] + rot[a * 3 + 2] * p[2];
        for (int d = 0; d < 3; ++d) r[d] += std::clamp(jitter * rng.normal(), -jitter_clip, jitter_clip);
        cloud.points.push_back(r);
    }
    return cloud;
}

/// Deterministic in (config, seed): each cloud draws from its own stream
/// keyed by its position in the corpus.
inline Dataset gen_synthetic(const Config& cfg, std::uint64_t seed) {
    Dataset ds;
    ds.classes = cfg.class_list();
    if (ds.classes.size() < 2) throw ArgumentError("at least 2 classes are required");
    std::uint64_t index = 0;
    for (const auto* split : {"train", "test"}) {
        const std::size_t per = std::string(split) == "train" ? cfg.train_per_class : cfg.test_per_class;
        for (std::size_t c = 0; c < ds.classes.size(); ++c) {
            for (std::size_t i = 0; i < per; ++i) {
                Rng rng(mix_seed(seed, index++));
                auto cloud = sample_shape(ds.classes[c], cfg.points, cfg.jitter, cfg.jitter_clip, rng);
                cloud.label = static_cast<int>(c);
                ds.samples.push_back({std::move(cloud), split});
            }
        }
    }
    return ds;
}

inline void write_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write '" + path.string() + "'");
    out << cloud.points.size() << " 3 " << cloud.label << "\n";
    char buf[128];
    for (const auto& p : cloud.points) {
        char* it = buf;
        for (int d = 0; d < 3; ++d) {
            if (d) *it++ = ' ';
            it = std::to_chars(it, buf + sizeof buf, p[d]).ptr;
        }
        *it++ = '\n';
        out.write(buf, it - buf);
    }
    if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

inline PointCloud read_cloud(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path.string() + "'");
    auto fail = [&](std::size_t line, const std::string& why) {
        return FormatError(path.string() + ":" + std::to_string(line) + ": " + why);
    };
    std::string line;
    if (!std::getline(in, line)) throw fail(1, "missing header");
    if (!line.empty() && line.back() == '\r') throw fail(1, "CRLF line ending");
    std::istringstream header(line);
    long long n = -1, dims = -1, label = 0;
    std::string extra;
    if (!(header >> n >> dims >> label) || (header >> extra)) throw fail(1, "header must be 'n 3 label'");
    if (n <= 0 || dims != 3 || label < -1) throw fail(1, "header must be 'n 3 label' with n > 0 and label >= -1");
    PointCloud cloud;
    cloud.label = static_cast<int>(label);
    cloud.points.reserve(static_cast<std::size_t>(n));
    for (long long i = 0; i < n; ++i) {
        const auto lineno = static_cast<std::size_t>(i + 2);
        if (!std::getline(in, line)) throw fail(lineno, "expected " + std::to_string(n) + " points");
        if (!line.empty() && line.back() == '\r') throw fail(lineno, "CRLF line ending");
        Point3 p{};
        const char* it = line.data();
        const char* end = it + line.size();
        for (int d = 0; d < 3; ++d) {
            while (it < end && *it == ' ') ++it;
            auto [ptr, ec] = std::from_chars(it, end, p[d]);
            if (ec != std::errc()) throw fail(lineno, "expected 3 decimal coordinates");
            it = ptr;
        }
        while (it < end && *it == ' ') ++it;
        if (it != end) throw fail(lineno, "trailing characters");
        cloud.points.push_back(p);
    }
    while (std::getline(in, line)) {
        if (!line.empty()) throw fail(static_cast<std::size_t>(n) + 2, "unexpected data after the last point");
    }
    return cloud;
}

inline const std::string kManifestName = "manifest.txt";

/// Writes clouds/<index>.txt files plus a manifest listing
/// `classes a,b,...` followed by `<relative path> <split>` lines.
inline std::filesystem::path save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
    std::filesystem::create_directories(dir / "clouds");
    std::ofstream manifest(dir / kManifestName, std::ios::binary);
    if (!manifest) throw FormatError("cannot write manifest in '" + dir.string() + "'");
    manifest << "classes ";
    for (std::size_t i = 0; i < ds.classes.size(); ++i) manifest << (i ? "," : "") << ds.classes[i];
    manifest << "\n";
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "clouds/%06zu.txt", i);
        write_cloud(dir / name, ds.samples[i].cloud);
        manifest << name << " " << ds.samples[i].split << "\n";
    }
    return dir / kManifestName;
}

/// Clouds are resampled to `points` by farthest point sampling when larger
/// and then centered and scaled to the unit ball.
inline PointCloud ingest(PointCloud cloud, std::size_t points) {
    if (cloud.points.size() < points) {
        throw FormatError("cloud has " + std::to_string(cloud.points.size()) + " points, need " + std::to_string(points));
    }
    if (cloud.points.size() > points) {
        std::vector<Point3> kept;
        for (auto i : farthest_point_sample(cloud.points, points, 0)) kept.push_back(cloud.points[i]);
        cloud.points = std::move(kept);
    }
    return normalize_cloud(std::move(cloud));
}

inline Dataset load_dataset(const std::filesystem::path& manifest_path, std::size_t points) {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw FormatError("cannot open manifest '" + manifest_path.string() + "'");
    const auto root = manifest_path.parent_path();
    Dataset ds;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string a, b, extra;
        if (!(ls >> a >> b) || (ls >> extra)) {
            throw FormatError(manifest_path.string() + ":" + std::to_string(lineno) + ": expected two fields");
        }
        if (a == "classes") {
            ds.classes.clear();
            std::stringstream cs(b);
            for (std::string c; std::getline(cs, c, ',');) ds.classes.push_back(c);
            continue;
        }
        if (b != "train" && b != "test") {
            throw FormatError(manifest_path.string() + ":" + std::to_string(lineno) + ": split must be train or test");
        }
        auto cloud = ingest(read_cloud(root / a), points);
        if (cloud.label >= 0 && !ds.classes.empty() && static_cast<std::size_t>(cloud.label) >= ds.classes.size()) {
            throw FormatError(a + ": label " + std::to_string(cloud.label) + " outside the class list");
        }
        ds.samples.push_back({std::move(cloud), b});
    }
    return ds;
}

/// In-memory equivalent of save_dataset followed by load_dataset.
inline Dataset ingest_dataset(Dataset ds, std::size_t points) {
    for (auto& s : ds.samples) s.cloud = ingest(std::move(s.cloud), points);
    return ds;
}

} // namespace pointmpm::harness
