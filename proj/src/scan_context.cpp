#include "aeromap/scan_context.hpp"

#include "aeromap/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace aeromap {
namespace {

constexpr double kTwoPi = 2.0 * 3.14159265358979323846;
constexpr std::uint32_t kDescriptorFormatVersion = 1;

}  // namespace

ScanContextDescriptor compute_descriptor(const PointCloud& cloud,
                                         const ScanContextConfig& cfg) {
    ScanContextDescriptor d;
    d.rings = cfg.rings;
    d.sectors = cfg.sectors;
    d.max_radius_m = cfg.max_radius_m;
    d.cells = Eigen::MatrixXd::Zero(cfg.rings, cfg.sectors);
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> occupied(cfg.rings,
                                                                 cfg.sectors);
    occupied.setConstant(false);

    const double ring_width = cfg.max_radius_m / cfg.rings;
    const double sector_width = kTwoPi / cfg.sectors;
    for (const Vec3& p : cloud.points) {
        const double planar = std::hypot(p.x(), p.y());
        if (planar >= cfg.max_radius_m) continue;
        const int ring = std::min(static_cast<int>(planar / ring_width),
                                  cfg.rings - 1);
        double azimuth = std::atan2(p.y(), p.x());
        if (azimuth < 0.0) azimuth += kTwoPi;
        const int sector = std::min(static_cast<int>(azimuth / sector_width),
                                    cfg.sectors - 1);
        if (!occupied(ring, sector) || p.z() > d.cells(ring, sector)) {
            d.cells(ring, sector) = p.z();
            occupied(ring, sector) = true;
        }
    }
    // Empty bins keep the 0 sentinel; occupied bins whose max z is exactly
    // 0 are indistinguishable from empty by design.
    for (int r = 0; r < cfg.rings; ++r)
        for (int s = 0; s < cfg.sectors; ++s)
            if (!occupied(r, s)) d.cells(r, s) = 0.0;
    return d;
}

RingKey ring_key(const ScanContextDescriptor& d) {
    RingKey key(d.rings);
    for (int r = 0; r < d.rings; ++r) {
        int occupied = 0;
        for (int s = 0; s < d.sectors; ++s)
            if (d.cells(r, s) != 0.0) ++occupied;
        key(r) = static_cast<double>(occupied) / d.sectors;
    }
    return key;
}

ScanContextDescriptor shift_descriptor(const ScanContextDescriptor& d, int k) {
    ScanContextDescriptor out = d;
    const int s = d.sectors;
    k = ((k % s) + s) % s;
    for (int c = 0; c < s; ++c) out.cells.col(c) = d.cells.col((c - k + s) % s);
    return out;
}

DescriptorDistance descriptor_distance(const ScanContextDescriptor& a,
                                       const ScanContextDescriptor& b) {
    if (a.rings != b.rings || a.sectors != b.sectors)
        throw IncompatibleShape("scan context descriptors differ in shape");

    const int s = a.sectors;
    std::vector<double> a_norm(s), b_norm(s);
    for (int c = 0; c < s; ++c) {
        a_norm[c] = a.cells.col(c).norm();
        b_norm[c] = b.cells.col(c).norm();
    }

    DescriptorDistance best{2.0, 0};
    for (int shift = 0; shift < s; ++shift) {
        double sum = 0.0;
        int counted = 0;
        for (int c = 0; c < s; ++c) {
            const int bc = (c - shift + s) % s;
            const bool a_empty = a_norm[c] == 0.0;
            const bool b_empty = b_norm[bc] == 0.0;
            if (a_empty && b_empty) continue;
            ++counted;
            if (a_empty || b_empty) {
                sum += 1.0;
                continue;
            }
            const double cosine =
                a.cells.col(c).dot(b.cells.col(bc)) / (a_norm[c] * b_norm[bc]);
            sum += 1.0 - cosine;
        }
        const double score = counted > 0 ? sum / counted : 0.0;
        if (score < best.score) best = DescriptorDistance{score, shift};
    }
    best.score = std::clamp(best.score, 0.0, 1.0);
    return best;
}

void DescriptorDatabase::insert(int node_id,
                                const ScanContextDescriptor& descriptor) {
    entries_[node_id] = descriptor;
    ring_keys_[node_id] = ring_key(descriptor);
}

std::vector<QueryMatch> DescriptorDatabase::query(
    const ScanContextDescriptor& probe, std::size_t k, double threshold,
    int shortlist_size) const {
    std::vector<QueryMatch> out;
    if (entries_.empty() || k == 0) return out;

    const RingKey probe_key = ring_key(probe);
    std::vector<std::pair<double, int>> by_key;
    by_key.reserve(entries_.size());
    for (const auto& entry : ring_keys_)
        by_key.emplace_back((entry.second - probe_key).norm(), entry.first);
    std::sort(by_key.begin(), by_key.end());
    if (by_key.size() > static_cast<std::size_t>(shortlist_size))
        by_key.resize(static_cast<std::size_t>(shortlist_size));

    std::vector<QueryMatch> scored;
    for (const auto& cand : by_key) {
        const auto dist = descriptor_distance(probe, entries_.at(cand.second));
        if (dist.score <= threshold)
            scored.push_back(QueryMatch{cand.second, dist.score, dist.shift});
    }
    std::sort(scored.begin(), scored.end(),
              [](const QueryMatch& a, const QueryMatch& b) {
                  if (a.score != b.score) return a.score < b.score;
                  return a.node_id < b.node_id;
              });
    if (scored.size() > k) scored.resize(k);
    return scored;
}

void DescriptorDatabase::save(const std::string& dir) const {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("descriptors: cannot create " + dir);

    for (const auto& entry : entries_) {
        const ScanContextDescriptor& d = entry.second;
        std::ofstream out(
            fs::path(dir) / (std::to_string(entry.first) + ".scd"),
            std::ios::binary);
        if (!out) throw IoError("descriptors: cannot write node file");
        const std::uint32_t header[3] = {kDescriptorFormatVersion,
                                         static_cast<std::uint32_t>(d.rings),
                                         static_cast<std::uint32_t>(d.sectors)};
        out.write(reinterpret_cast<const char*>(header), sizeof header);
        const float radius = static_cast<float>(d.max_radius_m);
        out.write(reinterpret_cast<const char*>(&radius), sizeof radius);
        for (int r = 0; r < d.rings; ++r) {
            for (int s = 0; s < d.sectors; ++s) {
                const float v = static_cast<float>(d.cells(r, s));
                out.write(reinterpret_cast<const char*>(&v), sizeof v);
            }
        }
        if (!out) throw IoError("descriptors: write failed");
    }
}

DescriptorDatabase DescriptorDatabase::load(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir))
        throw IoError("descriptors: no such directory: " + dir);

    DescriptorDatabase db;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".scd") files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    for (const fs::path& file : files) {
        std::ifstream in(file, std::ios::binary);
        if (!in) throw IoError("descriptors: cannot open " + file.string());
        std::uint32_t header[3];
        in.read(reinterpret_cast<char*>(header), sizeof header);
        float radius = 0.0f;
        in.read(reinterpret_cast<char*>(&radius), sizeof radius);
        if (!in) throw IoError("descriptors: truncated header in " +
                               file.string());
        if (header[0] != kDescriptorFormatVersion)
            throw FormatVersionMismatch(
                "descriptors: unsupported format_version");

        ScanContextDescriptor d;
        d.rings = static_cast<int>(header[1]);
        d.sectors = static_cast<int>(header[2]);
        d.max_radius_m = radius;
        d.cells = Eigen::MatrixXd(d.rings, d.sectors);
        for (int r = 0; r < d.rings; ++r) {
            for (int s = 0; s < d.sectors; ++s) {
                float v = 0.0f;
                in.read(reinterpret_cast<char*>(&v), sizeof v);
                d.cells(r, s) = v;
            }
        }
        if (!in) throw IoError("descriptors: truncated cells in " +
                               file.string());
        const int node_id = std::stoi(file.stem().string());
        db.insert(node_id, d);
    }
    return db;
}

std::optional<RelocalizationMatch> relocalize(const PoseGraph& graph,
                                              const DescriptorDatabase& db,
                                              const PointCloud& cloud,
                                              const Pose& guess,
                                              const ScanContextConfig& cfg,
                                              const IcpConfig& icp_cfg) {
    const ScanContextDescriptor probe = compute_descriptor(cloud, cfg);
    const auto candidates =
        db.query(probe, static_cast<std::size_t>(cfg.shortlist_size),
                 cfg.accept_threshold, cfg.shortlist_size);

    const std::size_t effective_min = std::min(
        icp_cfg.min_inliers,
        static_cast<std::size_t>(0.2 * static_cast<double>(cloud.size())));
    const double sector_width_rad = kTwoPi / cfg.sectors;

    for (const QueryMatch& cand : candidates) {
        const GraphNode& node =
            graph.nodes.at(static_cast<std::size_t>(cand.node_id));
        // A shift of s sectors means the probe cloud is the stored cloud
        // rotated by +s sector widths, so the stored<-probe rotation is the
        // negative shift angle.
        const Pose prior(
            Quat(Eigen::AngleAxisd(-cand.shift * sector_width_rad,
                                   Vec3::UnitZ())),
            compose(inverse(node.pose), guess).translation);
        const IcpResult icp = icp_register(cloud, node.cloud, prior, icp_cfg);
        if (!icp.converged || icp.degenerate) continue;
        if (icp.inliers < effective_min) continue;
        RelocalizationMatch match;
        match.matched_node = cand.node_id;
        match.relative = icp.transform;
        match.icp = icp;
        match.score = cand.score;
        match.shift = cand.shift;
        return match;
    }
    return std::nullopt;
}

}  // namespace aeromap
