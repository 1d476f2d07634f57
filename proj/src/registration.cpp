#include "aeromap/registration.hpp"

#include "aeromap/rng.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace aeromap {
namespace {

std::uint64_t voxel_key(const Vec3& p, const Vec3& origin, double edge) {
    const auto cell = [&](int axis) {
        return static_cast<std::uint64_t>(
            static_cast<std::int64_t>(std::floor((p[axis] - origin[axis]) / edge)) &
            0x1fffff);
    };
    return cell(0) | (cell(1) << 21) | (cell(2) << 42);
}

std::size_t occupied_voxel_count(const std::vector<Vec3>& pts,
                                 const Vec3& origin, double edge) {
    std::unordered_map<std::uint64_t, char> seen;
    seen.reserve(pts.size());
    for (const Vec3& p : pts) seen.emplace(voxel_key(p, origin, edge), 1);
    return seen.size();
}

}  // namespace

PointCloud downsample(const PointCloud& cloud, std::size_t target,
                      std::uint64_t seed) {
    if (cloud.points.size() <= target) return cloud;

    Vec3 lo = cloud.points[0];
    Vec3 hi = lo;
    for (const Vec3& p : cloud.points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double max_extent = std::max((hi - lo).maxCoeff(), 1e-9);

    // Larger voxels produce fewer occupied cells; bisect the edge length for
    // the largest edge whose occupied count still reaches the target.
    double edge_lo = 1e-6 * max_extent;
    double edge_hi = 2.0 * max_extent;
    double best_edge = -1.0;
    std::size_t best_count = 0;
    for (int step = 0; step < 20; ++step) {
        const double mid = 0.5 * (edge_lo + edge_hi);
        const std::size_t count = occupied_voxel_count(cloud.points, lo, mid);
        if (count >= target) {
            if (best_edge < 0.0 || count < best_count) {
                best_edge = mid;
                best_count = count;
            }
            edge_lo = mid;
        } else {
            edge_hi = mid;
        }
    }

    std::vector<std::size_t> keep;
    if (best_edge > 0.0) {
        // Nearest-to-centroid representative per voxel, ties to lowest index.
        std::unordered_map<std::uint64_t, std::pair<std::size_t, double>> reps;
        reps.reserve(cloud.points.size());
        for (std::size_t i = 0; i < cloud.points.size(); ++i) {
            const Vec3& p = cloud.points[i];
            const std::uint64_t key = voxel_key(p, lo, best_edge);
            Vec3 centroid;
            for (int axis = 0; axis < 3; ++axis) {
                const double cell = std::floor((p[axis] - lo[axis]) / best_edge);
                centroid[axis] = lo[axis] + (cell + 0.5) * best_edge;
            }
            const double d = (p - centroid).squaredNorm();
            auto it = reps.find(key);
            if (it == reps.end()) {
                reps.emplace(key, std::make_pair(i, d));
            } else if (d < it->second.second) {
                it->second = std::make_pair(i, d);
            }
        }
        keep.reserve(reps.size());
        for (const auto& entry : reps) keep.push_back(entry.second.first);
        std::sort(keep.begin(), keep.end());
    } else {
        // Duplicate-heavy cloud where no voxel size reaches the target;
        // fall back to trimming the raw points.
        keep.resize(cloud.points.size());
        for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;
    }

    if (keep.size() > target) {
        // Partial Fisher-Yates: the first `target` slots become a uniform
        // sample, then the order is restored.
        Rng rng(seed);
        for (std::size_t i = 0; i < target; ++i) {
            const std::size_t j =
                i + static_cast<std::size_t>(rng.uniform_index(keep.size() - i));
            std::swap(keep[i], keep[j]);
        }
        keep.resize(target);
        std::sort(keep.begin(), keep.end());
    }

    PointCloud out;
    out.source_scan_id = cloud.source_scan_id;
    out.points.reserve(keep.size());
    const bool has_ts = cloud.timestamps.size() == cloud.points.size();
    if (has_ts) out.timestamps.reserve(keep.size());
    for (std::size_t i : keep) {
        out.points.push_back(cloud.points[i]);
        if (has_ts) out.timestamps.push_back(cloud.timestamps[i]);
    }
    return out;
}

PointCloud thin_cloud(const PointCloud& cloud, double voxel_edge_m) {
    if (cloud.points.empty()) return cloud;

    Vec3 lo = cloud.points[0];
    for (const Vec3& p : cloud.points) lo = lo.cwiseMin(p);

    std::unordered_map<std::uint64_t, std::pair<std::size_t, double>> reps;
    reps.reserve(cloud.points.size());
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        const Vec3& p = cloud.points[i];
        const std::uint64_t key = voxel_key(p, lo, voxel_edge_m);
        Vec3 center;
        for (int axis = 0; axis < 3; ++axis) {
            const double cell =
                std::floor((p[axis] - lo[axis]) / voxel_edge_m);
            center[axis] = lo[axis] + (cell + 0.5) * voxel_edge_m;
        }
        const double d = (p - center).squaredNorm();
        auto it = reps.find(key);
        if (it == reps.end()) {
            reps.emplace(key, std::make_pair(i, d));
        } else if (d < it->second.second) {
            it->second = std::make_pair(i, d);
        }
    }

    std::vector<std::size_t> keep;
    keep.reserve(reps.size());
    for (const auto& entry : reps) keep.push_back(entry.second.first);
    std::sort(keep.begin(), keep.end());

    PointCloud out;
    out.source_scan_id = cloud.source_scan_id;
    out.points.reserve(keep.size());
    const bool has_ts = cloud.timestamps.size() == cloud.points.size();
    if (has_ts) out.timestamps.reserve(keep.size());
    for (std::size_t i : keep) {
        out.points.push_back(cloud.points[i]);
        if (has_ts) out.timestamps.push_back(cloud.timestamps[i]);
    }
    return out;
}

PointCloud build_submap(const std::vector<std::pair<Pose, PointCloud>>& nodes,
                        const Pose& current, const SubmapConfig& cfg) {
    std::vector<std::size_t> selected;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const Pose& pose = nodes[i].first;
        const double dist = translation_distance(pose, current);
        if (dist > cfg.inclusion_radius_m) continue;
        const double separation = dist <= cfg.dense_radius_m
                                      ? cfg.dense_separation_m
                                      : cfg.sparse_separation_m;
        bool too_close = false;
        for (std::size_t j : selected) {
            if (translation_distance(pose, nodes[j].first) < separation) {
                too_close = true;
                break;
            }
        }
        if (!too_close) selected.push_back(i);
    }
    if (selected.empty()) throw EmptySubmap();

    PointCloud merged;
    for (std::size_t i : selected) {
        const Mat3 rot = nodes[i].first.rotation_matrix();
        const Vec3& t = nodes[i].first.translation;
        for (const Vec3& p : nodes[i].second.points)
            merged.points.push_back(rot * p + t);
    }
    // The submap is a pure function of its inputs; the trim seed is fixed.
    return downsample(merged, cfg.target_points, 0);
}

IcpResult icp_register(const PointCloud& source, const PointCloud& target,
                       const Pose& prior, const IcpConfig& cfg) {
    return icp_register(source, IndexedCloud(target), prior, cfg);
}

IcpResult icp_register(const PointCloud& source, const IndexedCloud& target,
                       const Pose& prior, const IcpConfig& cfg) {
    IcpResult result;
    result.transform = prior;

    const double cap_sq = cfg.max_correspondence_dist_m *
                          cfg.max_correspondence_dist_m;
    std::vector<Vec3> matched_src;
    std::vector<Vec3> matched_tgt;
    Pose current = prior;

    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        matched_src.clear();
        matched_tgt.clear();
        const Mat3 rot = current.rotation_matrix();
        for (const Vec3& s : source.points) {
            const Vec3 moved = rot * s + current.translation;
            const auto nn = target.index.k_nearest(moved, 1);
            if (nn.empty() || nn[0].sq_dist > cap_sq) continue;
            matched_src.push_back(moved);
            matched_tgt.push_back(target.cloud.points[nn[0].index]);
        }

        const std::size_t n = matched_src.size();
        bool degenerate = n < 3;
        Vec3 src_mean = Vec3::Zero();
        Vec3 tgt_mean = Vec3::Zero();
        if (!degenerate) {
            for (std::size_t i = 0; i < n; ++i) {
                src_mean += matched_src[i];
                tgt_mean += matched_tgt[i];
            }
            src_mean /= static_cast<double>(n);
            tgt_mean /= static_cast<double>(n);
            Mat3 spread = Mat3::Zero();
            for (const Vec3& s : matched_src) {
                const Vec3 d = s - src_mean;
                spread += d * d.transpose();
            }
            Eigen::SelfAdjointEigenSolver<Mat3> es(spread);
            // Rank < 2 means the matched points are collinear and the
            // rotation is unobservable.
            if (es.eigenvalues()(1) <= 1e-9 * std::max(es.eigenvalues()(2), 1e-12))
                degenerate = true;
        }
        if (degenerate) {
            result.transform = prior;
            result.converged = false;
            result.degenerate = true;
            result.iterations = iter;
            result.inliers = 0;
            result.rms_m = 0.0;
            return result;
        }

        double sq_sum_before = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            sq_sum_before += (matched_src[i] - matched_tgt[i]).squaredNorm();
        result.objective_history.push_back(
            std::sqrt(sq_sum_before / static_cast<double>(n)));

        Mat3 h = Mat3::Zero();
        for (std::size_t i = 0; i < n; ++i)
            h += (matched_src[i] - src_mean) * (matched_tgt[i] - tgt_mean).transpose();
        Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
        Mat3 flip = Mat3::Identity();
        flip(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() <
                             0.0
                         ? -1.0
                         : 1.0;
        const Mat3 delta_rot = svd.matrixV() * flip * svd.matrixU().transpose();
        const Vec3 delta_t = tgt_mean - delta_rot * src_mean;
        const Pose delta(Quat(delta_rot).normalized(), delta_t);

        double sq_sum_after = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            sq_sum_after +=
                (delta.apply(matched_src[i]) - matched_tgt[i]).squaredNorm();
        result.objective_history.push_back(
            std::sqrt(sq_sum_after / static_cast<double>(n)));

        current = compose(delta, current);
        result.iterations = iter + 1;

        const double rot_delta =
            2.0 * std::acos(std::min(1.0, std::abs(delta.rotation.w())));
        if (delta_t.norm() < cfg.translation_convergence_m &&
            rot_delta < cfg.rotation_convergence_rad) {
            result.converged = true;
            break;
        }
    }

    result.transform = current;
    const Mat3 rot = current.rotation_matrix();
    std::size_t inliers = 0;
    double sq_sum = 0.0;
    for (const Vec3& s : source.points) {
        const Vec3 moved = rot * s + current.translation;
        const auto nn = target.index.k_nearest(moved, 1);
        if (nn.empty() || nn[0].sq_dist > cap_sq) continue;
        ++inliers;
        sq_sum += nn[0].sq_dist;
    }
    result.inliers = inliers;
    result.rms_m =
        inliers > 0 ? std::sqrt(sq_sum / static_cast<double>(inliers)) : 0.0;
    return result;
}

}  // namespace aeromap
