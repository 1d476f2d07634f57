#pragma once

#include "aeromap/geometry.hpp"
#include "aeromap/pose_graph.hpp"

#include <Eigen/Core>

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace aeromap {

class IncompatibleShape : public std::runtime_error {
public:
    explicit IncompatibleShape(const std::string& what)
        : std::runtime_error(what) {}
};

struct ScanContextConfig {
    int rings = 20;
    int sectors = 60;
    double max_radius_m = 20.0;  // matches the sensor range
    double accept_threshold = 0.2;
    int shortlist_size = 10;
};

/// Polar height grid of a sensor-frame cloud: rings by planar radius,
/// sectors by azimuth, each cell the maximum z in its bin (0 when empty).
struct ScanContextDescriptor {
    int rings = 0;
    int sectors = 0;
    double max_radius_m = 0.0;
    Eigen::MatrixXd cells;  // rings x sectors, float32-representable values
};

/// Fraction of non-empty sectors per ring; a cheap rotation-invariant
/// signature used to shortlist candidates before full scoring.
using RingKey = Eigen::VectorXd;

/// Bins a sensor-frame cloud (sensor at the origin). Ring widths are
/// uniform up to max radius; points at or beyond max radius are ignored.
/// Sector 0 starts at azimuth 0 (the +x axis), increasing counterclockwise.
ScanContextDescriptor compute_descriptor(const PointCloud& cloud,
                                         const ScanContextConfig& cfg);

RingKey ring_key(const ScanContextDescriptor& descriptor);

/// Columns of `d` cyclically shifted right by k: result column c equals
/// input column (c - k) mod S. A cloud rotated by +k sector widths about z
/// produces exactly this shift of its descriptor.
ScanContextDescriptor shift_descriptor(const ScanContextDescriptor& d, int k);

struct DescriptorDistance {
    double score = 0.0;  // in [0, 1], 0 for identical descriptors
    int shift = 0;       // argmin column shift, smallest on ties
};

/// Minimum over cyclic column shifts of the mean (1 - cosine similarity)
/// across column pairs that are not both empty; a column empty on exactly
/// one side contributes 1. Two all-empty descriptors score (0, 0).
DescriptorDistance descriptor_distance(const ScanContextDescriptor& a,
                                       const ScanContextDescriptor& b);

struct QueryMatch {
    int node_id = -1;
    double score = 0.0;
    int shift = 0;
};

/// Descriptor and ring key per graph node, with ring-key shortlisting for
/// queries and per-node binary persistence.
class DescriptorDatabase {
public:
    void insert(int node_id, const ScanContextDescriptor& descriptor);
    bool contains(int node_id) const { return entries_.count(node_id) > 0; }
    std::size_t size() const { return entries_.size(); }
    const std::map<int, ScanContextDescriptor>& entries() const {
        return entries_;
    }

    /// Shortlists the `shortlist_size` entries nearest in ring-key space
    /// (ties by lowest node id), re-scores them with descriptor_distance,
    /// and returns matches with score <= threshold, best first, at most k.
    std::vector<QueryMatch> query(const ScanContextDescriptor& probe,
                                  std::size_t k, double threshold,
                                  int shortlist_size = 10) const;

    /// One file per node: `<node_id>.scd` with a (version, R, S, max radius)
    /// header and the cells as row-major float32. Round trips bit-exactly.
    void save(const std::string& dir) const;
    static DescriptorDatabase load(const std::string& dir);

private:
    std::map<int, ScanContextDescriptor> entries_;
    std::map<int, RingKey> ring_keys_;
};

struct RelocalizationMatch {
    int matched_node = -1;
    Pose relative;  // matched node frame <- new cloud frame
    IcpResult icp;
    double score = 0.0;
    int shift = 0;
};

/// Multi-session re-anchoring: queries the database with the new cloud's
/// descriptor and ICP-verifies candidates best first, seeding each attempt
/// with the shift-derived yaw and the translation implied by `guess`.
/// A candidate is accepted when ICP converges with at least
/// min(icp_cfg.min_inliers, 20% of the cloud) inliers. Returns the accepted
/// match, or nothing when every candidate fails.
std::optional<RelocalizationMatch> relocalize(const PoseGraph& graph,
                                              const DescriptorDatabase& db,
                                              const PointCloud& cloud,
                                              const Pose& guess,
                                              const ScanContextConfig& cfg,
                                              const IcpConfig& icp_cfg);

}  // namespace aeromap
