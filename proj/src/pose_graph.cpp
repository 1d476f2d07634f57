#include "aeromap/pose_graph.hpp"

#include "aeromap/errors.hpp"
#include "aeromap/ply.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace aeromap {

std::optional<int> add_node(PoseGraph& graph, const Pose& relative,
                            const PointCloud& cloud, bool force) {
    const int session = graph.current_session();
    const GraphNode* last = nullptr;
    for (auto it = graph.nodes.rbegin(); it != graph.nodes.rend(); ++it) {
        if (it->session == session) {
            last = &*it;
            break;
        }
    }

    GraphNode node;
    const int id = static_cast<int>(graph.nodes.size());
    node.id = id;
    node.session = session;
    node.cloud = cloud;

    if (last == nullptr) {
        node.pose = snap9(relative);
        node.odom_pose = relative;
        graph.nodes.push_back(std::move(node));
        return id;
    }

    if (!force && relative.translation.norm() < graph.config.node_interval_m)
        return std::nullopt;

    const Pose rel = snap9(relative);
    node.pose = snap9(compose(last->pose, rel));
    node.odom_pose = compose(last->odom_pose, relative);
    const int from = last->id;
    graph.nodes.push_back(std::move(node));
    graph.factors.push_back(
        Factor{FactorKind::Odometry, from, id, rel,
               graph.config.odometry_weight});
    return id;
}

void add_factor(PoseGraph& graph, Factor factor) {
    factor.relative = snap9(factor.relative);
    graph.factors.push_back(std::move(factor));
}

std::vector<int> detect_loop_candidates(const PoseGraph& graph, int node_id,
                                        const LoopClosureConfig& cfg) {
    const GraphNode& query = graph.nodes.at(static_cast<std::size_t>(node_id));

    // Position of each same-session node in that session's insertion order.
    std::vector<int> session_order;
    for (const GraphNode& n : graph.nodes)
        if (n.session == query.session) session_order.push_back(n.id);
    const auto ordinal = [&](int id) {
        return static_cast<int>(
            std::find(session_order.begin(), session_order.end(), id) -
            session_order.begin());
    };
    const int query_ordinal = ordinal(node_id);

    std::vector<std::pair<double, int>> hits;
    for (const GraphNode& n : graph.nodes) {
        if (n.id == node_id) continue;
        if (n.session == query.session &&
            std::abs(ordinal(n.id) - query_ordinal) <= cfg.exclusion_window)
            continue;
        const double dist = translation_distance(n.pose, query.pose);
        if (dist <= cfg.detection_radius_m) hits.emplace_back(dist, n.id);
    }
    std::sort(hits.begin(), hits.end());
    std::vector<int> ids;
    ids.reserve(hits.size());
    for (const auto& h : hits) ids.push_back(h.second);
    return ids;
}

LoopVerification verify_loop(const PoseGraph& graph, int from_id, int to_id,
                             const LoopClosureConfig& cfg,
                             const IcpConfig& icp_cfg) {
    const GraphNode& from = graph.nodes.at(static_cast<std::size_t>(from_id));
    const GraphNode& to = graph.nodes.at(static_cast<std::size_t>(to_id));

    LoopVerification out;
    const Pose prior = compose(inverse(from.pose), to.pose);
    out.icp = icp_register(to.cloud, from.cloud, prior, icp_cfg);

    const std::size_t effective_min = std::min(
        cfg.min_inliers,
        static_cast<std::size_t>(0.2 * static_cast<double>(to.cloud.size())));
    if (!out.icp.converged || out.icp.degenerate) {
        out.reason = LoopVerification::Reason::NotConverged;
        return out;
    }
    if (out.icp.inliers < effective_min) {
        out.reason = LoopVerification::Reason::TooFewInliers;
        return out;
    }
    out.accepted = true;
    out.factor = Factor{FactorKind::LoopClosure, from_id, to_id,
                        snap9(out.icp.transform),
                        graph.config.loop_closure_weight};
    return out;
}

namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6x12 = Eigen::Matrix<double, 6, 12>;

Vec6 factor_residual(const Pose& pi, const Pose& pj, const Factor& f) {
    const Pose pred = compose(inverse(pi), pj);
    Vec6 r;
    r.head<3>() = pred.translation - f.relative.translation;
    r.tail<3>() =
        rotation_log(f.relative.rotation.conjugate() * pred.rotation);
    return r * std::sqrt(f.weight);
}

Pose perturbed(const Pose& p, int axis, double eps) {
    Pose q = p;
    if (axis < 3) {
        q.translation[axis] += eps;
    } else {
        Vec3 w = Vec3::Zero();
        w[axis - 3] = eps;
        q.rotation = (p.rotation * rotation_exp(w)).normalized();
    }
    return q;
}

double total_cost(const std::vector<Pose>& poses,
                  const std::vector<Factor>& factors) {
    double cost = 0.0;
    for (const Factor& f : factors) {
        const Vec6 r = factor_residual(poses[static_cast<std::size_t>(f.from_id)],
                                       poses[static_cast<std::size_t>(f.to_id)], f);
        cost += r.squaredNorm();
    }
    return cost;
}

}  // namespace

OptimizeReport optimize(PoseGraph& graph) {
    OptimizeReport report;
    const std::size_t n = graph.nodes.size();

    std::vector<Pose> poses(n);
    for (std::size_t i = 0; i < n; ++i) poses[i] = graph.nodes[i].pose;

    // Variable selection: gauge-fix the first node of the first session and
    // leave unconstrained nodes untouched.
    std::vector<int> var_of_node(n, -1);
    std::vector<bool> constrained(n, false);
    for (const Factor& f : graph.factors) {
        constrained[static_cast<std::size_t>(f.from_id)] = true;
        constrained[static_cast<std::size_t>(f.to_id)] = true;
    }
    int num_vars = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i == 0) continue;
        if (!constrained[i]) continue;
        var_of_node[i] = num_vars++;
    }

    report.initial_cost = total_cost(poses, graph.factors);
    report.final_cost = report.initial_cost;

    const auto finish = [&](bool converged, int iterations) {
        for (std::size_t i = 0; i < n; ++i)
            graph.nodes[i].pose = snap9(poses[i]);
        if (!graph.nodes.empty()) {
            const GraphNode& latest = graph.nodes.back();
            graph.frame_correction =
                snap9(compose(latest.pose, inverse(latest.odom_pose)));
        }
        report.converged = converged;
        report.iterations = iterations;
        report.final_cost = total_cost(poses, graph.factors);
        return report;
    };

    if (num_vars == 0 || graph.factors.empty()) return finish(true, 0);

    constexpr double kEps = 1e-7;
    constexpr int kMaxIterations = 100;
    double lambda = 1e-8;
    double cost = report.initial_cost;

    for (int iter = 0; iter < kMaxIterations; ++iter) {
        std::vector<Eigen::Triplet<double>> triplets;
        triplets.reserve(graph.factors.size() * 144);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(6 * num_vars);

        for (const Factor& f : graph.factors) {
            const std::size_t i = static_cast<std::size_t>(f.from_id);
            const std::size_t j = static_cast<std::size_t>(f.to_id);
            const Vec6 r0 = factor_residual(poses[i], poses[j], f);

            Mat6x12 jac = Mat6x12::Zero();
            for (int axis = 0; axis < 6; ++axis) {
                if (var_of_node[i] >= 0) {
                    const Vec6 rp = factor_residual(
                        perturbed(poses[i], axis, kEps), poses[j], f);
                    const Vec6 rm = factor_residual(
                        perturbed(poses[i], axis, -kEps), poses[j], f);
                    jac.col(axis) = (rp - rm) / (2.0 * kEps);
                }
                if (var_of_node[j] >= 0) {
                    const Vec6 rp = factor_residual(
                        poses[i], perturbed(poses[j], axis, kEps), f);
                    const Vec6 rm = factor_residual(
                        poses[i], perturbed(poses[j], axis, -kEps), f);
                    jac.col(6 + axis) = (rp - rm) / (2.0 * kEps);
                }
            }

            const int vi = var_of_node[i];
            const int vj = var_of_node[j];
            const auto add_block = [&](int var_a, int col_a, int var_b,
                                       int col_b) {
                const Eigen::Matrix<double, 6, 6> block =
                    jac.block<6, 6>(0, col_a).transpose() *
                    jac.block<6, 6>(0, col_b);
                for (int r = 0; r < 6; ++r)
                    for (int c = 0; c < 6; ++c)
                        triplets.emplace_back(6 * var_a + r, 6 * var_b + c,
                                              block(r, c));
            };
            if (vi >= 0) {
                add_block(vi, 0, vi, 0);
                g.segment<6>(6 * vi) += jac.block<6, 6>(0, 0).transpose() * r0;
            }
            if (vj >= 0) {
                add_block(vj, 6, vj, 6);
                g.segment<6>(6 * vj) += jac.block<6, 6>(0, 6).transpose() * r0;
            }
            if (vi >= 0 && vj >= 0) {
                add_block(vi, 0, vj, 6);
                add_block(vj, 6, vi, 0);
            }
        }

        Eigen::SparseMatrix<double> h(6 * num_vars, 6 * num_vars);
        h.setFromTriplets(triplets.begin(), triplets.end());

        bool stepped = false;
        double max_update = 0.0;
        while (lambda < 1e10) {
            Eigen::SparseMatrix<double> damped = h;
            for (int d = 0; d < 6 * num_vars; ++d)
                damped.coeffRef(d, d) += lambda;
            Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(damped);
            if (solver.info() != Eigen::Success) {
                lambda *= 10.0;
                continue;
            }
            const Eigen::VectorXd delta = solver.solve(-g);
            if (solver.info() != Eigen::Success) {
                lambda *= 10.0;
                continue;
            }

            std::vector<Pose> trial = poses;
            double trial_max = 0.0;
            for (std::size_t node = 0; node < n; ++node) {
                const int v = var_of_node[node];
                if (v < 0) continue;
                const Vec3 dt = delta.segment<3>(6 * v);
                const Vec3 dw = delta.segment<3>(6 * v + 3);
                trial[node].translation += dt;
                trial[node].rotation =
                    (trial[node].rotation * rotation_exp(dw)).normalized();
                trial_max = std::max({trial_max, dt.norm(), dw.norm()});
            }
            const double trial_cost = total_cost(trial, graph.factors);
            if (trial_cost <= cost) {
                poses = std::move(trial);
                cost = trial_cost;
                lambda = std::max(lambda * 0.25, 1e-12);
                max_update = trial_max;
                stepped = true;
                break;
            }
            lambda *= 10.0;
        }

        if (!stepped) return finish(false, iter + 1);
        if (max_update < 1e-6) return finish(true, iter + 1);
    }
    return finish(false, kMaxIterations);
}

PointCloud aggregate_map(const PoseGraph& graph) {
    PointCloud map;
    std::size_t total = 0;
    for (const GraphNode& n : graph.nodes) total += n.cloud.size();
    map.points.reserve(total);
    for (const GraphNode& n : graph.nodes) {
        const Mat3 rot = n.pose.rotation_matrix();
        for (const Vec3& p : n.cloud.points)
            map.points.push_back(rot * p + n.pose.translation);
    }
    return map;
}

namespace {

constexpr int kSessionFormatVersion = 1;

void write_pose_fields(std::ostream& out, const Pose& p) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g %.9g %.9g %.9g %.9g",
                  p.translation.x(), p.translation.y(), p.translation.z(),
                  p.rotation.x(), p.rotation.y(), p.rotation.z(),
                  p.rotation.w());
    out << buf;
}

}  // namespace

void save_session(const PoseGraph& graph, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "clouds", ec);
    if (ec) throw IoError("session: cannot create " + dir);

    {
        std::ofstream g2o(fs::path(dir) / "graph.g2o");
        if (!g2o) throw IoError("session: cannot write graph.g2o");
        for (const GraphNode& n : graph.nodes) {
            g2o << "VERTEX_SE3:QUAT " << n.id << ' ';
            write_pose_fields(g2o, n.pose);
            g2o << '\n';
        }
        for (const Factor& f : graph.factors) {
            if (f.kind == FactorKind::Relocalization)
                g2o << "# RELOCALIZATION\n";
            g2o << "EDGE_SE3:QUAT " << f.from_id << ' ' << f.to_id << ' ';
            write_pose_fields(g2o, f.relative);
            char w[32];
            std::snprintf(w, sizeof w, " %.9g", f.weight);
            g2o << w << '\n';
        }
        if (!g2o) throw IoError("session: write failed for graph.g2o");
    }

    {
        nlohmann::json meta;
        meta["format_version"] = kSessionFormatVersion;
        meta["session_count"] = graph.session_count;
        std::vector<int> starts;
        int prev_session = -1;
        for (const GraphNode& n : graph.nodes) {
            if (n.session != prev_session) {
                starts.push_back(n.id);
                prev_session = n.session;
            }
        }
        meta["session_starts"] = starts;
        meta["frame_correction"] = {
            {"translation",
             {graph.frame_correction.translation.x(),
              graph.frame_correction.translation.y(),
              graph.frame_correction.translation.z()}},
            {"rotation",
             {graph.frame_correction.rotation.x(),
              graph.frame_correction.rotation.y(),
              graph.frame_correction.rotation.z(),
              graph.frame_correction.rotation.w()}}};
        std::vector<std::int64_t> scan_ids;
        for (const GraphNode& n : graph.nodes)
            scan_ids.push_back(n.cloud.source_scan_id);
        meta["node_scan_ids"] = scan_ids;

        std::ofstream out(fs::path(dir) / "meta");
        if (!out) throw IoError("session: cannot write meta");
        out << meta.dump(2) << '\n';
        if (!out) throw IoError("session: write failed for meta");
    }

    for (const GraphNode& n : graph.nodes) {
        save_ply((fs::path(dir) / "clouds" /
                  (std::to_string(n.id) + ".ply")).string(),
                 n.cloud, PlyFormat::BinaryLittleEndian);
    }
}

PoseGraph load_session(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path base(dir);
    if (!fs::exists(base / "meta") || !fs::exists(base / "graph.g2o"))
        throw IoError("session: " + dir + " is not a saved session");

    nlohmann::json meta;
    {
        std::ifstream in(base / "meta");
        if (!in) throw IoError("session: cannot open meta");
        try {
            meta = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("session: invalid meta: ") + e.what());
        }
    }
    if (!meta.contains("format_version") ||
        meta["format_version"].get<int>() != kSessionFormatVersion)
        throw FormatVersionMismatch("session: unsupported format_version");

    PoseGraph graph;
    graph.session_count = meta.at("session_count").get<int>();
    const std::vector<int> starts =
        meta.at("session_starts").get<std::vector<int>>();
    const std::vector<std::int64_t> scan_ids =
        meta.at("node_scan_ids").get<std::vector<std::int64_t>>();
    {
        const auto& fc = meta.at("frame_correction");
        const auto& t = fc.at("translation");
        const auto& q = fc.at("rotation");
        graph.frame_correction =
            Pose(Quat(q[3].get<double>(), q[0].get<double>(),
                      q[1].get<double>(), q[2].get<double>()),
                 Vec3(t[0].get<double>(), t[1].get<double>(),
                      t[2].get<double>()));
    }

    std::ifstream g2o(base / "graph.g2o");
    if (!g2o) throw IoError("session: cannot open graph.g2o");
    std::string line;
    bool next_edge_is_reloc = false;
    while (std::getline(g2o, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.find("RELOCALIZATION") != std::string::npos)
                next_edge_is_reloc = true;
            continue;
        }
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "VERTEX_SE3:QUAT") {
            GraphNode node;
            double tx, ty, tz, qx, qy, qz, qw;
            if (!(ls >> node.id >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
                throw ParseError("session: malformed vertex line");
            node.pose = Pose(Quat(qw, qx, qy, qz), Vec3(tx, ty, tz));
            node.odom_pose = node.pose;
            node.session = 0;
            for (std::size_t s = 0; s < starts.size(); ++s)
                if (node.id >= starts[s]) node.session = static_cast<int>(s);
            graph.nodes.push_back(std::move(node));
        } else if (tag == "EDGE_SE3:QUAT") {
            Factor f;
            double tx, ty, tz, qx, qy, qz, qw;
            if (!(ls >> f.from_id >> f.to_id >> tx >> ty >> tz >> qx >> qy >>
                  qz >> qw >> f.weight))
                throw ParseError("session: malformed edge line");
            f.relative = Pose(Quat(qw, qx, qy, qz), Vec3(tx, ty, tz));
            if (next_edge_is_reloc) {
                f.kind = FactorKind::Relocalization;
                next_edge_is_reloc = false;
            } else {
                const std::size_t from = static_cast<std::size_t>(f.from_id);
                const std::size_t to = static_cast<std::size_t>(f.to_id);
                const bool adjacent =
                    f.to_id == f.from_id + 1 && from < graph.nodes.size() &&
                    to < graph.nodes.size() &&
                    graph.nodes[from].session == graph.nodes[to].session;
                f.kind = adjacent ? FactorKind::Odometry
                                  : FactorKind::LoopClosure;
            }
            graph.factors.push_back(std::move(f));
        } else {
            throw ParseError("session: unsupported record '" + tag + "'");
        }
    }

    if (scan_ids.size() != graph.nodes.size())
        throw ParseError("session: node_scan_ids count mismatch");
    for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
        GraphNode& node = graph.nodes[i];
        const auto cloud_path =
            base / "clouds" / (std::to_string(node.id) + ".ply");
        node.cloud = load_ply(cloud_path.string());
        node.cloud.source_scan_id = scan_ids[i];
    }
    return graph;
}

}  // namespace aeromap
