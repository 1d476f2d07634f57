#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aeromap/errors.hpp"
#include "aeromap/geometry.hpp"
#include "aeromap/pose_graph.hpp"
#include "aeromap/rng.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace aeromap;

namespace fs = std::filesystem;

namespace {

constexpr double kHalfPi = 1.5707963267948966;

Pose xpose(double x) { return Pose::from_translation(Vec3(x, 0.0, 0.0)); }

bool same_vec(const Vec3& a, const Vec3& b) { return (a - b).norm() == 0.0; }

bool same_quat(const Quat& a, const Quat& b) {
    return (a.coeffs() - b.coeffs()).norm() == 0.0;
}

bool same_pose(const Pose& a, const Pose& b) {
    return same_vec(a.translation, b.translation) &&
           same_quat(a.rotation, b.rotation);
}

PointCloud one_point_cloud(std::int64_t scan_id, const Vec3& p) {
    PointCloud c;
    c.source_scan_id = scan_id;
    c.points.push_back(snap_f32(p));
    return c;
}

/// Random points on the shell of a 6 x 4 x 3 box centered at the origin,
/// area-weighted per face so the sampling is uniform over the surface.
PointCloud box_surface(std::size_t count, std::uint64_t seed) {
    const Vec3 half(3.0, 2.0, 1.5);
    const double areas[3] = {half.y() * half.z(), half.x() * half.z(),
                             half.x() * half.y()};
    const double total = 2.0 * (areas[0] + areas[1] + areas[2]);
    Rng rng(seed);
    PointCloud cloud;
    cloud.points.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        double pick = rng.uniform(0.0, total);
        int axis = 0;
        for (; axis < 2; ++axis) {
            if (pick < 2.0 * areas[axis]) break;
            pick -= 2.0 * areas[axis];
        }
        const double side = (pick < areas[axis]) ? -1.0 : 1.0;
        Vec3 p;
        p[axis] = side * half[axis];
        const int u = (axis + 1) % 3;
        const int v = (axis + 2) % 3;
        p[u] = rng.uniform(-half[u], half[u]);
        p[v] = rng.uniform(-half[v], half[v]);
        cloud.points.push_back(p);
    }
    return cloud;
}

fs::path temp_dir() {
    static int counter = 0;
    fs::path d = fs::temp_directory_path() /
                 ("aeromap_slam_tests_" + std::to_string(counter++));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("snap9 keeps nine significant digits and is idempotent") {
    const double v = 0.12345678912345;
    const double s = snap9(v);
    CHECK(s == doctest::Approx(0.123456789).epsilon(1e-12));
    CHECK(snap9(s) == s);
    CHECK(snap9(0.0) == 0.0);
    const double big = -1234567891.23;
    CHECK(snap9(snap9(big)) == snap9(big));
}

TEST_CASE("first node is unconditional and absolute") {
    PoseGraph graph;
    const Pose start = Pose::from_xyz_yaw(Vec3(4.0, -2.0, 1.5), 0.3);
    const auto id =
        add_node(graph, start, one_point_cloud(0, Vec3(1, 0, 0)), false);
    REQUIRE(id.has_value());
    CHECK(*id == 0);
    CHECK(graph.nodes.size() == 1);
    CHECK(graph.factors.empty());
    CHECK(same_pose(graph.nodes[0].pose, snap9(start)));
}

TEST_CASE("displacement below the node interval is skipped") {
    PoseGraph graph;
    add_node(graph, Pose(), one_point_cloud(0, Vec3::Zero()), false);
    const auto skipped =
        add_node(graph, xpose(0.6), one_point_cloud(1, Vec3::Zero()), false);
    CHECK_FALSE(skipped.has_value());
    CHECK(graph.nodes.size() == 1);
    CHECK(graph.factors.empty());

    SUBCASE("but force adds it anyway") {
        const auto forced = add_node(graph, xpose(0.6),
                                     one_point_cloud(1, Vec3::Zero()), true);
        REQUIRE(forced.has_value());
        CHECK(*forced == 1);
        CHECK(graph.factors.size() == 1);
    }

    SUBCASE("and a later accumulated displacement lands the node") {
        const auto added = add_node(graph, xpose(1.05),
                                    one_point_cloud(1, Vec3::Zero()), false);
        REQUIRE(added.has_value());
        CHECK(graph.nodes[1].pose.translation.x() == doctest::Approx(1.05));
    }
}

TEST_CASE("chained node gains an odometry factor with the snapped relative") {
    PoseGraph graph;
    add_node(graph, xpose(0.0), one_point_cloud(0, Vec3::Zero()), false);
    const Pose rel =
        Pose::from_xyz_yaw(Vec3(1.2345678912345, 0.0, 0.0), 0.1);
    const auto id =
        add_node(graph, rel, one_point_cloud(1, Vec3::Zero()), false);
    REQUIRE(id.has_value());
    REQUIRE(graph.factors.size() == 1);
    const Factor& f = graph.factors[0];
    CHECK(f.kind == FactorKind::Odometry);
    CHECK(f.from_id == 0);
    CHECK(f.to_id == 1);
    CHECK(f.weight == graph.config.odometry_weight);
    CHECK(same_pose(f.relative, snap9(rel)));
    CHECK(same_pose(graph.nodes[1].pose,
                    snap9(compose(graph.nodes[0].pose, snap9(rel)))));
}

TEST_CASE("a new session starts absolute with no cross-session factor") {
    PoseGraph graph;
    add_node(graph, xpose(0.0), one_point_cloud(0, Vec3::Zero()), false);
    add_node(graph, xpose(1.5), one_point_cloud(1, Vec3::Zero()), false);
    graph.begin_new_session();
    CHECK(graph.current_session() == 1);
    const auto id =
        add_node(graph, xpose(7.0), one_point_cloud(2, Vec3::Zero()), false);
    REQUIRE(id.has_value());
    CHECK(graph.nodes[2].session == 1);
    CHECK(graph.nodes[2].pose.translation.x() == doctest::Approx(7.0));
    CHECK(graph.factors.size() == 1);  // only the session-0 odometry factor
}

TEST_CASE("add_factor snaps the relative pose") {
    PoseGraph graph;
    Factor f;
    f.kind = FactorKind::LoopClosure;
    f.from_id = 0;
    f.to_id = 1;
    f.relative = xpose(0.98765432109876);
    add_factor(graph, f);
    CHECK(graph.factors[0].relative.translation.x() ==
          snap9(0.98765432109876));
}

TEST_CASE("optimize leaves a consistent chain in place") {
    PoseGraph graph;
    add_node(graph, xpose(0.0), one_point_cloud(0, Vec3::Zero()), false);
    add_node(graph, xpose(1.0), one_point_cloud(1, Vec3::Zero()), false);
    add_node(graph, xpose(1.0), one_point_cloud(2, Vec3::Zero()), false);
    const auto report = optimize(graph);
    CHECK(report.converged);
    CHECK(report.initial_cost == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(report.final_cost <= report.initial_cost + 1e-12);
    CHECK(graph.nodes[1].pose.translation.x() == doctest::Approx(1.0));
    CHECK(graph.nodes[2].pose.translation.x() == doctest::Approx(2.0));
}

TEST_CASE("optimize distributes a translation contradiction evenly") {
    // Chain 0-1-2 with unit odometry steps plus a direct 0->2 factor
    // claiming 2.3 m. Closed form with node 0 fixed: minimizing
    // (a-1)^2 + (b-a-1)^2 + (b-2.3)^2 gives a = 1.1, b = 2.2 and a
    // residual of 0.1 in each factor.
    PoseGraph graph;
    add_node(graph, xpose(0.0), one_point_cloud(0, Vec3::Zero()), false);
    add_node(graph, xpose(1.0), one_point_cloud(1, Vec3::Zero()), false);
    add_node(graph, xpose(1.0), one_point_cloud(2, Vec3::Zero()), false);
    Factor direct;
    direct.kind = FactorKind::LoopClosure;
    direct.from_id = 0;
    direct.to_id = 2;
    direct.relative = xpose(2.3);
    direct.weight = 1.0;
    add_factor(graph, direct);

    const auto report = optimize(graph);
    CHECK(report.converged);
    CHECK(report.final_cost < report.initial_cost);
    CHECK(graph.nodes[1].pose.translation.x() == doctest::Approx(1.1));
    CHECK(graph.nodes[2].pose.translation.x() == doctest::Approx(2.2));
    CHECK(report.final_cost == doctest::Approx(0.03));
}

TEST_CASE("optimize weights pull toward the heavier factor") {
    // Two contradicting factors between the same pair: minimizing
    // w1 (a-1)^2 + w2 (a-2)^2 gives a = (w1 + 2 w2) / (w1 + w2).
    PoseGraph graph;
    add_node(graph, xpose(0.0), one_point_cloud(0, Vec3::Zero()), false);
    add_node(graph, xpose(1.5), one_point_cloud(1, Vec3::Zero()), false);
    graph.factors.clear();  // replace the odometry factor wholesale
    Factor a;
    a.from_id = 0;
    a.to_id = 1;
    a.relative = xpose(1.0);
    a.weight = 1.0;
    add_factor(graph, a);
    Factor b;
    b.from_id = 0;
    b.to_id = 1;
    b.relative = xpose(2.0);
    b.weight = 3.0;
    add_factor(graph, b);

    optimize(graph);
    CHECK(graph.nodes[1].pose.translation.x() == doctest::Approx(1.75));
}

TEST_CASE("optimize fixes the gauge and skips unconstrained nodes") {
    PoseGraph graph;
    add_node(graph, xpose(0.0), one_point_cloud(0, Vec3::Zero()), false);
    add_node(graph, xpose(1.0), one_point_cloud(1, Vec3::Zero()), false);
    // A floating node with no incident factor.
    graph.begin_new_session();
    add_node(graph, Pose::from_translation(Vec3(50.0, 60.0, 70.0)),
             one_point_cloud(2, Vec3::Zero()), false);

    const Pose before0 = graph.nodes[0].pose;
    const Pose before2 = graph.nodes[2].pose;
    optimize(graph);
    CHECK(same_pose(graph.nodes[0].pose, before0));
    CHECK(same_pose(graph.nodes[2].pose, before2));
}

TEST_CASE("optimize refreshes the frame correction from the latest node") {
    PoseGraph graph;
    add_node(graph, xpose(0.0), one_point_cloud(0, Vec3::Zero()), false);
    add_node(graph, xpose(1.0), one_point_cloud(1, Vec3::Zero()), false);
    // Simulate drifted odometry bookkeeping on the latest node.
    graph.nodes[1].odom_pose = xpose(1.08);
    optimize(graph);
    const GraphNode& latest = graph.nodes.back();
    const Pose expect =
        snap9(compose(latest.pose, inverse(latest.odom_pose)));
    CHECK(same_pose(graph.frame_correction, expect));
}

TEST_CASE("optimize on an empty or factorless graph is a no-op") {
    PoseGraph empty;
    const auto r1 = optimize(empty);
    CHECK(r1.converged);
    CHECK(r1.iterations == 0);

    PoseGraph lone;
    add_node(lone, xpose(3.0), one_point_cloud(0, Vec3::Zero()), false);
    const Pose before = lone.nodes[0].pose;
    const auto r2 = optimize(lone);
    CHECK(r2.converged);
    CHECK(r2.iterations == 0);
    CHECK(same_pose(lone.nodes[0].pose, before));
}

TEST_CASE("loop candidates respect radius, exclusion window, and order") {
    PoseGraph graph;
    LoopClosureConfig cfg;
    cfg.detection_radius_m = 3.0;
    cfg.exclusion_window = 10;

    // A straight outbound leg: nodes 0..14 at x = 0..14.
    add_node(graph, xpose(0.0), one_point_cloud(0, Vec3::Zero()), false);
    for (int i = 1; i <= 14; ++i)
        add_node(graph, xpose(1.0), one_point_cloud(i, Vec3::Zero()), false);
    // The return pass swings back near x = 2. add_node takes the relative
    // step from node 14 at x = 14.
    add_node(graph, Pose::from_translation(Vec3(2.1 - 14.0, 0.4, 0.0)),
             one_point_cloud(15, Vec3::Zero()), true);
    REQUIRE(graph.nodes.size() == 16);

    const auto ids = detect_loop_candidates(graph, 15, cfg);
    // Nodes 5..14 fall inside the exclusion window around ordinal 15.
    // Distances from (2.1, 0.4): node 2 at 0.41, node 3 at 0.99, node 1
    // at 1.17, node 4 at 1.94, node 0 at 2.14; all within 3 m.
    CHECK(ids == std::vector<int>{2, 3, 1, 4, 0});
}

TEST_CASE("loop candidate exclusion does not span sessions") {
    PoseGraph graph;
    LoopClosureConfig cfg;
    cfg.detection_radius_m = 3.0;
    cfg.exclusion_window = 10;

    add_node(graph, xpose(0.0), one_point_cloud(0, Vec3::Zero()), false);
    add_node(graph, xpose(1.0), one_point_cloud(1, Vec3::Zero()), false);
    graph.begin_new_session();
    add_node(graph, xpose(1.2), one_point_cloud(2, Vec3::Zero()), false);

    // Node 2 sits 0.2 m from node 1 and 1.2 m from node 0; both are in the
    // previous session so the window does not apply.
    CHECK(detect_loop_candidates(graph, 2, cfg) == std::vector<int>{1, 0});
}

TEST_CASE("equidistant loop candidates break ties by id") {
    PoseGraph graph;
    LoopClosureConfig cfg;
    cfg.detection_radius_m = 3.0;
    cfg.exclusion_window = 0;

    // Nodes 0 and 1 sit symmetrically around the query at (0.5, 1, 0).
    add_node(graph, Pose::from_translation(Vec3(-1, 0, 0)),
             one_point_cloud(0, Vec3::Zero()), false);
    add_node(graph, Pose::from_translation(Vec3(3, 0, 0)),
             one_point_cloud(1, Vec3::Zero()), true);
    add_node(graph, Pose::from_translation(Vec3(-1.5, 1, 0)),
             one_point_cloud(2, Vec3::Zero()), true);
    REQUIRE(graph.nodes[2].pose.translation.x() == doctest::Approx(0.5));

    const auto ids = detect_loop_candidates(graph, 2, cfg);
    CHECK(ids == std::vector<int>{0, 1});
}

TEST_CASE("verify_loop accepts a clean revisit") {
    PoseGraph graph;
    const PointCloud surface = box_surface(3000, 99);

    // Two nodes seeing the same structure; the graph believes their
    // relative pose almost exactly.
    add_node(graph, xpose(0.0), surface, false);
    const Pose second = Pose::from_xyz_yaw(Vec3(0.1, -0.05, 0.02), 0.02);
    add_node(graph, second, transform_cloud(surface, inverse(second)), true);

    LoopClosureConfig cfg;
    cfg.min_inliers = 5000;  // falls back to the 20 percent floor
    const auto v = verify_loop(graph, 0, 1, cfg, IcpConfig{});
    REQUIRE(v.accepted);
    CHECK(v.factor.kind == FactorKind::LoopClosure);
    CHECK(v.factor.from_id == 0);
    CHECK(v.factor.to_id == 1);
    CHECK(v.factor.weight == graph.config.loop_closure_weight);
    CHECK(v.icp.inliers >= static_cast<std::size_t>(0.2 * 3000));
    // The refined relative pose should match the true one closely.
    CHECK(translation_distance(v.factor.relative, second) < 0.02);
    CHECK(rotation_distance(v.factor.relative, second) < 0.005);
}

TEST_CASE("verify_loop rejects degenerate geometry as not converged") {
    PoseGraph graph;
    PointCloud line;
    for (int i = 0; i < 40; ++i)
        line.points.emplace_back(0.1 * i, 0.0, 0.0);
    add_node(graph, xpose(0.0), line, false);
    add_node(graph, xpose(0.0), line, true);

    LoopClosureConfig cfg;
    const auto v = verify_loop(graph, 0, 1, cfg, IcpConfig{});
    CHECK_FALSE(v.accepted);
    CHECK(v.reason == LoopVerification::Reason::NotConverged);
}

TEST_CASE("verify_loop rejects a thin overlap on inliers") {
    // Source has 100 spread-out points; the target keeps only 10 of them.
    // With a 3 m grid pitch the other 90 have no correspondence within the
    // 1 m cap, so ICP aligns perfectly on 10 inliers and the 20 percent
    // floor (20) rejects the pair.
    PointCloud source;
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j)
            source.points.emplace_back(3.0 * i, 3.0 * j,
                                       0.3 * ((i * 7 + j * 3) % 5));
    PointCloud target;
    for (int k = 0; k < 10; ++k)
        target.points.push_back(
            source.points[static_cast<std::size_t>(k) * 7]);

    PoseGraph graph;
    add_node(graph, xpose(0.0), target, false);
    add_node(graph, xpose(0.0), source, true);

    LoopClosureConfig cfg;
    const auto v = verify_loop(graph, 0, 1, cfg, IcpConfig{});
    CHECK_FALSE(v.accepted);
    CHECK(v.reason == LoopVerification::Reason::TooFewInliers);
    CHECK(v.icp.inliers == 10);
}

TEST_CASE("aggregate_map unions clouds in their node frames") {
    PoseGraph graph;
    add_node(graph, xpose(0.0), one_point_cloud(0, Vec3(1, 2, 3)), false);
    add_node(graph,
             Pose::from_xyz_yaw(Vec3(10, 0, 0), kHalfPi),
             one_point_cloud(1, Vec3(1, 0, 0)), true);
    const PointCloud map = aggregate_map(graph);
    REQUIRE(map.size() == 2);
    CHECK(same_vec(map.points[0], snap_f32(Vec3(1, 2, 3))));
    CHECK(map.points[1].x() == doctest::Approx(10.0));
    CHECK(map.points[1].y() == doctest::Approx(1.0));
}

TEST_CASE("session save and load round-trips the graph bit-exactly") {
    PoseGraph graph;
    Rng rng(1234);
    PointCloud c0;
    for (int i = 0; i < 50; ++i)
        c0.points.push_back(snap_f32(Vec3(rng.uniform(-5.0, 5.0),
                                          rng.uniform(-5.0, 5.0),
                                          rng.uniform(0.0, 3.0))));
    c0.source_scan_id = 3;
    PointCloud c1 = c0;
    c1.source_scan_id = 9;

    add_node(graph,
             Pose::from_xyz_yaw(Vec3(0.123456789, -4.2, 0.5), 0.37), c0,
             false);
    add_node(graph,
             Pose::from_axis_angle(Vec3::UnitY(), -0.11,
                                   Vec3(1.7, 0.01, -0.02)),
             c1, false);
    graph.begin_new_session();
    PointCloud c2 = c0;
    c2.source_scan_id = 21;
    add_node(graph, xpose(5.5), c2, false);

    Factor reloc;
    reloc.kind = FactorKind::Relocalization;
    reloc.from_id = 0;
    reloc.to_id = 2;
    reloc.relative = Pose::from_axis_angle(Vec3::UnitX(), 0.05,
                                           Vec3(5.3777, 4.1, -0.4));
    reloc.weight = graph.config.relocalization_weight;
    add_factor(graph, reloc);
    optimize(graph);

    const fs::path dir = temp_dir();
    save_session(graph, dir.string());
    const PoseGraph loaded = load_session(dir.string());

    CHECK(loaded.session_count == graph.session_count);
    REQUIRE(loaded.nodes.size() == graph.nodes.size());
    REQUIRE(loaded.factors.size() == graph.factors.size());
    for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
        const GraphNode& a = graph.nodes[i];
        const GraphNode& b = loaded.nodes[i];
        CHECK(a.id == b.id);
        CHECK(a.session == b.session);
        CHECK(same_pose(a.pose, b.pose));
        REQUIRE(a.cloud.size() == b.cloud.size());
        CHECK(a.cloud.source_scan_id == b.cloud.source_scan_id);
        bool points_equal = true;
        for (std::size_t k = 0; k < a.cloud.size(); ++k)
            if (!same_vec(a.cloud.points[k], b.cloud.points[k]))
                points_equal = false;
        CHECK(points_equal);
        // Odometry frames are re-anchored at the loaded map poses.
        CHECK(same_pose(b.odom_pose, b.pose));
    }
    for (std::size_t i = 0; i < graph.factors.size(); ++i) {
        const Factor& a = graph.factors[i];
        const Factor& b = loaded.factors[i];
        CHECK(a.kind == b.kind);
        CHECK(a.from_id == b.from_id);
        CHECK(a.to_id == b.to_id);
        CHECK(a.weight == b.weight);
        CHECK(same_pose(a.relative, b.relative));
    }
    CHECK(same_pose(loaded.frame_correction, graph.frame_correction));

    SUBCASE("a second save of the loaded graph is byte-identical") {
        const fs::path dir2 = temp_dir();
        save_session(loaded, dir2.string());
        for (const char* name : {"graph.g2o", "meta"}) {
            std::ifstream f1(dir / name, std::ios::binary);
            std::ifstream f2(dir2 / name, std::ios::binary);
            std::stringstream s1, s2;
            s1 << f1.rdbuf();
            s2 << f2.rdbuf();
            CHECK(s1.str() == s2.str());
        }
    }
}

TEST_CASE("load_session rejects junk and wrong versions") {
    const fs::path dir = temp_dir();
    CHECK_THROWS_AS(load_session((dir / "nope").string()), IoError);

    PoseGraph graph;
    add_node(graph, xpose(0.0), one_point_cloud(0, Vec3::Zero()), false);
    save_session(graph, dir.string());
    {
        std::ofstream meta(dir / "meta");
        meta << "{\"format_version\": 99}\n";
    }
    CHECK_THROWS_AS(load_session(dir.string()), FormatVersionMismatch);
}
