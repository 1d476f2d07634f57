#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aeromap/geometry.hpp"
#include "aeromap/lidar.hpp"
#include "aeromap/registration.hpp"
#include "aeromap/rng.hpp"
#include "aeromap/scene.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

using namespace aeromap;

namespace {

constexpr double kPi = 3.14159265358979323846;

/// Dense axis-aligned box shell sampled on a fixed lattice; rich enough
/// geometry for ICP to lock all six degrees of freedom.
PointCloud box_shell(double step = 0.2) {
    PointCloud cloud;
    const double sx = 6.0, sy = 4.0, sz = 3.0;
    for (double x = 0.0; x <= sx + 1e-9; x += step) {
        for (double y = 0.0; y <= sy + 1e-9; y += step) {
            cloud.points.emplace_back(x, y, 0.0);
            cloud.points.emplace_back(x, y, sz);
        }
    }
    for (double x = 0.0; x <= sx + 1e-9; x += step) {
        for (double z = step; z < sz - 1e-9; z += step) {
            cloud.points.emplace_back(x, 0.0, z);
            cloud.points.emplace_back(x, sy, z);
        }
    }
    for (double y = step; y < sy - 1e-9; y += step) {
        for (double z = step; z < sz - 1e-9; z += step) {
            cloud.points.emplace_back(0.0, y, z);
            cloud.points.emplace_back(sx, y, z);
        }
    }
    return cloud;
}

PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
    PointCloud cloud;
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i)
        cloud.points.emplace_back(rng.uniform(-5, 5), rng.uniform(-5, 5),
                                  rng.uniform(-5, 5));
    return cloud;
}

}  // namespace

TEST_CASE("downsample passes small clouds through untouched") {
    const PointCloud cloud = random_cloud(100, 1);
    const PointCloud out = downsample(cloud, 100, 7);
    REQUIRE(out.size() == 100);
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(out.points[i] == cloud.points[i]);
    CHECK(downsample(cloud, 500, 7).size() == 100);
}

TEST_CASE("downsample hits the target count exactly and deterministically") {
    const PointCloud cloud = random_cloud(5000, 2);
    for (std::size_t target : {4000, 1000, 100, 10, 1}) {
        const PointCloud a = downsample(cloud, target, 42);
        const PointCloud b = downsample(cloud, target, 42);
        CHECK(a.size() == target);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(a.points[i] == b.points[i]);
    }
}

TEST_CASE("downsample output is a subset preserving input order") {
    const PointCloud cloud = random_cloud(2000, 3);
    const PointCloud out = downsample(cloud, 300, 9);
    REQUIRE(out.size() == 300);
    std::size_t cursor = 0;
    for (const Vec3& p : out.points) {
        bool found = false;
        while (cursor < cloud.size()) {
            if (cloud.points[cursor] == p) {
                found = true;
                ++cursor;
                break;
            }
            ++cursor;
        }
        CHECK(found);
    }
}

TEST_CASE("downsample spreads points instead of clumping") {
    // Half the mass in a tight cluster, half spread wide. A uniform random
    // pick would keep ~half the output in the cluster; the voxel stage must
    // keep the spread representative.
    PointCloud cloud;
    Rng rng(4);
    for (int i = 0; i < 2000; ++i)
        cloud.points.emplace_back(rng.uniform(-0.1, 0.1),
                                  rng.uniform(-0.1, 0.1),
                                  rng.uniform(-0.1, 0.1));
    for (int i = 0; i < 2000; ++i)
        cloud.points.emplace_back(rng.uniform(-10, 10), rng.uniform(-10, 10),
                                  rng.uniform(-10, 10));
    const PointCloud out = downsample(cloud, 400, 5);
    std::size_t clustered = 0;
    for (const Vec3& p : out.points)
        if (p.norm() < 0.2) ++clustered;
    CHECK(clustered < 100);
}

TEST_CASE("thin_cloud keeps the point nearest each voxel center") {
    PointCloud cloud;
    cloud.points = {Vec3(0.9, 0.9, 0.9), Vec3(0.52, 0.52, 0.52),
                    Vec3(0.1, 0.1, 0.1), Vec3(1.6, 0.5, 0.5)};
    const PointCloud out = thin_cloud(cloud, 1.0);
    REQUIRE(out.size() == 2);
    // Voxel [0,1)^3 center is (0.5,0.5,0.5): the second point wins.
    CHECK(out.points[0] == Vec3(0.52, 0.52, 0.52));
    CHECK(out.points[1] == Vec3(1.6, 0.5, 0.5));
}

TEST_CASE("thin_cloud caps density") {
    const PointCloud cloud = random_cloud(5000, 6);
    const PointCloud out = thin_cloud(cloud, 0.5);
    CHECK(out.size() < cloud.size());
    // No two survivors share a voxel. The grid anchors at the cloud's min
    // corner, which thinning preserves only if that point survives, so the
    // keys below anchor at the input's min corner explicitly.
    Vec3 lo = cloud.points[0];
    for (const Vec3& p : cloud.points) lo = lo.cwiseMin(p);
    std::set<std::tuple<long, long, long>> cells;
    for (const Vec3& p : out.points) {
        const auto key = std::make_tuple(
            static_cast<long>(std::floor((p.x() - lo.x()) / 0.5)),
            static_cast<long>(std::floor((p.y() - lo.y()) / 0.5)),
            static_cast<long>(std::floor((p.z() - lo.z()) / 0.5)));
        CHECK(cells.insert(key).second);
    }
}

TEST_CASE("icp recovers a known perturbation") {
    PointCloud target = box_shell();
    const Pose true_pose = Pose::from_xyz_yaw(Vec3(0.2, -0.3, 0.1), 0.05);
    PointCloud source;
    // Source observed in its own frame: target = true_pose * source.
    const Pose inv = inverse(true_pose);
    for (const Vec3& p : target.points) source.points.push_back(inv.apply(p));

    IcpConfig cfg;
    const Pose prior = Pose::identity();  // 0.37 m, 2.9 deg off
    const IcpResult res = icp_register(source, target, prior, cfg);
    CHECK(res.converged);
    CHECK(!res.degenerate);
    CHECK(translation_distance(res.transform, true_pose) < 0.01);
    CHECK(rotation_distance(res.transform, true_pose) < 0.001);
    CHECK(res.rms_m < 0.01);
}

TEST_CASE("icp objective never increases within an iteration") {
    PointCloud target = box_shell();
    const Pose true_pose = Pose::from_xyz_yaw(Vec3(0.4, 0.2, -0.1), -0.08);
    PointCloud source;
    const Pose inv = inverse(true_pose);
    for (const Vec3& p : target.points) source.points.push_back(inv.apply(p));

    IcpConfig cfg;
    const IcpResult res = icp_register(source, target, Pose::identity(), cfg);
    REQUIRE(res.objective_history.size() ==
            static_cast<std::size_t>(2 * res.iterations));
    for (int i = 0; i < res.iterations; ++i) {
        const double before = res.objective_history[2 * i];
        const double after = res.objective_history[2 * i + 1];
        CHECK(after <= before + 1e-12);
    }
}

TEST_CASE("icp with identity prior on identical clouds is a no-op") {
    const PointCloud cloud = box_shell(0.4);
    const IcpResult res =
        icp_register(cloud, cloud, Pose::identity(), IcpConfig{});
    CHECK(res.converged);
    CHECK(translation_distance(res.transform, Pose::identity()) < 1e-9);
    CHECK(rotation_distance(res.transform, Pose::identity()) < 1e-9);
    CHECK(res.rms_m < 1e-12);
}

TEST_CASE("icp flags degenerate correspondence sets") {
    PointCloud source, target;
    source.points = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
    target.points = {Vec3(50, 50, 50), Vec3(51, 50, 50)};
    // Prior places the source nowhere near the target: no correspondences.
    const IcpResult res =
        icp_register(source, target, Pose::identity(), IcpConfig{});
    CHECK(res.degenerate);
    CHECK(!res.converged);
    CHECK(translation_distance(res.transform, Pose::identity()) == 0.0);
}

TEST_CASE("icp matches between raw and indexed target") {
    const PointCloud target = box_shell(0.3);
    const Pose true_pose = Pose::from_xyz_yaw(Vec3(0.1, 0.2, 0.0), 0.03);
    PointCloud source;
    const Pose inv = inverse(true_pose);
    for (const Vec3& p : target.points) source.points.push_back(inv.apply(p));

    const IcpResult a =
        icp_register(source, target, Pose::identity(), IcpConfig{});
    const IndexedCloud indexed(target);
    const IcpResult b =
        icp_register(source, indexed, Pose::identity(), IcpConfig{});
    CHECK(a.converged == b.converged);
    CHECK(a.iterations == b.iterations);
    CHECK(translation_distance(a.transform, b.transform) == 0.0);
    CHECK(rotation_distance(a.transform, b.transform) < 1e-15);
}

TEST_CASE("icp on simulated scans of one scene recovers the true motion") {
    Scene scene;
    append_box(scene.triangles, Aabb{Vec3(-4, -3, 0), Vec3(4, 3, 4)});
    scene.ground_plane = true;

    SensorModel model;
    model.horizontal_resolution = 300;
    model.vertical_resolution = 32;

    // The reference is a union of scans from several poses, like the local
    // map a scan registers against in flight. A single scan would leave its
    // ray rings aligned and let registration lock rings to the wrong rings.
    PointCloud target;
    int seed = 1;
    for (const Pose& p :
         {Pose::from_xyz_yaw(Vec3(7, 0, 2.5), kPi),
          Pose::from_xyz_yaw(Vec3(6.5, 1.5, 2.8), kPi - 0.3),
          Pose::from_xyz_yaw(Vec3(7.5, -1.5, 2.2), kPi + 0.3)}) {
        const PointCloud scan = simulate_scan(scene, p, model, seed++);
        const PointCloud world = transform_cloud(scan, p);
        target.points.insert(target.points.end(), world.points.begin(),
                             world.points.end());
    }

    const Pose pose_b = Pose::from_xyz_yaw(Vec3(7.3, 0.4, 2.6), kPi + 0.04);
    const PointCloud scan_b = simulate_scan(scene, pose_b, model, 9);
    // Prior off by ~5 cm and a third of a degree, the scale of odometry
    // error between consecutive in-flight registrations. Registration must
    // hold that accuracy, not degrade it: viewpoint-dependent sampling
    // gives point-to-point matching no better fixed point to reach.
    const Pose prior =
        Pose::from_xyz_yaw(Vec3(7.32, 0.37, 2.63), kPi + 0.045);
    const IcpResult res = icp_register(scan_b, target, prior, IcpConfig{});

    CHECK(res.converged);
    CHECK(translation_distance(res.transform, pose_b) < 0.06);
    CHECK(rotation_distance(res.transform, pose_b) < 0.01);
}

TEST_CASE("build_submap includes near nodes and excludes far ones") {
    std::vector<std::pair<Pose, PointCloud>> nodes;
    PointCloud near_cloud;
    near_cloud.points = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
    PointCloud far_cloud;
    far_cloud.points = {Vec3(0, 0, 1)};
    nodes.emplace_back(Pose::from_translation(Vec3(1, 0, 0)), near_cloud);
    nodes.emplace_back(Pose::from_translation(Vec3(100, 0, 0)), far_cloud);

    SubmapConfig cfg;
    const PointCloud submap =
        build_submap(nodes, Pose::identity(), cfg);
    REQUIRE(submap.size() == 2);
    CHECK(submap.points[0] == Vec3(1, 0, 0));
    CHECK(submap.points[1] == Vec3(2, 0, 0));
}

TEST_CASE("build_submap thins dense node clusters") {
    std::vector<std::pair<Pose, PointCloud>> nodes;
    PointCloud c;
    c.points = {Vec3(0, 0, 0)};
    // Five nodes within centimeters: only the first inside the dense radius
    // survives the separation rule.
    for (int i = 0; i < 5; ++i)
        nodes.emplace_back(
            Pose::from_translation(Vec3(0.01 * i, 0, 0)), c);
    // One node past the dense radius but within inclusion, far from others.
    nodes.emplace_back(Pose::from_translation(Vec3(10, 0, 0)), c);

    SubmapConfig cfg;
    const PointCloud submap = build_submap(nodes, Pose::identity(), cfg);
    CHECK(submap.size() == 2);
}

TEST_CASE("build_submap caps the total point count") {
    std::vector<std::pair<Pose, PointCloud>> nodes;
    nodes.emplace_back(Pose::identity(), random_cloud(50000, 8));
    SubmapConfig cfg;
    cfg.target_points = 30000;
    const PointCloud submap = build_submap(nodes, Pose::identity(), cfg);
    CHECK(submap.size() == 30000);
}

TEST_CASE("build_submap with no nearby node throws") {
    std::vector<std::pair<Pose, PointCloud>> nodes;
    PointCloud c;
    c.points = {Vec3(0, 0, 0)};
    nodes.emplace_back(Pose::from_translation(Vec3(1000, 0, 0)), c);
    CHECK_THROWS_AS(
        build_submap(nodes, Pose::identity(), SubmapConfig{}),
        EmptySubmap);
    CHECK_THROWS_AS(build_submap({}, Pose::identity(), SubmapConfig{}),
                    EmptySubmap);
}

TEST_CASE("perturbation sweep recovers within tight tolerances") {
    // Narrower version of the acceptance sweep for quick feedback: 20 random
    // rigid transforms up to 0.5 m / 10 degrees applied to a structured
    // cloud, recovered from an identity prior. The cloud samples the box
    // faces at random rather than on a lattice: lattice periodicity offers
    // shifted-by-one-cell local minima, while irregular sampling leaves the
    // true alignment as the only fixed point. Centering on the origin keeps
    // a 10 degree rotation from displacing points past the correspondence
    // cap.
    PointCloud source;
    {
        Rng sampler(5);
        const Vec3 half(3.0, 2.0, 1.5);
        const double areas[3] = {12.0, 18.0, 24.0};
        const double total = 2.0 * (areas[0] + areas[1] + areas[2]);
        while (source.points.size() < 3000) {
            const double pick = sampler.uniform(0.0, total);
            int face = 0;
            double acc = 0.0;
            for (int a = 0; a < 3; ++a) {
                acc += 2.0 * areas[a];
                if (pick < acc) {
                    face = a;
                    break;
                }
            }
            const double sign = sampler.uniform() < 0.5 ? -1.0 : 1.0;
            Vec3 p(sampler.uniform(-half.x(), half.x()),
                   sampler.uniform(-half.y(), half.y()),
                   sampler.uniform(-half.z(), half.z()));
            p[face] = sign * half[face];
            source.points.push_back(p);
        }
    }

    Rng rng(99);
    int recovered = 0;
    const int trials = 20;
    for (int t = 0; t < trials; ++t) {
        const Vec3 axis(rng.uniform(-1, 1), rng.uniform(-1, 1),
                        rng.uniform(-1, 1));
        const double angle = rng.uniform(0.0, 10.0 * kPi / 180.0);
        Vec3 offset(rng.uniform(-1, 1), rng.uniform(-1, 1),
                    rng.uniform(-1, 1));
        offset *= rng.uniform(0.0, 0.5) / offset.norm();
        const Pose truth = Pose::from_axis_angle(axis, angle, offset);
        const PointCloud target = transform_cloud(source, truth);
        const IcpResult res =
            icp_register(source, target, Pose::identity(), IcpConfig{});
        if (res.converged &&
            translation_distance(res.transform, truth) < 0.01 &&
            rotation_distance(res.transform, truth) < 0.001)
            ++recovered;
    }
    CHECK(recovered == trials);
}
