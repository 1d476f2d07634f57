#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aeromap/errors.hpp"
#include "aeromap/geometry.hpp"
#include "aeromap/lidar.hpp"
#include "aeromap/neighbor_index.hpp"
#include "aeromap/platform.hpp"
#include "aeromap/ply.hpp"
#include "aeromap/rng.hpp"
#include "aeromap/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace aeromap;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

fs::path temp_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "aeromap_core_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed,
                                double extent = 10.0) {
    Rng rng(seed);
    std::vector<Vec3> pts;
    pts.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        pts.emplace_back(rng.uniform(-extent, extent),
                         rng.uniform(-extent, extent),
                         rng.uniform(-extent, extent));
    return pts;
}

std::vector<NeighborIndex::Neighbor> brute_radius(const std::vector<Vec3>& pts,
                                                  const Vec3& q, double r) {
    std::vector<NeighborIndex::Neighbor> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double sq = (pts[i] - q).squaredNorm();
        if (sq <= r * r) out.push_back({i, sq});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.sq_dist != b.sq_dist) return a.sq_dist < b.sq_dist;
        return a.index < b.index;
    });
    return out;
}

double brute_point_segment_dist(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 d = b - a;
    const double len_sq = d.squaredNorm();
    double t = len_sq > 0.0 ? (p - a).dot(d) / len_sq : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (p - (a + t * d)).norm();
}

}  // namespace

TEST_CASE("rng streams are reproducible and independent of history") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng c(42);
    c.uniform();
    c.normal();
    Rng d(43);
    CHECK(Rng(42).next_u64() != d.next_u64());
}

TEST_CASE("rng uniform stays in range and covers it") {
    Rng rng(7);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);

    for (int i = 0; i < 1000; ++i) {
        const double v = rng.uniform(-3.0, 5.0);
        CHECK(v >= -3.0);
        CHECK(v < 5.0);
    }
}

TEST_CASE("rng uniform_index covers every bucket without bias") {
    Rng rng(11);
    std::vector<int> counts(7, 0);
    const int draws = 70000;
    for (int i = 0; i < draws; ++i) ++counts[rng.uniform_index(7)];
    for (int c : counts) {
        CHECK(c > draws / 7 - 600);
        CHECK(c < draws / 7 + 600);
    }
}

TEST_CASE("rng normal has the requested moments") {
    Rng rng(3);
    const int n = 200000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal(2.0, 0.5);
        sum += x;
        sum_sq += x * x;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    CHECK(mean == doctest::Approx(2.0).epsilon(0.01));
    CHECK(std::sqrt(var) == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("derive_seed separates salts and indices") {
    const std::uint64_t base = 99;
    CHECK(derive_seed(base, 1) != derive_seed(base, 2));
    CHECK(derive_seed(base, 1, 0) != derive_seed(base, 1, 1));
    CHECK(derive_seed(base, 1, 5) == derive_seed(base, 1, 5));
    CHECK(derive_seed(base, 1) != derive_seed(base + 1, 1));
}

TEST_CASE("pose compose and inverse round trip") {
    const Pose a = Pose::from_axis_angle(Vec3(1, 2, 3), 0.7, Vec3(4, -1, 2));
    const Pose b = Pose::from_axis_angle(Vec3(-1, 0, 1), -1.2, Vec3(0, 3, -5));
    const Pose ab = compose(a, b);

    const Vec3 p(0.3, -0.7, 1.9);
    CHECK((ab.apply(p) - a.apply(b.apply(p))).norm() < 1e-12);

    const Pose id = compose(a, inverse(a));
    CHECK(translation_distance(id, Pose::identity()) < 1e-12);
    CHECK(rotation_distance(id, Pose::identity()) < 1e-12);
}

TEST_CASE("yaw extraction matches construction") {
    for (double yaw : {-3.0, -1.5, 0.0, 0.4, 2.9}) {
        const Pose p = Pose::from_xyz_yaw(Vec3(1, 2, 3), yaw);
        CHECK(p.yaw() == doctest::Approx(yaw).epsilon(1e-12));
    }
}

TEST_CASE("wrap_angle maps into (-pi, pi]") {
    CHECK(wrap_angle(0.0) == 0.0);
    CHECK(std::abs(wrap_angle(3 * kPi)) == doctest::Approx(kPi));
    CHECK(std::abs(wrap_angle(-3 * kPi)) == doctest::Approx(kPi));
    CHECK(wrap_angle(2 * kPi + 0.1) == doctest::Approx(0.1));
    CHECK(wrap_angle(-2 * kPi - 0.1) == doctest::Approx(-0.1));
}

TEST_CASE("rotation log and exp are inverse") {
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        const Vec3 w(rng.uniform(-2, 2), rng.uniform(-2, 2),
                     rng.uniform(-2, 2));
        const Quat q = rotation_exp(w);
        const Vec3 w2 = rotation_log(q);
        CHECK((w - w2).norm() < 1e-9);
    }
    CHECK(rotation_log(Quat::Identity()).norm() == 0.0);
}

TEST_CASE("rotation_distance equals the constructed angle") {
    const Pose a = Pose::identity();
    for (double ang : {0.0, 0.01, 0.5, 1.7, 3.0}) {
        const Pose b = Pose::from_axis_angle(Vec3(0.3, -1, 2), ang, Vec3::Zero());
        CHECK(rotation_distance(a, b) == doctest::Approx(ang).epsilon(1e-9));
    }
}

TEST_CASE("transform_cloud maps points and keeps metadata") {
    PointCloud cloud;
    cloud.points = {Vec3(1, 0, 0), Vec3(0, 2, 0)};
    cloud.source_scan_id = 17;
    cloud.timestamps = {0.1, 0.2};
    const Pose pose = Pose::from_xyz_yaw(Vec3(0, 0, 5), kPi / 2);
    const PointCloud out = transform_cloud(cloud, pose);
    REQUIRE(out.size() == 2);
    CHECK(out.source_scan_id == 17);
    CHECK(out.timestamps.size() == 2);
    CHECK((out.points[0] - Vec3(0, 1, 5)).norm() < 1e-12);
    CHECK((out.points[1] - Vec3(-2, 0, 5)).norm() < 1e-12);
}

TEST_CASE("snap_f32 is idempotent") {
    const double v = 0.1234567890123456789;
    const double s = snap_f32(v);
    CHECK(snap_f32(s) == s);
    CHECK(s != v);
    CHECK(std::abs(s - v) < 1e-7);
}

TEST_CASE("aabb membership, clamping and inflation") {
    const Aabb box{Vec3(-1, -2, 0), Vec3(1, 2, 3)};
    CHECK(box.contains(Vec3(0, 0, 1)));
    CHECK(box.contains(Vec3(1, 2, 3)));
    CHECK(!box.contains(Vec3(1.001, 0, 1)));
    CHECK(box.contains_xy(Vec3(0.5, -2, 99)));
    CHECK((box.clamp(Vec3(5, -9, 1)) - Vec3(1, -2, 1)).norm() == 0.0);
    const Aabb big = box.inflated(2.0);
    CHECK(big.contains(Vec3(2.9, -3.9, -1.9)));
    CHECK((box.extent() - Vec3(2, 4, 3)).norm() == 0.0);
}

TEST_CASE("neighbor index radius query matches brute force") {
    const auto pts = random_points(700, 101);
    const NeighborIndex index(pts);
    Rng rng(55);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec3 q(rng.uniform(-12, 12), rng.uniform(-12, 12),
                     rng.uniform(-12, 12));
        const double r = rng.uniform(0.1, 8.0);
        const auto got = index.radius_query(q, r);
        const auto want = brute_radius(pts, q, r);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].index == want[i].index);
            CHECK(got[i].sq_dist == want[i].sq_dist);
        }
        CHECK(index.radius_count(q, r) == want.size());
    }
}

TEST_CASE("neighbor index k_nearest matches brute force") {
    const auto pts = random_points(400, 202);
    const NeighborIndex index(pts);
    Rng rng(66);
    for (int trial = 0; trial < 30; ++trial) {
        const Vec3 q(rng.uniform(-12, 12), rng.uniform(-12, 12),
                     rng.uniform(-12, 12));
        const std::size_t k = 1 + rng.uniform_index(30);
        const auto got = index.k_nearest(q, k);

        std::vector<NeighborIndex::Neighbor> all;
        for (std::size_t i = 0; i < pts.size(); ++i)
            all.push_back({i, (pts[i] - q).squaredNorm()});
        std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
            if (a.sq_dist != b.sq_dist) return a.sq_dist < b.sq_dist;
            return a.index < b.index;
        });
        REQUIRE(got.size() == std::min(k, pts.size()));
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].index == all[i].index);
            CHECK(got[i].sq_dist == all[i].sq_dist);
        }
    }
}

TEST_CASE("neighbor index handles duplicates and ties by index order") {
    std::vector<Vec3> pts = {Vec3(1, 0, 0), Vec3(1, 0, 0), Vec3(-1, 0, 0),
                             Vec3(-1, 0, 0)};
    const NeighborIndex index(pts);
    const auto nn = index.k_nearest(Vec3::Zero(), 3);
    REQUIRE(nn.size() == 3);
    CHECK(nn[0].index == 0);
    CHECK(nn[1].index == 1);
    CHECK(nn[2].index == 2);
    const auto ball = index.radius_query(Vec3::Zero(), 1.0);
    REQUIRE(ball.size() == 4);
    CHECK(ball[0].index == 0);
    CHECK(ball[3].index == 3);
}

TEST_CASE("empty neighbor index is inert") {
    const NeighborIndex index;
    CHECK(index.empty());
    CHECK(index.radius_query(Vec3::Zero(), 5.0).empty());
    CHECK(index.k_nearest(Vec3::Zero(), 3).empty());
    CHECK(index.radius_count(Vec3::Zero(), 5.0) == 0);
    CHECK(!index.any_point_near_segment(Vec3::Zero(), Vec3(1, 1, 1), 10.0));
}

TEST_CASE("segment query matches brute force point-segment distance") {
    const auto pts = random_points(500, 303);
    const NeighborIndex index(pts);
    Rng rng(77);
    for (int trial = 0; trial < 60; ++trial) {
        const Vec3 a(rng.uniform(-12, 12), rng.uniform(-12, 12),
                     rng.uniform(-12, 12));
        const Vec3 b(rng.uniform(-12, 12), rng.uniform(-12, 12),
                     rng.uniform(-12, 12));
        const double r = rng.uniform(0.05, 2.0);
        bool brute = false;
        for (const Vec3& p : pts) {
            if (brute_point_segment_dist(p, a, b) <= r) {
                brute = true;
                break;
            }
        }
        CHECK(index.any_point_near_segment(a, b, r) == brute);
    }
}

TEST_CASE("segment query honors the skip predicate") {
    std::vector<Vec3> pts = {Vec3(0.5, 0, 0), Vec3(0.7, 0.05, 0)};
    const NeighborIndex index(pts);
    const Vec3 a(0, 0, 0), b(1, 0, 0);
    CHECK(index.any_point_near_segment(a, b, 0.1));
    CHECK(!index.any_point_near_segment(
        a, b, 0.1, [](std::size_t) { return true; }));
    CHECK(index.any_point_near_segment(
        a, b, 0.1, [](std::size_t i) { return i == 0; }));
}

TEST_CASE("ply round trips float32 clouds bit-exactly in both formats") {
    PointCloud cloud;
    Rng rng(9);
    for (int i = 0; i < 257; ++i)
        cloud.points.emplace_back(rng.uniform(-50, 50), rng.uniform(-50, 50),
                                  rng.uniform(-50, 50));
    snap_cloud_f32(cloud);

    for (PlyFormat fmt : {PlyFormat::BinaryLittleEndian, PlyFormat::Ascii}) {
        const std::string path =
            (temp_dir() / (fmt == PlyFormat::Ascii ? "a.ply" : "b.ply"))
                .string();
        save_ply(path, cloud, fmt);
        const PointCloud back = load_ply(path);
        REQUIRE(back.size() == cloud.size());
        for (std::size_t i = 0; i < cloud.size(); ++i)
            CHECK(back.points[i] == cloud.points[i]);
    }
}

TEST_CASE("ply writes are byte-stable across repeats") {
    PointCloud cloud;
    cloud.points = {Vec3(1.25, -2.5, 3.75), Vec3(0, 0, 0)};
    const std::string p1 = (temp_dir() / "s1.ply").string();
    const std::string p2 = (temp_dir() / "s2.ply").string();
    save_ply(p1, cloud);
    save_ply(p2, cloud);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), {});
    const std::string b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);
    CHECK(!b1.empty());
}

TEST_CASE("ply loader rejects other layouts") {
    const std::string path = (temp_dir() / "bad.ply").string();
    {
        std::ofstream out(path);
        out << "ply\nformat ascii 1.0\nelement vertex 1\n"
               "property double x\nproperty double y\nproperty double z\n"
               "end_header\n1 2 3\n";
    }
    CHECK_THROWS_AS(load_ply(path), ParseError);
    CHECK_THROWS_AS(load_ply((temp_dir() / "missing.ply").string()), IoError);
}

TEST_CASE("obj round trips triangles") {
    std::vector<Triangle> tris;
    append_box(tris, Aabb{Vec3(-1, -2, 0), Vec3(3, 2, 5)});
    CHECK(tris.size() == 12);
    const std::string path = (temp_dir() / "box.obj").string();
    save_obj(path, tris);
    const auto back = load_obj(path);
    REQUIRE(back.size() == tris.size());
    double area = 0.0, area_back = 0.0;
    for (const auto& t : tris) area += t.area();
    for (const auto& t : back) area_back += t.area();
    CHECK(area_back == doctest::Approx(area).epsilon(1e-9));
}

TEST_CASE("open bottom box omits only the floor") {
    std::vector<Triangle> closed, open;
    const Aabb box{Vec3(0, 0, 0), Vec3(2, 2, 2)};
    append_box(closed, box);
    append_box_open_bottom(open, box);
    CHECK(open.size() == 10);
    double closed_area = 0.0, open_area = 0.0;
    for (const auto& t : closed) closed_area += t.area();
    for (const auto& t : open) open_area += t.area();
    CHECK(closed_area - open_area == doctest::Approx(4.0));
    for (const auto& t : open) {
        const bool floor = t.a.z() == 0.0 && t.b.z() == 0.0 && t.c.z() == 0.0;
        CHECK(!floor);
    }
}

TEST_CASE("scene loader enforces format and constraints") {
    const fs::path dir = temp_dir();
    std::vector<Triangle> tris;
    append_box(tris, Aabb{Vec3(-2, -2, 0), Vec3(2, 2, 2)});
    save_obj((dir / "mesh.obj").string(), tris);

    const auto write_scene = [&](const std::string& name,
                                 const std::string& body) {
        std::ofstream out(dir / name);
        out << body;
        return (dir / name).string();
    };

    const std::string good = write_scene("ok.json", R"({
      "format_version": 1,
      "ground_plane": true,
      "bounding_box": {"min": [-5, -5, 0], "max": [5, 5, 4]},
      "takeoff": {"position": [4, 0, 0], "yaw": 3.14},
      "meshes": ["mesh.obj"]
    })");
    const Scene scene = load_scene(good);
    CHECK(scene.triangles.size() == 12);
    CHECK(scene.ground_plane);
    CHECK(scene.takeoff.translation.x() == 4.0);

    const std::string bad_version = write_scene("v2.json", R"({
      "format_version": 2,
      "ground_plane": false,
      "bounding_box": {"min": [-5, -5, 0], "max": [5, 5, 4]},
      "takeoff": {"position": [4, 0, 0], "yaw": 0},
      "meshes": []
    })");
    CHECK_THROWS_AS(load_scene(bad_version), ParseError);

    const std::string unknown_key = write_scene("extra.json", R"({
      "format_version": 1,
      "ground_plane": false,
      "wind": 3,
      "bounding_box": {"min": [-5, -5, 0], "max": [5, 5, 4]},
      "takeoff": {"position": [4, 0, 0], "yaw": 0},
      "meshes": []
    })");
    CHECK_THROWS_AS(load_scene(unknown_key), ParseError);

    const std::string outside = write_scene("outside.json", R"({
      "format_version": 1,
      "ground_plane": false,
      "bounding_box": {"min": [-5, -5, 0], "max": [5, 5, 4]},
      "takeoff": {"position": [40, 0, 0], "yaw": 0},
      "meshes": ["mesh.obj"]
    })");
    CHECK_THROWS_AS(load_scene(outside), ValidationError);
}

TEST_CASE("validate_scene rejects degenerate triangles") {
    Scene scene;
    scene.bounds = Aabb{Vec3(-5, -5, 0), Vec3(5, 5, 4)};
    scene.takeoff = Pose::from_xyz_yaw(Vec3(1, 0, 0), 0.0);
    scene.triangles.push_back(
        Triangle{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)});
    CHECK_THROWS_AS(validate_scene(scene), ValidationError);
}

TEST_CASE("raycast returns nearest hit within range") {
    Scene scene;
    scene.triangles.push_back(
        Triangle{Vec3(5, -10, -10), Vec3(5, 10, -10), Vec3(5, 0, 20)});
    scene.triangles.push_back(
        Triangle{Vec3(8, -10, -10), Vec3(8, 10, -10), Vec3(8, 0, 20)});

    const auto hit = raycast(scene, Vec3::Zero(), Vec3(1, 0, 0), 20.0);
    REQUIRE(hit.has_value());
    CHECK(*hit == doctest::Approx(5.0).epsilon(1e-9));

    CHECK(!raycast(scene, Vec3::Zero(), Vec3(-1, 0, 0), 20.0).has_value());
    CHECK(!raycast(scene, Vec3::Zero(), Vec3(1, 0, 0), 4.0).has_value());
}

TEST_CASE("raycast hits the ground plane when enabled") {
    Scene scene;
    scene.ground_plane = true;
    const Vec3 origin(0, 0, 3);
    const Vec3 dir = Vec3(1, 0, -1).normalized();
    const auto hit = raycast(scene, origin, dir, 20.0);
    REQUIRE(hit.has_value());
    CHECK(*hit == doctest::Approx(3.0 * std::sqrt(2.0)).epsilon(1e-9));
    scene.ground_plane = false;
    CHECK(!raycast(scene, origin, dir, 20.0).has_value());
}

TEST_CASE("simulate_scan sees a wall at the expected ranges") {
    Scene scene;
    // A tall wide wall 6 m ahead (+x), normal facing the sensor.
    scene.triangles.push_back(
        Triangle{Vec3(6, -50, -50), Vec3(6, 50, -50), Vec3(6, 50, 50)});
    scene.triangles.push_back(
        Triangle{Vec3(6, -50, -50), Vec3(6, 50, 50), Vec3(6, -50, 50)});

    SensorModel model;
    model.horizontal_resolution = 60;
    model.vertical_resolution = 16;
    const Pose pose = Pose::identity();
    const PointCloud cloud = simulate_scan(scene, pose, model, 1);
    REQUIRE(!cloud.empty());
    // Every return lies on the x = 6 plane (sensor at origin, float32 snap).
    for (const Vec3& p : cloud.points)
        CHECK(p.x() == doctest::Approx(6.0).epsilon(1e-6));
}

TEST_CASE("simulate_scan is deterministic and respects the noise seed") {
    Scene scene;
    scene.ground_plane = true;
    SensorModel model;
    model.horizontal_resolution = 40;
    model.vertical_resolution = 8;
    model.range_noise_sigma_m = 0.02;
    const Pose pose = Pose::from_xyz_yaw(Vec3(0, 0, 4), 0.3);

    const PointCloud a = simulate_scan(scene, pose, model, 7);
    const PointCloud b = simulate_scan(scene, pose, model, 7);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a.points[i] == b.points[i]);

    const PointCloud c = simulate_scan(scene, pose, model, 8);
    REQUIRE(c.size() == a.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.points[i] != c.points[i]) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("scan of flat ground from altitude matches closed-form ranges") {
    Scene scene;
    scene.ground_plane = true;
    SensorModel model;
    model.horizontal_resolution = 24;
    model.vertical_resolution = 8;
    const double h = 5.0;
    const PointCloud cloud = simulate_scan(
        scene, Pose::from_translation(Vec3(0, 0, h)), model, 0);
    // All points lie on the ground (z = -h in the sensor frame).
    REQUIRE(!cloud.empty());
    for (const Vec3& p : cloud.points)
        CHECK(p.z() == doctest::Approx(-h).epsilon(1e-6));
}

TEST_CASE("platform integrates commands and drains the battery") {
    PlatformState s;
    s.battery_s = 1.0;
    s = step_platform(s, Vec3(1, 0, 0), 0.5, 0.5);
    CHECK(s.position.x() == doctest::Approx(0.5));
    CHECK(s.yaw == doctest::Approx(0.25));
    CHECK(s.elapsed_s == doctest::Approx(0.5));
    CHECK(s.battery_s == doctest::Approx(0.5));
    CHECK(!battery_exhausted(s));
    s = step_platform(s, Vec3::Zero(), 0.0, 0.75);
    CHECK(s.battery_s == 0.0);
    CHECK(battery_exhausted(s));
}

TEST_CASE("platform yaw wraps at pi") {
    PlatformState s;
    s.yaw = 3.0;
    s = step_platform(s, Vec3::Zero(), 1.0, 0.5);
    CHECK(s.yaw == doctest::Approx(3.5 - 2 * kPi));
}

TEST_CASE("drift is exact passthrough with a zero model") {
    const DriftModel model(0.0, 0.0, 0.0, 0.0, 4);
    Rng rng(1);
    const Pose a = Pose::from_xyz_yaw(Vec3(0, 0, 3), 0.2);
    const Pose b = Pose::from_xyz_yaw(Vec3(2, 1, 3), 0.4);
    const Pose inc = drifted_increment(a, b, model, rng);
    const Pose rel = compose(inverse(a), b);
    CHECK(translation_distance(inc, rel) < 1e-15);
    CHECK(rotation_distance(inc, rel) < 1e-12);
}

TEST_CASE("drift bias accumulates linearly with distance") {
    const DriftModel model(0.01, 0.0, 0.0, 0.0, 12);
    Rng rng(1);
    const Pose origin = Pose::identity();
    const Pose one = Pose::from_translation(Vec3(1, 0, 0));
    const Pose four = Pose::from_translation(Vec3(4, 0, 0));

    const Vec3 err1 =
        drifted_increment(origin, one, model, rng).translation - Vec3(1, 0, 0);
    const Vec3 err4 =
        drifted_increment(origin, four, model, rng).translation - Vec3(4, 0, 0);
    CHECK((err4 - 4.0 * err1).norm() < 1e-12);
    CHECK(err1.norm() > 0.0);
    CHECK((err1 - model.translation_bias).norm() < 1e-12);
}

TEST_CASE("drift white noise is seed-reproducible") {
    const DriftModel model(0.0, 0.0, 0.05, 0.001, 21);
    const Pose a = Pose::identity();
    const Pose b = Pose::from_translation(Vec3(3, 0, 0));
    Rng r1(9), r2(9);
    const Pose i1 = drifted_increment(a, b, model, r1);
    const Pose i2 = drifted_increment(a, b, model, r2);
    CHECK(translation_distance(i1, i2) == 0.0);
    CHECK(rotation_distance(i1, i2) < 1e-15);
}

TEST_CASE("zero length motion passes through untouched") {
    const DriftModel model(0.5, 0.5, 0.5, 0.5, 2);
    Rng rng(3);
    const Pose a = Pose::from_xyz_yaw(Vec3(1, 2, 3), 0.7);
    const Pose inc = drifted_increment(a, a, model, rng);
    CHECK(inc.translation.norm() == 0.0);
    CHECK(rotation_distance(inc, Pose::identity()) < 1e-12);
}
