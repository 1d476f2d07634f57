#include "aeromap/scene.hpp"

#include "aeromap/errors.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace aeromap {
namespace {

using nlohmann::json;

Vec3 parse_vec3(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 3)
        throw ParseError("scene: " + what + " must be a 3-element array");
    for (const auto& v : j) {
        if (!v.is_number())
            throw ParseError("scene: " + what + " must contain numbers");
    }
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const std::string& where) {
    for (const auto& item : j.items()) {
        if (!known.count(item.key()))
            throw ParseError("scene: unknown key '" + item.key() + "' in " +
                             where);
    }
}

}  // namespace

void validate_scene(const Scene& scene) {
    for (std::size_t i = 0; i < scene.triangles.size(); ++i) {
        const Triangle& t = scene.triangles[i];
        if (!t.a.allFinite() || !t.b.allFinite() || !t.c.allFinite())
            throw ValidationError("scene: non-finite triangle " +
                                  std::to_string(i));
        if (t.area() <= 1e-12)
            throw ValidationError("scene: degenerate triangle " +
                                  std::to_string(i));
    }
    if ((scene.bounds.max - scene.bounds.min).minCoeff() <= 0.0)
        throw ValidationError("scene: bounding box has non-positive extent");
    if (!scene.bounds.contains_xy(scene.takeoff.translation))
        throw ValidationError(
            "scene: takeoff position outside bounding box footprint");
}

Scene load_scene(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("scene: cannot open: " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("scene: invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError("scene: root must be an object");
    reject_unknown_keys(doc,
                        {"format_version", "ground_plane", "bounding_box",
                         "takeoff", "meshes"},
                        "scene document");
    if (!doc.contains("format_version") ||
        !doc["format_version"].is_number_integer() ||
        doc["format_version"].get<int>() != 1)
        throw ParseError("scene: format_version must be 1");

    Scene scene;
    scene.ground_plane = doc.value("ground_plane", false);

    if (!doc.contains("bounding_box") || !doc["bounding_box"].is_object())
        throw ParseError("scene: missing bounding_box object");
    const json& bb = doc["bounding_box"];
    reject_unknown_keys(bb, {"min", "max"}, "bounding_box");
    scene.bounds.min = parse_vec3(bb.at("min"), "bounding_box.min");
    scene.bounds.max = parse_vec3(bb.at("max"), "bounding_box.max");

    if (!doc.contains("takeoff") || !doc["takeoff"].is_object())
        throw ParseError("scene: missing takeoff object");
    const json& to = doc["takeoff"];
    reject_unknown_keys(to, {"position", "yaw"}, "takeoff");
    scene.takeoff = Pose::from_xyz_yaw(
        parse_vec3(to.at("position"), "takeoff.position"),
        to.value("yaw", 0.0));

    if (doc.contains("meshes")) {
        if (!doc["meshes"].is_array())
            throw ParseError("scene: meshes must be an array of file paths");
        const auto base = std::filesystem::path(path).parent_path();
        for (const auto& entry : doc["meshes"]) {
            if (!entry.is_string())
                throw ParseError("scene: mesh entries must be strings");
            const auto mesh_path =
                base / std::filesystem::path(entry.get<std::string>());
            const auto tris = load_obj(mesh_path.string());
            scene.triangles.insert(scene.triangles.end(), tris.begin(),
                                   tris.end());
        }
    }

    validate_scene(scene);
    return scene;
}

std::vector<Triangle> load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("obj: cannot open: " + path);

    std::vector<Vec3> vertices;
    std::vector<Triangle> triangles;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag.empty() || tag == "#") continue;
        if (tag == "v") {
            double x, y, z;
            if (!(ls >> x >> y >> z))
                throw ParseError("obj: bad vertex at line " +
                                 std::to_string(line_no));
            vertices.emplace_back(x, y, z);
        } else if (tag == "f") {
            std::string field;
            std::size_t idx[3];
            int n = 0;
            while (ls >> field) {
                if (n >= 3)
                    throw ParseError("obj: non-triangle face at line " +
                                     std::to_string(line_no));
                // Face fields may carry /vt/vn suffixes; only the vertex
                // index is used.
                long v = 0;
                try {
                    v = std::stol(field.substr(0, field.find('/')));
                } catch (const std::exception&) {
                    throw ParseError("obj: bad face index at line " +
                                     std::to_string(line_no));
                }
                if (v < 1 || static_cast<std::size_t>(v) > vertices.size())
                    throw ParseError("obj: face index out of range at line " +
                                     std::to_string(line_no));
                idx[n++] = static_cast<std::size_t>(v - 1);
            }
            if (n != 3)
                throw ParseError("obj: non-triangle face at line " +
                                 std::to_string(line_no));
            triangles.push_back(
                Triangle{vertices[idx[0]], vertices[idx[1]], vertices[idx[2]]});
        }
        // vn / vt / o / g / s / usemtl / mtllib carry no geometry here.
    }
    return triangles;
}

void save_obj(const std::string& path, const std::vector<Triangle>& triangles) {
    std::ofstream out(path);
    if (!out) throw IoError("obj: cannot open for writing: " + path);
    char buf[160];
    for (const Triangle& t : triangles) {
        for (const Vec3* v : {&t.a, &t.b, &t.c}) {
            std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", v->x(),
                          v->y(), v->z());
            out << buf;
        }
    }
    for (std::size_t i = 0; i < triangles.size(); ++i) {
        out << "f " << 3 * i + 1 << ' ' << 3 * i + 2 << ' ' << 3 * i + 3
            << '\n';
    }
    if (!out) throw IoError("obj: write failed: " + path);
}

namespace {

void append_quad(std::vector<Triangle>& tris, const Vec3& p0, const Vec3& p1,
                 const Vec3& p2, const Vec3& p3) {
    tris.push_back(Triangle{p0, p1, p2});
    tris.push_back(Triangle{p0, p2, p3});
}

}  // namespace

void append_box(std::vector<Triangle>& tris, const Aabb& box) {
    append_box_open_bottom(tris, box);
    const Vec3& l = box.min;
    const Vec3& h = box.max;
    // -z face, outward normal downward.
    append_quad(tris, {l.x(), l.y(), l.z()}, {l.x(), h.y(), l.z()},
                {h.x(), h.y(), l.z()}, {h.x(), l.y(), l.z()});
}

void append_box_open_bottom(std::vector<Triangle>& tris, const Aabb& box) {
    const Vec3& l = box.min;
    const Vec3& h = box.max;
    // +z
    append_quad(tris, {l.x(), l.y(), h.z()}, {h.x(), l.y(), h.z()},
                {h.x(), h.y(), h.z()}, {l.x(), h.y(), h.z()});
    // -x
    append_quad(tris, {l.x(), l.y(), l.z()}, {l.x(), l.y(), h.z()},
                {l.x(), h.y(), h.z()}, {l.x(), h.y(), l.z()});
    // +x
    append_quad(tris, {h.x(), l.y(), l.z()}, {h.x(), h.y(), l.z()},
                {h.x(), h.y(), h.z()}, {h.x(), l.y(), h.z()});
    // -y
    append_quad(tris, {l.x(), l.y(), l.z()}, {h.x(), l.y(), l.z()},
                {h.x(), l.y(), h.z()}, {l.x(), l.y(), h.z()});
    // +y
    append_quad(tris, {l.x(), h.y(), l.z()}, {l.x(), h.y(), h.z()},
                {h.x(), h.y(), h.z()}, {h.x(), h.y(), l.z()});
}

}  // namespace aeromap
