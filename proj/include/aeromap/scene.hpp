#pragma once

#include "aeromap/geometry.hpp"

#include <string>
#include <vector>

namespace aeromap {

struct Triangle {
    Vec3 a;
    Vec3 b;
    Vec3 c;

    double area() const { return 0.5 * (b - a).cross(c - a).norm(); }
    Vec3 normal() const { return (b - a).cross(c - a).normalized(); }
};

/// Synthetic survey site: triangle meshes in the world frame, an optional
/// infinite ground plane at z = 0, the site bounding box that delimits the
/// mapping target, and the takeoff pose.
struct Scene {
    std::vector<Triangle> triangles;
    bool ground_plane = false;
    Aabb bounds;
    Pose takeoff;
};

/// Raises ValidationError for non-finite or degenerate triangles
/// (area <= 1e-12 m^2) or a takeoff position outside the box footprint.
void validate_scene(const Scene& scene);

/// Reads the JSON scene document (format_version 1): mesh file references
/// (OBJ, resolved relative to the scene file), ground plane flag, site
/// bounding box, and takeoff pose. ParseError on malformed input,
/// ValidationError on constraint violations.
Scene load_scene(const std::string& path);

/// Parses an OBJ restricted to triangle geometry: `v` and 3-vertex `f`
/// records (normals, texcoords, groups and materials are ignored).
std::vector<Triangle> load_obj(const std::string& path);

void save_obj(const std::string& path, const std::vector<Triangle>& triangles);

/// Axis-aligned box as 12 triangles with outward normals.
void append_box(std::vector<Triangle>& triangles, const Aabb& box);

/// Box without its -z face, for obstacles that sit on another surface
/// (their undersides are unreachable and would distort coverage).
void append_box_open_bottom(std::vector<Triangle>& triangles, const Aabb& box);

}  // namespace aeromap
