#include "aeromap/ply.hpp"

#include "aeromap/errors.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace aeromap {
namespace {

void write_f32_le(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    const char bytes[4] = {
        static_cast<char>(bits & 0xff),
        static_cast<char>((bits >> 8) & 0xff),
        static_cast<char>((bits >> 16) & 0xff),
        static_cast<char>((bits >> 24) & 0xff),
    };
    out.write(bytes, 4);
}

float read_f32_le(std::istream& in) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    if (!in) throw ParseError("ply: truncated binary vertex data");
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[0]) |
                               (static_cast<std::uint32_t>(bytes[1]) << 8) |
                               (static_cast<std::uint32_t>(bytes[2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[3]) << 24);
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

bool is_float32_type(const std::string& t) { return t == "float" || t == "float32"; }

}  // namespace

void save_ply(const std::string& path, const PointCloud& cloud,
              PlyFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("ply: cannot open for writing: " + path);

    out << "ply\n";
    out << "format "
        << (format == PlyFormat::Ascii ? "ascii" : "binary_little_endian")
        << " 1.0\n";
    out << "element vertex " << cloud.points.size() << "\n";
    out << "property float x\n";
    out << "property float y\n";
    out << "property float z\n";
    out << "end_header\n";

    if (format == PlyFormat::Ascii) {
        char line[96];
        for (const Vec3& p : cloud.points) {
            // 9 significant digits round-trip a float32 exactly.
            std::snprintf(line, sizeof line, "%.9g %.9g %.9g\n",
                          static_cast<double>(static_cast<float>(p.x())),
                          static_cast<double>(static_cast<float>(p.y())),
                          static_cast<double>(static_cast<float>(p.z())));
            out << line;
        }
    } else {
        for (const Vec3& p : cloud.points) {
            write_f32_le(out, static_cast<float>(p.x()));
            write_f32_le(out, static_cast<float>(p.y()));
            write_f32_le(out, static_cast<float>(p.z()));
        }
    }
    if (!out) throw IoError("ply: write failed: " + path);
}

PointCloud load_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("ply: cannot open: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ParseError("ply: empty file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "ply") throw ParseError("ply: missing magic line: " + path);

    bool binary = false;
    bool format_seen = false;
    std::size_t vertex_count = 0;
    bool vertex_seen = false;
    std::vector<std::string> property_names;
    bool header_done = false;

    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string keyword;
        ls >> keyword;
        if (keyword == "comment" || keyword.empty()) continue;
        if (keyword == "format") {
            std::string fmt, version;
            ls >> fmt >> version;
            if (fmt == "ascii") binary = false;
            else if (fmt == "binary_little_endian") binary = true;
            else throw ParseError("ply: unsupported format '" + fmt + "'");
            format_seen = true;
        } else if (keyword == "element") {
            std::string name;
            long long count = -1;
            ls >> name >> count;
            if (name != "vertex" || vertex_seen || count < 0)
                throw ParseError("ply: only a single vertex element is supported");
            vertex_seen = true;
            vertex_count = static_cast<std::size_t>(count);
        } else if (keyword == "property") {
            std::string type, name;
            ls >> type >> name;
            if (!vertex_seen)
                throw ParseError("ply: property before vertex element");
            if (!is_float32_type(type))
                throw ParseError("ply: unsupported property type '" + type + "'");
            property_names.push_back(name);
        } else if (keyword == "end_header") {
            header_done = true;
            break;
        } else {
            throw ParseError("ply: unsupported header line '" + line + "'");
        }
    }
    if (!header_done) throw ParseError("ply: missing end_header: " + path);
    if (!format_seen) throw ParseError("ply: missing format line: " + path);
    if (!vertex_seen) throw ParseError("ply: missing vertex element: " + path);
    if (property_names != std::vector<std::string>{"x", "y", "z"})
        throw ParseError("ply: vertex properties must be exactly float x, y, z");

    PointCloud cloud;
    cloud.points.reserve(vertex_count);
    if (binary) {
        for (std::size_t i = 0; i < vertex_count; ++i) {
            const float x = read_f32_le(in);
            const float y = read_f32_le(in);
            const float z = read_f32_le(in);
            cloud.points.emplace_back(x, y, z);
        }
    } else {
        for (std::size_t i = 0; i < vertex_count; ++i) {
            float x, y, z;
            if (!(in >> x >> y >> z))
                throw ParseError("ply: truncated ascii vertex data");
            cloud.points.emplace_back(x, y, z);
        }
    }
    for (const Vec3& p : cloud.points) {
        if (!p.allFinite()) throw ParseError("ply: non-finite coordinate");
    }
    return cloud;
}

}  // namespace aeromap
