#pragma once

#include "aeromap/geometry.hpp"

#include <string>

namespace aeromap {

enum class PlyFormat { Ascii, BinaryLittleEndian };

/// Writes `element vertex` with float32 x, y, z. Coordinates are stored at
/// float32 precision, so a cloud that is already float32-snapped round-trips
/// bit-exactly in either format.
void save_ply(const std::string& path, const PointCloud& cloud,
              PlyFormat format = PlyFormat::BinaryLittleEndian);

/// Accepts ascii and binary_little_endian files whose only element is
/// `vertex` with exactly float32 x, y, z. Any other layout raises ParseError.
PointCloud load_ply(const std::string& path);

}  // namespace aeromap
