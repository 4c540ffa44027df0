#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "icpguard/geometry.hpp"

namespace icpguard {

// ASCII cloud: one "x y z" per line, '#' comments and blank lines allowed.
PointCloud parse_xyz(std::istream& in, const std::string& source_name = "<stream>");
PointCloud read_xyz(const std::filesystem::path& path);
void write_xyz(std::ostream& out, const PointCloud& cloud);
void write_xyz(const std::filesystem::path& path, const PointCloud& cloud);

// OBJ subset: "v x y z" and triangular "f i j k" (1-based) lines.
TriangleMesh parse_obj(std::istream& in, const std::string& source_name = "<stream>");
TriangleMesh read_obj(const std::filesystem::path& path);
void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh);

// Shortest text form that parses back to the same double.
std::string format_double(double v);

}  // namespace icpguard
