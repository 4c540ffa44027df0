#include "icpguard/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "icpguard/errors.hpp"

namespace icpguard {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

bool parse_number(std::string_view tok, double& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

bool parse_index(std::string_view tok, long& out) {
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

bool skippable(const std::vector<std::string_view>& toks) {
  return toks.empty() || toks.front().front() == '#';
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  return in;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

PointCloud parse_xyz(std::istream& in, const std::string& source_name) {
  PointCloud cloud;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = split_ws(line);
    if (skippable(toks)) continue;
    if (toks.size() != 3) {
      throw ParseError(source_name, lineno,
                       "expected 3 numeric fields, found " + std::to_string(toks.size()));
    }
    Point3 p;
    for (int k = 0; k < 3; ++k) {
      if (!parse_number(toks[static_cast<std::size_t>(k)], p[k])) {
        throw ParseError(source_name, lineno,
                         "field '" + std::string(toks[static_cast<std::size_t>(k)]) +
                             "' is not a finite number");
      }
    }
    cloud.points.push_back(p);
  }
  return cloud;
}

PointCloud read_xyz(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_xyz(in, path.string());
}

void write_xyz(std::ostream& out, const PointCloud& cloud) {
  for (const auto& p : cloud.points) {
    out << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z())
        << '\n';
  }
}

void write_xyz(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  write_xyz(out, cloud);
}

TriangleMesh parse_obj(std::istream& in, const std::string& source_name) {
  TriangleMesh mesh;
  std::string line;
  std::size_t lineno = 0;
  struct PendingFace {
    std::array<long, 3> idx;
    std::size_t line;
  };
  std::vector<PendingFace> pending;
  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = split_ws(line);
    if (skippable(toks)) continue;
    if (toks[0] == "v") {
      if (toks.size() != 4) throw ParseError(source_name, lineno, "vertex needs 3 coordinates");
      Point3 p;
      for (int k = 0; k < 3; ++k) {
        if (!parse_number(toks[static_cast<std::size_t>(k) + 1], p[k])) {
          throw ParseError(source_name, lineno, "bad vertex coordinate");
        }
      }
      mesh.vertices.push_back(p);
    } else if (toks[0] == "f") {
      if (toks.size() != 4) {
        throw ParseError(source_name, lineno,
                         "face has " + std::to_string(toks.size() - 1) +
                             " vertices; only triangles are supported");
      }
      PendingFace f{{}, lineno};
      for (int k = 0; k < 3; ++k) {
        if (!parse_index(toks[static_cast<std::size_t>(k) + 1], f.idx[static_cast<std::size_t>(k)]) ||
            f.idx[static_cast<std::size_t>(k)] < 1) {
          throw ParseError(source_name, lineno, "bad face index");
        }
      }
      pending.push_back(f);
    } else {
      throw ParseError(source_name, lineno,
                       "unsupported directive '" + std::string(toks[0]) + "'");
    }
  }
  for (const auto& f : pending) {
    std::array<int, 3> face{};
    for (int k = 0; k < 3; ++k) {
      const long i = f.idx[static_cast<std::size_t>(k)];
      if (i > static_cast<long>(mesh.vertices.size())) {
        throw ParseError(source_name, f.line, "face index out of range");
      }
      face[static_cast<std::size_t>(k)] = static_cast<int>(i - 1);
    }
    mesh.faces.push_back(face);
  }
  return mesh;
}

TriangleMesh read_obj(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_obj(in, path.string());
}

void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  for (const auto& v : mesh.vertices) {
    out << "v " << format_double(v.x()) << ' ' << format_double(v.y()) << ' '
        << format_double(v.z()) << '\n';
  }
  for (const auto& f : mesh.faces) {
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  }
}

}  // namespace icpguard
