#ifndef BV_MESH_HPP
#define BV_MESH_HPP

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "bv/geometry.hpp"

namespace bv {

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<int> materials;  // optional per-triangle material id; empty or same length

    bool empty() const { return triangles.empty(); }
    void append(const TriangleMesh& other);
    Vec3 triangle_normal(int t) const;
    double triangle_area(int t) const;
};

// Drops triangles with out-of-range indices or area <= 1e-12 m^2.
void clean_mesh(TriangleMesh& mesh);

// ASCII OBJ: v/f records (faces fan-triangulated), usemtl mapped to material
// ids in order of appearance.
TriangleMesh load_obj(const std::filesystem::path& path);
void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh);

// Binary little-endian PLY with float vertex positions and int vertex_indices.
TriangleMesh load_ply(const std::filesystem::path& path);
void save_ply(const std::filesystem::path& path, const TriangleMesh& mesh);

// Dispatch by extension (.obj / .ply); cleans degenerate triangles.
TriangleMesh load_mesh(const std::filesystem::path& path);

}  // namespace bv

#endif
