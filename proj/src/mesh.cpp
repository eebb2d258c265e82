#include "bv/mesh.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "bv/errors.hpp"
#include "bv/io.hpp"

namespace bv {

void TriangleMesh::append(const TriangleMesh& other) {
    int base = int(vertices.size());
    vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
    bool have_mat = !materials.empty() || !other.materials.empty();
    if (have_mat && materials.size() < triangles.size()) materials.resize(triangles.size(), 0);
    for (size_t t = 0; t < other.triangles.size(); ++t) {
        const auto& tri = other.triangles[t];
        triangles.push_back({tri[0] + base, tri[1] + base, tri[2] + base});
        if (have_mat)
            materials.push_back(t < other.materials.size() ? other.materials[t] : 0);
    }
}

Vec3 TriangleMesh::triangle_normal(int t) const {
    const auto& tri = triangles[size_t(t)];
    Vec3 a = vertices[size_t(tri[0])], b = vertices[size_t(tri[1])], c = vertices[size_t(tri[2])];
    return (b - a).cross(c - a).normalized();
}

double TriangleMesh::triangle_area(int t) const {
    const auto& tri = triangles[size_t(t)];
    Vec3 a = vertices[size_t(tri[0])], b = vertices[size_t(tri[1])], c = vertices[size_t(tri[2])];
    return 0.5 * (b - a).cross(c - a).norm();
}

void clean_mesh(TriangleMesh& mesh) {
    std::vector<std::array<int, 3>> kept;
    std::vector<int> kept_mat;
    int n = int(mesh.vertices.size());
    for (size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        if (tri[0] < 0 || tri[1] < 0 || tri[2] < 0 || tri[0] >= n || tri[1] >= n || tri[2] >= n)
            continue;
        if (mesh.triangle_area(int(t)) <= 1e-12) continue;
        kept.push_back(tri);
        if (!mesh.materials.empty()) kept_mat.push_back(mesh.materials[t]);
    }
    mesh.triangles = std::move(kept);
    mesh.materials = std::move(kept_mat);
}

TriangleMesh load_obj(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingInput("cannot open mesh file: " + path.string());
    TriangleMesh mesh;
    std::map<std::string, int> mat_ids;
    int cur_mat = 0;
    bool any_mat = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        if (tok == "v") {
            Vec3 p;
            if (!(ss >> p.x >> p.y >> p.z))
                throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad vertex");
            mesh.vertices.push_back(p);
        } else if (tok == "f") {
            std::vector<int> idx;
            std::string f;
            while (ss >> f) {
                // accept v, v/vt, v//vn, v/vt/vn
                size_t slash = f.find('/');
                int vi = std::stoi(slash == std::string::npos ? f : f.substr(0, slash));
                if (vi < 0) vi = int(mesh.vertices.size()) + vi + 1;  // relative indexing
                idx.push_back(vi - 1);
            }
            if (idx.size() < 3)
                throw ParseError(path.string() + ":" + std::to_string(lineno) +
                                 ": face with fewer than 3 vertices");
            for (size_t k = 1; k + 1 < idx.size(); ++k) {
                mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
                mesh.materials.push_back(cur_mat);
            }
        } else if (tok == "usemtl") {
            std::string name;
            ss >> name;
            auto [it, inserted] = mat_ids.emplace(name, int(mat_ids.size()));
            cur_mat = it->second;
            any_mat = true;
        }
        // o/g/s/mtllib/vn/vt/# silently skipped
    }
    if (!any_mat) mesh.materials.clear();
    return mesh;
}

void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
    std::ostringstream out;
    out.precision(10);
    for (const Vec3& v : mesh.vertices) out << "v " << v.x << " " << v.y << " " << v.z << "\n";
    int cur_mat = -1;
    for (size_t t = 0; t < mesh.triangles.size(); ++t) {
        if (!mesh.materials.empty() && mesh.materials[t] != cur_mat) {
            cur_mat = mesh.materials[t];
            out << "usemtl mat" << cur_mat << "\n";
        }
        const auto& tri = mesh.triangles[t];
        out << "f " << tri[0] + 1 << " " << tri[1] + 1 << " " << tri[2] + 1 << "\n";
    }
    atomic_write(path, out.str());
}

TriangleMesh load_ply(const std::filesystem::path& path) {
    std::string bytes = read_text_file(path);
    size_t hdr_end = bytes.find("end_header\n");
    if (bytes.rfind("ply", 0) != 0 || hdr_end == std::string::npos)
        throw ParseError(path.string() + ": not a PLY file");
    std::istringstream hdr(bytes.substr(0, hdr_end));
    std::string line;
    long n_vert = -1, n_face = -1;
    bool little_endian = false;
    while (std::getline(hdr, line)) {
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        if (tok == "format") {
            std::string fmt;
            ss >> fmt;
            little_endian = (fmt == "binary_little_endian");
        } else if (tok == "element") {
            std::string what;
            long n;
            ss >> what >> n;
            if (what == "vertex") n_vert = n;
            if (what == "face") n_face = n;
        }
    }
    if (!little_endian) throw ParseError(path.string() + ": only binary little-endian PLY supported");
    if (n_vert < 0 || n_face < 0) throw ParseError(path.string() + ": missing element counts");

    const char* p = bytes.data() + hdr_end + 11;
    const char* end = bytes.data() + bytes.size();
    TriangleMesh mesh;
    mesh.vertices.reserve(size_t(n_vert));
    for (long i = 0; i < n_vert; ++i) {
        if (p + 12 > end) throw ParseError(path.string() + ": truncated vertex data");
        float xyz[3];
        std::memcpy(xyz, p, 12);
        p += 12;
        mesh.vertices.push_back({xyz[0], xyz[1], xyz[2]});
    }
    for (long i = 0; i < n_face; ++i) {
        if (p + 1 > end) throw ParseError(path.string() + ": truncated face data");
        unsigned char k = static_cast<unsigned char>(*p++);
        if (p + 4 * k > end) throw ParseError(path.string() + ": truncated face data");
        std::vector<int> idx(k);
        std::memcpy(idx.data(), p, size_t(4) * k);
        p += size_t(4) * k;
        for (size_t j = 1; j + 1 < idx.size(); ++j)
            mesh.triangles.push_back({idx[0], idx[j], idx[j + 1]});
    }
    return mesh;
}

void save_ply(const std::filesystem::path& path, const TriangleMesh& mesh) {
    std::ostringstream out;
    out << "ply\nformat binary_little_endian 1.0\n"
        << "element vertex " << mesh.vertices.size() << "\n"
        << "property float x\nproperty float y\nproperty float z\n"
        << "element face " << mesh.triangles.size() << "\n"
        << "property list uchar int vertex_indices\nend_header\n";
    for (const Vec3& v : mesh.vertices) {
        float xyz[3] = {float(v.x), float(v.y), float(v.z)};
        out.write(reinterpret_cast<const char*>(xyz), 12);
    }
    for (const auto& tri : mesh.triangles) {
        unsigned char k = 3;
        out.write(reinterpret_cast<const char*>(&k), 1);
        out.write(reinterpret_cast<const char*>(tri.data()), 12);
    }
    atomic_write(path, out.str());
}

TriangleMesh load_mesh(const std::filesystem::path& path) {
    TriangleMesh mesh;
    std::string ext = path.extension().string();
    if (ext == ".obj")
        mesh = load_obj(path);
    else if (ext == ".ply")
        mesh = load_ply(path);
    else
        throw ParseError("unsupported mesh format: " + path.string());
    clean_mesh(mesh);
    return mesh;
}

}  // namespace bv
