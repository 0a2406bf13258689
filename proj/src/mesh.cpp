#include "gradsurf/mesh.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>

#include "gradsurf/error.hpp"

namespace gradsurf {

double TriangleMesh::face_area(std::size_t f) const {
  const auto& t = faces[f];
  return 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
}

double TriangleMesh::total_area() const {
  double a = 0.0;
  for (std::size_t f = 0; f < faces.size(); ++f) a += face_area(f);
  return a;
}

Eigen::Vector3d ScalarGrid::cell_size() const {
  return {(hi.x() - lo.x()) / (nx - 1), (hi.y() - lo.y()) / (ny - 1), (hi.z() - lo.z()) / (nz - 1)};
}

Eigen::Vector3d ScalarGrid::point(int i, int j, int k) const {
  const Eigen::Vector3d h = cell_size();
  return lo + Eigen::Vector3d(i * h.x(), j * h.y(), k * h.z());
}

ScalarGrid sample_grid(const std::function<double(const Eigen::Vector3d&)>& field, int resolution,
                       const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  ScalarGrid g;
  g.nx = g.ny = g.nz = resolution;
  g.lo = lo;
  g.hi = hi;
  g.values.resize(static_cast<std::size_t>(resolution) * resolution * resolution);
  std::size_t idx = 0;
  for (int k = 0; k < resolution; ++k)
    for (int j = 0; j < resolution; ++j)
      for (int i = 0; i < resolution; ++i) g.values[idx++] = field(g.point(i, j, k));
  return g;
}

namespace {

constexpr std::array<std::array<int, 3>, 8> kCorner = {{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}};

constexpr std::array<std::array<int, 2>, 12> kEdge = {{
    {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6}, {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}}};

constexpr std::array<std::array<int, 4>, 6> kFace = {{
    {0, 1, 2, 3}, {4, 5, 6, 7}, {0, 1, 5, 4}, {3, 2, 6, 7}, {0, 3, 7, 4}, {1, 2, 6, 5}}};

int edge_between(int a, int b) {
  for (int e = 0; e < 12; ++e)
    if ((kEdge[e][0] == a && kEdge[e][1] == b) || (kEdge[e][0] == b && kEdge[e][1] == a)) return e;
  return -1;
}

Eigen::Vector3d corner_pos(int c) { return Eigen::Vector3d(kCorner[c][0], kCorner[c][1], kCorner[c][2]); }
Eigen::Vector3d edge_mid(int e) { return 0.5 * (corner_pos(kEdge[e][0]) + corner_pos(kEdge[e][1])); }

using CaseTable = std::array<std::vector<std::array<int, 3>>, 256>;

// Builds the case table by tracing the iso-contour over the six cube faces.
// Each face contributes oriented segments between its sign-changing edges;
// on faces with four crossings the inside corners are always separated, which
// depends only on that face's signs, so neighbouring cells agree and the
// resulting surface is closed. Segments are oriented so that, seen from
// outside the cube, the inside corners lie to their right; the chained loops
// then fan into triangles whose normals point toward positive values.
CaseTable build_case_table() {
  CaseTable table;
  for (int mask = 0; mask < 256; ++mask) {
    auto inside = [mask](int c) { return (mask >> c) & 1; };
    std::array<int, 12> next;
    next.fill(-1);
    auto add_segment = [&](int ea, int eb, const Eigen::Vector3d& p_in, const Eigen::Vector3d& normal) {
      const Eigen::Vector3d m = 0.5 * (edge_mid(ea) + edge_mid(eb));
      const Eigen::Vector3d s = edge_mid(eb) - edge_mid(ea);
      if (s.cross(p_in - m).dot(normal) < 0.0)
        next[ea] = eb;
      else
        next[eb] = ea;
    };
    for (const auto& face : kFace) {
      Eigen::Vector3d center = Eigen::Vector3d::Zero();
      for (int c : face) center += corner_pos(c);
      center /= 4.0;
      const Eigen::Vector3d normal = center - Eigen::Vector3d::Constant(0.5);
      std::vector<int> crossings;
      for (int k = 0; k < 4; ++k) {
        const int a = face[k], b = face[(k + 1) % 4];
        if (inside(a) != inside(b)) crossings.push_back(edge_between(a, b));
      }
      if (crossings.size() == 2) {
        Eigen::Vector3d p_in = Eigen::Vector3d::Zero();
        int n_in = 0;
        for (int c : face)
          if (inside(c)) {
            p_in += corner_pos(c);
            ++n_in;
          }
        add_segment(crossings[0], crossings[1], p_in / n_in, normal);
      } else if (crossings.size() == 4) {
        for (int k = 0; k < 4; ++k) {
          const int c = face[k];
          if (!inside(c)) continue;
          const int e_prev = edge_between(face[(k + 3) % 4], c);
          const int e_next = edge_between(c, face[(k + 1) % 4]);
          add_segment(e_prev, e_next, corner_pos(c), normal);
        }
      }
    }
    std::array<bool, 12> used{};
    for (int start = 0; start < 12; ++start) {
      if (next[start] < 0 || used[start]) continue;
      std::vector<int> loop;
      for (int e = start; !used[e]; e = next[e]) {
        used[e] = true;
        loop.push_back(e);
      }
      for (std::size_t i = 1; i + 1 < loop.size(); ++i) table[mask].push_back({loop[0], loop[i], loop[i + 1]});
    }
  }
  return table;
}

const CaseTable& case_table() {
  static const CaseTable table = build_case_table();
  return table;
}

}  // namespace

int marching_cubes_case_triangles(int mask) { return static_cast<int>(case_table().at(mask).size()); }

TriangleMesh marching_cubes(const ScalarGrid& grid) {
  if (grid.nx < 2 || grid.ny < 2 || grid.nz < 2) throw Error("mesh_eval", "grid too small for marching cubes");
  bool any_in = false, any_out = false;
  for (double v : grid.values) {
    if (!std::isfinite(v)) throw Error("mesh_eval", "non-finite field value on the grid");
    (v < 0.0 ? any_in : any_out) = true;
  }
  if (!any_in || !any_out) throw Error("mesh_eval", "empty level set");

  const CaseTable& table = case_table();
  TriangleMesh mesh;
  std::unordered_map<std::int64_t, int> edge_vertex;
  auto lattice_id = [&](int i, int j, int k) {
    return (static_cast<std::int64_t>(k) * grid.ny + j) * grid.nx + i;
  };
  auto vertex_on_edge = [&](int i, int j, int k, int e) {
    const auto& ca = kCorner[kEdge[e][0]];
    const auto& cb = kCorner[kEdge[e][1]];
    int ia = i + ca[0], ja = j + ca[1], ka = k + ca[2];
    int ib = i + cb[0], jb = j + cb[1], kb = k + cb[2];
    std::int64_t la = lattice_id(ia, ja, ka), lb = lattice_id(ib, jb, kb);
    if (lb < la) {
      std::swap(la, lb);
      std::swap(ia, ib);
      std::swap(ja, jb);
      std::swap(ka, kb);
    }
    const int axis = ia != ib ? 0 : (ja != jb ? 1 : 2);
    const std::int64_t key = la * 3 + axis;
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    const double fa = grid.at(ia, ja, ka), fb = grid.at(ib, jb, kb);
    const double t = fa / (fa - fb);
    const Eigen::Vector3d p = grid.point(ia, ja, ka) + t * (grid.point(ib, jb, kb) - grid.point(ia, ja, ka));
    const int id = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(p);
    edge_vertex.emplace(key, id);
    return id;
  };

  for (int k = 0; k + 1 < grid.nz; ++k) {
    for (int j = 0; j + 1 < grid.ny; ++j) {
      for (int i = 0; i + 1 < grid.nx; ++i) {
        int mask = 0;
        for (int c = 0; c < 8; ++c)
          if (grid.at(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]) < 0.0) mask |= 1 << c;
        for (const auto& tri : table[mask]) {
          const std::array<int, 3> f = {vertex_on_edge(i, j, k, tri[0]), vertex_on_edge(i, j, k, tri[1]),
                                        vertex_on_edge(i, j, k, tri[2])};
          mesh.faces.push_back(f);
          if (mesh.face_area(mesh.faces.size() - 1) < 1e-12) mesh.faces.pop_back();
        }
      }
    }
  }

  // Drop vertices only referenced by removed degenerate faces.
  std::vector<int> remap(mesh.vertices.size(), -1);
  TriangleMesh out;
  for (auto f : mesh.faces) {
    for (int& v : f) {
      if (remap[v] < 0) {
        remap[v] = static_cast<int>(out.vertices.size());
        out.vertices.push_back(mesh.vertices[v]);
      }
      v = remap[v];
    }
    out.faces.push_back(f);
  }
  return out;
}

TriangleMesh crop_mesh(const TriangleMesh& mesh, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  if ((hi.array() < lo.array()).any()) throw Error("mesh_eval", "crop box has hi < lo");
  TriangleMesh out;
  std::vector<int> remap(mesh.vertices.size(), -1);
  for (const auto& f : mesh.faces) {
    const Eigen::Vector3d c = (mesh.vertices[f[0]] + mesh.vertices[f[1]] + mesh.vertices[f[2]]) / 3.0;
    if ((c.array() < lo.array()).any() || (c.array() > hi.array()).any()) continue;
    std::array<int, 3> g;
    for (int k = 0; k < 3; ++k) {
      if (remap[f[k]] < 0) {
        remap[f[k]] = static_cast<int>(out.vertices.size());
        out.vertices.push_back(mesh.vertices[f[k]]);
      }
      g[k] = remap[f[k]];
    }
    out.faces.push_back(g);
  }
  if (out.faces.empty()) throw Error("mesh_eval", "crop box contains no faces");
  return out;
}

TriangleMesh align_mesh(const TriangleMesh& mesh, const SimilarityTransform& transform) {
  const Eigen::Matrix3d& r = transform.rotation;
  if (!(transform.scale > 0.0) || !std::isfinite(transform.scale))
    throw Error("mesh_eval", "similarity transform needs a positive finite scale");
  if ((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
      std::abs(std::abs(r.determinant()) - 1.0) > 1e-6)
    throw Error("mesh_eval", "similarity transform rotation is not orthonormal");
  TriangleMesh out = mesh;
  for (auto& v : out.vertices) v = transform.scale * (r * v) + transform.translation;
  return out;
}

void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw Error("mesh_eval", "cannot write " + path.string());
  out.precision(9);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

TriangleMesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("mesh_eval", "cannot open mesh " + path.string());
  TriangleMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Eigen::Vector3d v;
      ss >> v.x() >> v.y() >> v.z();
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) idx.push_back(std::stoi(tok.substr(0, tok.find('/'))) - 1);
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  for (const auto& f : mesh.faces)
    for (int v : f)
      if (v < 0 || v >= static_cast<int>(mesh.vertices.size()))
        throw Error("mesh_eval", "face index out of range in " + path.string());
  return mesh;
}

}  // namespace gradsurf
