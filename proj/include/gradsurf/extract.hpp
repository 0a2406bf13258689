#pragma once

#include "gradsurf/fields.hpp"
#include "gradsurf/mesh.hpp"

namespace gradsurf {

// Samples the SDF network on a grid_res^3 lattice over [-bounds, bounds]^3 and
// runs marching cubes. Outside the bounding sphere the field is clamped to at
// least the distance to that sphere, so only the region rays see can produce
// surface.
TriangleMesh extract_mesh(const FieldParams& params, int grid_res, double bounds = 1.0);

}  // namespace gradsurf
