"""Build the spherical annulus and its hedgehog image, write both as VTK.

The annulus mesh is the usual extruded icosahedral grid: every vertex of the
base sphere is pushed out along its own radial direction, so neighbouring
prisms share facets exactly.  The hedgehog mesh re-extrudes each column of
prisms rigidly along the column's single radial axis instead.  Columns then
carry private copies of the shared vertices, and the copies split apart with
height; the solver works on this gapped geometry because the per-cell maps
become affine there.

Run from the repository root:

    python3 demos/export_meshes.py

then open mesh_out/annulus.vtk and mesh_out/hedgehog.vtk side by side in a
viewer to see the spikes.
"""

import numpy as np

from shallowfem import cli, geometry, mesh

refinement = 1
layers = 3
thickness = 0.5

base = mesh.build_icosahedral_sphere(refinement, radius=1.0)
m = mesh.extrude_radial(base, layers, thickness)
print(f"base sphere: {len(base.vertices)} vertices, {len(base.triangles)} triangles")
print(f"extruded: {m.n_cells} prisms in {len(base.triangles)} columns")

code = cli.main([
    "export-mesh",
    "--refinement", str(refinement),
    "--layers", str(layers),
    "--thickness", str(thickness),
    "--out-dir", "mesh_out",
])
assert code == 0

# How far do the duplicated vertices above the base sphere drift apart?
coords = geometry.hedgehog_coordinates(m)
orig = m.cell_node_coords()
top = orig[:, 3:].reshape(-1, 3)
moved = coords.cell_coords[:, 3:].reshape(-1, 3)

gaps = []
order = np.lexsort(top.T)
ts, ms = top[order], moved[order]
i = 0
while i < len(ts):
    j = i + 1
    while j < len(ts) and np.linalg.norm(ts[j] - ts[i]) < 1e-12:
        j += 1
    group = ms[i:j]
    if len(group) > 1:
        gaps.append(np.linalg.norm(group - group.mean(axis=0), axis=1).max())
    i = j

gaps = np.array(gaps)
print(f"duplicated prism-top vertices: {len(gaps)} groups")
print(f"gap radius: max {gaps.max():.4e}, mean {gaps.mean():.4e}")
print("(the gap scales linearly with height above the inner sphere)")
