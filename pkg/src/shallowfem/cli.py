"""Command-line front end.

Three subcommands:

  export-mesh     write the annulus and hedgehog meshes as legacy ASCII
                  unstructured-grid files (wedge cells, type 13)
  verify-forcing  compare printed and oracle-derived forcing at seeded
                  pseudo-random manifold points; text plus JSON output
  convergence     run the manufactured-solution study and emit a CSV table
                  (optionally failing, with --check, when the observed rates
                  leave the expected windows)

All commands are deterministic for fixed flags, so reruns produce
byte-identical files.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import mms
from .geometry import annulus_coordinates, hedgehog_coordinates
from .mesh import build_icosahedral_sphere, classify_facets, extrude_radial

__all__ = ["main"]

VTK_WEDGE = 13


def _write_vtk(path: Path, points: np.ndarray, cells: np.ndarray, title: str):
    """Legacy ASCII unstructured grid with wedge connectivity."""
    lines = [
        "# vtk DataFile Version 2.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(points)} double",
    ]
    for x, y, z in points:
        lines.append(f"{x:.17g} {y:.17g} {z:.17g}")
    lines.append(f"CELLS {len(cells)} {len(cells) * 7}")
    for c in cells:
        lines.append("6 " + " ".join(str(int(v)) for v in c))
    lines.append(f"CELL_TYPES {len(cells)}")
    lines.extend([str(VTK_WEDGE)] * len(cells))
    path.write_text("\n".join(lines) + "\n")


def read_vtk_points(path) -> np.ndarray:
    """Parse the POINTS block back out of an exported file (round-trip checks)."""
    lines = Path(path).read_text().splitlines()
    for i, line in enumerate(lines):
        if line.startswith("POINTS"):
            n = int(line.split()[1])
            vals = [list(map(float, lines[i + 1 + j].split())) for j in range(n)]
            return np.array(vals)
    raise ValueError(f"no POINTS block in {path}")


def _build_mesh(args):
    base = build_icosahedral_sphere(args.refinement, radius=args.inner_radius)
    return extrude_radial(base, args.layers, args.thickness)


def cmd_export_mesh(args) -> int:
    mesh = _build_mesh(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    annulus_path = out / "annulus.vtk"
    _write_vtk(annulus_path, mesh.vertex_coords, mesh.cell_vertices, "spherical annulus mesh")

    hh = hedgehog_coordinates(mesh)
    n_cells = mesh.n_cells
    points = hh.cell_coords.reshape(n_cells * 6, 3)
    cells = np.arange(n_cells * 6).reshape(n_cells, 6)
    hedgehog_path = out / "hedgehog.vtk"
    _write_vtk(hedgehog_path, points, cells, "hedgehog mesh (per-column extrusion)")

    print(f"wrote {annulus_path} ({len(mesh.vertex_coords)} points, {n_cells} cells)")
    print(f"wrote {hedgehog_path} ({n_cells * 6} points, {n_cells} cells)")
    return 0


def cmd_verify_forcing(args) -> int:
    case = mms.ManufacturedCase(a=args.inner_radius, H=args.thickness)
    ops = mms.ShallowOperators(a=args.inner_radius, H=args.thickness)
    pts = mms.sample_manifold_points(args.inner_radius, args.thickness, args.points, args.seed)
    report = mms.derive_forcing(case, pts, ops)

    text = "\n".join(report.summary_lines()) + "\n"
    sys.stdout.write(text)
    if args.out:
        payload = {
            "n_points": report.n_points,
            "seed": args.seed,
            "max_u_normal": report.max_u_normal,
            "max_u_normal_analytic_gap": report.max_u_normal_analytic_gap,
            "tangency_after_projection": report.tangency_after_projection,
            "f_discrepancy": report.f_discrepancy,
            "g_discrepancy": report.g_discrepancy,
        }
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        print(f"wrote {args.out}")
    return 0


CSV_HEADER = "level,refinement,layers,ncells,ndofs,h_mesh,err_p,err_u,rate_p,rate_u"

RATE_WINDOWS = {
    # final-level windows: (p_low, p_high, u_low, u_high)
    1: (0.8, 1.3, 0.8, 1.3),
    2: (1.7, float("inf"), 1.0, 2.0),
}


def _csv_lines(table: mms.ConvergenceTable):
    lines = [CSV_HEADER]
    for r in table.rows:
        rate_p = "" if r.rate_p is None else f"{r.rate_p:.17g}"
        rate_u = "" if r.rate_u is None else f"{r.rate_u:.17g}"
        lines.append(
            f"{r.level},{r.refinement},{r.layers},{r.ncells},{r.ndofs},"
            f"{r.h_mesh:.17g},{r.err_p:.17g},{r.err_u:.17g},{rate_p},{rate_u}"
        )
    return lines


def _parse_levels(spec: str):
    levels = []
    for part in spec.split(","):
        r, L = part.split(":")
        levels.append((int(r), int(L)))
    if not levels:
        raise ValueError("empty level list")
    return levels


def cmd_convergence(args) -> int:
    levels = _parse_levels(args.levels)
    table = mms.convergence_study(
        k=args.k,
        levels=levels,
        mode=args.mode,
        a=args.inner_radius,
        thickness=args.thickness,
        tolerance=args.tolerance,
        quadrature_degree=args.quadrature_degree,
        seed=args.seed,
    )

    csv_text = "\n".join(_csv_lines(table)) + "\n"
    Path(args.csv).write_text(csv_text)
    print(csv_text, end="")

    report_path = Path(args.forcing_report)
    report_path.write_text("\n".join(table.forcing_report.summary_lines()) + "\n")

    rate_p, rate_u = table.final_rates
    worst_res = max(r.residual for r in table.rows)
    print(f"final rates: p {rate_p:.3f}, u {rate_u:.3f}; max solve residual {worst_res:.2e}")
    print(f"wrote {args.csv} and {report_path}")

    if args.check:
        lo_p, hi_p, lo_u, hi_u = RATE_WINDOWS[args.k]
        ok = lo_p <= rate_p <= hi_p and lo_u <= rate_u <= hi_u
        if not ok:
            print(
                f"rate check FAILED: expected p in [{lo_p}, {hi_p}], u in [{lo_u}, {hi_u}]",
                file=sys.stderr,
            )
            return 1
        print("rate check passed")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="shallowfem",
        description="Mixed finite elements for the shallow atmosphere approximation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--inner-radius", type=float, default=1.0)
        p.add_argument("--thickness", type=float, default=1.0)

    p = sub.add_parser("export-mesh", help="write annulus + hedgehog mesh files")
    common(p)
    p.add_argument("--refinement", type=int, default=0)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_export_mesh)

    p = sub.add_parser("verify-forcing", help="printed vs derived forcing report")
    common(p)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--seed", type=int, default=mms.DEFAULT_SEED)
    p.add_argument("--out", default=None, help="optional JSON output path")
    p.set_defaults(func=cmd_verify_forcing)

    p = sub.add_parser("convergence", help="manufactured-solution convergence study")
    common(p)
    p.add_argument("--k", type=int, default=1, choices=(1, 2))
    p.add_argument("--levels", default="1:2,2:4,3:8", help="refinement:layers pairs")
    p.add_argument("--mode", default="shallow", choices=("shallow", "deep"))
    p.add_argument("--tolerance", type=float, default=1e-10)
    p.add_argument("--quadrature-degree", type=int, default=None)
    p.add_argument("--seed", type=int, default=mms.DEFAULT_SEED)
    p.add_argument("--csv", default="convergence.csv")
    p.add_argument("--forcing-report", default="forcing_report.txt")
    p.add_argument("--check", action="store_true", help="exit nonzero outside rate windows")
    p.set_defaults(func=cmd_convergence)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
