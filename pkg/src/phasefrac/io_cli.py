"""Configuration files, experiment presets, result writers, and the CLI.

Config files are flat key-value text with section headers (INI syntax).
Units throughout: mm, MPa, N (force per unit thickness in 2D plane strain).

Example::

    phasefrac run --preset experiment1-2d --out results/
    phasefrac run my_run.cfg --snapshot-every 10
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import material as mat
from .material import MaterialParams
from .mesh import Mesh, NotchedSquareSpec, generate_notched_square, load_mesh
from .solver import (
    BoundaryCondition,
    LoadProgram,
    RunHistory,
    StaggeredConfig,
    run_load_program,
)


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


PRESETS = ("experiment1-2d", "experiment2-2d", "experiment1-3d")

_VTK_CELL_TYPES = {"tri3": 5, "quad4": 9, "tet4": 10, "hex8": 12}

_UNITS_NOTE = "units: mm, MPa, N (2D plane strain: N per unit thickness)"


@dataclass(frozen=True)
class RunConfig:
    """Fully validated inputs of one load-program run."""

    mesh: Mesh
    params: MaterialParams
    program: LoadProgram
    staggered: StaggeredConfig
    output_dir: Path
    plane: str = "strain"  # "strain" or "stress" (2D only)

    def effective_params(self) -> MaterialParams:
        if self.mesh.dim == 2 and self.plane == "stress":
            return mat.plane_stress_equivalent(self.params)
        return self.params


def _get(section, key: str, conv, default=None):
    if key not in section:
        if default is not None:
            return default
        raise ConfigError(f"missing required key '{key}' in section [{section.name}]")
    try:
        return conv(section[key])
    except ValueError:
        raise ConfigError(
            f"invalid value for '{key}' in section [{section.name}]: "
            f"{section[key]!r}"
        ) from None


def _build_mesh(section) -> Mesh:
    source = _get(section, "source", str, "generated")
    if source == "file":
        path = Path(_get(section, "path", str))
        if not path.exists():
            raise ConfigError(f"mesh file does not exist: {path}")
        return load_mesh(path)
    if source != "generated":
        raise ConfigError(f"mesh source must be 'generated' or 'file', got {source!r}")
    length = _get(section, "length", float, 1.0)
    spec = NotchedSquareSpec(
        length=length,
        notch_start=(0.0, _get(section, "notch_y", float, length / 2.0)),
        notch_end=(
            _get(section, "notch_length", float, length / 2.0),
            _get(section, "notch_y", float, length / 2.0),
        ),
        h=_get(section, "h", float),
        thickness=(
            _get(section, "thickness", float) if "thickness" in section else None
        ),
        layers=_get(section, "layers", int, 1),
        h_fine=_get(section, "h_fine", float, 0.0),
        refine_below=_get(section, "refine_below", float, 0.0),
        refine_above=_get(section, "refine_above", float, 0.0),
        refine_back=_get(section, "refine_back", float, 0.0),
    )
    return generate_notched_square(spec)


def _build_program(section, mesh: Mesh) -> LoadProgram:
    mode = _get(section, "mode", str)
    final = _get(section, "final_displacement", float)
    increment = _get(section, "increment", float)
    snapshot_every = _get(section, "snapshot_every", int, 0)
    comp = {"x": 0, "y": 1, "z": 2}

    if mode == "tension":
        # Top pulled vertically (horizontal component held), bottom fixed.
        driven = BoundaryCondition("top", comp["y"], 0.0)
        fixed = [
            BoundaryCondition("top", comp["x"], 0.0),
            BoundaryCondition("bottom", comp["x"], 0.0),
            BoundaryCondition("bottom", comp["y"], 0.0),
        ]
        if mesh.dim == 3:
            # Bottom face fixed in all three directions; lateral faces held
            # in z (reading documented alongside the 3D preset).
            fixed += [
                BoundaryCondition("bottom", comp["z"], 0.0),
                BoundaryCondition("left", comp["z"], 0.0),
                BoundaryCondition("right", comp["z"], 0.0),
            ]
    elif mode == "shear":
        # Top sheared horizontally, bottom fixed, lateral boundaries held
        # vertically.
        driven = BoundaryCondition("top", comp["x"], 0.0)
        fixed = [
            BoundaryCondition("top", comp["y"], 0.0),
            BoundaryCondition("bottom", comp["x"], 0.0),
            BoundaryCondition("bottom", comp["y"], 0.0),
            BoundaryCondition("left", comp["y"], 0.0),
            BoundaryCondition("right", comp["y"], 0.0),
        ]
    else:
        raise ConfigError(f"loading mode must be 'tension' or 'shear', got {mode!r}")
    return LoadProgram.monotonic(
        final, increment, driven, tuple(fixed), snapshot_every=snapshot_every
    )


def parse_config(path) -> RunConfig:
    """Parse and validate a run configuration file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file does not exist: {path}")
    cp = configparser.ConfigParser()
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return _config_from_parser(cp)


def _config_from_parser(cp: configparser.ConfigParser) -> RunConfig:
    for required in ("mesh", "material", "loading"):
        if required not in cp:
            raise ConfigError(f"missing required section [{required}]")
    mesh = _build_mesh(cp["mesh"])

    m = cp["material"]
    try:
        params = MaterialParams(
            bulk_modulus=_get(m, "bulk_modulus", float),
            poisson=_get(m, "poisson", float),
            w0=_get(m, "w0", float),
            eta=_get(m, "eta", float),
            dissipation_model=_get(m, "dissipation_model", str, "threshold"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    program = _build_program(cp["loading"], mesh)

    s = cp["solver"] if "solver" in cp else {"name": "solver"}
    if isinstance(s, dict):
        staggered = StaggeredConfig()
    else:
        try:
            staggered = StaggeredConfig(
                tol_u=_get(s, "tol_u", float) if "tol_u" in s else None,
                tol_d=_get(s, "tol_d", float, 1e-4),
                max_iterations=_get(s, "max_iterations", int, 500),
                linear_solver=_get(s, "linear_solver", str, "cg"),
                linear_tol=_get(s, "linear_tol", float, 1e-10),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    out = cp["output"] if "output" in cp else None
    output_dir = Path(_get(out, "directory", str, "out")) if out else Path("out")

    plane = "strain"
    if "model" in cp:
        plane = _get(cp["model"], "plane", str, "strain")
        if plane not in ("strain", "stress"):
            raise ConfigError(f"plane must be 'strain' or 'stress', got {plane!r}")
        if plane == "stress" and mesh.dim == 3:
            raise ConfigError("plane stress applies to 2D meshes only")

    return RunConfig(
        mesh=mesh,
        params=params,
        program=program,
        staggered=staggered,
        output_dir=output_dir,
        plane=plane,
    )


def preset_path(name: str):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {PRESETS}")
    return resources.files("phasefrac.presets").joinpath(f"{name}.cfg")


def load_preset(name: str) -> RunConfig:
    cp = configparser.ConfigParser()
    cp.read_string(preset_path(name).read_text())
    return _config_from_parser(cp)


def write_vtk(mesh: Mesh, u_nodal, alpha_nodal, path) -> None:
    """Legacy ASCII unstructured-grid snapshot with displacement and damage."""
    u = np.asarray(u_nodal, dtype=float).reshape(mesh.n_nodes, mesh.dim)
    alpha = np.asarray(alpha_nodal, dtype=float)
    pts = np.zeros((mesh.n_nodes, 3))
    pts[:, : mesh.dim] = mesh.nodes
    vec = np.zeros((mesh.n_nodes, 3))
    vec[:, : mesh.dim] = u
    k = mesh.elements.shape[1]
    cell_type = _VTK_CELL_TYPES[mesh.kind]
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"phasefrac snapshot ({_UNITS_NOTE})\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_nodes} double\n")
        for p in pts:
            fh.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        fh.write(f"CELLS {mesh.n_elements} {mesh.n_elements * (k + 1)}\n")
        for el in mesh.elements:
            fh.write(f"{k} " + " ".join(str(int(i)) for i in el) + "\n")
        fh.write(f"CELL_TYPES {mesh.n_elements}\n")
        for _ in range(mesh.n_elements):
            fh.write(f"{cell_type}\n")
        fh.write(f"POINT_DATA {mesh.n_nodes}\n")
        fh.write("VECTORS displacement double\n")
        for v in vec:
            fh.write(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        fh.write("SCALARS damage double 1\nLOOKUP_TABLE default\n")
        for a in alpha:
            fh.write(f"{a:.17g}\n")


def write_curves(history: RunHistory, path) -> None:
    """Force-displacement and energy curves as CSV, one row per load step."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# {_UNITS_NOTE}\n")
        writer = csv.writer(fh)
        writer.writerow(
            [
                "step",
                "applied_displacement_mm",
                "reaction_force",
                "elastic_energy",
                "dissipated_work",
                "total_energy",
                "iterations",
                "converged",
            ]
        )
        for r in history.records:
            writer.writerow(
                [
                    r.step,
                    repr(r.applied_displacement),
                    repr(r.reaction),
                    repr(r.energy.elastic),
                    repr(r.energy.dissipated),
                    repr(r.energy.total),
                    r.iterations,
                    int(r.converged),
                ]
            )


def execute(config: RunConfig) -> RunHistory:
    """Run the configured load program and write curves plus VTK snapshots."""
    config.output_dir.mkdir(parents=True, exist_ok=True)
    history = run_load_program(
        config.mesh,
        config.effective_params(),
        config.program,
        config.staggered,
    )
    write_curves(history, config.output_dir / "curves.csv")
    for step, u, alpha in history.snapshots:
        write_vtk(
            config.mesh, u, alpha, config.output_dir / f"snapshot_{step:05d}.vtk"
        )
    return history


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="phasefrac", description="Quasi-brittle phase-field fracture solver"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute a load program")
    run.add_argument("config", nargs="?", help="run configuration file")
    run.add_argument("--preset", choices=PRESETS, help="use a packaged preset")
    run.add_argument("--out", help="override the output directory")
    run.add_argument(
        "--snapshot-every", type=int, help="override the snapshot cadence"
    )
    args = parser.parse_args(argv)

    try:
        if args.preset:
            config = load_preset(args.preset)
        elif args.config:
            config = parse_config(args.config)
        else:
            raise ConfigError("provide a config file or --preset")
        if args.out:
            config = RunConfig(
                mesh=config.mesh,
                params=config.params,
                program=config.program,
                staggered=config.staggered,
                output_dir=Path(args.out),
                plane=config.plane,
            )
        if args.snapshot_every is not None:
            program = LoadProgram(
                steps=config.program.steps,
                reaction_set=config.program.reaction_set,
                reaction_component=config.program.reaction_component,
                snapshot_every=args.snapshot_every,
            )
            config = RunConfig(
                mesh=config.mesh,
                params=config.params,
                program=program,
                staggered=config.staggered,
                output_dir=config.output_dir,
                plane=config.plane,
            )
        history = execute(config)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if history.error:
        print(f"error: {history.error}", file=sys.stderr)
        return 1
    for r in history.records:
        print(
            f"step {r.step:5d}  u={r.applied_displacement:.6g} mm  "
            f"F={r.reaction:.6g}  iters={r.iterations}  "
            f"converged={r.converged}"
        )
    return 0 if history.all_converged else 2


if __name__ == "__main__":
    sys.exit(main())
