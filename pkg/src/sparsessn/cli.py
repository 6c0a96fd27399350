"""Configuration-driven runs: parse a config, solve, write the outputs.

Config files are line oriented, ``key = value`` with ``#`` comments::

    example = 2
    mesh.kind = box3
    mesh.n = 32
    init = y_d
    output_dir = out/example2

Keys (defaults in brackets, example-dependent ones resolved by
:func:`parse_config`):

``example``            1 | 2 | custom
``custom.factory``     ``module:function`` returning a ``ProblemData`` (custom only)
``example1.amplitude`` target amplitude for example 1 [4.0]
``mass``               consistent | lumped [consistent]
``mesh.kind``          box2 | box3 | disk | file [disk for 1, box3 for 2]
``mesh.n``             cells per side for box meshes [32]
``mesh.levels``        refinement levels for the disk [7]
``mesh.path``          mesh file for ``mesh.kind = file``
``params.kappa`` ...   ``params.gamma``, ``params.alpha``, ``params.beta`` overrides
``ssn.tol``            [5e-14]; also ``ssn.max_outer``, ``ssn.cg_tol``, ``ssn.cg_max``
``init``               zero | y_d | coarse_prolong | file [coarse_prolong for 1, y_d for 2]
``init.path``          nodal control file (one value per line) for ``init = file``
``init.coarsest``      coarsest disk level of a prolongation cascade [2]
``output_dir``         [output]
"""

import argparse
import importlib
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ArgumentError, AssemblyError, ConfigError, DefinitenessError, MeshParseError, \
    ModelError, NonconvergenceError
from .linalg import CG_TOL
from .mesh import build_box_mesh, build_disk_mesh, load_mesh, prolong, refine_red, disk_seed
from .pde import MASS_CHOICES, PdeContext
from .problem import EXAMPLE1_AMPLITUDE, ProblemData, example1, example2
from .ssn import LABEL_NAMES, SsnOptions, ssn_solve

EXAMPLES = ("1", "2", "custom")
MESH_KINDS = ("box2", "box3", "disk", "file")
INIT_KINDS = ("zero", "y_d", "coarse_prolong", "file")
DEFAULT_BOX_N = 32
DEFAULT_DISK_LEVELS = 7
EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 1, 2


@dataclass(frozen=True)
class MeshConfig:
    kind: str = ""
    n: Optional[int] = None
    levels: Optional[int] = None
    path: str = ""


@dataclass(frozen=True)
class ParamOverrides:
    kappa: Optional[float] = None
    gamma: Optional[float] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None

    def as_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True)
class SsnConfig:
    tol: float = 5e-14
    max_outer: int = 30
    cg_tol: float = CG_TOL
    cg_max: int = 500


@dataclass(frozen=True)
class RunConfig:
    example: str = "2"
    mesh: MeshConfig = field(default_factory=MeshConfig)
    params: ParamOverrides = field(default_factory=ParamOverrides)
    ssn: SsnConfig = field(default_factory=SsnConfig)
    init: str = ""
    init_path: str = ""
    init_coarsest: int = 2
    mass: str = "consistent"
    amplitude: float = EXAMPLE1_AMPLITUDE
    factory: str = ""
    output_dir: str = "output"


# config key -> (attribute path, converter)
def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise ValueError("must be positive")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise ValueError("must be a positive integer")
    return value


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise ValueError("must be a nonnegative integer")
    return value


def _choice(options):
    def conv(text):
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text
    return conv


KEYS = {
    "example": (("example",), _choice(EXAMPLES)),
    "custom.factory": (("factory",), str),
    "example1.amplitude": (("amplitude",), float),
    "mass": (("mass",), _choice(MASS_CHOICES)),
    "mesh.kind": (("mesh", "kind"), _choice(MESH_KINDS)),
    "mesh.n": (("mesh", "n"), _positive_int),
    "mesh.levels": (("mesh", "levels"), _nonneg_int),
    "mesh.path": (("mesh", "path"), str),
    "params.kappa": (("params", "kappa"), float),
    "params.gamma": (("params", "gamma"), float),
    "params.alpha": (("params", "alpha"), float),
    "params.beta": (("params", "beta"), float),
    "ssn.tol": (("ssn", "tol"), _positive_float),
    "ssn.max_outer": (("ssn", "max_outer"), _positive_int),
    "ssn.cg_tol": (("ssn", "cg_tol"), _positive_float),
    "ssn.cg_max": (("ssn", "cg_max"), _positive_int),
    "init": (("init",), _choice(INIT_KINDS)),
    "init.path": (("init_path",), str),
    "init.coarsest": (("init_coarsest",), _nonneg_int),
    "output_dir": (("output_dir",), str),
}


def _set(cfg, path, value):
    if len(path) == 1:
        return replace(cfg, **{path[0]: value})
    inner = getattr(cfg, path[0])
    return replace(cfg, **{path[0]: replace(inner, **{path[1]: value})})


def _get(cfg, path):
    for name in path:
        cfg = getattr(cfg, name)
    return cfg


def parse_config(text):
    """Parse a config text into a fully defaulted, validated :class:`RunConfig`.

    Raises
    ------
    ConfigError
        Unknown or repeated key, unparsable value, or inconsistent settings.
    """
    cfg = RunConfig()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
        seen.add(key)
        path, conv = KEYS[key]
        try:
            cfg = _set(cfg, path, conv(value))
        except ValueError as err:
            raise ConfigError(f"config line {lineno}: {key} = {value!r}: {err}") from None
    return resolve(cfg)


def resolve(cfg):
    """Fill example-dependent defaults and check consistency."""
    mesh = cfg.mesh
    if cfg.example == "1":
        kind = mesh.kind or "disk"
        if kind not in ("disk", "file"):
            raise ConfigError(f"example 1 lives on the unit disk; mesh.kind = {kind} is inconsistent")
        init = cfg.init or ("coarse_prolong" if kind == "disk" else "y_d")
    elif cfg.example == "2":
        kind = mesh.kind or "box3"
        if kind not in ("box3", "file"):
            raise ConfigError(f"example 2 lives on the unit cube; mesh.kind = {kind} is inconsistent")
        init = cfg.init or "y_d"
    else:
        if not cfg.factory or ":" not in cfg.factory:
            raise ConfigError("example = custom requires custom.factory = module:function")
        if not mesh.kind:
            raise ConfigError("example = custom requires mesh.kind")
        kind = mesh.kind
        init = cfg.init or "zero"
    if kind in ("box2", "box3"):
        mesh = MeshConfig(kind, n=DEFAULT_BOX_N if mesh.n is None else mesh.n)
    elif kind == "disk":
        mesh = MeshConfig(kind, levels=DEFAULT_DISK_LEVELS if mesh.levels is None else mesh.levels)
    else:
        if not mesh.path:
            raise ConfigError("mesh.kind = file requires mesh.path")
        mesh = MeshConfig(kind, path=mesh.path)
    if init == "coarse_prolong":
        if kind != "disk":
            raise ConfigError("init = coarse_prolong is only available on disk meshes")
        if mesh.levels <= cfg.init_coarsest:
            raise ConfigError("init = coarse_prolong requires mesh.levels > init.coarsest")
    if init == "file" and not cfg.init_path:
        raise ConfigError("init = file requires init.path")
    cfg = replace(cfg, mesh=mesh, init=init)
    try:
        SsnOptions(cfg.ssn.tol, cfg.ssn.max_outer, cfg.ssn.cg_tol, cfg.ssn.cg_max)
        if cfg.example != "custom":
            _example_problem(cfg)
    except (ArgumentError, ModelError) as err:
        raise ConfigError(str(err)) from None
    return cfg


def serialize_config(cfg):
    """Config text that :func:`parse_config` maps back to ``cfg``."""
    lines = []
    for key, (path, _) in KEYS.items():
        value = _get(cfg, path)
        if value is None or value == "":
            continue
        lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _example_problem(cfg):
    if cfg.example == "1":
        data, _ = example1(cfg.amplitude)
    elif cfg.example == "2":
        data, _ = example2()
    else:
        module, func = cfg.factory.split(":", 1)
        try:
            data = getattr(importlib.import_module(module), func)()
        except (ImportError, AttributeError) as err:
            raise ConfigError(f"cannot load custom.factory {cfg.factory!r}: {err}") from None
        if not isinstance(data, ProblemData):
            raise ConfigError("custom.factory must return a ProblemData")
    overrides = cfg.params.as_dict()
    return data.with_params(**overrides) if overrides else data


def build_mesh(mc):
    if mc.kind == "box2":
        return build_box_mesh(2, mc.n)
    if mc.kind == "box3":
        return build_box_mesh(3, mc.n)
    if mc.kind == "disk":
        return build_disk_mesh(mc.levels)
    with open(mc.path) as fh:
        return load_mesh(fh.read())


def _context(cfg, mesh, problem):
    return PdeContext.build(mesh, problem, mass=cfg.mass)


def _ssn_options(cfg):
    s = cfg.ssn
    return SsnOptions(tol=s.tol, max_outer=s.max_outer, cg_tol=s.cg_tol, cg_max=s.cg_max)


def disk_cascade(cfg, problem, out=None):
    """Solve on disk levels ``init.coarsest .. levels - 1``, prolonging each
    solution as the initial control of the next level.

    Returns the finest mesh and the control prolonged onto it.
    """
    mesh = disk_seed()
    for _ in range(cfg.init_coarsest):
        mesh, _ = refine_red(mesh, project_to_circle=True)
    u = np.zeros(mesh.num_nodes)
    opts = _ssn_options(cfg)
    for level in range(cfg.init_coarsest, cfg.mesh.levels):
        res = ssn_solve(_context(cfg, mesh, problem), u, opts)
        if out is not None:
            print(f"# level {level}: {res.record.outer_iterations} steps, "
                  f"J = {res.record.final_J:.17g}", file=out)
        if not res.record.converged:
            raise NonconvergenceError(f"ssn: cascade level {level} did not converge")
        mesh, parents = refine_red(mesh, project_to_circle=True)
        u = prolong(res.u, parents)
    return mesh, u


def initial_control(cfg, mesh, problem, out=None):
    if cfg.init == "coarse_prolong":
        return disk_cascade(cfg, problem, out)
    n = mesh.num_nodes
    if cfg.init == "zero":
        return mesh, np.zeros(n)
    if cfg.init == "y_d":
        if problem.y_d is None:
            raise ConfigError("init = y_d but the problem has no target y_d")
        return mesh, problem.y_d(mesh.nodes).astype(float)
    if cfg.init == "file":
        u = np.loadtxt(cfg.init_path, dtype=float, ndmin=1)
        if u.shape != (n,):
            raise ConfigError(f"init.path holds {u.size} values, mesh has {n} nodes")
        return mesh, u
    raise ConfigError(f"unknown init {cfg.init!r}")


def format_row(row):
    delta = "" if row.delta is None else f"{row.delta:.6e}"
    cg = "" if row.cg_iters is None else str(row.cg_iters)
    return f"{row.j},{row.J:.17g},{delta},{row.newton_iters},{cg}"


def convergence_csv(record):
    return "j,J,delta,newton_iters,cg_iters\n" + "".join(format_row(r) + "\n" for r in record.rows)


def vtk_text(mesh, point_data, int_data):
    """Legacy ASCII VTK unstructured grid with nodal scalars."""
    d = mesh.dim
    cell_type = 5 if d == 2 else 10
    pts = np.zeros((mesh.num_nodes, 3))
    pts[:, :d] = mesh.nodes
    out = ["# vtk DataFile Version 3.0", "sparsessn solution", "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {mesh.num_nodes} double"]
    out += [f"{a!r} {b!r} {c!r}" for a, b, c in pts.tolist()]
    nc = mesh.num_cells
    out.append(f"CELLS {nc} {nc * (d + 2)}")
    out += [f"{d + 1} " + " ".join(map(str, c)) for c in mesh.cells.tolist()]
    out.append(f"CELL_TYPES {nc}")
    out += [str(cell_type)] * nc
    out.append(f"POINT_DATA {mesh.num_nodes}")
    for name, values in point_data.items():
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out += [repr(v) for v in np.asarray(values, dtype=float).tolist()]
    for name, values in int_data.items():
        out += [f"SCALARS {name} int 1", "LOOKUP_TABLE default"]
        out += [str(v) for v in np.asarray(values, dtype=int).tolist()]
    return "\n".join(out) + "\n"


def diagnostics_text(result, problem):
    rec, diag = result.record, result.diagnostics
    p = problem.params
    lines = [f"converged = {rec.converged}", f"stop_reason = {rec.stop_reason}",
             f"outer_iterations = {rec.outer_iterations}",
             f"J = {rec.final_J:.17g}", f"F = {rec.F:.17g}", f"gamma_j = {rec.sparsity:.17g}",
             f"kkt_residual = {diag.kkt_residual:.6e}",
             f"sigma_measure = {diag.sigma_measure:.6e}",
             f"sparsity_violation = {diag.sparsity_violation:.6e}",
             f"kappa = {p.kappa!r}", f"gamma = {p.gamma!r}", f"alpha = {p.alpha!r}", f"beta = {p.beta!r}"]
    lines += [f"measure.{k} = {v:.6f}" for k, v in diag.node_measures.items()]
    lines += [f"lumped_measure.{k} = {v:.6f}" for k, v in diag.measures.items()]
    return "\n".join(lines) + "\n"


def write_outputs(directory, mesh, result, problem):
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "convergence.csv"), "w") as fh:
        fh.write(convergence_csv(result.record))
    point = {"u": result.u, "y": result.y, "phi": result.phi_density}
    if result.diagnostics.lam is not None:
        point["lambda"] = result.diagnostics.lam
    with open(os.path.join(directory, "fields.vtk"), "w") as fh:
        fh.write(vtk_text(mesh, point, {"set_label": result.diagnostics.labels}))
    with open(os.path.join(directory, "diagnostics.txt"), "w") as fh:
        fh.write(diagnostics_text(result, problem))


def echo_row(row, out):
    delta = "-" if row.delta is None else f"{row.delta:.1e}"
    cg = "-" if row.cg_iters is None else str(row.cg_iters)
    print(f"{row.j:>3d}  {row.J:.16f}  {delta:>8s}  {row.newton_iters:>3d}  {cg:>4s}", file=out)


def solve(cfg, out=None):
    """Build mesh, problem and initial control, then run SSN. Returns
    ``(mesh, problem, result)``."""
    problem = _example_problem(cfg)
    if cfg.init == "coarse_prolong":
        mesh, u0 = initial_control(cfg, None, problem, out)
    else:
        mesh = build_mesh(cfg.mesh)
        expected = {"1": 2, "2": 3}.get(cfg.example)
        if expected and mesh.dim != expected:
            raise ConfigError(f"example {cfg.example} needs a {expected}d mesh, got {mesh.dim}d")
        mesh, u0 = initial_control(cfg, mesh, problem, out)
    ctx = _context(cfg, mesh, problem)
    log = None
    if out is not None:
        print("  j  J                   delta    nwt    cg", file=out)
        log = lambda row: echo_row(row, out)
    return mesh, problem, ssn_solve(ctx, u0, _ssn_options(cfg), log=log)


def run(cfg, out=sys.stdout, err=sys.stderr):
    """Run one configuration and write its outputs; returns the exit status."""
    try:
        mesh, problem, result = solve(cfg, out)
    except (ConfigError, ModelError, ArgumentError, MeshParseError, AssemblyError, OSError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_CONFIG
    except (NonconvergenceError, DefinitenessError) as exc:
        where = getattr(exc, "iteration", None)
        suffix = "" if where is None or str(exc).startswith("ssn iteration") else f" (ssn iteration {where})"
        print(f"error: {exc}{suffix}", file=err)
        return EXIT_NONCONVERGED
    write_outputs(cfg.output_dir, mesh, result, problem)
    rec = result.record
    print(f"stop: {rec.stop_reason}; kkt residual {rec.kkt_residual:.1e}; "
          f"outputs in {cfg.output_dir}", file=out)
    if not rec.converged:
        print(f"error: ssn: no convergence within {cfg.ssn.max_outer} outer iterations", file=err)
        return EXIT_NONCONVERGED
    return EXIT_OK


def main(argv=None):
    ap = argparse.ArgumentParser(prog="sparsessn",
                                 description="Semismooth Newton for sparse elliptic optimal control.")
    ap.add_argument("config", nargs="?", help="config file ('-' for stdin)")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="extra config line, applied after the file")
    ap.add_argument("-o", "--output-dir", help="override output_dir")
    ap.add_argument("--print-config", action="store_true",
                    help="print the resolved config and exit")
    args = ap.parse_args(argv)
    text = ""
    if args.config == "-":
        text = sys.stdin.read()
    elif args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    text = "\n".join([text] + args.set)
    if args.output_dir:
        text += f"\noutput_dir = {args.output_dir}"
    try:
        cfg = parse_config(_last_wins(text))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.print_config:
        sys.stdout.write(serialize_config(cfg))
        return EXIT_OK
    return run(cfg)


def _last_wins(text):
    """Drop earlier occurrences of keys repeated by command-line overrides."""
    kept, keys = [], {}
    for line in text.splitlines():
        body = line.split("#", 1)[0]
        key = body.split("=", 1)[0].strip() if "=" in body else None
        if key:
            if key in keys:
                kept[keys[key]] = ""
            keys[key] = len(kept)
        kept.append(line)
    return "\n".join(kept)


if __name__ == "__main__":
    sys.exit(main())
