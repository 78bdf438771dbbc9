"""YAML run configuration: parse, validate, then materialise grids and fields.

Grammar (all keys optional unless marked)::

    mode: flow | lp-solve | verify      # must match the sub-command if given
    n: 2                                # 1 or 2
    grid: {n_theta: 32, n_phi: 64}      # n_phi ignored for n = 1
    seed: 0                             # random shapes and verify samples
    alpha: 0                            # flow (required)
    beta: 1                             # flow (required)
    f: 1                                # flow weight, see FIELD below
    p: 2                                # lp-solve (required)
    phi: 1                              # lp-solve data, FIELD or {kind: manufactured, body: SHAPE}
    reference: SHAPE                    # lp-solve: body to measure recovery against
    initial: SHAPE                      # start body (default unit sphere)
    solver: {dt_init, dt_min, dt_max, cfl_safety, tol_residual, tol_J_rate,
             max_steps, renormalize_every, symmetrize, snapshot_every,
             eps_convex, filter_poles, tol_mono_rel, tol_mono_abs, burn_in_steps}
    output: {dir: out, mesh: true, snapshots: false}
    verify: {checks: [af, af_spec, bs, polar, dzp, holder], samples: 20,
             tolerance: 1e-3, tolerances: {polar: 5e-3}}

    FIELD: number | {kind: constant, value}
           | {kind: polynomial, terms: {"1": 1, "x3^2": 0.2}, even_only: false}
           | {kind: samples, path}
    SHAPE: {kind: sphere, radius} | {kind: ellipsoid, axes, rotation}
           | {kind: perturbed, base: SHAPE, eps, modes: {monomial: coeff}}
           | {kind: translate, base: SHAPE, vector} | {kind: file, path}
           | {kind: random_even, amplitude, stretch} | {kind: random, amplitude, shift}

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from minkflow import functionals as fn
from minkflow.errors import ConfigError, MinkflowError, RegimeError
from minkflow.flow import FlowConfig
from minkflow.io import read_body, read_samples
from minkflow.minkowski import DEFAULT_SOLVER, manufactured_phi
from minkflow.shapes import SphericalPolynomial, make_shape, random_body, random_even_body
from minkflow.sphere import SphereGrid, build_grid
from minkflow.verify import CHECKS

MODES = ("flow", "lp-solve", "verify")
TOP_KEYS = {"mode", "n", "grid", "seed", "alpha", "beta", "f", "p", "phi", "reference",
            "initial", "solver", "output", "verify"}
SOLVER_KEYS = {f.name for f in fields(FlowConfig)}
INT_SOLVER_KEYS = {"max_steps", "renormalize_every", "snapshot_every", "burn_in_steps"}


class _Doc:
    """Parsed YAML plus the source line of every key path."""

    def __init__(self, text: str, path: str | None):
        self.path = path
        self.lines: dict[tuple, int] = {}
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
        except yaml.YAMLError as err:
            mark = getattr(err, "problem_mark", None)
            raise ConfigError(f"invalid YAML: {getattr(err, 'problem', err)}",
                              line=mark.line + 1 if mark else None, path=path) from None
        self._loader = yaml.SafeLoader("")
        self.data = {} if node is None else self._convert(node, ())
        if not isinstance(self.data, dict):
            raise ConfigError("top level must be a mapping", line=1, path=path)

    def _convert(self, node, key_path):
        self.lines.setdefault(key_path, node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            out = {}
            for k, v in node.value:
                key = str(self._loader.construct_object(k, deep=True))
                self.lines[key_path + (key,)] = k.start_mark.line + 1
                out[key] = self._convert(v, key_path + (key,))
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self._convert(v, key_path + (i,)) for i, v in enumerate(node.value)]
        return self._loader.construct_object(node, deep=True)

    def line(self, key_path) -> int | None:
        key_path = tuple(key_path)
        while key_path and key_path not in self.lines:
            key_path = key_path[:-1]
        return self.lines.get(key_path)

    def error(self, key_path, message) -> ConfigError:
        return ConfigError(message, line=self.line(key_path), path=self.path)


@dataclass
class RunConfig:
    mode: str
    n: int
    n_theta: int
    n_phi: int | None
    seed: int
    alpha: float | None
    beta: float | None
    p: float | None
    f_spec: Any
    phi_spec: Any
    reference_spec: Any
    initial_spec: Any
    solver: FlowConfig
    out_dir: str
    mesh: bool
    snapshots: bool
    checks: tuple[str, ...]
    samples: int
    tolerance: float | None
    tolerances: dict
    base_dir: Path
    doc: _Doc = field(repr=False)

    def grid(self) -> SphereGrid:
        return build_grid(self.n, self.n_theta, self.n_phi if self.n == 2 else None)

    def error(self, key_path, message) -> ConfigError:
        return self.doc.error(key_path, message)


def _number(doc, key_path, value, kind=float, positive=False, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool):
        raise doc.error(key_path, f"{'.'.join(map(str, key_path))}: expected a number, got {value!r}")
    try:
        out = float(value) if kind is float else value
        if kind is int:
            if isinstance(value, str):
                out = float(value)
            if float(out) != int(float(out)):
                raise ValueError
            out = int(float(out))
    except (TypeError, ValueError):
        raise doc.error(key_path, f"{'.'.join(map(str, key_path))}: expected {'an integer' if kind is int else 'a number'}, got {value!r}") from None
    if kind is float and not np.isfinite(out):
        raise doc.error(key_path, f"{'.'.join(map(str, key_path))}: must be finite")
    if positive and not out > 0:
        raise doc.error(key_path, f"{'.'.join(map(str, key_path))}: must be positive")
    return out


def _mapping(doc, key_path, value, allowed=None):
    if not isinstance(value, dict):
        raise doc.error(key_path, f"{'.'.join(map(str, key_path))}: expected a mapping")
    if allowed is not None:
        for k in value:
            if k not in allowed:
                raise doc.error(key_path + (k,), f"unknown key {k!r} in {'.'.join(map(str, key_path)) or 'config'}")
    return value


def load_config(path, mode: str, seed: int | None = None, out_dir: str | None = None) -> RunConfig:
    """Read and validate a config file for ``mode``; raises ConfigError."""
    path_str = str(path)
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config: {err.strerror or err}", path=path_str) from None
    return parse_config(text, mode, path=path_str, seed=seed, out_dir=out_dir,
                        base_dir=Path(path).resolve().parent)


def parse_config(text: str, mode: str, path: str | None = None, seed: int | None = None,
                 out_dir: str | None = None, base_dir: Path | None = None) -> RunConfig:
    doc = _Doc(text, path)
    d = _mapping(doc, (), doc.data, TOP_KEYS)
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}", path=path)
    if "mode" in d and d["mode"] != mode:
        raise doc.error(("mode",), f"config is for mode {d['mode']!r} but {mode!r} was requested")

    n = _number(doc, ("n",), d.get("n", 2), int)
    if n not in (1, 2):
        raise doc.error(("n",), f"n must be 1 or 2, got {n}")
    g = _mapping(doc, ("grid",), d.get("grid", {}), {"n_theta", "n_phi"})
    n_theta = _number(doc, ("grid", "n_theta"), g.get("n_theta", 32), int)
    n_phi = _number(doc, ("grid", "n_phi"), g.get("n_phi", 2 * n_theta), int) if n == 2 else None
    try:
        build_grid(n, n_theta, n_phi)
    except MinkflowError as err:
        raise doc.error(("grid",), str(err)) from None

    cfg_seed = _number(doc, ("seed",), d.get("seed", 0), int)
    seed = cfg_seed if seed is None else int(seed)

    alpha = beta = p = None
    if mode == "flow":
        for k in ("alpha", "beta"):
            if k not in d:
                raise doc.error((), f"flow mode needs {k!r}")
        alpha = _number(doc, ("alpha",), d["alpha"])
        beta = _number(doc, ("beta",), d["beta"])
        try:
            fn.classify_regime(alpha, beta, n)
        except RegimeError as err:
            raise doc.error(("alpha",), f"alpha={alpha:g}, beta={beta:g}: {err}") from None
    if mode == "lp-solve":
        if "p" not in d:
            raise doc.error((), "lp-solve mode needs 'p'")
        p = _number(doc, ("p",), d["p"])
        if not p > -n - 1:
            raise doc.error(("p",), f"p = {p:g} is outside the open range p > -n-1 = {-n - 1}")

    s = _mapping(doc, ("solver",), d.get("solver", {}), SOLVER_KEYS)
    base = DEFAULT_SOLVER if mode == "lp-solve" else FlowConfig()
    kw = {}
    for name, v in s.items():
        if name == "symmetrize":
            if v is not None and not isinstance(v, bool):
                raise doc.error(("solver", name), "solver.symmetrize: expected true, false or null")
            kw[name] = v
        elif name == "filter_poles":
            if not isinstance(v, bool):
                raise doc.error(("solver", name), "solver.filter_poles: expected true or false")
            kw[name] = v
        elif name in INT_SOLVER_KEYS:
            kw[name] = _number(doc, ("solver", name), v, int)
        else:
            kw[name] = _number(doc, ("solver", name), v)
    try:
        solver = replace(base, **kw)
    except ValueError as err:
        raise doc.error(("solver",), f"solver: {err}") from None

    o = _mapping(doc, ("output",), d.get("output", {}), {"dir", "mesh", "snapshots"})
    out = out_dir if out_dir is not None else str(o.get("dir", "out"))
    for k in ("mesh", "snapshots"):
        if k in o and not isinstance(o[k], bool):
            raise doc.error(("output", k), f"output.{k}: expected true or false")

    v = _mapping(doc, ("verify",), d.get("verify", {}), {"checks", "samples", "tolerance", "tolerances"})
    checks = v.get("checks", list(CHECKS))
    if isinstance(checks, str):
        checks = [checks]
    if not isinstance(checks, list) or not checks:
        raise doc.error(("verify", "checks"), "verify.checks: expected a non-empty list")
    for i, c in enumerate(checks):
        if c not in CHECKS:
            raise doc.error(("verify", "checks", i), f"unknown check {c!r}; choose from {', '.join(CHECKS)}")
    samples = _number(doc, ("verify", "samples"), v.get("samples", 20), int)
    if samples < 1:
        raise doc.error(("verify", "samples"), "verify.samples must be at least 1")
    tolerance = _number(doc, ("verify", "tolerance"), v.get("tolerance"), allow_none=True)
    if tolerance is not None and tolerance < 0:
        raise doc.error(("verify", "tolerance"), "verify.tolerance must be non-negative")
    tols = _mapping(doc, ("verify", "tolerances"), v.get("tolerances", {}), set(CHECKS))
    tols = {k: _number(doc, ("verify", "tolerances", k), t) for k, t in tols.items()}

    cfg = RunConfig(
        mode=mode, n=n, n_theta=n_theta, n_phi=n_phi, seed=seed, alpha=alpha, beta=beta, p=p,
        f_spec=d.get("f", 1.0), phi_spec=d.get("phi", 1.0), reference_spec=d.get("reference"),
        initial_spec=d.get("initial", {"kind": "sphere"}), solver=solver, out_dir=out,
        mesh=bool(o.get("mesh", n == 2)), snapshots=bool(o.get("snapshots", False)),
        checks=tuple(checks), samples=samples, tolerance=tolerance, tolerances=tols,
        base_dir=base_dir or Path.cwd(), doc=doc,
    )
    # materialise once so that every data error surfaces before any compute
    grid = cfg.grid()
    if mode == "flow":
        f = build_field(cfg, ("f",), cfg.f_spec, grid)
        body = build_shape(cfg, ("initial",), cfg.initial_spec, grid, np.random.default_rng(seed))
        try:
            params = fn.FlowParams(alpha, beta, f, n)
        except (ValueError, RegimeError) as err:
            raise doc.error(("f",), str(err)) from None
        _check_symmetry(cfg, params, body, f, grid)
    elif mode == "lp-solve":
        phi = build_phi(cfg, grid)
        if p < n + 1 and np.max(np.abs(phi - phi[grid.antipode_index])) > 1e-10 * phi.max():
            raise doc.error(("phi",), f"p = {p:g} < n+1 needs an even phi")
        build_shape(cfg, ("initial",), cfg.initial_spec, grid, np.random.default_rng(seed))
        if cfg.reference_spec is not None:
            build_shape(cfg, ("reference",), cfg.reference_spec, grid, np.random.default_rng(seed))
    return cfg


def _check_symmetry(cfg, params, body, f, grid):
    if not cfg.solver.symmetrize_for(params):
        return
    if np.max(np.abs(f - f[grid.antipode_index])) > 1e-10 * f.max():
        raise cfg.error(("f",), f"regime {params.regime.value} with symmetrisation needs an even f")
    if body.asymmetry() > 1e-10 * body.u.max():
        raise cfg.error(("initial",), f"regime {params.regime.value} with symmetrisation needs an origin-symmetric initial body")


def _resolve(cfg, rel):
    p = Path(rel)
    return p if p.is_absolute() else cfg.base_dir / p


def build_field(cfg: RunConfig, key_path, spec, grid: SphereGrid) -> np.ndarray:
    """Samples of a positive weight field from its FIELD spec."""
    doc = cfg.doc
    if isinstance(spec, (int, float, str)) and not isinstance(spec, bool):
        value = _number(doc, key_path, spec)
        vals = np.full(grid.size, value)
    else:
        spec = _mapping(doc, key_path, spec)
        kind = spec.get("kind")
        if kind == "constant":
            _mapping(doc, key_path, spec, {"kind", "value"})
            vals = np.full(grid.size, _number(doc, key_path + ("value",), spec.get("value", 1.0)))
        elif kind == "polynomial":
            _mapping(doc, key_path, spec, {"kind", "terms", "even_only"})
            terms = _mapping(doc, key_path + ("terms",), spec.get("terms", {}))
            coeffs = {str(k): _number(doc, key_path + ("terms", k), c) for k, c in terms.items()}
            try:
                poly = SphericalPolynomial.from_mapping(grid.n, coeffs)
            except ValueError as err:
                raise doc.error(key_path + ("terms",), str(err)) from None
            if spec.get("even_only", False) and not poly.is_even:
                raise doc.error(key_path + ("terms",), "even_only polynomial has odd-degree terms")
            vals = poly.on(grid)
        elif kind == "samples":
            _mapping(doc, key_path, spec, {"kind", "path"})
            try:
                _, vals, _ = read_samples(_resolve(cfg, spec.get("path", "")), grid)
            except (OSError, ValueError, MinkflowError) as err:
                raise doc.error(key_path + ("path",), f"cannot load samples: {err}") from None
        else:
            raise doc.error(key_path + ("kind",), f"unknown field kind {kind!r}")
    if not np.all(vals > 0):
        raise doc.error(key_path, f"{'.'.join(map(str, key_path))} must be positive at every node (min {vals.min():.3g})")
    return vals


def build_shape(cfg: RunConfig, key_path, spec, grid: SphereGrid, rng: np.random.Generator):
    doc = cfg.doc
    spec = _mapping(doc, key_path, spec)
    kind = spec.get("kind")
    try:
        if kind == "file":
            return read_body(_resolve(cfg, spec.get("path", "")), grid)
        if kind == "random_even":
            return random_even_body(grid, rng, float(spec.get("amplitude", 0.05)), float(spec.get("stretch", 0.15)))
        if kind == "random":
            return random_body(grid, rng, float(spec.get("amplitude", 0.05)), float(spec.get("shift", 0.1)))
        params = {k: v for k, v in spec.items() if k != "kind"}
        return make_shape(kind, params, grid, cfg.solver.eps_convex)
    except (OSError, KeyError, TypeError, ValueError, MinkflowError) as err:
        msg = f"missing key {err}" if isinstance(err, KeyError) else str(err)
        raise doc.error(key_path, f"{'.'.join(map(str, key_path))}: {msg}") from None


def build_phi(cfg: RunConfig, grid: SphereGrid) -> np.ndarray:
    spec = cfg.phi_spec
    if isinstance(spec, dict) and spec.get("kind") == "manufactured":
        _mapping(cfg.doc, ("phi",), spec, {"kind", "body"})
        body = build_shape(cfg, ("phi", "body"), spec.get("body", {"kind": "sphere"}), grid,
                           np.random.default_rng(cfg.seed))
        return manufactured_phi(body, cfg.p)
    return build_field(cfg, ("phi",), spec, grid)
