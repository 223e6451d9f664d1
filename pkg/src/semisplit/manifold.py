"""Manifold descriptions: coordinates, metric expressions, identifications,
sampling domain, declared loops and leaf function, plus load-time validation.

A chart is a single box with optional per-coordinate exclusion zones
(coordinate singularities are excluded, not re-charted).  Identifications are
isometric coordinate maps; the list should contain the inverse of every
non-involutive generator so that fundamental-domain wrapping works in both
flow directions.
"""

from __future__ import annotations

import keyword
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from . import expr as ex

ISOMETRY_TOL = 1e-9


class SpecValidationError(ValueError):
    """A manifold description failed a load-time check."""


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    exclusions: tuple[tuple[float, float], ...] = ()
    # bounded sub-box used when drawing samples; defaults to (lo, hi)
    sample_lo: float | None = None
    sample_hi: float | None = None

    def sampling_bounds(self) -> tuple[float, float]:
        lo = self.lo if self.sample_lo is None else self.sample_lo
        hi = self.hi if self.sample_hi is None else self.sample_hi
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise SpecValidationError(
                "unbounded coordinate interval needs an explicit sampling range"
            )
        return lo, hi

    def contains(self, v: float, margin: float = 0.0) -> bool:
        if not (self.lo - margin <= v <= self.hi + margin):
            return False
        return all(not (a < v < b) for a, b in self.exclusions)


@dataclass(frozen=True)
class Identification:
    """Coordinate map x -> exprs(x), tagged translation or general."""

    name: str
    exprs: tuple[ex.Expr, ...]
    kind: str = "translation"  # translation | general

    def __post_init__(self):
        if self.kind not in ("translation", "general"):
            raise SpecValidationError(f"identification kind '{self.kind}' unknown")


@dataclass(frozen=True)
class Loop:
    """Closed curve u in [0,1] -> coordinates, used for period integrals."""

    name: str
    exprs: tuple[ex.Expr, ...]


@dataclass
class ManifoldSpec:
    coords: tuple[str, ...]
    metric: tuple[tuple[ex.Expr, ...], ...]
    domain: dict[str, Interval]
    identifications: tuple[Identification, ...] = ()
    loops: tuple[Loop, ...] = ()
    leaf_function: ex.Expr | None = None
    name: str = ""
    _cache: "_Compiled | None" = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return len(self.coords)

    def interval(self, coord: str) -> Interval:
        return self.domain[coord]

    def in_domain(self, point: Sequence[float], margin: float = 0.0) -> bool:
        return all(
            self.domain[c].contains(float(v), margin)
            for c, v in zip(self.coords, point)
        )

    def compiled(self) -> "_Compiled":
        if self._cache is None:
            self._cache = _Compiled(self)
        return self._cache


class _Compiled:
    """Per-manifold compiled evaluators for the metric and its symbolic
    first/second derivatives, the volume weight, identifications and loops.
    Built lazily, shared by every operation on the spec."""

    def __init__(self, m: ManifoldSpec):
        n = m.n
        coords = m.coords
        g = [[ex.simplify(m.metric[i][j]) for j in range(n)] for i in range(n)]
        dg = [
            [[ex.differentiate(g[i][j], c) for j in range(n)] for i in range(n)]
            for c in coords
        ]
        ddg = [
            [
                [[ex.differentiate(dg[a][i][j], c) for j in range(n)] for i in range(n)]
                for a in range(n)
            ]
            for c in coords
        ]
        flat_g = [g[i][j] for i in range(n) for j in range(n)]
        flat_dg = [dg[a][i][j] for a in range(n) for i in range(n) for j in range(n)]
        flat_ddg = [
            ddg[b][a][i][j]
            for b in range(n)
            for a in range(n)
            for i in range(n)
            for j in range(n)
        ]
        self.n = n
        self.coords = coords
        self.g_exprs = g
        self.metric_at = _reshaped(ex.compile_exprs(flat_g, coords), (n, n))
        self.dg_at = _reshaped(ex.compile_exprs(flat_dg, coords), (n, n, n))
        self.ddg_at = _reshaped(ex.compile_exprs(flat_ddg, coords), (n, n, n, n))

        det = _symbolic_det(g)
        self.det_expr = det
        self.det_at = ex.compile_expr(det, coords)

        self.ident_maps = []
        for ident in m.identifications:
            mapped = [ex.simplify(e) for e in ident.exprs]
            jac = [
                [ex.differentiate(mapped[i], c) for c in coords] for i in range(n)
            ]
            self.ident_maps.append(
                (
                    ident,
                    _reshaped(ex.compile_exprs(mapped, coords), (n,)),
                    _reshaped(
                        ex.compile_exprs([jac[i][j] for i in range(n) for j in range(n)], coords),
                        (n, n),
                    ),
                )
            )

        if m.leaf_function is not None:
            h = ex.simplify(m.leaf_function)
            self.leaf_at = ex.compile_expr(h, coords)
            dh = [ex.differentiate(h, c) for c in coords]
            self.leaf_grad_at = _reshaped(ex.compile_exprs(dh, coords), (n,))
        else:
            self.leaf_at = None
            self.leaf_grad_at = None


def _reshaped(fn, shape):
    def wrapped(point):
        return np.array(fn(point), dtype=float).reshape(shape)

    return wrapped


def _symbolic_det(g: list[list[ex.Expr]]) -> ex.Expr:
    """Laplace expansion; simplify prunes the zero products of sparse metrics."""
    n = len(g)
    if n == 1:
        return g[0][0]
    total: ex.Expr | None = None
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in g[1:]]
        term = ex.Binary("mul", g[0][j], _symbolic_det(minor))
        if j % 2 == 1:
            term = ex.Unary("neg", term)
        total = term if total is None else ex.Binary("add", total, term)
    return ex.simplify(total)


# ---------------------------------------------------------------- validation

def _check_coord_names(m: ManifoldSpec):
    seen = set()
    for c in m.coords:
        if not c.isidentifier() or keyword.iskeyword(c):
            raise SpecValidationError(f"coordinate name '{c}' is not a valid identifier")
        if c in seen:
            raise SpecValidationError(f"duplicate coordinate '{c}'")
        seen.add(c)
    if m.n < 2:
        raise SpecValidationError("dimension must be at least 2")
    missing = [c for c in m.coords if c not in m.domain]
    if missing:
        raise SpecValidationError(f"missing domain for coordinates: {missing}")


def _check_symmetry(m: ManifoldSpec, points: np.ndarray):
    n = m.n
    for i in range(n):
        for j in range(i + 1, n):
            diff = ex.simplify(ex.Binary("sub", m.metric[i][j], m.metric[j][i]))
            if diff == ex.Const(0.0):
                continue
            fn = ex.compile_expr(diff, m.coords)
            worst = max(abs(fn(p)) for p in points)
            if worst > 1e-10:
                raise SpecValidationError(
                    f"metric not symmetric: entries ({i},{j}) and ({j},{i})"
                    f" differ by up to {worst:.3e}"
                )


def _check_signature(m: ManifoldSpec, points: np.ndarray):
    comp = m.compiled()
    signature = None
    for p in points:
        g = comp.metric_at(p)
        eigs = np.linalg.eigvalsh(0.5 * (g + g.T))
        if np.min(np.abs(eigs)) < 1e-12:
            raise SpecValidationError(f"metric degenerate at sample {p.tolist()}")
        sig = int(np.sum(eigs > 0)) - int(np.sum(eigs < 0))
        if signature is None:
            signature = sig
        elif sig != signature:
            raise SpecValidationError("metric signature is not constant across samples")


def _check_isometries(m: ManifoldSpec, points: np.ndarray):
    comp = m.compiled()
    for ident, map_at, jac_at in comp.ident_maps:
        worst = 0.0
        for p in points:
            q = map_at(p)
            J = jac_at(p)
            g_p = comp.metric_at(p)
            try:
                g_q = comp.metric_at(q)
            except ValueError:
                raise SpecValidationError(
                    f"identification '{ident.name}' maps sample outside the"
                    f" expression domain"
                ) from None
            pulled = J.T @ g_q @ J
            scale = max(1.0, float(np.max(np.abs(g_p))))
            worst = max(worst, float(np.max(np.abs(pulled - g_p))) / scale)
            if ident.kind == "translation":
                shift = q - np.asarray(p, dtype=float)
                ref = map_at(points[0]) - points[0]
                if np.max(np.abs(shift - ref)) > 1e-9:
                    raise SpecValidationError(
                        f"identification '{ident.name}' tagged translation but"
                        f" its shift varies across samples"
                    )
        if worst > ISOMETRY_TOL:
            raise SpecValidationError(
                f"identification '{ident.name}' is not an isometry"
                f" (residual {worst:.3e} > {ISOMETRY_TOL})"
            )


def _check_total_evaluation(m: ManifoldSpec, points: np.ndarray):
    comp = m.compiled()
    for p in points:
        env = dict(zip(m.coords, p))
        for i in range(m.n):
            for j in range(m.n):
                ex.evaluate(m.metric[i][j], env)  # raises DomainEvalError with context
        if comp.leaf_at is not None:
            ex.evaluate(m.leaf_function, env)


def validate(m: ManifoldSpec, samples: int = 64, seed: int = 0) -> None:
    """Run every load-time check; raises SpecValidationError on failure."""
    _check_coord_names(m)
    points = sample_points(m, samples, seed)
    try:
        _check_total_evaluation(m, points)
    except ex.DomainEvalError as err:
        raise SpecValidationError(f"metric expression not evaluable on domain: {err}") from err
    _check_symmetry(m, points)
    _check_signature(m, points)
    _check_isometries(m, points)


# ------------------------------------------------------------------ sampling

def sample_points(m: ManifoldSpec, count: int, seed: int = 0) -> np.ndarray:
    """Scrambled-Halton samples inside the sampling box, rejecting exclusion
    zones.  Deterministic for a fixed seed."""
    bounds = [m.domain[c].sampling_bounds() for c in m.coords]
    los = np.array([b[0] for b in bounds])
    his = np.array([b[1] for b in bounds])
    # shrink slightly so open-interval boundaries are never hit exactly
    pad = 1e-9 * (his - los)
    engine = qmc.Halton(d=m.n, scramble=True, seed=seed)
    out = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 200:
            raise SpecValidationError("sampling failed: exclusion zones too large")
        draw = engine.random(max(count, 8))
        pts = los + pad + draw * (his - los - 2 * pad)
        for p in pts:
            if m.in_domain(p):
                out.append(p)
                if len(out) == count:
                    break
    return np.array(out)


# ----------------------------------------------------- identification wrapping

def wrap_point(
    m: ManifoldSpec, point: np.ndarray, max_depth: int = 4
) -> tuple[np.ndarray, list[str], np.ndarray] | None:
    """Normalize `point` into the fundamental domain by composing declared
    identification maps (depth-first, declaration order).  Returns the wrapped
    point, the names of the maps applied, and the composed differential, or
    None when no composition lands inside the domain."""
    comp = m.compiled()
    n = m.n

    def search(x, depth):
        if m.in_domain(x):
            return x, [], np.eye(n)
        if depth == 0:
            return None
        for ident, map_at, jac_at in comp.ident_maps:
            try:
                q = map_at(x)
            except ValueError:
                continue
            found = search(q, depth - 1)
            if found is not None:
                y, names, J = found
                return y, [ident.name] + names, J @ jac_at(x)
        return None

    return search(np.asarray(point, dtype=float), max_depth)


def deck_orbit_distance(m: ManifoldSpec, a: np.ndarray, b: np.ndarray) -> float:
    """Chart distance between a and b minimized over short words in the
    identification maps applied to b."""
    comp = m.compiled()
    a = np.asarray(a, dtype=float)
    best = float(np.linalg.norm(a - np.asarray(b, dtype=float)))
    frontier = [np.asarray(b, dtype=float)]
    for _ in range(2):
        nxt = []
        for x in frontier:
            for _ident, map_at, _jac in comp.ident_maps:
                try:
                    q = map_at(x)
                except ValueError:
                    continue
                best = min(best, float(np.linalg.norm(a - q)))
                nxt.append(q)
        frontier = nxt
        if not frontier:
            break
    return best


def leaf_shift_periods(m: ManifoldSpec, seed: int = 3) -> list[float]:
    """How each identification translates the leaf function: constant shifts
    are returned (zero shifts dropped); a non-constant shift disqualifies the
    leaf function for return detection."""
    if m.leaf_function is None:
        return []
    comp = m.compiled()
    points = sample_points(m, 24, seed)
    shifts = []
    for ident, map_at, _jac in comp.ident_maps:
        values = []
        for p in points:
            values.append(comp.leaf_at(map_at(p)) - comp.leaf_at(p))
        values = np.array(values)
        if np.max(np.abs(values - values[0])) > 1e-8:
            raise SpecValidationError(
                f"leaf function is not equivariant under identification"
                f" '{ident.name}' (shift varies across samples)"
            )
        if abs(values[0]) > 1e-12:
            shifts.append(float(values[0]))
    return shifts
