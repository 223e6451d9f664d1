"""Flow integration for (unit) vector fields on charted manifolds.

Trajectories are integrated segment-wise: when a coordinate leaves the
fundamental domain the declared identification maps are composed to re-enter
it (the applied maps and their differentials are logged and folded into the
propagated Jacobian); if no composition re-enters, the trajectory has escaped
and the achieved parameter interval is truncated.  The flow differential is
propagated by the variational equation alongside the state, with an optional
extra quadrature state accumulating the divergence of the unit field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from . import expr as ex
from .geometry import VectorField
from .manifold import ManifoldSpec, SpecValidationError, deck_orbit_distance, leaf_shift_periods

DEFAULT_TOL = 1e-11
_MAX_SEGMENTS = 600


class FlowError(RuntimeError):
    pass


class NonClosedOneFormError(ValueError):
    def __init__(self, max_residual: float, point):
        self.max_residual = max_residual
        self.point = list(point)
        super().__init__(
            f"one-form g(U,.) is not closed (max |d omega| = {max_residual:.3e}"
            f" at {self.point}); periods are ill-defined"
        )


@dataclass
class WrapEvent:
    time: float
    maps: tuple[str, ...]
    point_before: np.ndarray
    point_after: np.ndarray
    div_jump: float  # |divE after - before|; nonzero signals a bad deck map


@dataclass
class EscapeEvent:
    time: float
    point: np.ndarray
    reason: str  # left-domain | step-underflow


@dataclass
class _Segment:
    t0: float
    t1: float
    sol: object  # scipy OdeSolution over [min,max]

    def covers(self, t: float) -> bool:
        lo, hi = min(self.t0, self.t1), max(self.t0, self.t1)
        return lo - 1e-12 <= t <= hi + 1e-12


class FlowResult:
    """Integrated flow from one initial point over a parameter interval."""

    def __init__(self, m: ManifoldSpec, fld: VectorField, p0, t_span, tol):
        self.manifold = m
        self.field = fld
        self.p0 = np.asarray(p0, dtype=float)
        self.t_span = (float(t_span[0]), float(t_span[1]))
        self.tol = tol
        self.segments: list[_Segment] = []
        self.wraps: list[WrapEvent] = []
        self.escapes: list[EscapeEvent] = []
        self.achieved = [0.0, 0.0]  # [most negative, most positive] reached
        self.nfev = 0
        self.nsteps = 0

    @property
    def n(self) -> int:
        return self.manifold.n

    def _segment_for(self, t: float) -> _Segment:
        for seg in self.segments:
            if seg.covers(t):
                return seg
        raise FlowError(
            f"flow parameter {t} outside achieved interval"
            f" [{self.achieved[0]}, {self.achieved[1]}]"
        )

    def state_at(self, t: float) -> np.ndarray:
        if abs(t) < 1e-300:
            return self.p0.copy()
        y = self._segment_for(t).sol(t)
        return np.array(y[: self.n])

    def jacobian_at(self, t: float) -> np.ndarray:
        n = self.n
        if abs(t) < 1e-300:
            return np.eye(n)
        y = self._segment_for(t).sol(t)
        return np.array(y[n : n + n * n]).reshape(n, n)

    def quad_at(self, t: float) -> float:
        if abs(t) < 1e-300:
            return 0.0
        y = self._segment_for(t).sol(t)
        return float(y[-1])

    def covers(self, t: float) -> bool:
        return self.achieved[0] - 1e-12 <= t <= self.achieved[1] + 1e-12

    def step_times(self) -> np.ndarray:
        ts = [np.linspace(seg.t0, seg.t1, 8) for seg in self.segments]
        if not ts:
            return np.array([0.0])
        return np.unique(np.concatenate(ts))


def _flow_rhs(fld: VectorField):
    """One compiled call per step: field components, their partials, and the
    divergence of the unit field (quadrature integrand)."""
    cached = getattr(fld, "_flow_rhs", None)
    if cached is not None:
        return cached
    m = fld.manifold
    n = m.n
    coords = m.coords
    dU = [[ex.differentiate(c, x) for c in fld.components] for x in coords]
    batch = ex.compile_exprs(
        list(fld.components)
        + [dU[a][k] for a in range(n) for k in range(n)]
        + [fld.div_unit_expr],
        coords,
    )

    def rhs(t, y):
        x = y[:n]
        vals = batch(x)
        vel = np.asarray(vals[:n])
        dmat = np.asarray(vals[n : n + n * n]).reshape(n, n)  # [a,k] = d_a X^k
        J = y[n : n + n * n].reshape(n, n)
        dJ = dmat.T @ J
        return np.concatenate([vel, dJ.ravel(), [vals[-1]]])

    fld._flow_rhs = rhs
    return rhs


def _boundary_events(m: ManifoldSpec):
    events = []
    for i, c in enumerate(m.coords):
        iv = m.domain[c]
        if math.isfinite(iv.hi):
            def ev_hi(t, y, i=i, hi=iv.hi):
                return y[i] - hi
            ev_hi.terminal = True
            ev_hi.direction = 1.0
            events.append((ev_hi, i, iv.hi))
        if math.isfinite(iv.lo):
            def ev_lo(t, y, i=i, lo=iv.lo):
                return y[i] - lo
            ev_lo.terminal = True
            ev_lo.direction = -1.0
            events.append((ev_lo, i, iv.lo))
    return events


def _wrap_from_boundary(m: ManifoldSpec, x: np.ndarray, coord_idx: int, boundary: float):
    """Find a composition of identification maps moving x off the fired
    boundary while staying inside the domain.  Depth-first, declaration order,
    depth <= 3."""
    comp = m.compiled()
    iv = m.domain[m.coords[coord_idx]]
    span = iv.hi - iv.lo if math.isfinite(iv.hi - iv.lo) else 1.0

    def ok(q):
        return m.in_domain(q, margin=1e-9) and abs(q[coord_idx] - boundary) > 1e-3 * abs(span)

    def search(y, depth):
        for ident, map_at, jac_at in comp.ident_maps:
            try:
                q = map_at(y)
            except ValueError:
                continue
            if ok(q):
                return q, [ident.name], jac_at(y)
            if depth > 1:
                found = search(q, depth - 1)
                if found is not None:
                    z, names, J = found
                    return z, [ident.name] + names, J @ jac_at(y)
        return None

    return search(np.asarray(x, dtype=float), 3)


def integrate_flow(
    m: ManifoldSpec,
    fld: VectorField,
    p0,
    t_span: tuple[float, float],
    tol: float = DEFAULT_TOL,
    max_wraps: int = _MAX_SEGMENTS,
) -> FlowResult:
    """Adaptive high-order integration of the field's flow from p0 over
    t_span (which must contain 0), with Jacobian propagation, identification
    wrapping, and divergence quadrature."""
    a, b = float(t_span[0]), float(t_span[1])
    if a > 0 or b < 0:
        raise ValueError("t_span must contain 0")
    result = FlowResult(m, fld, p0, (a, b), tol)
    if not m.in_domain(result.p0):
        raise FlowError(f"initial point {list(result.p0)} outside the domain")
    rhs = _flow_rhs(fld)
    events = _boundary_events(m)
    ev_fns = [e[0] for e in events]
    n = m.n

    for direction, t_end in ((1.0, b), (-1.0, a)):
        if t_end == 0.0:
            continue
        t_cur = 0.0
        y_cur = np.concatenate([result.p0, np.eye(n).ravel(), [0.0]])
        for _ in range(max_wraps):
            sol = solve_ivp(
                rhs,
                (t_cur, t_end),
                y_cur,
                method="DOP853",
                rtol=tol,
                atol=tol * 1e-2,
                dense_output=True,
                events=ev_fns or None,
            )
            result.nfev += sol.nfev
            result.nsteps += len(sol.t) - 1
            if sol.status == -1:
                # step-size underflow: incompleteness evidence, truncate here
                t_reach = float(sol.t[-1])
                result.segments.append(_Segment(t_cur, t_reach, sol.sol))
                result.escapes.append(
                    EscapeEvent(t_reach, np.array(sol.y[:n, -1]), "step-underflow")
                )
                result.achieved[0 if direction < 0 else 1] = t_reach
                break
            if sol.status == 0:
                result.segments.append(_Segment(t_cur, t_end, sol.sol))
                result.achieved[0 if direction < 0 else 1] = t_end
                break
            # terminal event: which one fired first along integration order
            fired = [
                (te[0], idx) for idx, te in enumerate(sol.t_events) if len(te)
            ]
            te, ev_idx = (min if direction > 0 else max)(fired, key=lambda z: z[0])
            y_e = sol.sol(te)
            result.segments.append(_Segment(t_cur, te, sol.sol))
            result.achieved[0 if direction < 0 else 1] = te
            _, coord_idx, boundary = events[ev_idx]
            x_e = np.array(y_e[:n])
            wrapped = _wrap_from_boundary(m, x_e, coord_idx, boundary)
            if wrapped is None:
                result.escapes.append(EscapeEvent(te, x_e, "left-domain"))
                break
            x_new, names, Jmap = wrapped
            div_jump = abs(fld.div_unit_at(x_new) - fld.div_unit_at(x_e))
            result.wraps.append(WrapEvent(te, tuple(names), x_e, x_new, div_jump))
            J_e = y_e[n : n + n * n].reshape(n, n)
            y_cur = np.concatenate([x_new, (Jmap @ J_e).ravel(), [y_e[-1]]])
            t_cur = te
            if t_cur == t_end:
                break
        else:
            raise FlowError("wrap limit exceeded; trajectory wraps too often")
    return result


# --------------------------------------------------------------- leaf returns

class LeafFunctionError(ValueError):
    pass


def _leaf_delta(m: ManifoldSpec, flow: FlowResult, h0: float, period: float | None):
    comp = m.compiled()

    def delta(t: float) -> float:
        d = comp.leaf_at(flow.state_at(t)) - h0
        if period:
            d = math.remainder(d, period)  # into (-period/2, period/2]
        return d

    return delta


def leaf_return_events(
    m: ManifoldSpec,
    flow: FlowResult,
    level: float | None = None,
    refine_tol: float = 1e-10,
) -> list[tuple[float, np.ndarray]]:
    """Crossing times of the leaf level along the flow, bisection-refined.

    The leaf value is treated as circle-valued when an identification
    translates the leaf function; branch jumps of the wrapped difference are
    filtered out by magnitude."""
    if m.leaf_function is None:
        raise LeafFunctionError(
            "no leaf function declared; return detection unavailable (indeterminate)"
        )
    comp = m.compiled()
    shifts = leaf_shift_periods(m)
    period = min(abs(s) for s in shifts) if shifts else None
    h0 = comp.leaf_at(flow.p0) if level is None else float(level)
    delta = _leaf_delta(m, flow, h0, period)

    ts = flow.step_times()
    crossings: list[float] = []
    vals = [delta(t) for t in ts]
    arm_threshold = max(1e-8, 0.02 * period) if period else 1e-8
    armed = abs(vals[0]) > arm_threshold
    for k in range(len(ts) - 1):
        ta, tb = ts[k], ts[k + 1]
        va, vb = vals[k], vals[k + 1]
        if not armed:
            if max(abs(va), abs(vb)) > arm_threshold:
                armed = True
            else:
                continue
        if va == 0.0 and abs(ta) > 1e-9:
            crossings.append(ta)
            continue
        if va * vb < 0.0:
            if period and abs(va) + abs(vb) > 0.6 * period:
                continue  # branch jump of the wrapped difference, not a crossing
            root = brentq(delta, ta, tb, xtol=refine_tol)
            if abs(root) > 1e-9:
                crossings.append(float(root))
    out = []
    seen: list[float] = []
    for t in sorted(crossings, key=abs):
        if any(abs(t - s) < 10 * refine_tol for s in seen):
            continue
        seen.append(t)
        out.append((t, flow.state_at(t)))
    return sorted(out, key=lambda z: z[0])


# ------------------------------------------------------------------ monodromy

@dataclass
class MonodromyReport:
    verdict: str  # identity | nontrivial
    return_time: float
    per_sample_times: list[float]
    displacements: list[float]
    max_displacement: float
    witness: list[float] | None = None
    failed_samples: int = 0


def monodromy(
    m: ManifoldSpec,
    fld: VectorField,
    leaf_points: Sequence[np.ndarray],
    t0: float,
    tol: float = 1e-6,
    flow_tol: float = DEFAULT_TOL,
) -> MonodromyReport:
    """Follow the flow from every leaf sample for (its refinement of) the
    base return time t0 and measure the start-to-end chart displacement
    modulo identifications."""
    times: list[float] = []
    disps: list[float] = []
    witness = None
    failed = 0
    span = (0.0, 1.3 * t0) if t0 > 0 else (1.3 * t0, 0.0)
    for q in leaf_points:
        flow = integrate_flow(m, fld, q, span, tol=flow_tol)
        comp = m.compiled()
        try:
            events = leaf_return_events(m, flow, level=comp.leaf_at(np.asarray(q, float)))
        except LeafFunctionError:
            raise
        near = [e for e in events if 0.7 * abs(t0) <= abs(e[0]) <= 1.3 * abs(t0)]
        if not near:
            failed += 1
            witness = list(map(float, q))
            continue
        t_q, endpoint = min(near, key=lambda e: abs(abs(e[0]) - abs(t0)))
        d = deck_orbit_distance(m, np.asarray(q, float), endpoint)
        times.append(float(t_q))
        disps.append(float(d))
        if d >= tol and witness is None:
            witness = list(map(float, q))
    max_disp = max(disps) if disps else math.inf
    verdict = "identity" if failed == 0 and max_disp < tol else "nontrivial"
    return MonodromyReport(
        verdict=verdict,
        return_time=float(np.mean(times)) if times else float("nan"),
        per_sample_times=times,
        displacements=disps,
        max_displacement=max_disp if disps else math.inf,
        witness=witness,
        failed_samples=failed,
    )


# ---------------------------------------------------------------- period group

@dataclass
class PeriodReport:
    values: dict[str, float]
    classification: str  # trivial | discrete | dense | indeterminate
    rank: int
    zero_tol: float
    caveats: list[str] = field(default_factory=list)


def _continued_fraction_rational(r: float, tol: float = 1e-9, max_depth: int = 20,
                                 big_quotient: float = 1e6) -> bool:
    """Deterministic stand-in for 'is the ratio rational': expand the
    continued fraction, truncating at a huge partial quotient or depth 20;
    rational iff truncation happened and the convergent matches to tol."""
    x = r
    p_prev, q_prev, p, q = 1, 0, math.floor(x), 1
    for _ in range(max_depth):
        frac = x - math.floor(x)
        if abs(frac) < 1e-12:
            return abs(r - p / q) <= tol * max(1.0, abs(r))
        x = 1.0 / frac
        a = math.floor(x)
        if a > big_quotient:
            return abs(r - p / q) <= tol * max(1.0, abs(r))
        p, p_prev = a * p + p_prev, p
        q, q_prev = a * q + q_prev, q
    return False


def check_closed_one_form(m: ManifoldSpec, fld: VectorField, samples: np.ndarray,
                          tol: float = 1e-7) -> None:
    worst = 0.0
    worst_p = samples[0]
    from .geometry import metric_scale

    for p in samples:
        r = float(np.max(np.abs(fld.domega_at(p)))) / metric_scale(m, p)
        if r > worst:
            worst, worst_p = r, p
    if worst > tol:
        raise NonClosedOneFormError(worst, worst_p)


def period_group(
    m: ManifoldSpec,
    fld: VectorField,
    loops=None,
    quad_tol: float = 1e-10,
    zero_tol: float = 1e-9,
    closure_samples: np.ndarray | None = None,
) -> PeriodReport:
    """Integrate the field's one-form over each declared loop and classify
    the subgroup of the reals generated by the values."""
    if closure_samples is None:
        from .manifold import sample_points

        closure_samples = sample_points(m, 32, seed=5)
    check_closed_one_form(m, fld, closure_samples)
    loops = m.loops if loops is None else loops
    values: dict[str, float] = {}
    caveats: list[str] = []
    for loop in loops:
        start = np.array([ex.evaluate(e, {"u": 0.0}) for e in loop.exprs])
        end = np.array([ex.evaluate(e, {"u": 1.0}) for e in loop.exprs])
        if deck_orbit_distance(m, start, end) > 1e-8:
            raise SpecValidationError(
                f"loop '{loop.name}' is not closed modulo identifications"
            )
        pos = ex.compile_exprs(loop.exprs, ["u"])
        vel = ex.compile_exprs([ex.differentiate(e, "u") for e in loop.exprs], ["u"])

        def integrand(u):
            x = np.array(pos((u,)))
            v = np.array(vel((u,)))
            return float(fld.omega_at(x) @ v)

        val, err = quad(integrand, 0.0, 1.0, epsabs=quad_tol, epsrel=quad_tol, limit=200)
        if err > 10 * max(quad_tol, abs(val) * quad_tol):
            caveats.append(f"loop '{loop.name}': quadrature error estimate {err:.2e}")
        values[loop.name] = float(val)

    nonzero = [v for v in values.values() if abs(v) > zero_tol]
    if not nonzero:
        return PeriodReport(values, "trivial", 0, zero_tol, caveats)
    base = nonzero[0]
    independent = [base]
    all_rational = True
    for v in nonzero[1:]:
        if not _continued_fraction_rational(v / base):
            all_rational = False
            if all(not _continued_fraction_rational(v / w) for w in independent):
                independent.append(v)
    if all_rational:
        if len(nonzero) == 1:
            caveats.append(
                "single nonzero generator: the full period group could be larger"
                " than the detected infinite cyclic subgroup"
            )
        return PeriodReport(values, "discrete", 1, zero_tol, caveats)
    return PeriodReport(values, "dense", len(independent), zero_tol, caveats)
