"""Built-in catalog of manifold/field pairs with known classifications and
verdicts; the expected values drive the acceptance matrix (`fixtures
--run-all`).

Notes record metadata that is declared, not computed: causal structure,
compactness of leaves, and stand-in choices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

from . import expr as ex
from .geometry import VectorField
from .manifold import Identification, Interval, Loop, ManifoldSpec
from .split import SplitConfig

PI = math.pi
TWO_PI = 2 * math.pi


@dataclass
class Fixture:
    name: str
    manifold: ManifoldSpec
    field_exprs: tuple[ex.Expr, ...]
    expected_flags: dict[str, bool]
    expected_verdict: str
    config: SplitConfig
    notes: dict = dc_field(default_factory=dict)
    expected: dict = dc_field(default_factory=dict)
    _field: VectorField | None = dc_field(default=None, repr=False, compare=False)

    def vector_field(self) -> VectorField:
        # fixtures are read-only and shared; the compiled field is too
        if self._field is None:
            self._field = VectorField(self.manifold, self.field_exprs)
        return self._field


def _p(text, coords):
    return ex.parse(text, coords)


def _metric(coords, rows):
    return tuple(tuple(_p(e, coords) for e in row) for row in rows)


def _circle_idents(coords, coord, period):
    per = repr(period)
    return (
        Identification(f"{coord}_up", tuple(
            _p(c if c != coord else f"{coord}+{per}", coords) for c in coords
        )),
        Identification(f"{coord}_down", tuple(
            _p(c if c != coord else f"{coord}-{per}", coords) for c in coords
        )),
    )


def _minkowski_cylinder() -> Fixture:
    coords = ("t", "x")
    m = ManifoldSpec(
        coords=coords,
        metric=_metric(coords, [["-1", "0"], ["0", "1"]]),
        domain={
            "t": Interval(-math.inf, math.inf, sample_lo=-1.0, sample_hi=1.0),
            "x": Interval(0.0, 1.0),
        },
        identifications=_circle_idents(coords, "x", 1.0),
        loops=(Loop("around", (_p("0", ["u"]), _p("u", ["u"]))),),
        leaf_function=None,
        name="minkowski_cylinder",
    )
    return Fixture(
        name="minkowski_cylinder",
        manifold=m,
        field_exprs=(_p("sqrt(3/2)", coords), _p("sqrt(1/2)", coords)),
        expected_flags={
            "unit": True, "parallel": True, "irrotational": True,
            "conformal": True, "geodesic_unit": True, "pregeodesic": True,
            "orth_irrotational": True, "orth_conformal": True,
        },
        expected_verdict="no-split-evidence",
        config=SplitConfig(t_span=(-1.0, 1.0)),
        notes={
            "signature": "lorentzian",
            "causal": True,
            "splits_globally": False,
            "leaves": "dense lines of irrational slope; no closed-form leaf function",
        },
        expected={
            "eps": -1,
            "type": "direct",
            "period_values": {"around": math.sqrt(0.5)},
            "period_class": "discrete",
        },
    )


def _exp_warped_line_circle() -> Fixture:
    coords = ("t", "s")
    m = ManifoldSpec(
        coords=coords,
        metric=_metric(coords, [["-1", "0"], ["0", "exp(2*t)"]]),
        domain={
            "t": Interval(-math.inf, math.inf, sample_lo=-1.2, sample_hi=1.2),
            "s": Interval(0.0, TWO_PI),
        },
        identifications=_circle_idents(coords, "s", TWO_PI),
        loops=(Loop("fiber", (_p("0", ["u"]), _p("2*pi*u", ["u"]))),),
        leaf_function=_p("t", coords),
        name="exp_warped_line_circle",
    )
    return Fixture(
        name="exp_warped_line_circle",
        manifold=m,
        field_exprs=(_p("exp(t)", coords), _p("0", coords)),
        expected_flags={
            "unit": False, "parallel": False, "irrotational": True,
            "conformal": True, "orth_conformal": True, "geodesic_unit": True,
            "pregeodesic": True, "grad_div_unit_parallel": True,
        },
        expected_verdict="RxL warped",
        config=SplitConfig(t_span=(-1.0, 1.0), base_point=(0.0, 1.0)),
        notes={
            "signature": "lorentzian",
            "timelike_complete": False,
            "warping_profile": "exp(t)",
            "div_positive": True,
        },
        expected={
            "eps": -1,
            "type": "warped",
            "period_values": {"fiber": 0.0},
            "period_class": "trivial",
            "plane_curvature": 1.0,
        },
    )


def _friedmann_closed() -> Fixture:
    coords = ("t", "psi", "theta", "phi")
    f2 = "sin(t)^2"
    m = ManifoldSpec(
        coords=coords,
        metric=_metric(coords, [
            ["-1", "0", "0", "0"],
            ["0", f2, "0", "0"],
            ["0", "0", f2 + "*sin(psi)^2", "0"],
            ["0", "0", "0", f2 + "*sin(psi)^2*sin(theta)^2"],
        ]),
        domain={
            "t": Interval(0.1, PI - 0.1),
            "psi": Interval(0.1, PI - 0.1),
            "theta": Interval(0.1, PI - 0.1),
            "phi": Interval(0.0, TWO_PI),
        },
        identifications=_circle_idents(coords, "phi", TWO_PI),
        leaf_function=_p("t", coords),
        name="friedmann_closed",
    )
    return Fixture(
        name="friedmann_closed",
        manifold=m,
        field_exprs=(_p("sin(t)", coords), _p("0", coords), _p("0", coords), _p("0", coords)),
        expected_flags={
            "unit": False, "parallel": False, "irrotational": True,
            "conformal": True, "orth_conformal": True, "geodesic_unit": True,
            "grad_div_unit_parallel": True,
        },
        expected_verdict="RxL warped",
        config=SplitConfig(
            t_span=(-0.9, 0.9),
            base_point=(PI / 2, 0.9, 1.1, 1.0),
            samples=200,
        ),
        notes={
            "signature": "lorentzian",
            "compact_leaves": True,
            "scale_factor": "sin(t) is a stand-in; the closed cosmological"
                            " model fixes no specific profile",
            "monitor": "Ric(U) stays nonnegative",
        },
        expected={"eps": -1, "type": "warped", "ric_sign": "nonnegative"},
    )


_S3_HALF = "(3+sin(2*t))/4"


def _sphere_warped_metric(coords):
    return _metric(coords, [
        ["1", "0", "0", "0"],
        ["0", _S3_HALF, "0", "0"],
        ["0", "0", _S3_HALF + "*sin(psi)^2", "0"],
        ["0", "0", "0", _S3_HALF + "*sin(psi)^2*sin(theta)^2"],
    ])


def _sphere_warped_line() -> Fixture:
    coords = ("t", "psi", "theta", "phi")
    m = ManifoldSpec(
        coords=coords,
        metric=_sphere_warped_metric(coords),
        domain={
            "t": Interval(-math.inf, math.inf, sample_lo=-1.5, sample_hi=1.5),
            "psi": Interval(0.1, PI - 0.1),
            "theta": Interval(0.1, PI - 0.1),
            "phi": Interval(0.0, TWO_PI),
        },
        identifications=_circle_idents(coords, "phi", TWO_PI),
        leaf_function=_p("t", coords),
        name="sphere_warped_line",
    )
    return Fixture(
        name="sphere_warped_line",
        manifold=m,
        field_exprs=(
            _p("sqrt(3+sin(2*t))", coords),
            _p("0", coords), _p("0", coords), _p("0", coords),
        ),
        expected_flags={
            "unit": False, "parallel": False, "irrotational": True,
            "conformal": True, "orth_conformal": True, "geodesic_unit": True,
            "grad_div_unit_parallel": True,
        },
        expected_verdict="RxL warped",
        config=SplitConfig(t_span=(-1.0, 1.0), base_point=(0.0, 0.9, 1.1, 1.0),
                           return_scan_span=6.0),
        notes={
            "signature": "riemannian",
            "complete": True,
            "leaf": "round 3-sphere of radius 1/2, charted by hyperspherical"
                    " angles with polar exclusion zones",
        },
        expected={"eps": 1, "type": "warped", "returns": "none"},
    )


def _sphere_warped_quotient() -> Fixture:
    coords = ("t", "psi", "theta", "phi")
    deck = Identification(
        "deck",
        (
            _p(f"t+{repr(PI)}", coords),
            _p("pi-psi", coords),
            _p("pi-theta", coords),
            _p("phi+pi", coords),
        ),
        kind="general",
    )
    deck_inv = Identification(
        "deck_inv",
        (
            _p(f"t-{repr(PI)}", coords),
            _p("pi-psi", coords),
            _p("pi-theta", coords),
            _p("phi+pi", coords),
        ),
        kind="general",
    )
    m = ManifoldSpec(
        coords=coords,
        metric=_sphere_warped_metric(coords),
        domain={
            "t": Interval(0.0, PI, sample_lo=0.05, sample_hi=PI - 0.05),
            "psi": Interval(0.1, PI - 0.1),
            "theta": Interval(0.1, PI - 0.1),
            "phi": Interval(0.0, TWO_PI),
        },
        identifications=(deck, deck_inv) + _circle_idents(coords, "phi", TWO_PI),
        leaf_function=_p("t", coords),
        name="sphere_warped_quotient",
    )
    return Fixture(
        name="sphere_warped_quotient",
        manifold=m,
        field_exprs=(
            _p("sqrt(3+sin(2*t))", coords),
            _p("0", coords), _p("0", coords), _p("0", coords),
        ),
        expected_flags={
            "unit": False, "parallel": False, "irrotational": True,
            "conformal": True, "orth_conformal": True, "geodesic_unit": True,
            "grad_div_unit_parallel": True,
        },
        expected_verdict="covering-only",
        config=SplitConfig(t_span=(-1.0, 1.0), base_point=(0.0, 0.9, 1.1, 1.0),
                           return_scan_span=4.5, monodromy_samples=6),
        notes={
            "signature": "riemannian",
            "quotient": "glue (t, p) to (t + pi, antipode of p); the deck map"
                        " and its inverse are both declared for wrapping",
            "periodic_curves": True,
            "circle_product": False,
        },
        expected={"eps": 1, "type": "warped", "return_time": PI,
                  "monodromy": "nontrivial"},
    )


def _twisted_strip() -> Fixture:
    coords = ("t", "s")
    m = ManifoldSpec(
        coords=coords,
        metric=_metric(coords, [["-1", "0"], ["0", "(t+2+cos(s))^2"]]),
        domain={
            "t": Interval(-1.0, math.inf, sample_lo=-0.5, sample_hi=1.5),
            "s": Interval(0.0, TWO_PI),
        },
        identifications=_circle_idents(coords, "s", TWO_PI),
        loops=(Loop("rim", (_p("0", ["u"]), _p("2*pi*u", ["u"]))),),
        leaf_function=_p("t", coords),
        name="twisted_strip",
    )
    return Fixture(
        name="twisted_strip",
        manifold=m,
        field_exprs=(_p("1", coords), _p("0", coords)),
        expected_flags={
            "unit": True, "parallel": False, "irrotational": True,
            "conformal": False, "orth_conformal": True, "geodesic_unit": True,
            "pregeodesic": True, "grad_div_unit_parallel": False,
        },
        expected_verdict="RxL twisted",
        config=SplitConfig(t_span=(-1.5, 1.5), base_point=(0.0, 1.0)),
        notes={
            "signature": "lorentzian",
            "expansion_equality": "E(div E) + (div E)^2/(n-1) vanishes"
                                  " identically; the twist profile is linear"
                                  " in the base parameter",
            "left_escape": -1.0,
        },
        expected={
            "eps": -1, "type": "twisted",
            "div_unit": "1/(t+2+cos(s))",
            "warping": "(t+2+cos(s))/(2+cos(s))",
        },
    )


def _direct_line_circle(sign: str) -> Fixture:
    coords = ("t", "s")
    g_tt = "-1" if sign == "lorentzian" else "1"
    m = ManifoldSpec(
        coords=coords,
        metric=_metric(coords, [[g_tt, "0"], ["0", "1"]]),
        domain={
            "t": Interval(-math.inf, math.inf, sample_lo=-1.0, sample_hi=1.0),
            "s": Interval(0.0, TWO_PI),
        },
        identifications=_circle_idents(coords, "s", TWO_PI),
        loops=(Loop("fiber", (_p("0", ["u"]), _p("2*pi*u", ["u"]))),),
        leaf_function=_p("t", coords),
        name=f"direct_line_circle_{sign}",
    )
    return Fixture(
        name=f"direct_line_circle_{sign}",
        manifold=m,
        field_exprs=(_p("1", coords), _p("0", coords)),
        expected_flags={
            "unit": True, "parallel": True, "irrotational": True,
            "conformal": True, "orth_conformal": True, "geodesic_unit": True,
            "grad_div_unit_parallel": True,
        },
        expected_verdict="RxL direct",
        config=SplitConfig(t_span=(-1.0, 1.0), base_point=(0.0, 1.0)),
        notes={"signature": sign, "control": "flat direct product"},
        expected={"eps": -1 if sign == "lorentzian" else 1, "type": "direct",
                  "period_class": "trivial"},
    )


def _flat_two_torus() -> Fixture:
    coords = ("t", "s")
    m = ManifoldSpec(
        coords=coords,
        metric=_metric(coords, [["1", "0"], ["0", "1"]]),
        domain={
            "t": Interval(0.0, 1.0),
            "s": Interval(0.0, TWO_PI),
        },
        identifications=_circle_idents(coords, "t", 1.0) + _circle_idents(coords, "s", TWO_PI),
        loops=(
            Loop("t_loop", (_p("u", ["u"]), _p("1", ["u"]))),
            Loop("s_loop", (_p("0.5", ["u"]), _p("2*pi*u", ["u"]))),
        ),
        leaf_function=_p("t", coords),
        name="flat_two_torus",
    )
    return Fixture(
        name="flat_two_torus",
        manifold=m,
        field_exprs=(_p("1", coords), _p("0", coords)),
        expected_flags={
            "unit": True, "parallel": True, "irrotational": True,
            "conformal": True, "orth_conformal": True, "geodesic_unit": True,
        },
        expected_verdict="S1xL direct",
        config=SplitConfig(t_span=(-1.0, 1.0), base_point=(0.0, 1.0),
                           return_scan_span=2.5, monodromy_samples=6),
        notes={"signature": "riemannian", "control": "genuine circle product"},
        expected={
            "eps": 1, "type": "direct", "return_time": 1.0,
            "monodromy": "identity",
            "period_values": {"t_loop": 1.0, "s_loop": 0.0},
            "period_class": "discrete",
        },
    )


def _shear_flat_plane() -> Fixture:
    # flat plane with a non-irrotational, non-conformal, non-geodesic field;
    # in two dimensions the orthogonal-restriction flags are vacuously true
    coords = ("x", "y")
    m = ManifoldSpec(
        coords=coords,
        metric=_metric(coords, [["1", "0"], ["0", "1"]]),
        domain={
            "x": Interval(0.5, 2.0),
            "y": Interval(-1.0, 1.0),
        },
        leaf_function=_p("y+log(x)", coords),
        name="shear_flat_plane",
    )
    return Fixture(
        name="shear_flat_plane",
        manifold=m,
        field_exprs=(_p("1", coords), _p("x", coords)),
        expected_flags={
            "unit": False, "parallel": False, "irrotational": False,
            "conformal": False, "geodesic_unit": False, "pregeodesic": False,
            "orth_irrotational": True, "orth_conformal": True,
        },
        expected_verdict="no-split-evidence",
        config=SplitConfig(t_span=(-0.3, 0.3), base_point=(1.0, 0.0),
                           return_scan_span=0.5),
        notes={
            "signature": "riemannian",
            "control": "falsification: every special flag fails; the flow"
                       " does not take leaves into leaves",
        },
        expected={"eps": 1},
    )


def _dense_period_torus() -> Fixture:
    coords = ("x", "y")
    m = ManifoldSpec(
        coords=coords,
        metric=_metric(coords, [["1", "0"], ["0", "1"]]),
        domain={
            "x": Interval(0.0, 1.0),
            "y": Interval(0.0, 1.0),
        },
        identifications=_circle_idents(coords, "x", 1.0) + _circle_idents(coords, "y", 1.0),
        loops=(
            Loop("x_loop", (_p("u", ["u"]), _p("0.25", ["u"]))),
            Loop("y_loop", (_p("0.25", ["u"]), _p("u", ["u"]))),
        ),
        leaf_function=None,
        name="dense_period_torus",
    )
    return Fixture(
        name="dense_period_torus",
        manifold=m,
        field_exprs=(_p("1", coords), _p("sqrt(2)", coords)),
        expected_flags={
            "unit": False, "parallel": True, "irrotational": True,
            "conformal": True, "geodesic_unit": True,
        },
        expected_verdict="no-split-evidence",
        config=SplitConfig(t_span=(-1.0, 1.0)),
        notes={
            "signature": "riemannian",
            "control": "two incommensurable loop periods generate a dense"
                       " subgroup of the reals",
        },
        expected={
            "eps": 1, "type": "direct",
            "period_values": {"x_loop": 1.0, "y_loop": math.sqrt(2.0)},
            "period_class": "dense",
        },
    )


_CATALOG: list[Fixture] | None = None


def catalog() -> list[Fixture]:
    global _CATALOG
    if _CATALOG is None:
        _CATALOG = [
            _minkowski_cylinder(),
            _exp_warped_line_circle(),
            _friedmann_closed(),
            _sphere_warped_line(),
            _sphere_warped_quotient(),
            _twisted_strip(),
            _direct_line_circle("lorentzian"),
            _direct_line_circle("riemannian"),
            _flat_two_torus(),
            _shear_flat_plane(),
            _dense_period_torus(),
        ]
    return list(_CATALOG)


def get(name: str) -> Fixture:
    for fixture in catalog():
        if fixture.name == name:
            return fixture
    raise KeyError(f"unknown fixture '{name}'")
