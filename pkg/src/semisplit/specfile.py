"""Spec-file loading/saving and machine-readable reports.

The spec file is a YAML document with a versioned schema (format_version 1,
documented in the README): dimension, coordinates, metric (lower triangle
sufficient), field, identifications, domain, optional leaf_function and
loops, sampling, and tolerances.  Unknown keys are rejected.  Machine reports
are JSON with sorted keys and no timestamps, so a fixed (spec, seed,
tolerances) triple reproduces byte-identical output.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import expr as ex
from .classify import Classification
from .geometry import VectorField
from .manifold import Identification, Interval, Loop, ManifoldSpec, SpecValidationError, validate
from .split import SplitConfig, SplitReport

FORMAT_VERSION = 1
REPORT_SCHEMA_VERSION = 1


@dataclass
class SpecDocument:
    manifold: ManifoldSpec
    field_exprs: tuple[ex.Expr, ...]
    config: SplitConfig
    name: str = ""
    source: str = ""

    def vector_field(self) -> VectorField:
        return VectorField(self.manifold, self.field_exprs)


def _require_keys(mapping: dict, allowed: set[str], context: str, required: set[str] = frozenset()):
    if not isinstance(mapping, dict):
        raise SpecValidationError(f"{context}: expected a mapping")
    unknown = set(mapping) - allowed
    if unknown:
        raise SpecValidationError(f"{context}: unknown keys {sorted(unknown)}")
    missing = required - set(mapping)
    if missing:
        raise SpecValidationError(f"{context}: missing keys {sorted(missing)}")


def _parse_expr(text, coords, context):
    try:
        return ex.parse(str(text), coords)
    except ex.ExprError as err:
        raise SpecValidationError(f"{context}: {err}") from err


def _float(value, context):
    if value is None:
        raise SpecValidationError(f"{context}: expected a number")
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in ("inf", "+inf", ".inf"):
            return math.inf
        if lowered in ("-inf", "-.inf"):
            return -math.inf
    try:
        return float(value)
    except (TypeError, ValueError):
        raise SpecValidationError(f"{context}: expected a number, got {value!r}") from None


def document_from_dict(data: dict, source: str = "") -> SpecDocument:
    _require_keys(
        data,
        {
            "format_version", "name", "dimension", "coordinates", "metric",
            "field", "identifications", "domain", "leaf_function", "loops",
            "sampling", "tolerances",
        },
        "spec",
        required={"format_version", "dimension", "coordinates", "metric", "field", "domain"},
    )
    if int(data["format_version"]) != FORMAT_VERSION:
        raise SpecValidationError(
            f"unsupported format_version {data['format_version']} (expected {FORMAT_VERSION})"
        )
    coords = tuple(str(c) for c in data["coordinates"])
    n = int(data["dimension"])
    if len(coords) != n:
        raise SpecValidationError(f"dimension {n} but {len(coords)} coordinates")

    rows = data["metric"]
    if len(rows) != n:
        raise SpecValidationError(f"metric needs {n} rows, got {len(rows)}")
    lower = []
    for i, row in enumerate(rows):
        if len(row) not in (i + 1, n):
            raise SpecValidationError(
                f"metric row {i}: expected {i + 1} (lower triangle) or {n} entries"
            )
        lower.append([_parse_expr(e, coords, f"metric[{i}]") for e in row])
    metric = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if j < len(lower[i]):
                metric[i][j] = lower[i][j]
    for i in range(n):
        for j in range(n):
            if metric[i][j] is None:
                metric[i][j] = metric[j][i]
            if metric[i][j] is None:
                raise SpecValidationError(f"metric entry ({i},{j}) missing")

    field_rows = data["field"]
    if len(field_rows) != n:
        raise SpecValidationError(f"field needs {n} components, got {len(field_rows)}")
    field_exprs = tuple(_parse_expr(e, coords, f"field[{k}]") for k, e in enumerate(field_rows))

    domain = {}
    _require_keys(data["domain"], set(coords), "domain", required=set(coords))
    for c in coords:
        entry = data["domain"][c]
        _require_keys(entry, {"min", "max", "sample", "exclusions"}, f"domain.{c}",
                      required={"min", "max"})
        lo = _float(entry["min"], f"domain.{c}.min")
        hi = _float(entry["max"], f"domain.{c}.max")
        sample = entry.get("sample")
        exclusions = tuple(
            (
                _float(z[0], f"domain.{c}.exclusions"),
                _float(z[1], f"domain.{c}.exclusions"),
            )
            for z in entry.get("exclusions", [])
        )
        domain[c] = Interval(
            lo,
            hi,
            exclusions=exclusions,
            sample_lo=_float(sample[0], f"domain.{c}.sample") if sample else None,
            sample_hi=_float(sample[1], f"domain.{c}.sample") if sample else None,
        )

    identifications = []
    for k, entry in enumerate(data.get("identifications", [])):
        _require_keys(entry, {"name", "map", "kind"}, f"identifications[{k}]",
                      required={"map"})
        mapped = entry["map"]
        if len(mapped) != n:
            raise SpecValidationError(f"identifications[{k}]: map needs {n} expressions")
        identifications.append(
            Identification(
                name=str(entry.get("name", f"ident{k}")),
                exprs=tuple(_parse_expr(e, coords, f"identifications[{k}]") for e in mapped),
                kind=str(entry.get("kind", "translation")),
            )
        )

    loops = []
    for lname, lexprs in (data.get("loops") or {}).items():
        if len(lexprs) != n:
            raise SpecValidationError(f"loops.{lname}: needs {n} expressions in u")
        loops.append(
            Loop(str(lname), tuple(_parse_expr(e, ["u"], f"loops.{lname}") for e in lexprs))
        )

    leaf = data.get("leaf_function")
    leaf_expr = _parse_expr(leaf, coords, "leaf_function") if leaf else None

    config = SplitConfig()
    sampling = data.get("sampling") or {}
    _require_keys(
        sampling,
        {"count", "seed", "t_span", "grid", "base_point", "monodromy_samples",
         "return_scan_span"},
        "sampling",
    )
    if "count" in sampling:
        config.samples = int(sampling["count"])
    if "seed" in sampling:
        config.seed = int(sampling["seed"])
    if "t_span" in sampling:
        a, b = sampling["t_span"]
        config.t_span = (_float(a, "sampling.t_span"), _float(b, "sampling.t_span"))
    if "grid" in sampling:
        gt, gl = sampling["grid"]
        config.grid_t, config.grid_leaf = int(gt), int(gl)
    if "base_point" in sampling and sampling["base_point"] is not None:
        config.base_point = tuple(_float(v, "sampling.base_point") for v in sampling["base_point"])
    if "monodromy_samples" in sampling:
        config.monodromy_samples = int(sampling["monodromy_samples"])
    if "return_scan_span" in sampling:
        config.return_scan_span = _float(sampling["return_scan_span"], "sampling.return_scan_span")

    tolerances = data.get("tolerances") or {}
    _require_keys(tolerances, {"flag", "flow", "monodromy"}, "tolerances")
    if "flag" in tolerances:
        config.tol = _float(tolerances["flag"], "tolerances.flag")
    if "flow" in tolerances:
        config.flow_tol = _float(tolerances["flow"], "tolerances.flow")
    if "monodromy" in tolerances:
        config.monodromy_tol = _float(tolerances["monodromy"], "tolerances.monodromy")

    name = str(data.get("name", ""))
    manifold = ManifoldSpec(
        coords=coords,
        metric=tuple(tuple(row) for row in metric),
        domain=domain,
        identifications=tuple(identifications),
        loops=tuple(loops),
        leaf_function=leaf_expr,
        name=name,
    )
    return SpecDocument(
        manifold=manifold, field_exprs=field_exprs, config=config, name=name, source=source
    )


def load_spec(path: str | Path, run_validation: bool = True) -> SpecDocument:
    text = Path(path).read_text()
    data = yaml.safe_load(text)
    doc = document_from_dict(data, source=str(path))
    if run_validation:
        validate(doc.manifold)
    return doc


def document_to_dict(doc: SpecDocument) -> dict:
    m = doc.manifold
    n = m.n
    out: dict = {
        "format_version": FORMAT_VERSION,
        "name": doc.name or m.name,
        "dimension": n,
        "coordinates": list(m.coords),
        "metric": [
            [ex.to_text(m.metric[i][j]) for j in range(i + 1)] for i in range(n)
        ],
        "field": [ex.to_text(e) for e in doc.field_exprs],
        "domain": {},
    }
    for c in m.coords:
        iv = m.domain[c]
        entry: dict = {"min": _json_float(iv.lo), "max": _json_float(iv.hi)}
        if iv.sample_lo is not None or iv.sample_hi is not None:
            entry["sample"] = [iv.sample_lo, iv.sample_hi]
        if iv.exclusions:
            entry["exclusions"] = [list(z) for z in iv.exclusions]
        out["domain"][c] = entry
    if m.identifications:
        out["identifications"] = [
            {"name": i.name, "map": [ex.to_text(e) for e in i.exprs], "kind": i.kind}
            for i in m.identifications
        ]
    if m.leaf_function is not None:
        out["leaf_function"] = ex.to_text(m.leaf_function)
    if m.loops:
        out["loops"] = {l.name: [ex.to_text(e) for e in l.exprs] for l in m.loops}
    cfg = doc.config
    out["sampling"] = {
        "count": cfg.samples,
        "seed": cfg.seed,
        "t_span": [cfg.t_span[0], cfg.t_span[1]],
        "grid": [cfg.grid_t, cfg.grid_leaf],
        "return_scan_span": cfg.return_scan_span,
        "monodromy_samples": cfg.monodromy_samples,
    }
    if cfg.base_point is not None:
        out["sampling"]["base_point"] = list(cfg.base_point)
    out["tolerances"] = {
        "flag": cfg.tol,
        "flow": cfg.flow_tol,
        "monodromy": cfg.monodromy_tol,
    }
    return out


def _json_float(v):
    if v == math.inf:
        return ".inf"
    if v == -math.inf:
        return "-.inf"
    return v


def save_spec(doc: SpecDocument, path: str | Path) -> None:
    Path(path).write_text(spec_to_text(doc))


def spec_to_text(doc: SpecDocument) -> str:
    return yaml.safe_dump(document_to_dict(doc), sort_keys=False, default_flow_style=None)


def fixture_to_document(fixture) -> SpecDocument:
    return SpecDocument(
        manifold=fixture.manifold,
        field_exprs=fixture.field_exprs,
        config=fixture.config,
        name=fixture.name,
        source=f"fixture:{fixture.name}",
    )


# -------------------------------------------------------------------- reports

def _clean(value):
    """Recursively convert to JSON-ready plain-Python data."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def report_envelope(command: str, doc: SpecDocument, payload: dict) -> dict:
    cfg = doc.config
    return _clean(
        {
            "schema_version": REPORT_SCHEMA_VERSION,
            "tool": {"name": "semisplit", "version": __version__},
            "command": command,
            "spec": {
                "name": doc.name or doc.manifold.name,
                "source": doc.source,
                "dimension": doc.manifold.n,
                "coordinates": list(doc.manifold.coords),
            },
            "config": {
                "tolerance": cfg.tol,
                "flow_tolerance": cfg.flow_tol,
                "monodromy_tolerance": cfg.monodromy_tol,
                "seed": cfg.seed,
                "samples": cfg.samples,
                "t_span": list(cfg.t_span),
                "grid": [cfg.grid_t, cfg.grid_leaf],
            },
            **payload,
        }
    )


def classification_payload(c: Classification) -> dict:
    payload = c.as_dict()
    factors = {}
    if c.conformal_factor:
        factors["conformal_a"] = {
            "min": min(c.conformal_factor),
            "max": max(c.conformal_factor),
        }
    if c.orth_conformal_factor:
        factors["orth_conformal_rho"] = {
            "min": min(c.orth_conformal_factor),
            "max": max(c.orth_conformal_factor),
        }
    if c.lambda_values:
        factors["lambda"] = {"min": min(c.lambda_values), "max": max(c.lambda_values)}
    payload["factors"] = factors
    return payload


def split_payload(rep: SplitReport) -> dict:
    out: dict = {
        "verdict": rep.verdict,
        "verdict_detail": rep.verdict_detail,
        "classification": classification_payload(rep.classification),
        "decomposition_type": rep.decomposition_type.value if rep.decomposition_type else None,
        "base": {
            "kind": rep.base.kind,
            "interval": list(rep.base.interval) if rep.base.interval else None,
            "period": rep.base.period,
            "evidence": rep.base.evidence,
        },
        "returns_status": rep.returns_status,
        "returns": [[t, p] for t, p in rep.returns],
        "errors": rep.errors,
    }
    if rep.curvature is not None:
        out["curvature_conditions"] = {
            "applicable": rep.curvature.applicable,
            "div_sign": rep.curvature.div_sign,
            "ric_sign": rep.curvature.ric_sign,
            "div_identity_residual": rep.curvature.div_identity_residual,
            "ric_identity_residual": rep.curvature.ric_identity_residual,
        }
    if rep.bochner is not None:
        out["bochner"] = {
            "identity_residual": rep.bochner.identity_residual,
            "trace_residual": rep.bochner.trace_residual,
            "cs_gap_min": rep.bochner.cs_gap_min,
            "expansion_condition_min": rep.bochner.expansion_condition_min,
            "ricci_min": rep.bochner.ricci_min,
            "equality_case": rep.bochner.equality_case,
            "hypotheses_hold": rep.bochner.hypotheses_hold,
        }
    if rep.monodromy is not None:
        out["monodromy"] = {
            "verdict": rep.monodromy.verdict,
            "return_time": rep.monodromy.return_time,
            "max_displacement": rep.monodromy.max_displacement,
            "failed_samples": rep.monodromy.failed_samples,
            "witness": rep.monodromy.witness,
        }
    if rep.periods is not None:
        out["periods"] = {
            "values": rep.periods.values,
            "classification": rep.periods.classification,
            "rank": rep.periods.rank,
            "caveats": rep.periods.caveats,
        }
    if rep.decomposition is not None:
        deco = rep.decomposition
        out["decomposition"] = {
            "type": deco.type.value,
            "max_residual": deco.max_residual,
            "rms_residual": deco.rms_residual,
            "nodes_total": deco.nodes_total,
            "nodes_unreachable": deco.nodes_unreachable,
            "leaf_point": deco.leaf_point,
            "leaf_value": deco.leaf_value,
            "leaf_metric_signs": deco.leaf_metric_signs,
            "verdict_text": deco.verdict_text,
        }
        if deco.warping is not None:
            out["decomposition"]["warping"] = {
                "t_grid": deco.warping.t_grid,
                "values": deco.warping.values,
                "achieved": list(deco.warping.achieved),
                "leaf_independence": deco.warping.leaf_independence,
                "construction_agreement": deco.warping.construction_agreement,
            }
    return out


def to_json(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"
