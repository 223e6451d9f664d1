"""Command-line interface.

Verbs: classify, split, periods, verify, fixtures.  A SPEC argument is a
path to a spec file or the name of a built-in fixture.  Exit codes: 0 on
success, 2 on spec validation failure, 3 on numerical failure; `fixtures
--run-all` exits 1 when any expectation is violated.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import expr as ex
from .classify import (
    EmptySampleError,
    InconsistentFlagsError,
    NonUnitFieldError,
    NullGradientError,
    classify_field,
    decomposition_type,
)
from .fixtures import catalog, get as get_fixture
from .flow import FlowError, LeafFunctionError, NonClosedOneFormError, period_group
from .geometry import GeometryError
from .manifold import SpecValidationError, sample_points, validate
from .split import reconstruct_and_verify, sample_leaf_points, split_report
from . import specfile
from .specfile import (
    SpecDocument,
    classification_payload,
    fixture_to_document,
    load_spec,
    report_envelope,
    save_spec,
    split_payload,
    to_json,
)

NUMERICAL_ERRORS = (
    GeometryError,
    FlowError,
    NonClosedOneFormError,
    InconsistentFlagsError,
    EmptySampleError,
    NonUnitFieldError,
    NullGradientError,
    LeafFunctionError,
)
SPEC_ERRORS = (SpecValidationError, ex.ExprError)


def _resolve_spec(token: str) -> SpecDocument:
    path = Path(token)
    if path.exists():
        return load_spec(path)
    try:
        return fixture_to_document(get_fixture(token))
    except KeyError:
        raise SpecValidationError(
            f"'{token}' is neither a spec file nor a known fixture"
        ) from None


def _apply_overrides(doc: SpecDocument, args) -> SpecDocument:
    cfg = doc.config
    if args.tol is not None:
        cfg.tol = args.tol
    if args.seed is not None:
        cfg.seed = args.seed
    if args.samples is not None:
        cfg.samples = args.samples
    if getattr(args, "t_span", None):
        a, b = args.t_span.split(":")
        cfg.t_span = (float(a), float(b))
    return doc


def _emit(args, report: dict, human_lines: list[str]) -> None:
    if args.format == "machine":
        sys.stdout.write(to_json(report))
    else:
        sys.stdout.write("\n".join(human_lines) + "\n")


def _emit_table(path: str, t_grid, columns: dict[str, list[float]]) -> None:
    """Delimiter-separated values with a one-line header; plot-ready."""
    names = ["t"] + list(columns)
    lines = [",".join(names)]
    for k, t in enumerate(t_grid):
        row = [repr(float(t))] + [repr(float(col[k])) for col in columns.values()]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


# ------------------------------------------------------------------ commands

def cmd_classify(args) -> int:
    doc = _apply_overrides(_resolve_spec(args.spec), args)
    samples = sample_points(doc.manifold, doc.config.samples, seed=doc.config.seed)
    c = classify_field(doc.manifold, doc.vector_field(), samples, tol=doc.config.tol)
    payload: dict = {"classification": classification_payload(c)}
    try:
        payload["decomposition_type"] = decomposition_type(c).value
    except InconsistentFlagsError as err:
        payload["decomposition_type"] = None
        payload["errors"] = [str(err)]
    report = report_envelope("classify", doc, payload)
    lines = [f"classification of '{doc.name or args.spec}' (eps = {c.eps}):"]
    for name, flag in c.flags.items():
        lines.append(
            f"  {name:>24}: {str(flag.value):5}  max residual {flag.max_residual:.3e}"
            + ("" if flag.value else f"  [{flag.pattern}]")
        )
    lines.append(f"  predicted type: {payload['decomposition_type']}")
    _emit(args, report, lines)
    return 0


def cmd_split(args) -> int:
    doc = _apply_overrides(_resolve_spec(args.spec), args)
    rep = split_report(doc.manifold, doc.vector_field(), doc.config)
    report = report_envelope("split", doc, split_payload(rep))
    lines = [
        f"verdict: {rep.verdict}",
        f"  {rep.verdict_detail}",
        f"  type: {rep.decomposition_type.value if rep.decomposition_type else 'n/a'}"
        f" | base: {rep.base.kind}"
        + (f" | period: {rep.base.period:.9g}" if rep.base.period else ""),
    ]
    if rep.decomposition is not None:
        lines.append(
            f"  pullback residual: max {rep.decomposition.max_residual:.3e},"
            f" rms {rep.decomposition.rms_residual:.3e}"
            f" ({rep.decomposition.nodes_unreachable}/{rep.decomposition.nodes_total}"
            f" nodes unreachable)"
        )
    if rep.periods is not None:
        vals = ", ".join(f"{k}={v:.10g}" for k, v in rep.periods.values.items())
        lines.append(f"  periods: {rep.periods.classification} ({vals})")
    for err in rep.errors:
        lines.append(f"  note: {err}")
    if args.emit_table and rep.decomposition is not None and rep.decomposition.warping is not None:
        warp = rep.decomposition.warping
        cols = {f"f_{j}": warp.values[j] for j in range(warp.values.shape[0])}
        _emit_table(args.emit_table, warp.t_grid, cols)
    _emit(args, report, lines)
    return 0


def cmd_periods(args) -> int:
    doc = _apply_overrides(_resolve_spec(args.spec), args)
    rep = period_group(doc.manifold, doc.vector_field())
    payload = {
        "periods": {
            "values": rep.values,
            "classification": rep.classification,
            "rank": rep.rank,
            "caveats": rep.caveats,
        }
    }
    report = report_envelope("periods", doc, payload)
    lines = [f"period subgroup: {rep.classification} (rank {rep.rank})"]
    for k, v in rep.values.items():
        lines.append(f"  {k}: {v:.12g}")
    for cav in rep.caveats:
        lines.append(f"  caveat: {cav}")
    _emit(args, report, lines)
    return 0


def cmd_verify(args) -> int:
    doc = _apply_overrides(_resolve_spec(args.spec), args)
    m = doc.manifold
    if m.leaf_function is None:
        raise SpecValidationError("verify needs a declared leaf function")
    fld = doc.vector_field()
    cfg = doc.config
    samples = sample_points(m, cfg.samples, seed=cfg.seed)
    c = classify_field(m, fld, samples, tol=cfg.tol)
    dtype = decomposition_type(c)
    base_point = (
        np.asarray(cfg.base_point, dtype=float)
        if cfg.base_point is not None
        else sample_points(m, 1, seed=cfg.seed)[0]
    )
    leaf_pts = sample_leaf_points(m, fld, base_point, cfg.grid_leaf, seed=cfg.seed)
    t_grid = np.linspace(cfg.t_span[0], cfg.t_span[1], cfg.grid_t)
    deco = reconstruct_and_verify(m, fld, leaf_pts, t_grid, dtype, flow_tol=cfg.flow_tol)
    payload = {
        "classification": classification_payload(c),
        "decomposition": {
            "type": deco.type.value,
            "max_residual": deco.max_residual,
            "rms_residual": deco.rms_residual,
            "nodes_total": deco.nodes_total,
            "nodes_unreachable": deco.nodes_unreachable,
            "verdict_text": deco.verdict_text,
        },
    }
    report = report_envelope("verify", doc, payload)
    lines = [
        f"model: {deco.type.value}",
        f"  {deco.verdict_text}",
        f"  rms residual {deco.rms_residual:.3e};"
        f" {deco.nodes_unreachable}/{deco.nodes_total} nodes unreachable",
    ]
    if args.emit_table and deco.warping is not None:
        cols = {f"f_{j}": deco.warping.values[j] for j in range(deco.warping.values.shape[0])}
        _emit_table(args.emit_table, deco.warping.t_grid, cols)
    _emit(args, report, lines)
    return 0


def _flags_match(fixture, classification) -> list[str]:
    mismatches = []
    for name, expected in fixture.expected_flags.items():
        actual = classification.flags[name].value
        if actual != expected:
            mismatches.append(f"flag {name}: expected {expected}, got {actual}")
    return mismatches


def cmd_fixtures(args) -> int:
    if args.export:
        fixture = get_fixture(args.export)
        out = args.out or f"{fixture.name}.yaml"
        save_spec(fixture_to_document(fixture), out)
        sys.stdout.write(f"wrote {out}\n")
        return 0
    if not args.run_all:
        rows = [
            {"name": f.name, "dimension": f.manifold.n, "verdict": f.expected_verdict}
            for f in catalog()
        ]
        if args.format == "machine":
            sys.stdout.write(to_json({"fixtures": rows}))
        else:
            for r in rows:
                sys.stdout.write(
                    f"{r['name']:32} n={r['dimension']}  expected: {r['verdict']}\n"
                )
        return 0

    failures = 0
    results = []
    for fixture in catalog():
        validate(fixture.manifold)
        cfg = fixture.config
        if args.tol is not None:
            cfg.tol = args.tol
        samples = sample_points(fixture.manifold, cfg.samples, seed=cfg.seed)
        fld = fixture.vector_field()
        c = classify_field(fixture.manifold, fld, samples, tol=cfg.tol)
        problems = _flags_match(fixture, c)
        rep = split_report(fixture.manifold, fld, cfg)
        if rep.verdict != fixture.expected_verdict:
            problems.append(
                f"verdict: expected {fixture.expected_verdict!r}, got {rep.verdict!r}"
            )
        status = "ok" if not problems else "MISMATCH"
        if problems:
            failures += 1
        results.append({"name": fixture.name, "status": status, "problems": problems})
        if args.format != "machine":
            sys.stdout.write(f"{fixture.name:32} {status}\n")
            for prob in problems:
                sys.stdout.write(f"    {prob}\n")
    if args.format == "machine":
        sys.stdout.write(to_json({"results": results, "failures": failures}))
    else:
        sys.stdout.write(f"{len(results) - failures}/{len(results)} fixtures match\n")
    return 0 if failures == 0 else 1


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semisplit",
        description="classify vector fields on semi-Riemannian manifolds and"
                    " verify product decompositions",
    )
    parser.add_argument("--version", action="version", version=f"semisplit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_span=True):
        p.add_argument("--tol", type=float, default=None, help="flag tolerance override")
        p.add_argument("--seed", type=int, default=None, help="sampling seed override")
        p.add_argument("--samples", type=int, default=None, help="sample count override")
        if with_span:
            p.add_argument("--t-span", dest="t_span", default=None, metavar="A:B",
                           help="flow parameter span, e.g. -1:1")
        p.add_argument("--emit-table", dest="emit_table", default=None, metavar="PATH",
                       help="write the warping/residual grid as CSV")
        p.add_argument("--format", choices=("human", "machine"), default="human")

    p = sub.add_parser("classify", help="evaluate the hypothesis flags")
    p.add_argument("spec", help="spec file path or fixture name")
    common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("split", help="full decomposition pipeline")
    p.add_argument("spec")
    common(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("periods", help="loop periods of the field's one-form")
    p.add_argument("spec")
    common(p, with_span=False)
    p.set_defaults(func=cmd_periods)

    p = sub.add_parser("verify", help="reconstruct the product metric and verify by pullback")
    p.add_argument("spec")
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("fixtures", help="list, export, or run the built-in catalog")
    p.add_argument("--run-all", action="store_true", dest="run_all",
                   help="run the expected-vs-actual matrix; nonzero exit on mismatch")
    p.add_argument("--export", default=None, metavar="NAME",
                   help="write a fixture as a spec file")
    p.add_argument("--out", default=None, metavar="PATH")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--format", choices=("human", "machine"), default="human")
    p.set_defaults(func=cmd_fixtures)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SPEC_ERRORS as err:
        print(f"spec error: {err}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as err:
        print(f"numerical error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
