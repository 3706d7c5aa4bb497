"""Command-line interface.

Subcommands::

    povmcert derive-bound --povm triangular --theta 1.5708
    povmcert certify --povm square --theta 1.0472 --mode boundary
    povmcert scan-noise --theta 1.5708 --p 0:0.1:6 --out scan/
    povmcert ingest table.csv --quad-m 0

Exit codes: 0 success, 2 input error, 3 solver failure, 4 infeasible
constraints.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .certify import certify_record, certify_table
from .errors import CertificationError, FitError, InfeasibleConstraints, SolverError
from .npa import NPAScenario, extended_bff_extras
from .qubit import RankOnePOVM, require_valid
from .scenario import (
    BUILTIN_POVMS,
    NoiseModel,
    alpha_for_theta,
    chsh_value,
    protocol_correlations,
    read_experiment_csv,
    record_from_row,
    tilted_chsh,
)
from .sdp import SolverConfig
from .tsirelson import bell_value, derive_coefficients, ideal_saturation_residual

log = logging.getLogger("povmcert")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_INFEASIBLE = 0, 2, 3, 4


@dataclass
class RunManifest:
    """Everything needed to rerun a command and get the same numbers."""

    command: str
    inputs: list = field(default_factory=list)
    parameters: dict = field(default_factory=dict)
    seed: int | None = None  # all computations are deterministic
    version: str = __version__

    def to_dict(self) -> dict:
        return asdict(self)


class InputError(CertificationError):
    pass


def load_povm(spec: str) -> RankOnePOVM:
    """Builtin name or path to a JSON file with rank-one elements."""
    if spec in BUILTIN_POVMS:
        return BUILTIN_POVMS[spec]()
    path = Path(spec)
    if not path.exists():
        raise InputError(f"unknown POVM {spec!r}: not a builtin ({', '.join(BUILTIN_POVMS)}) nor a file")
    povm = RankOnePOVM.from_json(path.read_text(), name=path.stem)
    require_valid(povm)
    return povm


def parse_grid(text: str) -> list[float]:
    """Either 'a,b,c' or 'start:stop:num' (inclusive, like numpy.linspace)."""
    try:
        if ":" in text:
            start, stop, num = text.split(":")
            return [float(v) for v in np.linspace(float(start), float(stop), int(num))]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InputError(f"cannot parse grid {text!r}: {exc}") from exc


def _branch(name: str) -> int:
    return 1 if name == "plus" else -1


def _config(args) -> SolverConfig:
    return SolverConfig(verbose=args.verbose)


def _emit(args, filename: str, text: str) -> None:
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / filename).write_text(text + "\n")


# --------------------------------------------------------------------------- commands


def cmd_derive_bound(args) -> int:
    povm = load_povm(args.povm)
    branch = _branch(args.sigma2_branch)
    coeffs = derive_coefficients(args.theta, povm, branch)
    manifest = RunManifest("derive-bound", [args.povm], {"theta": args.theta, "sigma2_branch": args.sigma2_branch})
    payload = {
        "manifest": manifest.to_dict(),
        "theta": args.theta,
        "n": coeffs.n.tolist(),
        "norm_residuals": (np.abs(coeffs.norms() - 1)).tolist(),
        "saturation_residual": ideal_saturation_residual(args.theta, povm, branch),
    }
    _emit(args, "coefficients.json", json.dumps(payload, indent=2))
    return EXIT_OK


def _extras(args, d: int):
    if getattr(args, "bff_extras", "default") == "extended":
        return extended_bff_extras(NPAScenario(d, eve="z"))
    return None


def _certify_one(corr, povm, mode, args):
    m = args.quad_m or None
    return certify_table(corr, povm, mode, args.level, m, config=_config(args),
                         sigma2_branch=_branch(args.sigma2_branch), workers=args.workers,
                         extras=_extras(args, povm.d))


def cmd_certify(args) -> int:
    povm = load_povm(args.povm)
    corr = protocol_correlations(args.theta, noise=NoiseModel(args.p, args.c), povm=povm)
    res = _certify_one(corr, povm, args.mode, args)
    params = {"theta": args.theta, "p": args.p, "c": args.c, "mode": args.mode, "level": args.level,
              "m": args.quad_m, "sigma2_branch": args.sigma2_branch, "bff_extras": args.bff_extras}
    manifest = RunManifest("certify", [args.povm], params)
    _emit(args, "certificate.json", res.to_json(manifest=manifest.to_dict()))
    return EXIT_OK


SCAN_FIELDS = ["p", "S", "I_alpha", "CHSH", "H_min_full", "H_min_boundary", "delta", "status"]


def cmd_scan_noise(args) -> int:
    povm = load_povm(args.povm)
    grid = parse_grid(args.p)
    if any(not 0 <= p <= 0.3 for p in grid):
        raise InputError("noise grid must lie within [0, 0.3]")
    coeffs = derive_coefficients(args.theta, povm, _branch(args.sigma2_branch))
    alpha = alpha_for_theta(args.theta)
    rows = []
    for p in grid:
        corr = protocol_correlations(args.theta, noise=NoiseModel(p, args.c), povm=povm)
        row = {"p": p, "S": bell_value(coeffs, corr), "I_alpha": tilted_chsh(corr, alpha),
               "CHSH": chsh_value(corr), "status": "ok"}
        try:
            full = certify_table(corr, povm, "full", args.level, config=_config(args))
            bnd = certify_table(corr, povm, "boundary", args.level, config=_config(args),
                                sigma2_branch=_branch(args.sigma2_branch))
            row.update(H_min_full=full.h_min, H_min_boundary=bnd.h_min, delta=full.h_min - bnd.h_min)
            if full.approximate or bnd.approximate:
                row["status"] = "approximate"
        except SolverError as exc:
            log.warning("p=%g: %s", p, exc)
            row.update(H_min_full=math.nan, H_min_boundary=math.nan, delta=math.nan, status=f"failed: {exc}")
        rows.append(row)
        log.info("p=%.4f done (%s)", p, row["status"])

    params = {"theta": args.theta, "p": grid, "c": args.c, "level": args.level,
              "sigma2_branch": args.sigma2_branch}
    manifest = RunManifest("scan-noise", [args.povm], params)
    text = scan_csv(rows, manifest)
    _emit(args, "scan.csv", text)
    if args.out:
        (Path(args.out) / "scan.svg").write_text(scan_svg(rows, manifest))
    return EXIT_OK


def scan_csv(rows: list[dict], manifest: RunManifest) -> str:
    buf = io.StringIO()
    buf.write("# manifest: " + json.dumps(manifest.to_dict()) + "\n")
    writer = csv.DictWriter(buf, SCAN_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue().rstrip("\n")


def scan_svg(rows: list[dict], manifest: RunManifest, width: int = 480, height: int = 320) -> str:
    """Standalone SVG with H_min for both constraint modes against p."""
    pad = 50
    ps = [r["p"] for r in rows]
    series = {
        "full correlations": ([r["H_min_full"] for r in rows], "#1f77b4"),
        "boundary only": ([r["H_min_boundary"] for r in rows], "#d62728"),
    }
    finite = [v for vals, _ in series.values() for v in vals if np.isfinite(v)]
    ymax = max(finite, default=1.0) or 1.0
    xmin, xmax = min(ps), max(ps)
    xspan = (xmax - xmin) or 1.0

    def px(p):
        return pad + (p - xmin) / xspan * (width - 2 * pad)

    def py(h):
        return height - pad - h / ymax * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f"<metadata>{json.dumps(manifest.to_dict())}</metadata>",
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 15}" text-anchor="middle" font-size="12">p</text>',
        f'<text x="15" y="{height / 2}" font-size="12" transform="rotate(-90 15 {height / 2})">H_min (bits)</text>',
        f'<text x="{pad - 5}" y="{pad}" text-anchor="end" font-size="10">{ymax:.3g}</text>',
        f'<text x="{pad}" y="{height - pad + 15}" font-size="10">{xmin:.3g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 15}" text-anchor="end" font-size="10">{xmax:.3g}</text>',
    ]
    for k, (label, (vals, colour)) in enumerate(series.items()):
        pts = " ".join(f"{px(p):.1f},{py(h):.1f}" for p, h in zip(ps, vals) if np.isfinite(h))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="2"/>')
        parts.append(f'<text x="{width - pad}" y="{pad + 15 * k}" text-anchor="end" font-size="11" fill="{colour}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


INGEST_FIELDS = ["row", "theta", "I_alpha", "S", "A3", "approximate", "H_min", "H", "H_min_ref", "H_ref", "status"]


def cmd_ingest(args) -> int:
    path = Path(args.records)
    try:
        rows = read_experiment_csv(path.read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    povm = load_povm(args.povm)
    m = args.quad_m or None
    out_rows = []
    for i, raw in enumerate(rows):
        entry = {"row": i, "status": "ok"}
        try:
            rec = record_from_row(raw)
            entry.update(theta=rec.theta, I_alpha=rec.i_alpha, S=rec.s, A3=rec.a3, approximate=rec.approximate,
                         H_min_ref=rec.reference.get("H_min", ""), H_ref=rec.reference.get("H", ""))
            if not rec.consistent():
                raise FitError("row violates <I_alpha> <= I_alpha^Q or <S> <= 1")
            res = certify_record(rec, povm, args.level, m, _config(args), _branch(args.sigma2_branch), args.workers,
                                 _extras(args, povm.d))
            entry.update(H_min=res.h_min, H=res.h_vn if res.h_vn is not None else "")
            if res.approximate and not rec.approximate:
                entry["status"] = "approximate"
        except FitError as exc:
            entry["status"] = f"skipped: {exc}"
        except InfeasibleConstraints as exc:
            entry["status"] = f"infeasible: {exc}"
        except SolverError as exc:
            entry["status"] = f"solver failure: {exc}"
        log.info("row %d: %s", i, entry["status"])
        out_rows.append(entry)

    params = {"level": args.level, "m": args.quad_m, "povm": args.povm, "sigma2_branch": args.sigma2_branch,
              "bff_extras": args.bff_extras}
    manifest = RunManifest("ingest", [str(path)], params)
    buf = io.StringIO()
    buf.write("# manifest: " + json.dumps(manifest.to_dict()) + "\n")
    writer = csv.DictWriter(buf, INGEST_FIELDS, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in out_rows:
        writer.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in row.items()})
    _emit(args, "ingest.csv", buf.getvalue().rstrip("\n"))
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="povmcert", description="Device-independent randomness certification for qubit POVMs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver iterations")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, theta_default=None):
        p.add_argument("--theta", type=float, default=theta_default, required=theta_default is None,
                       help="state angle in (0, pi)")
        p.add_argument("--povm", default="triangular", help="builtin name or POVM JSON file")
        p.add_argument("--sigma2-branch", choices=("plus", "minus"), default="plus")
        p.add_argument("--out", help="directory for output files")

    def solver_opts(p):
        p.add_argument("--level", type=int, default=2, help="NPA level")
        p.add_argument("--quad-m", type=int, default=0, help="Gauss-Radau nodes for the H(B|E) bound; 0 skips it")
        p.add_argument("--workers", type=int, default=1, help="processes for the quadrature nodes")
        p.add_argument("--bff-extras", choices=("default", "extended"), default="default",
                       help="extra monomials for the entropy programs; 'extended' adds A B Z words")

    p = sub.add_parser("derive-bound", help="boundary coefficients n_b and saturation residual")
    common(p)
    p.set_defaults(func=cmd_derive_bound)

    p = sub.add_parser("certify", help="certify simulated correlations")
    common(p)
    solver_opts(p)
    p.add_argument("--p", type=float, default=0.0, help="depolarizing noise")
    p.add_argument("--c", type=float, default=0.0, help="decoherence")
    p.add_argument("--mode", choices=("boundary", "standard", "full"), default="boundary")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("scan-noise", help="min-entropy vs depolarization, full vs boundary-only")
    common(p, theta_default=math.pi / 2)
    p.add_argument("--level", type=int, default=2, help="NPA level")
    p.add_argument("--p", default="0:0.1:11", help="grid 'a,b,c' or 'start:stop:num' within [0, 0.3]")
    p.add_argument("--c", type=float, default=0.0, help="decoherence")
    p.set_defaults(func=cmd_scan_noise)

    p = sub.add_parser("ingest", help="certify experimental rows (columns theta?, I_alpha, S, A3?)")
    p.add_argument("records", help="CSV file")
    p.add_argument("--povm", default="triangular", help="builtin name or POVM JSON file")
    p.add_argument("--sigma2-branch", choices=("plus", "minus"), default="plus")
    p.add_argument("--out", help="directory for output files")
    solver_opts(p)
    p.set_defaults(func=cmd_ingest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InfeasibleConstraints as exc:
        print(f"error: infeasible constraints: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverError as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (CertificationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
