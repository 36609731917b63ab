"""Command-line interface: identities | normal-form | quantize | oracle | compare.

Each command reads one config file, writes CSV results plus a JSON run
manifest into the output directory, and prints a short summary.  Outputs are
deterministic for a fixed config and seed; floats are formatted with 12
significant digits.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .chart import TorusChart, contour_matrices
from .config import ConfigError, RunConfig, load_config, serialize_config
from .identities import identity_suite
from .normalform import QuadraticHamiltonianSet, compute_normal_form, validate
from .oracle import exact_spectrum
from .quantize import QuantizationRequest, ebk_eigenvalues

FMT = "{:.11E}"


def _fmt(x) -> str:
    return FMT.format(float(x))


def _out_dir(cfg: RunConfig, override: str | None) -> Path:
    out = Path(override) if override else Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, cfg: RunConfig, command: str, extra: dict) -> None:
    pot = cfg.balanced_potential()
    manifest = {
        "command": command,
        "torusq_version": __version__,
        "config": serialize_config(cfg),
        "balanced_potential": {
            "u_coeffs_in_r2": list(pot.u),
            "omega0": pot.omega0,
            "mass": pot.mass,
            "length_conversion": pot.length_scale,
        },
        **extra,
    }
    with open(out / f"{command.replace('-', '_')}_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_identities(cfg: RunConfig, out: Path, tol: float | None, seed: int | None) -> int:
    pot = cfg.balanced_potential()
    chart = TorusChart(pot, sector=+1)
    rng = np.random.default_rng(seed if seed is not None else cfg.seed)
    pts = chart.sample_interior_points(cfg.identity_points, rng)
    tol = tol if tol is not None else cfg.identity_tol
    report = identity_suite(chart, pts, tol=tol)
    rows = [[name, _fmt(r.rel_residual), _fmt(r.max_abs_residual), _fmt(r.scale)]
            for name, r in sorted(report.results.items())]
    _write_csv(out / "identities.csv", ["identity", "rel_residual", "abs_residual", "scale"], rows)
    _write_manifest(out, cfg, "identities",
                    {"tolerance": tol, "n_points": cfg.identity_points,
                     "max_rel_residual": report.max_rel})
    for line in report.lines():
        print(line)
    failures = report.failures(tol)
    if failures:
        print(f"FAILED: {len(failures)} identities above tol={tol}: {failures}")
        return 1
    print(f"all identities within tol={tol} (max rel residual {report.max_rel:.3e})")
    return 0


def _model_hessians(cfg: RunConfig) -> QuadraticHamiltonianSet:
    w0 = cfg.balanced_potential().omega0
    q1 = w0 * np.eye(4)
    q2 = np.zeros((4, 4))
    q2[0, 3] = q2[3, 0] = 1.0
    q2[1, 2] = q2[2, 1] = -1.0
    return QuadraticHamiltonianSet((q1, q2))


def cmd_normal_form(cfg: RunConfig, out: Path, matrices_path: str | None) -> int:
    if matrices_path:
        with open(matrices_path, "r", encoding="utf-8") as fh:
            mats = [np.asarray(m, dtype=float) for m in json.load(fh)]
        qset = QuadraticHamiltonianSet(tuple(mats))
    else:
        qset = _model_hessians(cfg)
    violations = validate(qset)
    if violations:
        print("input set invalid:")
        for v in violations:
            print(f"  - {v}")
        return 1
    nf = compute_normal_form(qset)
    result = {
        "S": nf.S.tolist(),
        "a": nf.a.tolist(),
        "lambdas": nf.lambdas.tolist(),
        "blocks": [[lam, n] for lam, n in nf.blocks],
        "negated_q1": nf.negated_q1,
        "residual_symplectic": nf.residual_symplectic,
        "residual_normal_form": nf.residual_normal_form,
    }
    with open(out / "normal_form.json", "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2)
    rows = [[i] + [_fmt(v) for v in row] for i, row in enumerate(nf.a)]
    _write_csv(out / "normal_form_a.csv",
               ["row"] + [f"col{k}" for k in range(nf.a.shape[1])], rows)
    _write_manifest(out, cfg, "normal-form", {
        "residual_symplectic": nf.residual_symplectic,
        "residual_normal_form": nf.residual_normal_form,
    })
    print(f"a = {nf.a.tolist()}")
    print(f"residuals: symplectic {nf.residual_symplectic:.3e}, normal form {nf.residual_normal_form:.3e}")
    return 0


QUANT_HEADER = ["n_r", "m", "A_r", "L", "E0_H", "E0_L", "corr_H", "corr_L",
                "E_H", "E_L", "flagged"]


def cmd_quantize(cfg: RunConfig, out: Path) -> int:
    pot = cfg.balanced_potential()
    chart = TorusChart(pot, sector=+1)
    req = QuantizationRequest(
        chart=chart, hbar=cfg.hbar, quantum_numbers=cfg.quantum_numbers(),
        averaging_grid=(cfg.grid_r, cfg.grid_theta), include_h2=cfg.include_h2,
    )
    table = ebk_eigenvalues(req)
    rows = [
        [r.n_r, r.m, _fmt(r.a_r), _fmt(r.l), _fmt(r.e0_h), _fmt(r.e0_l),
         _fmt(r.corr_h), _fmt(r.corr_l), _fmt(r.e_h), _fmt(r.e_l), r.flagged]
        for r in table.rows
    ]
    _write_csv(out / "quantize.csv", QUANT_HEADER, rows)
    _write_manifest(out, cfg, "quantize", {
        "hbar": cfg.hbar,
        "averaging_grid": [cfg.grid_r, cfg.grid_theta],
        "include_h2": cfg.include_h2,
        "contours": {
            "positive_sector": contour_matrices(+1)[0].tolist(),
            "negative_sector": contour_matrices(-1)[0].tolist(),
            "maslov": contour_matrices(+1)[1].tolist(),
        },
        "n_states": len(table.rows),
    })
    print(f"wrote {len(table.rows)} states to {out / 'quantize.csv'}")
    return 0


def cmd_oracle(cfg: RunConfig, out: Path) -> int:
    pot = cfg.balanced_potential()
    m_list = [m for m in range(-cfg.m_abs_max, cfg.m_abs_max + 1) if m != 0]
    spec = exact_spectrum(
        pot, cfg.hbar, m_list, cfg.n_r_max + cfg.oracle_extra_levels,
        r_max=cfg.oracle_r_max or None, n_points=cfg.oracle_n_points,
    )
    rows = []
    for m in m_list:
        for n_r, e in enumerate(spec.levels[m]):
            rows.append([n_r, m, _fmt(e), _fmt(spec.convergence[m][n_r])])
    _write_csv(out / "oracle.csv", ["n_r", "m", "E_exact", "convergence_estimate"], rows)
    _write_manifest(out, cfg, "oracle", {
        "hbar": cfg.hbar, "r_max": spec.r_max, "n_points": spec.n_points,
    })
    print(f"wrote {len(rows)} levels to {out / 'oracle.csv'}")
    return 0


def cmd_compare(cfg: RunConfig, out: Path, generate: bool) -> int:
    qpath, opath = out / "quantize.csv", out / "oracle.csv"
    if not qpath.exists() or not opath.exists():
        if not generate:
            missing = [str(p) for p in (qpath, opath) if not p.exists()]
            print(f"missing inputs {missing}; run quantize/oracle first or pass --generate")
            return 1
        if not qpath.exists():
            cmd_quantize(cfg, out)
        if not opath.exists():
            cmd_oracle(cfg, out)

    with open(qpath, newline="", encoding="utf-8") as fh:
        qrows = {(int(r["n_r"]), int(r["m"])): r for r in csv.DictReader(fh)}
    with open(opath, newline="", encoding="utf-8") as fh:
        orows = {(int(r["n_r"]), int(r["m"])): r for r in csv.DictReader(fh)}

    joined = sorted(set(qrows) & set(orows))
    unmatched = sorted(set(qrows) - set(orows))
    if unmatched:
        print(f"warning: {len(unmatched)} quantized states without oracle rows: {unmatched}")
    if not joined:
        print("no common (n_r, m) keys between quantize and oracle tables")
        return 1

    rows = []
    err0, err2 = [], []
    for key in joined:
        q, o = qrows[key], orows[key]
        e0, e2, ex = float(q["E0_H"]), float(q["E_H"]), float(o["E_exact"])
        err0.append(abs(e0 - ex))
        err2.append(abs(e2 - ex))
        rows.append([key[0], key[1], q["E0_H"], q["E_H"], o["E_exact"],
                     _fmt(e0 - ex), _fmt(e2 - ex)])
    _write_csv(out / "compare.csv",
               ["n_r", "m", "E_EBK0", "E_EBK2", "E_exact", "err_EBK0", "err_EBK2"], rows)

    err0, err2 = np.asarray(err0), np.asarray(err2)
    summary = {
        "n_states": len(joined),
        "max_err_ebk0": float(err0.max()),
        "mean_err_ebk0": float(err0.mean()),
        "max_err_ebk2": float(err2.max()),
        "mean_err_ebk2": float(err2.mean()),
        "improvement_ratio_max": float(err0.max() / max(err2.max(), 1e-300)),
        "improvement_ratio_mean": float(err0.mean() / max(err2.mean(), 1e-300)),
    }
    _write_manifest(out, cfg, "compare", {"summary": summary})
    for k, v in summary.items():
        print(f"{k}: {v:.6e}" if isinstance(v, float) else f"{k}: {v}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="torusq",
        description="Torus quantization through second order in hbar, with an exact oracle.",
    )
    parser.add_argument("--version", action="version", version=f"torusq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to the INI run configuration")
        p.add_argument("--out", default=None, help="output directory (default: from config)")

    p_id = sub.add_parser("identities", help="run the diagrammatic identity suite")
    common(p_id)
    p_id.add_argument("--tol", type=float, default=None, help="override the identity tolerance")
    p_id.add_argument("--seed", type=int, default=None, help="override the sample-point seed")

    p_nf = sub.add_parser("normal-form", help="symplectic normal form of the model Hessians")
    common(p_nf)
    p_nf.add_argument("--matrices", default=None,
                      help="JSON file with explicit Hessian matrices (default: model Hessians)")

    p_q = sub.add_parser("quantize", help="torus-quantized eigenvalue table")
    common(p_q)

    p_o = sub.add_parser("oracle", help="exact eigenvalues from the radial solver")
    common(p_o)

    p_c = sub.add_parser("compare", help="join quantize and oracle tables; summary statistics")
    common(p_c)
    p_c.add_argument("--generate", action="store_true",
                     help="run quantize/oracle first if their outputs are missing")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = _out_dir(cfg, args.out)
    try:
        if args.command == "identities":
            return cmd_identities(cfg, out, args.tol, args.seed)
        if args.command == "normal-form":
            return cmd_normal_form(cfg, out, args.matrices)
        if args.command == "quantize":
            return cmd_quantize(cfg, out)
        if args.command == "oracle":
            return cmd_oracle(cfg, out)
        if args.command == "compare":
            return cmd_compare(cfg, out, args.generate)
    except Exception as exc:   # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
