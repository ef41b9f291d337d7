"""Command-line pipeline: simulate, analyze, blocks, recover, verify.

Exit codes: 0 success, 1 verification failure, 2 usage or config error.
The GDFM_SEED environment variable overrides the configured seed and
``--threads`` caps BLAS parallelism (set before numpy loads).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynfactor",
        description="Simulate factor panels, block and invert their transfer "
                    "functions, recover the common shocks, and verify a run.")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap BLAS/OpenMP parallelism")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a panel and write truth CSVs")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", type=Path, help="process spec JSON")
    src.add_argument("--example", choices=("eq5", "eq6", "eq7", "unit_root"),
                     help="named single-shock layout")
    p.add_argument("--n", type=int, default=None, help="number of series")
    p.add_argument("--T", type=int, required=True, help="sample length")
    p.add_argument("--idio-sigma", type=float, default=0.0)
    p.add_argument("--idio-ar", type=float, default=0.5)
    p.add_argument("--idio-coupling", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=None,
                   help="overrides the spec seed when given")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("analyze", help="spectral eigenstructure of a panel CSV")
    p.add_argument("--y", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--M", type=int, default=128, help="frequency grid size")
    p.add_argument("--B", type=int, default=None, help="lag-window bandwidth")
    p.add_argument("--k", type=int, default=None, help="number of eigencurves")

    p = sub.add_parser("blocks", help="build and repair the block plan for a spec")
    p.add_argument("--spec", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="plan JSON path")
    p.add_argument("--budget", type=int, default=3)
    p.add_argument("--L-max", type=int, default=64)
    p.add_argument("--rho", type=float, default=1e-6)
    p.add_argument("--delta-floor", type=float, default=1e-4)
    p.add_argument("--M", type=int, default=128)

    p = sub.add_parser("recover", help="recover shocks from a panel and a plan")
    p.add_argument("--y", type=Path, required=True)
    p.add_argument("--plan", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--eps", type=Path, default=None, help="true shocks CSV")
    p.add_argument("--chi", type=Path, default=None, help="true common CSV")
    p.add_argument("--xi", type=Path, default=None, help="true idiosyncratic CSV")
    p.add_argument("--xi-sup", type=float, default=None,
                   help="supplied sup of the idiosyncratic spectral eigenvalue")
    p.add_argument("--p-lags", type=int, default=20)
    p.add_argument("--n-leads", type=int, default=5)
    p.add_argument("--p-ar", type=int, default=50)
    p.add_argument("--slack", type=float, default=0.25)
    p.add_argument("--M", type=int, default=128)
    p.add_argument("--B", type=int, default=None)

    p = sub.add_parser("verify", help="re-run the invariant checks on a run directory")
    p.add_argument("--run", type=Path, required=True)
    p.add_argument("--min-r2-past", type=float, default=0.9)
    p.add_argument("--max-lead-gain", type=float, default=0.02)
    p.add_argument("--min-cancorr", type=float, default=0.9)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(max(1, args.threads))
    from .core import DynFactorError
    handler = {
        "simulate": cmd_simulate,
        "analyze": cmd_analyze,
        "blocks": cmd_blocks,
        "recover": cmd_recover,
        "verify": cmd_verify,
    }[args.command]
    try:
        return handler(args)
    except DynFactorError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _resolve_seed(seed: int) -> int:
    env = os.environ.get("GDFM_SEED")
    return int(env) if env else seed


def cmd_simulate(args) -> int:
    from . import io
    from .core import GdfmSpec, IdioSpec
    from .simulate import example_filters, simulate_gdfm

    if args.example is not None:
        if args.n is None or args.n < 2:
            print("error: --example needs --n >= 2", file=sys.stderr)
            return 2
        spec = GdfmSpec(
            q=1,
            common_filters=example_filters(args.example, args.n),
            idio=IdioSpec(ar=args.idio_ar, sigma=args.idio_sigma,
                          coupling=args.idio_coupling),
            seed=_resolve_seed(args.seed if args.seed is not None else 0),
        )
        n = args.n
    else:
        spec = io.read_spec_json(args.spec)
        seed = _resolve_seed(args.seed if args.seed is not None else spec.seed)
        spec = GdfmSpec(q=spec.q, common_filters=spec.common_filters,
                        idio=spec.idio, seed=seed)
        n = args.n if args.n is not None else len(spec.common_filters)
    sim = simulate_gdfm(spec, n, args.T)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    io.write_panel_csv(out / "y.csv", sim.y)
    io.write_panel_csv(out / "chi.csv", sim.chi)
    io.write_panel_csv(out / "xi.csv", sim.xi)
    io.write_shocks_csv(out / "eps.csv", sim.eps)
    io.write_spec_json(out / "spec.json", sim.spec)
    print(f"wrote y/chi/xi/eps CSVs and spec.json to {out}")
    return 0


def cmd_analyze(args) -> int:
    import numpy as np

    from . import io
    from .core import demean
    from .spectral import dynamic_eigen, spectral_density

    panel = demean(io.read_panel_csv(args.y))
    grid = spectral_density(panel, M=args.M, B=args.B)
    k = args.k if args.k is not None else min(panel.n, 8)
    eig = dynamic_eigen(grid, k)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    with (out / "eigencurves.csv").open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("theta," + ",".join(f"mu_{i + 1}" for i in range(k)) + "\n")
        np.savetxt(fh, np.column_stack([grid.freqs, eig.values]),
                   fmt="%.17g", delimiter=",")
    trace_err = float(np.max(np.abs(
        np.trace(grid.mats, axis1=1, axis2=2).real
        - np.linalg.eigvalsh(grid.mats).sum(axis=1))))
    diagnostics = {
        "n": panel.n,
        "T": panel.T,
        "M": args.M,
        "B": args.B if args.B is not None else int(np.sqrt(panel.T)),
        "k": k,
        "min_eigenvalue": float(np.min(np.linalg.eigvalsh(grid.mats))),
        "median_eigenvalues": np.median(eig.values, axis=0).tolist(),
        "trace_identity_error": trace_err,
    }
    io.write_json(out / "diagnostics.json", diagnostics)
    print(f"wrote eigencurves.csv and diagnostics.json to {out}")
    return 0


def cmd_blocks(args) -> int:
    from . import io
    from .blocking import plan_blocks

    spec = io.read_spec_json(args.spec)
    plan = plan_blocks(
        spec.common_filters, spec.q, budget=args.budget, L_max=args.L_max,
        rho=args.rho, delta_floor=args.delta_floor, M=args.M)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(plan.to_json(), encoding="utf-8")
    print(f"wrote plan with {len(plan.blocks)} blocks "
          f"(delta={plan.delta:.4g}, mode={plan.mode}) to {args.out}")
    return 0


def cmd_recover(args) -> int:
    from . import io, __version__
    from .blocking import BlockPlan
    from .recovery import recover_pipeline

    y = io.read_panel_csv(args.y)
    plan = BlockPlan.from_json(args.plan.read_text(encoding="utf-8"))
    truth_eps = io.read_shocks_csv(args.eps)[0] if args.eps else None
    truth_chi = io.read_panel_csv(args.chi) if args.chi else None
    truth_xi = io.read_panel_csv(args.xi) if args.xi else None
    report = recover_pipeline(
        y, plan, truth_eps=truth_eps, truth_chi=truth_chi, truth_xi=truth_xi,
        xi_sup=args.xi_sup, p_lags=args.p_lags, n_leads=args.n_leads,
        p_ar=args.p_ar, M=args.M, B=args.B, slack=args.slack)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    io.write_shocks_csv(out / "eps_hat.csv", report.eps_hat,
                        t0=report.eps_offset, prefix="eps_hat")
    io.write_shocks_csv(out / "eps_causal.csv", report.eps_causal,
                        t0=report.eps_causal_offset, prefix="eps_causal")
    io.write_panel_csv(out / "chi_hat.csv", report.chi_hat)
    payload = {
        "version": __version__,
        "innovation": report.innovation,
        "mode": report.mode,
        "eps_offset": report.eps_offset,
        "eps_causal_offset": report.eps_causal_offset,
        "rotation_metric": report.rotation,
        "rotation_metric_causal": report.rotation_causal,
        "chi_r2": report.chi_accuracy,
        "subordination": {
            "r2_past": report.subordination.r2_past,
            "r2_two_sided": report.subordination.r2_two_sided,
            "lead_gain": report.subordination.lead_gain,
        },
        "bound": None if report.bound is None else {
            "mu1": report.bound.mu1,
            "m_xi": report.bound.m_xi,
            "delta": report.bound.delta,
            "slack": report.bound.slack,
            "bound": report.bound.bound,
            "satisfied": report.bound.satisfied,
        },
        "per_block": list(report.per_block),
        "config": report.config,
        "plan_params": plan.params,
    }
    io.write_json(out / "report.json", payload)
    print(f"wrote eps_hat.csv, chi_hat.csv and report.json to {out}")
    return 0


def verify_run(run: Path, min_r2_past: float = 0.9, max_lead_gain: float = 0.02,
               min_cancorr: float = 0.9) -> list[tuple[str, bool, str]]:
    """Re-run the invariant suite on a finished run directory.

    Returns (name, passed, detail) per check; imports stay local so the
    CLI can cap threads first.
    """
    import numpy as np

    from . import io
    from .blocking import BlockPlan
    from .polyalg import convolve_series
    from .recovery import canonical_correlations, subordination_score

    checks: list[tuple[str, bool, str]] = []
    required = ["y.csv", "eps_hat.csv", "report.json"]
    missing = [f for f in required if not (run / f).exists()]
    if missing:
        raise io.ConfigError(f"run directory is missing {missing}")
    y = io.read_panel_csv(run / "y.csv")
    eps_hat, eps_t0 = io.read_shocks_csv(run / "eps_hat.csv")
    report = io.read_json(run / "report.json")

    e = eps_hat.values - eps_hat.values.mean(axis=1, keepdims=True)
    cov = e @ e.T / eps_hat.T
    cov_err = float(np.max(np.abs(cov - np.eye(eps_hat.q))))
    checks.append(("eps-variance", cov_err < 1e-4,
                   f"max |cov - I| = {cov_err:.2e}"))

    acf_max = 0.0
    for c in range(eps_hat.q):
        x = e[c]
        denom = float(np.dot(x, x))
        for lag in range(1, 11):
            acf_max = max(acf_max, abs(float(np.dot(x[lag:], x[:-lag])) / denom))
    acf_lim = 4.0 / np.sqrt(eps_hat.T)
    checks.append(("whiteness", acf_max < acf_lim,
                   f"max |acf(1..10)| = {acf_max:.4f} vs {acf_lim:.4f}"))

    cfg = report.get("config", {})
    if (run / "eps_causal.csv").exists():
        sub_target, sub_t0 = io.read_shocks_csv(run / "eps_causal.csv")
    else:
        sub_target, sub_t0 = eps_hat, eps_t0
    sub = subordination_score(
        sub_target, y, p_lags=cfg.get("p_lags", 20), n_leads=cfg.get("n_leads", 5),
        offset=sub_t0, max_series=cfg.get("subordination_series", min(y.n, 50)))
    checks.append(("subordination",
                   sub.r2_past >= min_r2_past and sub.lead_gain <= max_lead_gain,
                   f"r2_past = {sub.r2_past:.4f}, lead_gain = {sub.lead_gain:.4f}"))

    if (run / "eps.csv").exists():
        if report.get("innovation") == "wold":
            checks.append(("rotation", True,
                           "skipped: run recovers Wold innovations, stored "
                           "shocks are not the reference"))
        else:
            truth, _ = io.read_shocks_csv(run / "eps.csv")
            hi = min(y.T, eps_t0 + eps_hat.T)
            cc = float(np.mean(canonical_correlations(
                eps_hat.values[:, : hi - eps_t0], truth.values[:, eps_t0:hi])))
            checks.append(("rotation", cc >= min_cancorr,
                           f"mean canonical correlation = {cc:.4f}"))

    if (run / "plan.json").exists():
        plan = BlockPlan.from_json((run / "plan.json").read_text(encoding="utf-8"))
        worst_energy, worst_lag0 = 0.0, 0.0
        for b in plan.blocks:
            if b.inverse is None or b.h is None:
                continue
            conv = convolve_series(b.inverse.coeffs, b.h.coeffs)
            lag0 = b.inverse.lag0
            ident = np.zeros_like(conv)
            ident[lag0] = np.eye(plan.q)
            worst_lag0 = max(worst_lag0, float(np.max(np.abs(conv[lag0] - np.eye(plan.q)))))
            worst_energy = max(worst_energy, float(np.sum((conv - ident) ** 2)))
        ok = worst_energy < 1e-4 and worst_lag0 < 1e-6 and (plan.delta or 0) > 0
        checks.append(("plan-inverses", ok,
                       f"off-identity energy = {worst_energy:.2e}, "
                       f"lag0 error = {worst_lag0:.2e}, delta = {plan.delta}"))

    if (run / "chi.csv").exists() and (run / "xi.csv").exists():
        chi = io.read_panel_csv(run / "chi.csv")
        xi = io.read_panel_csv(run / "xi.csv")
        err = float(np.max(np.abs(y.values - chi.values - xi.values)))
        checks.append(("truth-decomposition", err < 1e-9, f"max |y-chi-xi| = {err:.2e}"))
    return checks


def cmd_verify(args) -> int:
    checks = verify_run(args.run, min_r2_past=args.min_r2_past,
                        max_lead_gain=args.max_lead_gain,
                        min_cancorr=args.min_cancorr)
    failed = [name for name, ok, _ in checks if not ok]
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    if failed:
        print(f"verification failed: {failed[0]}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
