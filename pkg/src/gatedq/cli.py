"""Command-line front end: ``gatedq {solve,simulate,compare,busycycle,batch,mapcheck}``.

stdout carries the report (JSON or CSV), stderr carries diagnostics, and
the exit code carries pass/fail:

    0  success
    2  invalid config or unstable model
    3  a series or inversion did not converge
    4  compare found an observable outside its tolerance
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

import jsonschema
import numpy as np

from . import batch as batch_mod
from . import busy_cycle, des, map_gate, vacation
from .branching import ModelParams, TruncationPolicy
from .errors import ConfigError, NonConvergence
from .rv_models import dist_from_dict
from .schemas import CONFIG, SCHEMA_VERSION, report_schema

log = logging.getLogger("gatedq")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONV, EXIT_COMPARE = 0, 2, 3, 4
SEED_ENV = "QSOLVER_SEED"
DEFAULT_SEED = 12345
COMMANDS = ("solve", "simulate", "compare", "busycycle", "batch", "mapcheck")


# ---------------------------------------------------------------- config


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, CONFIG)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None


def model_from_config(cfg: dict) -> ModelParams:
    if "model" not in cfg:
        raise ConfigError("config needs a 'model' section")
    m = cfg["model"]
    return ModelParams(float(m["lam"]), dist_from_dict(m["service"]), dist_from_dict(m["vacation"]))


def policy_from(cfg: dict, args) -> TruncationPolicy:
    t = dict(cfg.get("truncation", {}))
    if args.eps is not None:
        t["eps"] = args.eps
    if args.max_n is not None:
        t["max_n"] = args.max_n
    return TruncationPolicy(**t)


def resolve_seed(cfg: dict, args) -> int:
    """--seed, then $QSOLVER_SEED, then the config, then the default."""
    if args.seed is not None:
        seed = args.seed
    elif os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {os.environ[SEED_ENV]!r}") from None
    else:
        seed = cfg.get("simulation", {}).get("seed", DEFAULT_SEED)
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return seed


def sim_config(cfg: dict, args, m: ModelParams, kind: str | None = None) -> des.SimConfig:
    s = dict(cfg.get("simulation", {}))
    s.pop("seed", None)
    kind = kind or s.pop("kind", "single_vacation_gated")
    s.pop("kind", None)
    for key in ("lst_points", "pgf_points", "age_point"):
        if key in s:
            s[key] = tuple(s[key])
    return des.SimConfig(kind=kind, params=m, seed=resolve_seed(cfg, args), **s)


# ---------------------------------------------------------------- commands


def cmd_solve(cfg, args) -> dict:
    m = model_from_config(cfg).require_stable()
    t = policy_from(cfg, args)
    opts = cfg.get("solve", {})
    rep = vacation.solve(m, t, N=opts.get("max_order", vacation.MAX_ORDER), K=opts.get("pmf_max_k"))
    return rep.to_dict()


def cmd_simulate(cfg, args) -> dict:
    m = model_from_config(cfg)
    stats = des.run(sim_config(cfg, args, m))
    return stats.to_dict()


def _analytic_observables(kind: str, m: ModelParams, t: TruncationPolicy, sc: des.SimConfig, K: int) -> dict:
    """Analytic counterparts of simulator observables, keyed like SimStats."""
    out = {}
    if kind == "single_vacation_gated":
        L = vacation.factorial_moments(m, t, 2)
        cyc = busy_cycle.cycle_means(m, t)
        out.update(
            mean_queue=L[0],
            second_factorial_queue=L[1],
            p_empty=vacation.ell_star(m, t, 0.0),
            mean_sojourn=L[0] / m.lam,
            second_moment_sojourn=L[1] / m.lam ** 2,
            sojourn_lst=vacation.delay_lst(m, t, np.array(sc.lst_points)),
            queue_pgf=np.array([vacation.ell_star(m, t, z) for z in sc.pgf_points]),
            idle_fraction=vacation.p_idle(m, t),
            mean_idle_period=1 / m.lam,
            mean_vacation_end=vacation.ell_E_moments_closed(m, t)[0],
            vacation_end_pmf=vacation.vacation_end_pmf(m, t, K=max(K, 64))[: K + 1],
            cycle_customers=cyc.mean_customers,
            cycle_length=cyc.mean_length,
            cycle_vacations=cyc.mean_vacations,
            busy_fraction=m.rho,
        )
    elif kind == "multiple_vacation_gated":
        mv, _ = vacation.mv_comparison(m, t)
        out.update(mean_queue=mv, mean_sojourn=mv / m.lam, busy_fraction=m.rho)
    else:
        b = batch_mod.batch_basics(m, t)
        mq = batch_mod.batch_mean_queue(m, t)
        z, s, w = sc.age_point
        out.update(
            busy_fraction=b.utilization,
            mean_queue=mq,
            mean_sojourn=mq / m.lam,
            p_empty=batch_mod.batch_queue_pgf(m, t, 0.0),
            idle_fraction=1 - b.utilization,
            mean_batch_size=b.mean_batch,
            mean_service=b.mean_service,
            sojourn_lst=np.array([batch_mod.batch_delay_lst(m, t, x) for x in sc.lst_points]),
            queue_pgf=np.array([batch_mod.batch_queue_pgf(m, t, x) for x in sc.pgf_points]),
            age_residual=batch_mod.age_residual_transform(m, t, z, s, w),
            batch_size_pmf=vacation.pmf_from_pgf(lambda x: batch_mod.ell_S(m, t, x), K=max(K, 64))[: K + 1],
        )
    return out


def compare_rows(analytic: dict, stats: des.SimStats, width: float = 3.0) -> list[dict]:
    rows = []
    for name, a in analytic.items():
        if name not in stats:
            continue
        est = stats[name]
        a = np.atleast_1d(np.asarray(a, dtype=float))
        sim = np.atleast_1d(est.mean)[: len(a)]
        hw = np.atleast_1d(est.half_width)[: len(a)]
        vector = len(a) > 1 or np.ndim(est.mean) > 0
        for k in range(len(a)):
            ok = abs(a[k] - sim[k]) <= width * hw[k] + 1e-12
            rows.append(
                {
                    "observable": f"{name}[{k}]" if vector else name,
                    "analytic": float(a[k]),
                    "simulated": float(sim[k]),
                    "half_width": float(hw[k]),
                    "status": "PASS" if ok else "FAIL",
                }
            )
    return rows


def cmd_compare(cfg, args) -> dict:
    m = model_from_config(cfg).require_stable()
    t = policy_from(cfg, args)
    opts = cfg.get("compare", {})
    sc = sim_config(cfg, args, m)
    kind = opts.get("analytic_kind", sc.kind.value)
    K = opts.get("pmf_max_k", 10)
    analytic = _analytic_observables(kind, m, t, sc, K)
    stats = des.run(sc)
    rows = compare_rows(analytic, stats, opts.get("width_multiplier", 3.0))
    all_pass = all(r["status"] == "PASS" for r in rows)
    return {
        "analytic_kind": kind,
        "simulated_kind": sc.kind.value,
        "rows": rows,
        "all_pass": all_pass,
        "simulation_diagnostics": stats.diagnostics,
    }


def cmd_busycycle(cfg, args) -> dict:
    m = model_from_config(cfg).require_stable()
    t = policy_from(cfg, args)
    n = cfg.get("busycycle", {}).get("theta_terms", 20)
    means = busy_cycle.cycle_means(m, t)
    out = means.to_dict()
    out["theta"] = busy_cycle.theta_sequence(m, n).tolist()
    out["identity_residuals"] = {k: float(v) for k, v in busy_cycle.identity_checks(m, t, means).items()}
    return out


def cmd_batch(cfg, args) -> dict:
    m = model_from_config(cfg).require_stable()
    t = policy_from(cfg, args)
    rep = batch_mod.solve_batch(m, t, K=cfg.get("batch", {}).get("pmf_max_k"))
    return rep.to_dict()


def cmd_mapcheck(cfg, args) -> dict:
    opts = cfg.get("mapcheck", {})
    H = dist_from_dict(opts.get("service", {"family": "exponential", "rate": 1.0}))
    V = dist_from_dict(opts.get("vacation", {"family": "exponential", "rate": 1.0}))
    z_grid = tuple(opts.get("z_grid", (0.0, 0.25, 0.5, 0.75, 1.0)))
    reps = None
    if "maps" in opts:
        reps = {name: map_gate.MapRep(np.array(r["C"]), np.array(r["D"])) for name, r in opts["maps"].items()}
    rows = map_gate.mapcheck_report(H, V, z_grid=z_grid, reps=reps)
    for r in rows:
        if not r["identity_holds"]:
            log.info("%s: interchange identity fails (residual %.3g)", r["example"], r["interchange_residual"])
    return {"service": H.to_dict(), "vacation": V.to_dict(), "z_grid": list(z_grid), "rows": rows}


HANDLERS = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "busycycle": cmd_busycycle,
    "batch": cmd_batch,
    "mapcheck": cmd_mapcheck,
}


# ---------------------------------------------------------------- output


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def build_report(command: str, cfg: dict, result: dict) -> dict:
    report = {"schema_version": SCHEMA_VERSION, "command": command}
    if "model" in cfg:
        report["model"] = cfg["model"]
    report["result"] = _jsonable(result)
    jsonschema.validate(report, report_schema(command))
    return report


def csv_table(command: str, result: dict) -> tuple[list[str], list[list]]:
    if command == "solve":
        p, pE = result["pmf"], result["vacation_end_pmf"]
        K = max(len(p), len(pE))
        rows = [[k, p[k] if k < len(p) else 0.0, pE[k] if k < len(pE) else 0.0] for k in range(K)]
        return ["k", "p_L", "p_L_E"], rows
    if command == "compare":
        cols = ["observable", "analytic", "simulated", "half_width", "status"]
        return cols, [[r[c] for c in cols] for r in result["rows"]]
    if command == "simulate":
        rows = []
        for name, est in result["observables"].items():
            if isinstance(est["mean"], list):
                for k, (mu, hw) in enumerate(zip(est["mean"], est["half_width"])):
                    rows.append([f"{name}[{k}]", mu, hw])
            else:
                rows.append([name, est["mean"], est["half_width"]])
        return ["observable", "estimate", "half_width"], rows
    if command == "busycycle":
        rows = [[n + 1, th] for n, th in enumerate(result["theta"])]
        return ["n", "theta_n"], rows
    if command == "batch":
        b, q = result["batch_pmf"], result["queue_pmf"]
        K = max(len(b), len(q))
        rows = [[k, b[k] if k < len(b) else 0.0, q[k] if k < len(q) else 0.0] for k in range(K)]
        return ["k", "p_batch", "p_L"], rows
    cols = ["example", "commutative", "commutator_norm", "poisson_rate", "interchange_residual", "identity_holds"]
    return cols, [[r[c] for c in cols] for r in result["rows"]]


def render(command: str, report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2) + "\n"
    header, rows = csv_table(command, report["result"])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")  # RFC 4180
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gatedq", description="Gated-service M/G/1 vacation queue solver and simulator.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run config")
        sp.add_argument("--format", choices=["json", "csv"], default=None)
        sp.add_argument("--out", help="write the report here instead of stdout")
        sp.add_argument("--seed", type=int, help=f"simulation seed (overrides ${SEED_ENV} and the config)")
        sp.add_argument("--eps", type=float, help="truncation tolerance")
        sp.add_argument("--max-n", type=int, dest="max_n", help="truncation index cap")
        sp.add_argument("--quiet", action="store_true", help="only errors on stderr")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(levelname)s: %(message)s", stream=sys.stderr, force=True)
    try:
        cfg = load_config(args.config)
        out_opts = cfg.get("output", {})
        fmt = args.format or out_opts.get("format", "json")
        path = args.out or out_opts.get("path")
        result = HANDLERS[args.command](cfg, args)
        report = build_report(args.command, cfg, result)
        text = render(args.command, report, fmt)
        if path:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        if args.command == "compare" and not result["all_pass"]:
            failed = [r["observable"] for r in result["rows"] if r["status"] == "FAIL"]
            log.error("compare: %d observable(s) outside tolerance: %s", len(failed), ", ".join(failed))
            return EXIT_COMPARE
        return EXIT_OK
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except NonConvergence as exc:
        log.error("did not converge: %s", exc)
        return EXIT_NONCONV
    except BrokenPipeError:
        # reader went away (e.g. piped into head); nothing left to report
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
