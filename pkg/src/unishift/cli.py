"""Command line driver: ``unishift <command> --config cfg.json``.

Exit codes are stable: 0 when every contract holds, 1 when a check breaches
its tolerance (the failing check is named on stderr), 2 for usage or
configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, dynamics, eigenfields, gaussian, spectrum, transference
from .config import ConfigError, ExperimentConfig, load_config, make_weights
from .exceptions import GridRangeError, NumericRangeError, UnsupportedModeError
from .hilbert import Grid, basis_vector, norm
from .operator import OperatorSpec, apply

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
COMMANDS = ("build", "verify", "eigen", "orbit", "periodic", "gaussian", "transfer")


class UsageError(Exception):
    pass


class Run:
    """Per-invocation context: config, output directory and collected checks."""

    def __init__(self, args, cfg: ExperimentConfig):
        self.args = args
        self.cfg = cfg
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.fmt = args.format
        self.threads = args.threads
        self.checks = []
        self.header = f"unishift {__version__} config_sha256={cfg.sha256()}"

    def check(self, name, passed, value=None, tolerance=None):
        self.checks.append({"name": name, "passed": bool(passed), "value": _plain(value), "tolerance": _plain(tolerance)})

    @property
    def failures(self):
        return [c for c in self.checks if not c["passed"]]

    def write_json(self, name, payload):
        if self.fmt in ("json", "both"):
            doc = {"header": self.header, **payload, "checks": self.checks, "passed": not self.failures}
            (self.out / name).write_text(json.dumps(_plain(doc), indent=1, sort_keys=True) + "\n")

    def write_csv(self, name, columns, rows):
        if self.fmt in ("csv", "both"):
            with open(self.out / name, "w", newline="") as fh:
                fh.write(f"# {self.header}\n")
                writer = csv.writer(fh)
                writer.writerow(columns)
                writer.writerows(_plain(list(r)) for r in rows)

    def finish(self, command):
        for c in self.failures:
            print(f"FAIL {command}: {c['name']} value={c['value']} tolerance={c['tolerance']}", file=sys.stderr)
        passed = len(self.checks) - len(self.failures)
        print(f"{command}: {passed}/{len(self.checks)} checks passed -> {self.out}")
        return EXIT_FAIL if self.failures else EXIT_OK


def _plain(v):
    """JSON-friendly copy: numpy scalars to Python, complex to [re, im], non-finite to None."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (complex, np.complexfloating)):
        return [_plain(v.real), _plain(v.imag)]
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else None
    return v


def _sequence_path(args):
    return Path(args.sequence) if args.sequence else Path(args.out) / "sequence.json"


def _load_sequence(args, cfg: ExperimentConfig):
    path = _sequence_path(args)
    try:
        seq = spectrum.EigenSequence.from_json(path.read_text())
    except FileNotFoundError:
        raise UsageError(f"sequence file not found: {path} (run 'unishift build' first)") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{path}: not a valid sequence file ({exc})") from None
    if len(seq.mu) < cfg.grid.levels:
        raise UsageError(f"{path}: {len(seq.mu)} eigenvalues, grid needs {cfg.grid.levels}")
    return seq


def _operator(cfg, seq):
    return OperatorSpec.from_sequence(seq, cfg.weights(), cfg.grid)


def _map(run, fn, items):
    """Ordered map, threaded when ``--threads > 1``; results do not depend on the thread count."""
    if run.threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=run.threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# commands ------------------------------------------------------------------


def cmd_build(run: Run):
    cfg = run.cfg
    w = cfg.weights()
    seq = spectrum.build_sequence(w, cfg.depth, cfg.mode, cfg.seed, cfg.base_order)
    report = spectrum.verify_constraints(seq, w)
    (run.out / "sequence.json").write_text(seq.to_json(header=run.header) + "\n")
    for c in report.checks:
        run.check(c.name, c.passed, c.margin)
    rows = [(c.name, c.passed, c.margin, c.detail) for c in report.checks]
    run.write_csv("build_report.csv", ["check", "passed", "margin", "detail"], rows)
    run.write_json("build_report.json", {"command": "build", "mode": seq.mode, "depth": seq.depth, "lk": list(seq.lk)})
    return run.finish("build")


def cmd_verify(run: Run):
    cfg = run.cfg
    seq = _load_sequence(run.args, cfg)
    w = cfg.weights()
    report = spectrum.verify_constraints(seq, w)
    for c in report.checks:
        run.check(c.name, c.passed, c.margin)
    for k in range(1, seq.depth + 1):
        cap = spectrum.max_step_length(k, w, k)
        run.check(f"lk_within_admissible[{k}]", seq.lk[k] <= cap, seq.lk[k], cap)
    # sampled points stay inside every coarser union of arcs
    pts = spectrum.sample_K(seq, seq.depth, cfg.seed, size=200)
    for d in range(1, seq.depth + 1):
        approx = seq.cantor_approx(d)
        inside = sum(approx.contains(z) for z in pts)
        run.check(f"samples_in_K[{d}]", inside == len(pts), inside, len(pts))
    again = spectrum.EigenSequence.from_json(seq.to_json())
    run.check("json_round_trip", np.array_equal(again.mu, seq.mu) and again.lk == seq.lk)
    run.write_csv("verify_report.csv", ["check", "passed", "value", "tolerance"],
                  [(c["name"], c["passed"], c["value"], c["tolerance"]) for c in run.checks])
    run.write_json("verify_report.json", {"command": "verify"})
    return run.finish("verify")


def cmd_eigen(run: Run):
    cfg = run.cfg
    tol = cfg.tolerances
    opts = cfg.experiment("eigen")
    seq = _load_sequence(run.args, cfg)
    T = _operator(cfg, seq)
    N = T.grid.levels
    sample_depth = opts.get("sample_depth", seq.depth)
    if not 0 <= sample_depth <= seq.depth:
        raise UsageError(f"experiments.eigen.sample_depth must lie in 0..{seq.depth}")
    modes = range(min(T.grid.modes, opts.get("modes", T.grid.modes)))
    lams = spectrum.sample_K(seq, sample_depth, cfg.seed, size=opts["samples"])
    fields = {i: eigenfields.EigenField.from_operator(T, seq, i) for i in modes}

    # residual: measured vs closed form
    jobs = [(i, lam) for i in modes for lam in lams]

    def one(job):
        i, lam = job
        f = fields[i]
        return eigenfields.residual(T, f, lam), eigenfields.residual_closed_form(f, lam)

    res_rows, worst_rel = [], 0.0
    for (i, lam), (meas, closed) in zip(jobs, _map(run, one, jobs)):
        rel = abs(meas - closed) / closed if closed > 0 else abs(meas)
        worst_rel = max(worst_rel, rel)
        res_rows.append((i, lam.real, lam.imag, meas, closed, rel))
    run.check("residual_closed_form", worst_rel <= tol["residual_rel"], worst_rel, tol["residual_rel"])

    # tail bound for every i <= k' <= sample_depth
    tail_rows, violations = [], 0
    for i in modes:
        for lam in lams:
            for kp, tail, bound in eigenfields.tail_certificate(fields[i], lam, sample_depth):
                ok = tail < bound
                violations += not ok
                tail_rows.append((i, lam.real, lam.imag, kp, tail, bound, ok))
    run.check("tail_bound", violations == 0, violations, 0)

    # exact eigenvalues mu_{N'} for N' <= N-2
    worst_exact = 0.0
    for i in modes:
        for level in range(N - 1):
            e = eigenfields.eval_E(fields[i], T.mu[level])
            worst_exact = max(worst_exact, norm(apply(T, e) - T.mu[level] * e) / norm(e))
    run.check("exact_eigen_equation", worst_exact <= tol["eigen_exact"], worst_exact, tol["eigen_exact"])

    # spanning of the truncated basis by E_0(mu_j)
    span_n = min(N, opts["span_levels"])
    mat, dmin = eigenfields.spanning_matrix(seq, cfg.weights(), 0, span_n)
    _, span_res = eigenfields.spanning_solve(mat)
    run.check("spanning_solve", span_res < tol["span_residual"], span_res, tol["span_residual"])

    # continuity on pairs sharing their first k0 descent steps
    k0 = max(1, sample_depth - 1) if sample_depth >= 1 else 0
    cont = []
    if sample_depth >= 1:
        pairs = spectrum.sample_K_pairs(seq, k0, sample_depth, cfg.seed, opts["continuity_pairs"])
        for i in modes:
            rep = eigenfields.continuity_probe(fields[i], pairs, seq.lk[k0], k0)
            cont.append({"i": i, "max_deviation": rep.max_deviation, "bound_sq": rep.bound_sq, "passed": rep.passed})
            run.check(f"continuity[i={i}]", rep.passed, rep.max_deviation**2, rep.bound_sq)

    run.write_csv("eigen_residuals.csv", ["i", "lambda_re", "lambda_im", "measured", "closed_form", "rel_diff"], res_rows)
    run.write_csv("eigen_tails.csv", ["i", "lambda_re", "lambda_im", "k_prime", "tail", "bound", "ok"], tail_rows)
    if run.fmt in ("csv", "both"):
        rows = [(i, lam, eigenfields.coefficients(fields[i], lam)) for i in modes for lam in lams[: min(10, len(lams))]]
        eigenfields.export_coefficients_csv(rows, run.out / "eigen_coefficients.csv", header=run.header)
    run.write_json(
        "eigen_report.json",
        {
            "command": "eigen",
            "grid": list(T.grid.shape),
            "sample_depth": sample_depth,
            "samples": len(lams),
            "max_residual_rel_diff": worst_rel,
            "tail_violations": violations,
            "max_exact_residual_rel": worst_exact,
            "spanning": {"levels": span_n, "min_abs_diag": dmin, "residual": span_res},
            "continuity": cont,
        },
    )
    return run.finish("eigen")


def cmd_orbit(run: Run):
    cfg = run.cfg
    opts = cfg.experiment("orbit")
    seq = _load_sequence(run.args, cfg)
    T = _operator(cfg, seq)
    steps = opts["steps"]
    radius = opts["radius"]
    rng = np.random.default_rng(cfg.seed)
    if opts["x0"] == "fixed_point":
        # mu_0 = 1 and e_{0,0} is annihilated by the shift: T x0 = x0
        x0 = basis_vector(T.grid, 0, 0)
        offsets = [0]
    else:
        picks = [(i, n, opts["decay"] ** n) for i in range(T.grid.modes) for n in range(T.grid.levels - 1)]
        x0 = dynamics.eigen_combination(T, seq, picks)
        horizon = max(1, int(opts["burn_in"] * steps))
        offsets = sorted(int(v) for v in rng.integers(0, horizon, size=opts["targets"]))
    targets = []
    for n0 in offsets:
        c = x0
        for _ in range(n0):
            c = apply(T, c)
        targets.append((c, radius))
    stats = dynamics.run_orbit(T, x0, steps, targets, dynamics._default_checkpoints(steps, opts["checkpoints"]))
    densities = [dynamics.lower_density_estimate(stats, t, opts["burn_in"]) for t in range(len(targets))]
    for t, d in enumerate(densities):
        run.check(f"lower_density[target={t}]", d > 0, d, 0)
    slope = stats.log_norm_slope
    run.check("log_norm_slope", abs(slope) < cfg.tolerances["slope"], slope, cfg.tolerances["slope"])
    if run.fmt in ("csv", "both"):
        dynamics.export_orbit_csv(stats, run.out / "orbit.csv", header=run.header)
    run.write_json(
        "orbit_report.json",
        {
            "command": "orbit",
            "x0": opts["x0"],
            "target_offsets": offsets,
            "radius": radius,
            "density": densities,
            "visits_total": stats.visits[:, -1].tolist(),
            "first_visit": stats.first_visit,
            "norm_track": stats.norm_track,
            "log_norm_slope": slope,
        },
    )
    return run.finish("orbit")


def cmd_periodic(run: Run):
    cfg = run.cfg
    opts = cfg.experiment("periodic")
    seq = _load_sequence(run.args, cfg)
    T = _operator(cfg, seq)
    picks = []
    for pick in opts["picks"]:
        i, level, a = pick
        if not (isinstance(i, int) and isinstance(level, int) and 0 <= i < T.grid.modes):
            raise UsageError(f"experiments.periodic.picks: bad entry {pick}")
        picks.append((i, level, complex(a)))
    try:
        x, period = dynamics.make_periodic_point(T, seq, picks)
    except UnsupportedModeError as exc:
        print(str(exc), file=sys.stderr)
        run.check("unsupported-mode", False, seq.mode, spectrum.ROOTS_OF_UNITY)
        run.write_json("periodic_report.json", {"command": "periodic", "error": "unsupported-mode"})
        return run.finish("periodic")
    except GridRangeError as exc:
        raise UsageError(f"experiments.periodic.picks: {exc}") from None
    orders = [seq.orders[level] for _, level, _ in picks]
    payload = {"command": "periodic", "orders": orders, "period": period, "x_norm": norm(x)}
    if period > opts["max_period"]:
        run.check("period_within_limit", False, period, opts["max_period"])
    else:
        defect = dynamics.period_defect(T, x, period)
        rel = defect / norm(x)
        payload["defect"] = defect
        run.check("periodicity", rel <= cfg.tolerances["period_rel"], rel, cfg.tolerances["period_rel"])
    cov = dynamics.density_of_periodic_directions(seq, T.w, T.grid.levels)
    payload["coverage"] = cov.to_dict()
    run.check("periodic_directions_span", cov.passed, cov.min_abs_diag, cov.tol)
    run.write_csv("periodic.csv", ["mode", "level", "coefficient_re", "coefficient_im", "order"],
                  [(i, level, a.real, a.imag, seq.orders[level]) for i, level, a in picks])
    run.write_json("periodic_report.json", payload)
    return run.finish("periodic")


def cmd_gaussian(run: Run):
    cfg = run.cfg
    opts = cfg.experiment("gaussian")
    seq = _load_sequence(run.args, cfg)
    T = _operator(cfg, seq)
    spec = gaussian.GaussianSpec.exact(T, opts["terms"])
    m = opts["samples"]
    if m < 1000:
        raise UsageError("experiments.gaussian.samples must be >= 1000")
    inv = gaussian.invariance_test(spec, T, seq, m, cfg.seed)
    run.check("covariance_invariance", inv.passed, inv.covariance_distance, inv.statistical_budget + inv.deterministic_budget)
    rows, _ = gaussian.ks_marginals(spec, T, seq, m, cfg.seed)
    thr = gaussian.ks_threshold(m, 2 * len(rows))
    worst = max((max(r[2], r[3]) for r in rows), default=0.0)
    run.check("ks_marginals", worst <= thr, worst, thr)
    birk = []
    for kind, i, n in opts["functionals"]:
        rep = gaussian.birkhoff_test(spec, T, seq, (kind, i, n), opts["birkhoff_length"], opts["birkhoff_samples"], cfg.seed)
        birk.append(rep.to_dict())
    run.write_csv("gaussian_ks.csv", ["i", "n", "ks_x", "ks_tx"], rows)
    run.write_csv("gaussian_birkhoff.csv", ["functional", "gap", "gap_budget", "dispersion_ratio", "verdict"],
                  [(b["functional"], b["gap"], b["gap_budget"], b["dispersion_ratio"], b["verdict"]) for b in birk])
    run.write_json(
        "gaussian_report.json",
        {"command": "gaussian", "terms": len(spec), "invariance": inv.to_dict(), "ks_threshold": thr, "birkhoff": birk},
    )
    return run.finish("gaussian")


def cmd_transfer(run: Run):
    cfg = run.cfg
    tol = cfg.tolerances
    opts = cfg.experiment("transfer")
    seq = _load_sequence(run.args, cfg)
    T = _operator(cfg, seq)
    grid = T.grid
    p = opts["p"]
    if opts["scales"] == "unit":
        target = transference.BanachTarget(p, grid, np.ones(grid.shape))
    else:
        target = transference.BanachTarget.default(grid, p)
    inter = transference.check_intertwine(target, T, opts["samples"], cfg.seed)
    run.check("intertwine", inter.max_scaled_defect < tol["intertwine"], inter.max_scaled_defect, tol["intertwine"])
    idx = (0, min(1, grid.levels - 1))
    corrupted = target.with_scale(idx, 1.5 * target.scales[idx])
    mut = transference.check_intertwine(target, T, opts["samples"], cfg.seed, operator_target=corrupted)
    run.check("mutation_detected", mut.max_defect > tol["mutation_min"], mut.max_defect, tol["mutation_min"])

    n_max = opts["nuclearity_levels"]
    ngrid = Grid(grid.modes, n_max + 1)
    nw = make_weights(opts["weights"], ngrid.modes, ngrid.levels, where="experiments.transfer.weights")
    nuc = transference.nuclearity_partial_sums(transference.BanachTarget.default(ngrid, p), nw, n_max)
    run.check("nuclearity_ratio", nuc.max_ratio <= tol["nuclearity_ratio"], nuc.max_ratio, tol["nuclearity_ratio"])

    gopts = cfg.experiment("gaussian")
    spec = gaussian.GaussianSpec.exact(T, gopts["terms"])
    push = transference.pushforward_demo(spec, T, seq, target, opts["gaussian_samples"], cfg.seed)
    run.check("pushforward_invariance", push.passed, push.covariance_distance, push.statistical_budget + push.deterministic_budget)
    run.check("pushforward_rank", push.extra["source_rank"] == push.extra["pushed_rank"], push.extra["pushed_rank"], push.extra["source_rank"])

    run.write_csv("transfer_nuclearity.csv", ["n", "increment", "partial_sum"],
                  [(n + 1, inc, s) for n, (inc, s) in enumerate(zip(nuc.increments, nuc.partial_sums))])
    run.write_json(
        "transfer_report.json",
        {
            "command": "transfer",
            "p": p,
            "scales": opts["scales"],
            "intertwine": inter.to_dict(),
            "mutation": mut.to_dict(),
            "nuclearity": {"max_ratio": nuc.max_ratio, "total": float(nuc.partial_sums[-1]), "levels": n_max},
            "pushforward": push.to_dict(),
        },
    )
    return run.finish("transfer")


HANDLERS = {
    "build": cmd_build,
    "verify": cmd_verify,
    "eigen": cmd_eigen,
    "orbit": cmd_orbit,
    "periodic": cmd_periodic,
    "gaussian": cmd_gaussian,
    "transfer": cmd_transfer,
}


# argument parsing ------------------------------------------------------------


def _threads_default():
    raw = os.environ.get("UNISHIFT_THREADS")
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"UNISHIFT_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise UsageError("UNISHIFT_THREADS must be >= 1")
    return value


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=".", metavar="DIR", help="output directory (default: current)")
    common.add_argument("--threads", type=int, default=None, help="worker threads (env UNISHIFT_THREADS)")
    common.add_argument("--format", choices=("csv", "json", "both"), default="both")
    common.add_argument("--sequence", default=None, metavar="PATH", help="sequence file (default: OUT/sequence.json)")

    parser = argparse.ArgumentParser(prog="unishift", description="Finite-truncation experiments for D_mu + B_w operators.")
    parser.add_argument("--version", action="version", version=f"unishift {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "build": "construct the unimodular sequence and verify its constraints",
        "verify": "re-verify a stored sequence",
        "eigen": "eigenvector residuals, tail bounds, spanning and continuity",
        "orbit": "orbit recurrence statistics",
        "periodic": "periodic points from root-of-unity eigenvectors",
        "gaussian": "Gaussian measure invariance and Birkhoff averages",
        "transfer": "intertwining, nuclearity and push-forward on a weighted l^p target",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        if args.threads is None:
            args.threads = _threads_default()
        elif args.threads < 1:
            raise UsageError("--threads must be >= 1")
        cfg = load_config(args.config, args.seed)
        return HANDLERS[args.command](Run(args, cfg))
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericRangeError as exc:
        print(f"FAIL {args.command}: numeric range: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
