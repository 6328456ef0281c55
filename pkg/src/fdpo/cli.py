"""Command-line entry point: ``fdpo classify | solve | train | verify``.

Every command is deterministic given its flags.  Structured outputs are
JSON with sorted keys; trajectories are CSV.  Exit status is 0 on success,
1 for invalid input and 2 for numerical failures (including failed checks).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from . import classifier, losses, oracle, simplex, trainer
from . import generators as gens
from ._rng import make_rng

log = logging.getLogger("fdpo")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERIC = 2


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# small helpers


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def _reject_unknown(doc: dict, allowed, where: str) -> None:
    extra = sorted(set(doc) - set(allowed))
    if extra:
        raise ConfigError(f"unknown field(s) in {where}: {', '.join(extra)}")


def _section(doc: dict, key: str) -> dict:
    sub = doc.get(key, {})
    if not isinstance(sub, dict):
        raise ConfigError(f"config field {key!r} must be an object")
    return sub


# ---------------------------------------------------------------------------
# classify

CLASSIFY_FIELDS = ("generators", "alpha")


def run_classify(args, cfg: dict) -> int:
    _reject_unknown(cfg, CLASSIFY_FIELDS, "classify config")
    alpha = float(cfg.get("alpha", args.alpha))
    ids = list(args.gen or []) or list(cfg.get("generators", []))
    if args.all or not ids:
        if ids and args.all:
            raise ConfigError("use either --all or --gen")
        chosen = gens.catalog(alpha)
    else:
        chosen = [gens.get(i) for i in ids]
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["id", "convex", "dpo_inducing", "displacement_resistant", "argmin", "method"])
    for g in chosen:
        v = classifier.is_dpo_inducing(g)
        am = classifier.argmin_f(g)
        out.writerow([g.id, str(g.convex).lower(), str(v.inducing).lower(), str(am.resistant).lower(),
                      repr(am.location), v.method])
    text = buf.getvalue()
    sys.stdout.write(text)
    if args.out_dir:
        _write(Path(args.out_dir) / "taxonomy.csv", text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve

SOLVE_FIELDS = ("r", "q", "beta", "s_set", "generator", "mode", "restarts")


def _solve_doc(args, cfg: dict) -> dict:
    _reject_unknown(cfg, SOLVE_FIELDS, "solve config")
    doc = dict(cfg)
    if args.instance:
        inst_doc = _load_config(args.instance)
        _reject_unknown(inst_doc, SOLVE_FIELDS, "instance file")
        doc.update(inst_doc)
    if args.gen:
        doc["generator"] = args.gen
    if args.mode:
        doc["mode"] = args.mode
    for key in ("r", "q", "beta"):
        if key not in doc:
            raise ConfigError(f"solve needs field {key!r}")
    doc.setdefault("generator", "kl")
    doc.setdefault("s_set", None)
    doc.setdefault("restarts", 8)
    doc.setdefault("mode", "partial" if doc["s_set"] is not None else "full")
    if doc["mode"] not in ("full", "partial"):
        raise ConfigError("mode must be 'full' or 'partial'")
    if doc["mode"] == "partial" and doc["s_set"] is None:
        raise ConfigError("partial mode needs s_set")
    return doc


def solve_instance(doc: dict, seed: int = 0) -> dict:
    """Solve one instance document and collect the diagnostic flags."""
    gen = gens.get(doc["generator"])
    s_set = doc.get("s_set")
    inst = simplex.SimplexInstance(np.asarray(doc["r"], float), np.asarray(doc["q"], float), float(doc["beta"]),
                                   None if s_set is None else tuple(s_set))
    mode = doc["mode"]
    result = {"generator": gen.id, "mode": mode, "n": inst.n, "beta": inst.beta, "s_set": inst.s_set}
    restarts = int(doc.get("restarts", 8))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if mode == "full":
            p = simplex.solve_full(inst, gen, restarts=restarts, seed=seed)
            value = simplex.objective_full(inst, gen, p)
            result["method"] = "numeric"
        else:
            convex_route = gen.convex and gen.invertible and classifier.is_dpo_inducing(gen).inducing
            if convex_route:
                opt = simplex.solve_partial_convex(inst, gen)
                p = opt.point()
                result["method"] = "closed-form"
                result["case"] = opt.case.value
                result["mu"] = opt.mu
                result["free_mass"] = opt.free_mass
            else:
                p = simplex.solve_partial_numeric(inst, gen, restarts=restarts, seed=seed)
                result["method"] = "numeric"
            value = simplex.objective_partial(inst, gen, p)
    result["warnings"] = sorted({str(w.message) for w in caught})
    if not np.all(np.isfinite(p)):
        raise NumericalFailure("solver returned a non-finite point")
    result["p"] = p
    result["objective"] = value
    result["kkt_ok"] = simplex.verify_kkt_equal_partials(inst, gen, p, mode=mode)
    if inst.s_set is not None:
        try:
            result["bound_ok"] = simplex.check_displacement_bound(inst, gen, p)
            result["bound_note"] = None
        except simplex.HypothesisViolation as exc:
            result["bound_ok"] = None
            result["bound_note"] = str(exc)
        pairs = inst.s_set
    else:
        result["bound_ok"] = None
        result["bound_note"] = "no in-sample set"
        pairs = range(inst.n)
    gaps = {}
    if np.all(p > 0):
        for w in pairs:
            for l in pairs:
                if w != l:
                    gaps[f"{w}>{l}"] = simplex.implied_reward_gap(gen, inst.beta, p[w] / inst.q[w], p[l] / inst.q[l])
    result["implied_gaps"] = gaps
    if inst.s_set is not None and not np.all(p[list(inst.s_set)] > 0):
        result["implied_gaps_note"] = "an in-sample probability is zero"
    return result


def run_solve(args, cfg: dict) -> int:
    doc = _solve_doc(args, cfg)
    result = solve_instance(doc, args.seed)
    text = dumps(result)
    sys.stdout.write(text)
    if args.out_dir:
        _write(Path(args.out_dir) / "solution.json", text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# train

TRAIN_SECTIONS = {
    "world": ("num_prompts", "vocab_size", "reward_scale", "ref_scale"),
    "sampling": ("pairs_per_prompt",),
    "loss": ("id", "beta", "clip", "stop_gradient_beta"),
    "optimizer": ("lr", "epochs", "steps_per_epoch"),
}
# config-file key -> ToyConfig field
_RENAME = {("loss", "id"): "loss"}

DEVIATIONS = [
    "tabular softmax policy instead of a language model",
    "plain full-batch gradient descent on the mean loss",
    f"default learning rate {trainer.DEFAULT_LR:g} sized for a tabular table",
]


def train_config(args, cfg: dict) -> trainer.ToyConfig:
    _reject_unknown(cfg, TRAIN_SECTIONS, "train config")
    values = {}
    for sec, keys in TRAIN_SECTIONS.items():
        sub = _section(cfg, sec)
        _reject_unknown(sub, keys, f"train config section {sec!r}")
        for k, v in sub.items():
            values[_RENAME.get((sec, k), k)] = v
    for name in ("lr", "epochs", "beta"):
        if getattr(args, name) is not None:
            values[name] = getattr(args, name)
    try:
        base = trainer.ToyConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    types = {f.name: type(getattr(trainer.ToyConfig(), f.name)) for f in fields(trainer.ToyConfig)}
    for name, typ in types.items():
        val = getattr(base, name)
        if typ is float and isinstance(val, int) and not isinstance(val, bool):
            base = replace(base, **{name: float(val)})
        elif not isinstance(val, typ) or (typ is int and isinstance(val, bool)):
            raise ConfigError(f"field {name!r} must be of type {typ.__name__}")
    if base.epochs < 1:
        raise ConfigError("epochs must be >= 1")
    return base


def _train_outputs(cfg: trainer.ToyConfig, seed: int, out: Path | None):
    res = trainer.run_experiment(cfg, seed)
    summary = {
        "config": asdict(cfg),
        "seed": seed,
        "deviations": DEVIATIONS,
        "diverged": res.diverged,
        "displacement_free": res.world.displacement_free,
        "num_triples": len(res.triples),
    }
    if res.report is not None:
        summary.update(res.report.to_dict())
    if cfg.loss == "squaredpo":
        eff = [trainer.effective_betas(c, res.world, res.triples, cfg.beta, cfg.clip) for c in res.checkpoints]
        summary["winner_effective_beta_mean_per_epoch"] = [float(np.mean(e)) for e in eff]
        summary["winner_effective_beta_max_per_epoch"] = [float(np.max(e)) for e in eff]
    if out is not None:
        ck = {
            "checkpoints": [{"epoch_tag": c.epoch_tag, "logits": c.logits} for c in res.checkpoints],
            "seed": seed,
            "world": {"num_prompts": res.world.num_prompts, "vocab_size": res.world.vocab_size},
        }
        if cfg.loss == "squaredpo":
            ck["winner_effective_beta"] = eff
        _write(out / "checkpoints.json", dumps(ck))
        _write(out / "report.json", dumps(summary))
        if res.report is not None:
            trainer.write_trajectories_csv(out / "trajectories.csv", res.report)
            trainer.write_histogram_csv(out / "histogram.csv", res.report)
    return summary


def run_train(args, cfg: dict) -> int:
    base = train_config(args, cfg)
    loss_ids = [s for s in (args.loss.split(",") if args.loss else [base.loss]) if s]
    runs = []
    for lid in loss_ids:
        try:
            runs.append(replace(base, loss=losses.validate_loss_id(lid)))
        except KeyError as exc:
            raise ConfigError(exc.args[0]) from None
    root = Path(args.out_dir) if args.out_dir else None

    def job(c):
        sub = None if root is None else (root if len(runs) == 1 else root / c.loss.replace(":", "_"))
        return _train_outputs(c, args.seed, sub)

    # independent runs share nothing mutable
    with ThreadPoolExecutor(max_workers=min(4, len(runs))) as pool:
        summaries = list(pool.map(job, runs))
    status = EXIT_OK
    for c, s in zip(runs, summaries):
        print(f"loss={c.loss} seed={args.seed} epochs={c.epochs}")
        if "mean_per_epoch" in s:
            print("  mean log-ratio   " + " ".join(f"{v:+.5f}" for v in s["mean_per_epoch"]))
            print("  median log-ratio " + " ".join(f"{v:+.5f}" for v in s["median_per_epoch"]))
            fr = s["monotone_fractions"]
            shown = ", ".join(f"to {k}: {'n/a' if v is None else f'{v:.4f}'}" for k, v in fr.items()) or "absent"
            print(f"  monotone fractions ({s['first_epoch_decreasing']} first-epoch decreasing) {shown}")
        if s["diverged"]:
            print(f"  diverged: {s['diverged']}")
            status = EXIT_NUMERIC
    return status


# ---------------------------------------------------------------------------
# verify

VERIFY_FIELDS = ("suite", "n", "count", "resolution")
SUITES = ("gradients", "taxonomy", "solver", "argmin")


def _suite_taxonomy(seed, n, count, resolution):
    rows = classifier.classify_taxonomy()
    bad = classifier.taxonomy_mismatches(rows)
    return [("taxonomy", not bad, "; ".join(bad) or f"{len(rows)} generators match")]


def _suite_argmin(seed, n, count, resolution):
    out = []
    for g in gens.catalog():
        am = classifier.argmin_f(g)
        loc, val = oracle.grid_argmin_scalar(lambda t: np.asarray(g.f(t)), 1e-8, 50.0)
        # the refined minimum must not be worse than the best sample, and
        # must sit within a few grid spacings of it
        ok = am.value <= val + 1e-12 * max(1.0, abs(val)) and abs(am.location - loc) <= 1e-4 * max(1.0, loc)
        out.append((f"argmin {g.id}", ok, f"refined {am.location:.10g} vs grid {loc:.10g}"))
    return out


def gradient_points(rng, count: int, clip: float):
    """Random log-probability inputs for the gradient suite."""
    lp_w = rng.uniform(-6.0, -0.01, count)
    lp_l = rng.uniform(-6.0, -0.01, count)
    d_w = rng.uniform(-3.0, 3.0, count)
    d_l = rng.uniform(-3.0, 3.0, count)
    beta = rng.uniform(0.01, 1.0, count)
    return np.stack([lp_w, lp_w - d_w, lp_l, lp_l - d_l, beta], axis=1)


def gradient_cases():
    """(name, loss callable, clip) triples covering every loss in the suite."""
    cases = [("dpo", lambda t, b: losses.dpo_loss(t, b), None)]
    cases.append(("squaredpo", lambda t, b: losses.squaredpo_loss(t, b), losses.DEFAULT_CLIP))
    # a small threshold puts half the points in the clipped regime
    cases.append(("squaredpo clip=1", lambda t, b: losses.squaredpo_loss(t, b, clip=1.0), 1.0))
    cases.append(("squaredpo stop-gradient",
                  lambda t, b: losses.squaredpo_loss(t, b, stop_gradient_beta=True), None))
    for g in gens.catalog():
        cases.append((f"fdpo:{g.id}", lambda t, b, g=g: losses.fdpo_loss(t, g, b), None))
    return cases


def check_loss_gradients(name, fn, clip, points, rtol=1e-6):
    """Returns (checked, failures, skipped, worst relative error)."""
    failures, skipped, checked, worst = 0, 0, 0, 0.0
    for lp_w, ref_w, lp_l, ref_l, beta in points:
        if clip is not None and min(abs(-(lp_w - ref_w) - clip), abs(-(lp_l - ref_l) - clip)) < 1e-3:
            skipped += 1
            continue
        if name.endswith("stop-gradient"):
            # the stop-gradient loss is not the derivative of its value; compare
            # against the clipped-coefficient surrogate with coefficients frozen
            bw = losses.adaptive_beta(lp_w - ref_w, beta)
            bl = losses.adaptive_beta(lp_l - ref_l, beta)

            def value(x, bw=bw, bl=bl):
                return float(losses.bt_nll(bw * (x[0] - ref_w) - bl * (x[1] - ref_l)))
        else:
            def value(x, beta=beta, ref_w=ref_w, ref_l=ref_l):
                return float(fn(losses.TripleLogProbs(x[0], ref_w, x[1], ref_l), beta).value)

        def grad(x, beta=beta, ref_w=ref_w, ref_l=ref_l):
            lv = fn(losses.TripleLogProbs(x[0], ref_w, x[1], ref_l), beta)
            return np.array([lv.grad_w, lv.grad_l])

        res = oracle.check_gradient(value, grad, np.array([lp_w, lp_l]), rtol=rtol)
        checked += 1
        if res.nonsmooth:
            skipped += 1
            continue
        worst = max(worst, res.max_rel_error)
        failures += not res.ok
    return checked, failures, skipped, worst


def _suite_gradients(seed, n, count, resolution):
    rng = make_rng(seed, 10)
    points = gradient_points(rng, count, losses.DEFAULT_CLIP)
    out = []
    for name, fn, clip in gradient_cases():
        checked, failures, skipped, worst = check_loss_gradients(name, fn, clip, points)
        out.append((f"gradient {name}", failures == 0,
                    f"{checked - skipped} points, {skipped} skipped, worst rel err {worst:.2e}"))
    return out


def solver_vs_grid(inst, gen, resolution: float, seed: int = 0):
    """(solver value, grid value, slack) for the full objective."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        p = simplex.solve_full(inst, gen, seed=seed)
    v = simplex.objective_full(inst, gen, p)
    _, g = oracle.grid_full_objective(inst.r, inst.q, inst.beta, gen, resolution)
    slack = oracle.lattice_slack(oracle.full_objective_rows(inst.r, inst.q, inst.beta, gen), p, resolution)
    return v, g, slack


def _suite_solver(seed, n, count, resolution):
    if not 2 <= n <= oracle.MAX_DIM:
        raise ConfigError(f"--n must lie in [2, {oracle.MAX_DIM}]")
    out = []
    for g in gens.catalog():
        if not classifier.is_dpo_inducing(g).inducing:
            continue
        rng = make_rng(seed, 20, n)
        worst = -math.inf
        fails = 0
        for _ in range(count):
            inst = simplex.random_instance(rng, n)
            v, grid, slack = solver_vs_grid(inst, g, resolution, seed)
            worst = max(worst, grid - v)
            fails += v < grid - slack - 1e-12
        out.append((f"solver {g.id} n={n}", fails == 0, f"{count} instances, max grid excess {worst:.2e}"))
    return out


_SUITE_FUNCS = {
    "gradients": _suite_gradients,
    "taxonomy": _suite_taxonomy,
    "solver": _suite_solver,
    "argmin": _suite_argmin,
}


def run_verify(args, cfg: dict) -> int:
    _reject_unknown(cfg, VERIFY_FIELDS, "verify config")
    suite = args.suite or cfg.get("suite", "all")
    n = args.n if args.n is not None else int(cfg.get("n", 3))
    count = args.count if args.count is not None else int(cfg.get("count", 20))
    resolution = float(cfg.get("resolution", args.resolution))
    names = SUITES if suite == "all" else (suite,)
    if any(s not in _SUITE_FUNCS for s in names):
        raise ConfigError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)} or all")
    results = []
    for s in names:
        results.extend(_SUITE_FUNCS[s](args.seed, n, count, resolution))
    failed = [r for r in results if not r[1]]
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if args.out_dir:
        doc = {"suite": suite, "seed": args.seed, "checks": [{"name": a, "ok": b, "detail": c} for a, b, c in results]}
        _write(Path(args.out_dir) / f"verify_{suite}.json", dumps(doc))
    return EXIT_OK if not failed else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# argument parsing


def _global_flags(parser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=argparse.SUPPRESS if suppress else 0,
                        help="master seed for every random stream (default 0)")
    parser.add_argument("--out-dir", default=d, help="directory for output files")
    parser.add_argument("--config", default=d, help="JSON document for the command")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdpo", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="taxonomy table as CSV")
    _global_flags(p, suppress=True)
    p.add_argument("--all", action="store_true", help="every catalog generator")
    p.add_argument("--gen", action="append", help="generator id (repeatable)")
    p.add_argument("--alpha", type=float, default=gens.DEFAULT_ALPHA, help="alpha of the catalog alpha-divergence")

    p = sub.add_parser("solve", help="solve one simplex instance")
    _global_flags(p, suppress=True)
    p.add_argument("--instance", help="instance JSON (same fields as --config)")
    p.add_argument("--gen", help="generator id")
    p.add_argument("--mode", choices=("full", "partial"))

    p = sub.add_parser("train", help="tabular displacement experiment")
    _global_flags(p, suppress=True)
    p.add_argument("--loss", help="dpo, squaredpo or fdpo:<gen>; comma-separate for paired runs")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--beta", type=float)

    p = sub.add_parser("verify", help="oracle cross-check suites")
    _global_flags(p, suppress=True)
    p.add_argument("--suite", help=f"one of {', '.join(SUITES)} or all")
    p.add_argument("--n", type=int, help="simplex dimension for the solver suite (default 3)")
    p.add_argument("--count", type=int, help="instances or points per check (default 20)")
    p.add_argument("--resolution", type=float, default=1e-2, help="lattice step for the solver suite")
    return parser


def _setup_logging() -> None:
    level = os.environ.get("FDPO_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


COMMANDS = {"classify": run_classify, "solve": run_solve, "train": run_train, "verify": run_verify}


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    log.debug("arguments: %s", vars(args))
    try:
        cfg = _load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, KeyError, ValueError) as exc:
        msg = exc.args[0] if exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalFailure, RuntimeError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
