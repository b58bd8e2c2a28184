"""``robust-affine`` command line.

Exit codes: 0 success, 1 contract violation or estimator failure (the report
is still written), 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation
from .config import ConfigError, ExperimentConfig, load_config
from .corruption import ADVERSARIES, CorruptionSpec, corrupt
from .geometry import Parallelopiped, apply_affine, sample_standard_cube
from .harness import jsonable, make_truth, run_estimator, run_experiment, sweep
from .samples import SampleSet
from .set_lemma import run_suite

MODE_NAMES = {"shift-scale": "shift_scale", "rotation": "rotation", "affine": "affine"}


# --------------------------------------------------------------------------- io helpers

def points_to_csv(x: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i + 1}" for i in range(x.shape[1])])
    for row in x:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def csv_to_points(text: str) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ConfigError("empty CSV", 1)
    header = rows[0]
    if header != [f"x{i + 1}" for i in range(len(header))]:
        raise ConfigError("CSV header must be x1,...,xd", 1)
    out = []
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ConfigError(f"expected {len(header)} values, got {len(row)}", k)
        try:
            out.append([float(v) for v in row])
        except ValueError:
            raise ConfigError("non-numeric value", k) from None
    return np.array(out, dtype=float).reshape(-1, len(header))


def _write(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8", newline="\n")


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None


def _json(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=False) + "\n"


def _body(path: str) -> Parallelopiped:
    try:
        obj = json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON: {exc.msg}", exc.lineno) from None
    obj = obj.get("estimate", obj) if isinstance(obj, dict) and "estimate" in obj else obj
    try:
        return Parallelopiped.from_dict(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not a body: {exc}") from None


def _experiment(args) -> ExperimentConfig:
    """Config from ``--config`` with command-line overrides."""
    obj = json.loads(json.dumps(ExperimentConfig().to_dict()))
    if getattr(args, "config", None):
        cfg = load_config(_read(args.config))
        obj = cfg.to_dict()
    for key in ("d", "n", "seed"):
        if getattr(args, key, None) is not None:
            obj[key] = getattr(args, key)
    if getattr(args, "mode", None):
        obj["mode"] = MODE_NAMES[args.mode]
        if not getattr(args, "config", None):
            obj["truth"]["mode"] = MODE_NAMES[args.mode]
    if getattr(args, "eps", None) is not None and not isinstance(args.eps, str):
        obj["corruption"]["epsilon"] = args.eps
    if getattr(args, "adversary", None):
        obj["corruption"]["adversary"] = args.adversary
    if obj["corruption"].get("epsilon", 0) == 0:
        obj["corruption"]["adversary"] = "none"
    if getattr(args, "warm", None):
        obj["estimator"]["warm_mode"] = args.warm
    return ExperimentConfig.from_dict(obj)


# --------------------------------------------------------------------------- commands

def cmd_sample(args) -> int:
    s = sample_standard_cube(args.d, args.n, args.seed)
    if args.truth_mode:
        cfg = ExperimentConfig.from_dict({"d": args.d, "n": args.n, "seed": args.seed,
                                          "truth": {"mode": MODE_NAMES[args.truth_mode]}})
        truth = make_truth(cfg)
        s = apply_affine(truth.to_affine(), s)
        if args.truth_out:
            _write(_json(truth.to_dict()), args.truth_out)
    _write(points_to_csv(s.points), args.out)
    return 0


def cmd_corrupt(args) -> int:
    x = csv_to_points(_read(args.input))
    body = _body(args.body) if args.body else None
    try:
        spec = CorruptionSpec(args.eps, args.adversary if args.eps > 0 else "none",
                              json.loads(args.params) if args.params else {}, args.seed)
        out = corrupt(SampleSet.from_points(x), spec, body)
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(str(exc)) from None
    _write(points_to_csv(out.view()), args.out)
    if args.labels_out:
        _write("label\n" + "".join(f"{int(v)}\n" for v in out.view_labels()), args.labels_out)
    return 0


def cmd_estimate(args) -> int:
    if args.input:
        # plain point cloud: no truth, so no evaluation
        x = csv_to_points(_read(args.input))
        cfg = _experiment(args)
        if cfg.estimator.warm_mode == "oracle":
            raise ConfigError("an oracle warm start needs a generated instance")
        body, diag, flags = run_estimator(cfg.estimator_mode, x, cfg.epsilon, cfg)
        diag.pop("removed", None)
        report = {"mode": cfg.estimator_mode, "estimate": body.to_dict(), "diagnostics": diag,
                  "flags": flags, "config": cfg.to_dict(),
                  "status": "estimator_failure" if "estimator_failure" in flags else "ok"}
    else:
        cfg = _experiment(args)
        try:
            report = run_experiment(cfg)
        except (ValueError, np.linalg.LinAlgError) as exc:
            report = {"status": "estimator_failure", "error": str(exc), "config": cfg.to_dict()}
    _write(_json(report), args.out)
    return 1 if report["status"] != "ok" else 0


def cmd_evaluate(args) -> int:
    est, truth = _body(args.estimate), _body(args.truth)
    if est.d != truth.d:
        raise ConfigError("estimate and truth dimensions differ")
    out = {"tv": evaluation.tv_summary(est, truth, args.m, args.seed),
           "column_error": float(evaluation.delta_r(est, truth).sum()),
           "delta_r": evaluation.delta_r(est, truth), "delta_s": evaluation.delta_s(est, truth)}
    if args.input:
        x = csv_to_points(_read(args.input))
        if args.labels:
            lab = csv_to_labels(_read(args.labels), len(x))
            s = SampleSet(x, np.ones(len(x), bool), lab)
            out["escape"] = evaluation.escape_summary(s, est)
        else:
            out["inside_fraction"] = est.inside_fraction(x)
    _write(_json(out), args.out)
    return 0


def csv_to_labels(text: str, n: int) -> np.ndarray:
    lines = text.strip().split("\n")
    if not lines or lines[0].strip() != "label":
        raise ConfigError("labels CSV must start with a 'label' header", 1)
    try:
        lab = np.array([int(v) for v in lines[1:]], dtype=np.int8)
    except ValueError:
        raise ConfigError("labels must be integers") from None
    if len(lab) != n:
        raise ConfigError(f"{len(lab)} labels for {n} points")
    return lab


def cmd_lemma_check(args) -> int:
    res = run_suite(args.systems, args.matrices, args.seed)
    _write(_json(res), args.out)
    return 0 if res["passed"] else 1


def cmd_facts_check(args) -> int:
    from .facts import run_facts

    res = run_facts(args.configs, args.m, tuple(args.dims), args.seed)
    if not args.records:
        for c in res["checks"].values():
            c.pop("records")
    _write(_json(res), args.out)
    return 0 if res["passed"] else 1


def cmd_sweep(args) -> int:
    try:
        eps_values = [float(v) for v in args.eps.split(",") if v.strip()]
    except ValueError:
        raise ConfigError("--eps must be a comma-separated list of numbers") from None
    if not eps_values:
        raise ConfigError("--eps is empty")
    args_single = argparse.Namespace(**{**vars(args), "eps": eps_values[0]})
    base = _experiment(args_single)
    if base.corruption.get("adversary") == "none":
        base.corruption["adversary"] = args.adversary or "corner_shift"
    rows = sweep(base, eps_values, range(args.seeds))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    _write(buf.getvalue(), args.out)
    return 0 if all(r["status"] == "ok" for r in rows) else 1


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robust-affine", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="uniform sample of the standard cube (or a random truth)")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--truth-mode", choices=list(MODE_NAMES), help="map the sample through a random truth body")
    s.add_argument("--truth-out", help="JSON file for the truth body")
    s.add_argument("--out", help="CSV output (default stdout)")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("corrupt", help="replace an eps fraction of a point cloud")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--adversary", choices=ADVERSARIES, default="corner_shift")
    s.add_argument("--params", help="adversary parameters as a JSON object")
    s.add_argument("--body", help="JSON body the adversary targets (default: bounding box)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.add_argument("--labels-out", help="CSV of ground-truth labels (0 inlier, 1 outlier)")
    s.set_defaults(func=cmd_corrupt)

    s = sub.add_parser("estimate", help="run an estimator on a generated instance or a CSV")
    s.add_argument("--mode", choices=list(MODE_NAMES), required=True)
    s.add_argument("--config", help="JSON experiment config")
    s.add_argument("--in", dest="input", help="CSV point cloud instead of a generated instance")
    s.add_argument("--d", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--eps", type=float)
    s.add_argument("--adversary", choices=ADVERSARIES)
    s.add_argument("--warm", choices=["moment", "oracle"])
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="JSON report (default stdout)")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("evaluate", help="compare an estimated body with the truth")
    s.add_argument("--estimate", required=True, help="JSON body or report")
    s.add_argument("--truth", required=True, help="JSON body")
    s.add_argument("--in", dest="input", help="CSV points for inside/escape fractions")
    s.add_argument("--labels", help="labels CSV matching --in")
    s.add_argument("--m", type=int, default=200_000, help="Monte Carlo samples per body")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("lemma-check", help="random suite for the intersection-sum bounds")
    s.add_argument("--systems", type=int, default=10_000)
    s.add_argument("--matrices", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_lemma_check)

    s = sub.add_parser("facts-check", help="Monte Carlo suite for the cube facts")
    s.add_argument("--configs", type=int, default=20)
    s.add_argument("--m", type=int, default=10**6)
    s.add_argument("--dims", type=int, nargs="+", default=[2, 5, 10])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--records", action="store_true", help="include per-configuration records")
    s.add_argument("--out")
    s.set_defaults(func=cmd_facts_check)

    s = sub.add_parser("sweep", help="grid of eps values, CSV table")
    s.add_argument("--mode", choices=list(MODE_NAMES), required=True)
    s.add_argument("--eps", required=True, help="comma-separated eps values")
    s.add_argument("--config")
    s.add_argument("--d", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--adversary", choices=ADVERSARIES)
    s.add_argument("--warm", choices=["moment", "oracle"])
    s.add_argument("--seeds", type=int, default=1, help="number of seeds per eps")
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
