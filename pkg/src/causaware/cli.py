"""Command-line interface: ``causaware {run,analytic,adjust,moments}``.

Exit codes: 0 success, 2 invalid input, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import __version__
from .adjust import AdjustmentModel, fit_adjustment, transform
from .config import BUILTIN_NAMES, builtin_config, config_from_dict, load_config
from .data import Dataset
from .errors import CausawareError, ValidationError
from .harness import run_experiment
from .metrics import TestMoments, analytic_expected_mse
from .models import LinearWeights
from .reporting import write_manifest, write_outputs
from .scm import RegressionScmParams
from .selection import CellProbs, bernoulli_moments

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3
DESK_REPLICATIONS = 200

log = logging.getLogger("causaware")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"expected comma-separated numbers, got {text!r}") from None


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# run -------------------------------------------------------------------------

def cmd_run(args) -> int:
    if args.manifest:
        manifest = json.loads(Path(args.manifest).read_text())
        config = config_from_dict(manifest["config"], source=args.manifest)
    elif args.builtin:
        config = builtin_config(args.builtin)
        if args.reps is None and not args.full_scale:
            config = config.replace(replications=DESK_REPLICATIONS)
    else:
        config = load_config(args.config)
    if args.reps is not None:
        config = config.replace(replications=args.reps)
    if args.seed is not None:
        config = config.replace(master_seed=args.seed)

    out = Path(args.out or f"runs/{config.name}-seed{config.master_seed}")
    started = _now()
    log.info("running %s: %d replications, seed %d", config.name, config.replications, config.master_seed)
    rows, summary = run_experiment(config, threads=args.threads)
    digests = write_outputs(out, rows, summary)
    write_manifest(
        out,
        {
            "tool": "causaware",
            "version": __version__,
            "config": config.to_dict(),
            "master_seed": config.master_seed,
            "threads": args.threads,
            "started": started,
            "finished": _now(),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "outputs": digests,
        },
    )
    for s, rep in summary.stability.items():
        print(f"{s.value:16s} stability_error={rep.stability_error:.6g}")
    n_fail = len(summary.failures)
    print(f"{len(rows)} result rows, {n_fail} failed fits -> {out}")
    return EXIT_OK


# analytic --------------------------------------------------------------------

def _load_mapping(path) -> dict:
    data = yaml.safe_load(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: expected a mapping of parameters")
    return data


def cmd_analytic(args) -> int:
    d = _load_mapping(args.params)
    beta_xy = np.asarray(d["beta_xy"], dtype=float).reshape(-1)
    beta_xc = np.asarray(d.get("beta_xc", np.zeros((beta_xy.size, 1))), dtype=float)
    beta_xc = beta_xc.reshape(beta_xy.size, -1)
    m = beta_xc.shape[1]
    params = RegressionScmParams(
        beta_xy=beta_xy,
        beta_xc=beta_xc,
        beta_yc=d.get("beta_yc", np.zeros(m)),
        rho=d.get("rho", 0.0),
        sigma2_x=d.get("sigma2_x", 1.0),
    )
    var_c = np.array(_floats(args.var_c) if args.var_c else np.ones(m))
    cov_yc = np.array(_floats(args.cov_yc) if args.cov_yc else np.zeros(m))
    if args.cov_cc:
        cov_cc = np.array(_floats(args.cov_cc)).reshape(m, m)
    else:
        cov_cc = np.diag(var_c)
    env = TestMoments(var_y=args.var_y, var_c=var_c, cov_cc=cov_cc, cov_yc=cov_yc)
    weights = LinearWeights(np.array(_floats(args.weights)))
    value = analytic_expected_mse(params, env, weights, adjusted=args.adjusted)
    print(f"{value:.12g}")
    return EXIT_OK


# adjust ----------------------------------------------------------------------

def _columns(frame: pd.DataFrame, names, path) -> None:
    missing = [c for c in names if c not in frame.columns]
    if missing:
        raise ValidationError(f"{path}: missing columns {missing}")


def cmd_adjust(args) -> int:
    confounders = [c.strip() for c in args.confounders.split(",") if c.strip()]
    train = pd.read_csv(args.train_csv, float_precision="round_trip")
    test = pd.read_csv(args.test_csv, float_precision="round_trip")
    _columns(train, confounders + [args.label], args.train_csv)
    _columns(test, confounders, args.test_csv)
    features = [c for c in train.columns if c not in confounders and c != args.label]
    if not features:
        raise ValidationError(f"{args.train_csv}: no feature columns left")
    _columns(test, features, args.test_csv)

    if args.model:
        model = AdjustmentModel.load(args.model)
    else:
        data = Dataset(
            train[features].to_numpy(float),
            train[confounders].to_numpy(float),
            train[args.label].to_numpy(float),
        )
        model = fit_adjustment(data, intercept=args.intercept)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for frame, name in ((train, "train_adjusted.csv"), (test, "test_adjusted.csv")):
        adjusted = frame.copy()
        # test labels, if present, are copied verbatim and never used
        adjusted[features] = transform(
            frame[features].to_numpy(float), frame[confounders].to_numpy(float), model
        )
        adjusted.to_csv(out / name, index=False)
    model_out = dict(model.to_dict(), features=features, confounders=confounders)
    (out / "adjustment_model.json").write_text(json.dumps(model_out, indent=2) + "\n")
    print(f"adjusted {len(features)} features using {len(confounders)} confounders -> {out}")
    return EXIT_OK


# moments ---------------------------------------------------------------------

def cmd_moments(args) -> int:
    probs = CellProbs(args.p00, args.p01, args.p10, args.p11)
    bm = bernoulli_moments(probs)
    print(f"var_c  {bm.var_c:.4f}")
    print(f"var_y  {bm.var_y:.4f}")
    print(f"cov    {bm.cov_cy:.4f}")
    print(f"cor    {bm.cor_cy:.4f}" if bm.cor_defined else "cor    undefined")
    return EXIT_OK


# entry point -----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="causaware", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a replicated stability experiment")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--builtin", choices=BUILTIN_NAMES)
    src.add_argument("--config", help="YAML experiment config")
    src.add_argument("--manifest", help="re-run exactly from a manifest.json")
    run.add_argument("--reps", type=int, help=f"replications (builtin default {DESK_REPLICATIONS})")
    run.add_argument("--full-scale", action="store_true", help="use the full 1000 replications")
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="output directory")
    run.add_argument("--threads", type=int, default=1)
    run.set_defaults(func=cmd_run)

    an = sub.add_parser("analytic", help="closed-form expected MSE of a fixed linear model")
    an.add_argument("--params", required=True, help="YAML/JSON with beta_xy, beta_xc, rho, sigma2_x")
    an.add_argument("--var-y", type=float, required=True)
    an.add_argument("--var-c", help="comma list, one per confounder (default 1)")
    an.add_argument("--cov-yc", help="comma list, one per confounder (default 0)")
    an.add_argument("--cov-cc", help="row-major m*m confounder covariance (default diag(var_c))")
    an.add_argument("--weights", required=True, help="comma list of trained weights; use --weights=-1,2 for negatives")
    an.add_argument("--adjusted", action="store_true", help="features deconfounded with the true coefficients")
    an.set_defaults(func=cmd_analytic)

    adj = sub.add_parser("adjust", help="deconfound features in CSV files")
    adj.add_argument("train_csv")
    adj.add_argument("test_csv")
    adj.add_argument("--confounders", required=True, help="comma-separated confounder columns")
    adj.add_argument("--label", required=True, help="outcome column (read from train only)")
    adj.add_argument("--out", required=True)
    adj.add_argument("--intercept", action="store_true", help="fit an intercept (non-centered data)")
    adj.add_argument("--model", help="apply a saved adjustment_model.json instead of fitting")
    adj.set_defaults(func=cmd_adjust)

    mo = sub.add_parser("moments", help="moments of a bivariate Bernoulli (C, Y)")
    for name in ("p00", "p01", "p10", "p11"):
        mo.add_argument(name, type=float)
    mo.set_defaults(func=cmd_moments)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"causaware: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except KeyError as exc:
        print(f"causaware: invalid input: missing key {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (CausawareError, OSError, np.linalg.LinAlgError) as exc:
        print(f"causaware: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
