"""Command-line entry points.

Subcommands:
  run           full experiment from a TOML config into a run directory
  check         self-verification suites (theory | estimators | gaussian-oracle)
  gibbs-sample  standalone ULA sampling from the proximal Gibbs distribution
  entropy       standalone entropy estimate for a CSV of samples

The environment variable MFLD_SEED overrides the config seed for `run` and
`gibbs-sample`.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from .checks import SUITES
from .errors import DataValidationError, MfldError
from .estimators import knn_entropy
from .gibbs import ProximalGibbs, ula_sample
from .harness import build_dataset, parse_config, run_experiment
from .dynamics import initialize_ensemble
from .model import make_loss, make_neuron
from .rng import RngSpec


def _load_config(path: str):
    cfg = parse_config(path)
    env = os.environ.get("MFLD_SEED")
    if env is not None:
        try:
            seed = int(env)
        except ValueError:
            raise MfldError(f"MFLD_SEED must be an integer, got {env!r}") from None
        cfg = dataclasses.replace(cfg, seed=seed)
    return cfg


def _cmd_run(args) -> int:
    cfg = _load_config(args.config)
    out = run_experiment(cfg, args.out)
    print(f"run complete: {out}")
    return 0


def _cmd_check(args) -> int:
    results = SUITES[args.suite]()
    failed = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"[{status}] {res.name}: {res.detail}")
        failed += 0 if res.passed else 1
    if failed:
        print(f"{failed} of {len(results)} checks failed")
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def _cmd_gibbs_sample(args) -> int:
    cfg = _load_config(args.config)
    rng = RngSpec(cfg.seed)
    dataset = build_dataset(cfg, rng)
    model = make_neuron(cfg.model.kind, dataset.d_in, cfg.model.output_scale)
    loss = make_loss(cfg.loss)
    ens0 = initialize_ensemble(cfg.particles, model.d, cfg.init_std, rng)
    pg = ProximalGibbs.from_ensemble(ens0, model, loss, dataset, cfg.lam, cfg.lam_prime)
    step = cfg.sampler.step_for(cfg.lam, cfg.lam_prime)
    samples = ula_sample(pg, args.count, step, cfg.sampler.burn_in, cfg.sampler.thin, rng)
    out = Path(args.out)
    header = ",".join(f"theta{j}" for j in range(samples.shape[1]))
    lines = [header] + [",".join(f"{v:.17g}" for v in row) for row in samples]
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {samples.shape[0]} samples to {out}")
    return 0


def _read_sample_csv(path: str) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        has_header = any(c.isalpha() for c in first)
        rows = [first] if not has_header else []
        rows.extend(fh)
    if not rows:
        raise DataValidationError(f"no sample rows in {path}")
    try:
        data = np.loadtxt(rows, delimiter=",", ndmin=2)
    except ValueError as e:
        raise DataValidationError(f"could not parse samples from {path}: {e}") from None
    if not np.isfinite(data).all():
        raise DataValidationError("samples contain NaN/Inf")
    return data


def _cmd_entropy(args) -> int:
    samples = _read_sample_csv(args.samples)
    value = knn_entropy(samples, args.k)
    print(f"{value:.12g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfld", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured experiment")
    p_run.add_argument("--config", required=True, help="TOML config path")
    p_run.add_argument("--out", required=True, help="run directory to create/fill")
    p_run.set_defaults(fn=_cmd_run)

    p_check = sub.add_parser("check", help="run a verification suite")
    p_check.add_argument("--suite", required=True, choices=sorted(SUITES))
    p_check.set_defaults(fn=_cmd_check)

    p_gibbs = sub.add_parser("gibbs-sample", help="sample the proximal Gibbs distribution")
    p_gibbs.add_argument("--config", required=True, help="TOML config path")
    p_gibbs.add_argument("--count", required=True, type=int, help="number of samples")
    p_gibbs.add_argument("--out", required=True, help="output CSV path")
    p_gibbs.set_defaults(fn=_cmd_gibbs_sample)

    p_ent = sub.add_parser("entropy", help="entropy estimate for a CSV of samples")
    p_ent.add_argument("--samples", required=True, help="CSV of samples (one row per sample)")
    p_ent.add_argument("--k", required=True, type=int, help="neighbor count")
    p_ent.set_defaults(fn=_cmd_entropy)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (MfldError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
