"""``mogu`` command line: synth, train, eval, ablate.

Exit codes::

    0  success
    1  configuration error
    2  data error
    3  training diverged
    4  checkpoint does not match the model spec

On failure exactly one line ``mogu: error exit=<code> kind=<kind> msg=<text>``
goes to stderr.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import json
import logging
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .config import AblateConfig, ConfigError, RunConfig, load_config
from .data import DataError, PreparedData, RawSeries, load_csv, prepare, synth_heteroscedastic, write_csv
from .evaluation import EvalReport, pearson, uncertainty_error_correlation
from .mixture import CheckpointMismatch, DivergenceError, MixtureModel, MixtureOutput
from .numgrad import checkpoint
from .numgrad.checkpoint import CheckpointError
from .train import train

log = logging.getLogger("mogu")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED, EXIT_MISMATCH = 0, 1, 2, 3, 4

CHECKPOINT = "checkpoint.txt"
MANIFEST = "manifest.ini"
RECORD = "train_record.json"
REPORT = "report.json"
FORECAST = "forecast.csv"
ABLATION = "ablation.tsv"
ABLATION_SUMMARY = "ablation_summary.tsv"


class CliError(Exception):
    def __init__(self, code: int, kind: str, msg: str):
        super().__init__(msg)
        self.code, self.kind = code, kind


# pipeline pieces ------------------------------------------------------------------------------

def load_series(cfg: RunConfig) -> tuple[RawSeries, np.ndarray | None]:
    """The configured series and, for synthetic data, its true noise scale."""
    if cfg.data.synth:
        s = cfg.synth
        if s.n < cfg.data.lookback + cfg.data.horizon:
            raise ConfigError(f"synth.n={s.n} is below lookback + horizon")
        return synth_heteroscedastic(s.seed, s.n, s.variables, s.profile)
    if not cfg.data.path:
        raise DataError("data.path is empty and data.synth is false")
    return load_csv(cfg.data.path), None


def prepare_data(cfg: RunConfig) -> tuple[PreparedData, np.ndarray | None]:
    series, sigma = load_series(cfg)
    try:
        split = cfg.data.split_spec
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return prepare(series, split, cfg.data.lookback, cfg.data.horizon, cfg.data.stride), sigma


def build_model(cfg: RunConfig, num_variables: int, params=None) -> MixtureModel:
    try:
        spec = cfg.model_spec(num_variables)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return MixtureModel(spec, params=params, seed=cfg.train.seed)


def manifest_text(cfg: RunConfig, command: str) -> str:
    head = ["[manifest]", f"command = {command}", f"mogu_version = {__version__}",
            f"numpy_version = {np.__version__}", f"python_version = {platform.python_version()}", ""]
    return "\n".join(head) + "\n" + cfg.to_ini()


def run_train(cfg: RunConfig) -> tuple[MixtureModel, PreparedData, np.ndarray | None]:
    data, sigma = prepare_data(cfg)
    model = build_model(cfg, data.series.num_variables)
    os.makedirs(cfg.output.dir, exist_ok=True)
    _, record = train(model, data.train, data.val, cfg.train)
    checkpoint.save(os.path.join(cfg.output.dir, CHECKPOINT), model.params)
    with open(os.path.join(cfg.output.dir, MANIFEST), "w") as fh:
        fh.write(manifest_text(cfg, "train"))
    with open(os.path.join(cfg.output.dir, RECORD), "w") as fh:
        json.dump(record.to_dict(), fh, indent=2)
        fh.write("\n")
    return model, data, sigma


def sigma_recovery(out: MixtureOutput, data: PreparedData, sigma: np.ndarray) -> dict:
    """Correlation of predicted aleatoric variance with the true noise variance
    (both in standardised units) on test windows."""
    h = out.aleatoric.shape[1]
    idx = data.test.origins[:, None] + np.arange(h)[None, :]
    true_var = (sigma[idx] / data.stats.std) ** 2
    per_var = [pearson(out.aleatoric[..., j], true_var[..., j]) for j in range(true_var.shape[-1])]
    return {"pooled_pearson": pearson(out.aleatoric, true_var), "per_variable_pearson": per_var}


def run_eval(cfg: RunConfig, model: MixtureModel, data: PreparedData,
             sigma: np.ndarray | None = None) -> tuple[EvalReport, MixtureOutput]:
    out = model.predict(data.test.inputs)
    report = uncertainty_error_correlation(out, data.test.targets, data.series.variable_names,
                                           n_perm=cfg.eval.n_perm, seed=cfg.train.seed)
    if sigma is not None:
        report.extras["sigma_recovery"] = sigma_recovery(out, data, sigma)
    return report, out


def write_forecast_csv(path, out: MixtureOutput, truth: np.ndarray, origins, names) -> None:
    n, k, h, V = out.expert_means.shape
    header = ["window_origin", "horizon_step", "variable", "y_true", "y_pred",
              "aleatoric", "epistemic", "total_variance"]
    for i in range(k):
        header += [f"expert{i}_mean", f"expert{i}_variance", f"expert{i}_weight"]
    fmt = lambda x: format(float(x), ".17g")  # noqa: E731
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for a in range(n):
            for s in range(h):
                for v in range(V):
                    row = [int(origins[a]), s, names[v], fmt(truth[a, s, v]),
                           fmt(out.combined_mean[a, s, v]), fmt(out.aleatoric[a, s, v]),
                           fmt(out.epistemic[a, s, v]), fmt(out.total_variance[a, s, v])]
                    for i in range(k):
                        row += [fmt(out.expert_means[a, i, s, v]), fmt(out.expert_variances[a, i, s, v]),
                                fmt(out.weights[a, i, s, v])]
                    w.writerow(row)


# commands --------------------------------------------------------------------------------------

def cmd_synth(cfg: RunConfig) -> int:
    s = cfg.synth
    if s.n < cfg.data.lookback + cfg.data.horizon:
        raise ConfigError(f"synth.n={s.n} is below lookback + horizon "
                          f"({cfg.data.lookback + cfg.data.horizon})")
    series, sigma = synth_heteroscedastic(s.seed, s.n, s.variables, s.profile)
    try:
        os.makedirs(os.path.dirname(s.out) or ".", exist_ok=True)
        write_csv(s.out, series)
        write_csv(s.sigma_path, RawSeries(series.timestamps, sigma, series.variable_names))
    except OSError as err:
        raise CliError(EXIT_DATA, "io", f"cannot write {s.out}: {err}") from None
    print(s.out)
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    run_train(cfg)
    print(os.path.join(cfg.output.dir, CHECKPOINT))
    return EXIT_OK


def cmd_eval(cfg: RunConfig, checkpoint_path: str | None = None) -> int:
    path = checkpoint_path or os.path.join(cfg.output.dir, CHECKPOINT)
    try:
        params = checkpoint.load(path)
    except FileNotFoundError:
        raise CliError(EXIT_MISMATCH, "checkpoint", f"checkpoint not found: {path}") from None
    except CheckpointError as err:
        raise CliError(EXIT_MISMATCH, "checkpoint", str(err)) from None
    data, sigma = prepare_data(cfg)
    model = build_model(cfg, data.series.num_variables, params=params)
    report, out = run_eval(cfg, model, data, sigma)
    os.makedirs(cfg.output.dir, exist_ok=True)
    with open(os.path.join(cfg.output.dir, REPORT), "w") as fh:
        fh.write(report.to_json())
    if cfg.eval.forecast_csv:
        write_forecast_csv(os.path.join(cfg.output.dir, FORECAST), out, data.test.targets,
                           data.test.origins, data.series.variable_names)
    print(os.path.join(cfg.output.dir, REPORT))
    return EXIT_OK


def ablation_cells(base: RunConfig) -> list[tuple[dict, RunConfig | None, str]]:
    """Cross product of the ``[ablate]`` factors as ``(labels, config, skip_reason)``."""
    a: AblateConfig = base.ablate
    cells = []
    for gating, loss, head, res, k, seed in itertools.product(
            a.gating, a.loss, a.head, a.resolution, a.experts, a.seeds):
        labels = {"gating": gating, "loss": loss, "head": head, "resolution": res,
                  "experts": int(k), "seed": int(seed)}
        name = f"{gating}-{loss}-{head}-{res}-k{k}-s{seed}"
        try:
            cfg = base.replace(
                expert=dataclasses.replace(base.expert, head_type=head, uncertainty_resolution=res),
                mixture=dataclasses.replace(base.mixture, gating=gating, loss=loss, k=int(k)),
                train=dataclasses.replace(base.train, seed=int(seed)),
                output=dataclasses.replace(base.output, dir=os.path.join(base.output.dir, "cells", name)),
            )
            if loss == "moe" and (head != a.head[0] or res != a.resolution[0]):
                raise ValueError("variance head factors do not apply to the moe loss")
            cells.append((labels, cfg, ""))
        except ValueError as err:
            cells.append((labels, None, str(err)))
    return cells


def _run_cell(cfg: RunConfig) -> dict:
    try:
        model, data, _ = run_train(cfg)
        report, _ = run_eval(cfg, model, data)
        with open(os.path.join(cfg.output.dir, REPORT), "w") as fh:
            fh.write(report.to_json())
        return {"status": "ok", "mae": report.mae, "mse": report.mse}
    except DivergenceError as err:
        return {"status": "diverged", "reason": str(err)}


ABLATION_COLUMNS = ["gating", "loss", "head", "resolution", "experts", "seed", "status", "mae", "mse", "note"]


def cmd_ablate(cfg: RunConfig) -> int:
    cells = ablation_cells(cfg)
    runnable = [c for _, c, _ in cells if c is not None]
    if cfg.ablate.jobs > 1:
        with ProcessPoolExecutor(cfg.ablate.jobs) as pool:
            results = iter(list(pool.map(_run_cell, runnable)))
    else:
        results = (_run_cell(c) for c in runnable)
    rows = []
    for labels, c, reason in cells:
        row = dict(labels)
        if c is None:
            row.update(status="skipped", mae="", mse="", note=reason)
        else:
            res = next(results)
            row.update(status=res["status"], mae=_fmt(res.get("mae")), mse=_fmt(res.get("mse")),
                       note=res.get("reason", ""))
        rows.append(row)
    os.makedirs(cfg.output.dir, exist_ok=True)
    _write_tsv(os.path.join(cfg.output.dir, ABLATION), ABLATION_COLUMNS, rows)
    _write_tsv(os.path.join(cfg.output.dir, ABLATION_SUMMARY),
               ["gating", "loss", "head", "resolution", "experts", "seeds", "mae_mean", "mse_mean"],
               summarize(rows))
    with open(os.path.join(cfg.output.dir, MANIFEST), "w") as fh:
        fh.write(manifest_text(cfg, "ablate"))
    print(os.path.join(cfg.output.dir, ABLATION))
    return EXIT_OK


def _fmt(x) -> str:
    return "" if x is None else f"{x:.6f}"


def summarize(rows: list[dict]) -> list[dict]:
    """Mean MAE/MSE over seeds for every other factor combination."""
    groups: dict[tuple, list[dict]] = {}
    keys = ("gating", "loss", "head", "resolution", "experts")
    for r in rows:
        if r["status"] == "ok":
            groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for key, rs in groups.items():
        row = dict(zip(keys, key))
        row["seeds"] = len(rs)
        row["mae_mean"] = _fmt(float(np.mean([float(r["mae"]) for r in rs])))
        row["mse_mean"] = _fmt(float(np.mean([float(r["mse"]) for r in rs])))
        out.append(row)
    return out


def _write_tsv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, columns, delimiter="\t", lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def read_tsv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))


# entry point ----------------------------------------------------------------------------------

def _overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for p in pairs:
        key, sep, value = p.partition("=")
        if not sep:
            raise ConfigError(f"--set expects section.key=value, got {p!r}")
        out[key.strip()] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mogu", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("synth", "write a synthetic heteroscedastic dataset"),
                        ("train", "train a mixture and write checkpoint + manifest"),
                        ("eval", "evaluate a checkpoint on the test split"),
                        ("ablate", "train/evaluate a grid of design variants")]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("config")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="SECTION.KEY=VALUE")
        if name == "eval":
            p.add_argument("--checkpoint", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args.overrides))
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint)
        return cmd_ablate(cfg)
    except CliError as err:
        return _fail(err.code, err.kind, str(err))
    except ConfigError as err:
        return _fail(EXIT_CONFIG, "config", str(err))
    except DataError as err:
        return _fail(EXIT_DATA, "data", str(err))
    except DivergenceError as err:
        return _fail(EXIT_DIVERGED, "divergence", str(err))
    except CheckpointMismatch as err:
        return _fail(EXIT_MISMATCH, "checkpoint", str(err))


def _fail(code: int, kind: str, msg: str) -> int:
    msg = " ".join(msg.split())
    print(f"mogu: error exit={code} kind={kind} msg={msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
