"""``kgam`` command line: psi, embed, simulate, train, eval, gplot, glm.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import datasets, model as kgam
from .checkpoint import CheckpointError, atomic_write, csv_text, dumps, load_checkpoint, save_checkpoint
from .datasets import DataError, Dataset
from .embedding import SchemaError, embed_batch, fit_normalizer
from .koppen import DomainError, KstParams, psi_series
from .neural import TrainConfig, TrainingDivergence, outer_dims
from .smoothers import glm_fit

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3
SEED_ENV = "KGAM_SEED"


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything needed to rebuild a run.

    ``dataset`` is ``{"kind": "friedman", "n", "noise_sd", "seed", "train_n"}``
    or ``{"kind": "iris", "path", "train_n", "split_seed"}``; missing seeds
    fall back to the run ``seed``.  ``train_n = None`` trains on every row.
    """

    task: str = "regression"
    dataset: dict = field(default_factory=lambda: {"kind": "friedman"})
    seed: int = 0
    gamma: int = 10
    k_digits: int = 6
    n_beta: int | None = None
    lambda_mode: str = "sprecher"
    lambda_base: float | None = None
    delta_mode: str = "index"
    shift_mode: str = "koppen"
    outer_mode: str = "shared_g"
    badic_base: int | None = None
    width: int = 16
    depth: int = 18
    learning_rate: float = 1e-3
    epochs: int = 2000
    batch_size: int = 16
    momentum: float = 0.0
    optimizer: str = "sgd"
    out_dir: str = "runs/latest"

    def __post_init__(self):
        kind = self.dataset.get("kind")
        defaults = {
            "friedman": {"n": 100, "noise_sd": 1.0, "seed": None, "train_n": None},
            "iris": {"path": None, "train_n": 105, "split_seed": None},
        }
        if kind not in defaults:
            raise UsageError(f"dataset kind must be 'friedman' or 'iris', got {kind!r}")
        unknown = set(self.dataset) - set(defaults[kind]) - {"kind"}
        if unknown:
            raise UsageError(f"unknown dataset field(s) {sorted(unknown)}")
        self.dataset = {"kind": kind, **defaults[kind], **{k: v for k, v in self.dataset.items() if k != "kind"}}
        expected_task = "regression" if kind == "friedman" else "binary_classification"
        if self.task != expected_task:
            raise UsageError(f"{kind} data implies task {expected_task!r}, got {self.task!r}")
        if self.outer_mode == "badic_single_g" and self.badic_base is None:
            raise UsageError("badic_single_g needs badic_base")
        if self.outer_mode != "badic_single_g" and self.badic_base is not None:
            raise UsageError("badic_base is only meaningful with badic_single_g")
        if self.width < 1 or self.depth < 0:
            raise UsageError("width must be >= 1 and depth >= 0")
        d = 5 if kind == "friedman" else 3
        if self.gamma < d + 2:
            raise UsageError(f"gamma={self.gamma} must be >= d + 2 = {d + 2}")
        try:
            self.kst_params(d)
            self.train_config()
        except (TypeError, ValueError, OverflowError) as exc:
            raise UsageError(str(exc)) from None

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise UsageError(f"unknown config field(s) {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise UsageError(f"malformed config: {exc}") from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def kst_params(self, d: int) -> KstParams:
        return KstParams(
            d=d,
            gamma=self.gamma,
            k_digits=self.k_digits,
            n_beta=self.n_beta,
            lambda_mode=self.lambda_mode,
            lambda_base=self.lambda_base,
            delta_mode=self.delta_mode,
            shift_mode=self.shift_mode,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.epochs, self.batch_size, self.momentum, self.seed, self.optimizer)


def apply_seed_env(config: RunConfig, environ=os.environ) -> RunConfig:
    raw = environ.get(SEED_ENV)
    if raw is None or raw == "":
        return config
    try:
        seed = int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None
    return dataclasses.replace(config, seed=seed)


def load_dataset(config: RunConfig) -> Dataset:
    spec = config.dataset
    if spec["kind"] == "friedman":
        seed = config.seed if spec["seed"] is None else spec["seed"]
        data = datasets.friedman_generate(spec["n"], seed, spec["noise_sd"])
        if spec["train_n"] is not None:
            data = datasets.split(data, spec["train_n"], seed)
        return data
    data = datasets.iris_binarize(datasets.iris_load(spec["path"]))
    split_seed = config.seed if spec["split_seed"] is None else spec["split_seed"]
    if spec["train_n"] is not None:
        data = datasets.split(data, spec["train_n"], split_seed)
    return data


def score(model: kgam.KgamModel, data: Dataset) -> dict:
    out = {"train": kgam.evaluate(model, data, "train")}
    if data.test_idx.size:
        out["test"] = kgam.evaluate(model, data, "test")
    return out


def build(config: RunConfig, data: Dataset) -> kgam.KgamModel:
    params = config.kst_params(data.d)
    # fitted on every row (features only) so test rows stay inside the psi domain
    normalizer = fit_normalizer(data.X, params, data.feature_names)
    return kgam.build_model(
        params,
        normalizer,
        config.outer_mode,
        config.task,
        outer_dims(config.width, config.depth),
        config.seed,
        config.badic_base,
        fit_data=data.part("train"),
    )


def run_experiment(config: RunConfig):
    """datasets -> embedding -> K-GAM training.  Returns ``(model, data, trace, metrics)``."""
    data = load_dataset(config)
    model = build(config, data)
    model, trace = kgam.train(model, data, config.train_config())
    metrics = {
        "config": config.to_dict(),
        "embedding_width": model.n_channels,
        "n_params": sum(net.n_params for net in model.nets),
        "final_loss": trace[-1] if trace else None,
        **score(model, data),
    }
    return model, data, trace, metrics


def cmd_psi(gamma: int, k: int, n: int, grid: int, out=None, lo: float = 0.0, hi: float = 1.0) -> str:
    params = KstParams(d=1, gamma=gamma, k_digits=k, n_beta=n)
    text = csv_text(["x", "psi"], psi_series(params, grid, lo, hi).tolist())
    if out:
        atomic_write(out, text)
    return text


def cmd_embed(input_path, out=None, gamma=10, k=6, n=None, columns=None) -> str:
    with open(input_path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"{input_path}: empty file")
    header = lines[0].split(",")
    cols = columns or header
    missing = [c for c in cols if c not in header]
    if missing:
        raise SchemaError(f"{input_path}: missing column(s) {missing}")
    idx = [header.index(c) for c in cols]
    try:
        rows = np.array([[float(line.split(",")[j]) for j in idx] for line in lines[1:] if line.strip()])
    except ValueError as exc:
        raise DataError(f"{input_path}: {exc}") from None
    params = KstParams(d=len(cols), gamma=gamma, k_digits=k, n_beta=n)
    Z = embed_batch(rows, fit_normalizer(rows, params, cols), params) if rows.size else np.empty((0, params.channels))
    text = csv_text([f"z{q}" for q in range(params.channels)], Z.tolist())
    if out:
        atomic_write(out, text)
    return text


def cmd_simulate(n: int = 100, seed: int = 0, noise_sd: float = 1.0, out=None) -> str:
    data = datasets.friedman_generate(n, seed, noise_sd)
    text = csv_text([*data.feature_names, "y"], np.column_stack([data.X, data.y]).tolist())
    if out:
        atomic_write(out, text)
    return text


def cmd_train(config: RunConfig) -> dict:
    """Run the pipeline and write ``checkpoint.json``, ``metrics.json``, ``trace.csv``."""
    out = Path(config.out_dir)
    model, data, trace, metrics = run_experiment(config)
    save_checkpoint(out / "checkpoint.json", model, config.to_dict(), trace)
    atomic_write(out / "metrics.json", dumps(metrics))
    atomic_write(out / "trace.csv", csv_text(["epoch", "loss"], [[e, float(v)] for e, v in enumerate(trace)]))
    atomic_write(out / "dataset.json", dumps(data.manifest()))
    return metrics


def cmd_eval(checkpoint, config: RunConfig | None = None) -> dict:
    """Re-score a checkpoint on its dataset (rebuilt from the stored config unless given)."""
    model, stored, _ = load_checkpoint(checkpoint)
    config = config or RunConfig.from_dict(stored)
    data = load_dataset(config)
    if data.d != model.params.d:
        raise SchemaError(f"checkpoint expects {model.params.d} features, dataset has {data.d}")
    return {"config": config.to_dict(), "embedding_width": model.n_channels, **score(model, data)}


def cmd_gplot(checkpoint, channel="shared", grid: int = 200, out=None) -> str:
    """Sample an outer function over the z-range recorded at training time."""
    model, _, _ = load_checkpoint(checkpoint)
    if not model.z_ranges:
        raise CheckpointError("checkpoint has no recorded channel ranges (never trained)")
    if grid < 2:
        raise UsageError("grid must be >= 2")
    n_ch = model.n_channels
    if channel == "shared":
        if model.outer_mode == "per_channel_g":
            raise UsageError("per-channel model: pick a channel index")
        lo = min(r[0] for r in model.z_ranges)
        hi = max(r[1] for r in model.z_ranges)
        net_index = 0
    else:
        q = int(channel)
        if not 0 <= q < n_ch:
            raise UsageError(f"channel {q} out of range 0..{n_ch - 1}")
        lo, hi = model.z_ranges[q]
        net_index = q if model.outer_mode == "per_channel_g" else 0
    z = np.linspace(lo, hi, grid)
    g = kgam.outer_function(model, z, net_index)
    text = csv_text(["z", "g"], np.column_stack([z, g]).tolist())
    if out:
        atomic_write(out, text)
    return text


def cmd_glm(path=None, train_n: int | None = 105, seed: int = 0, max_iter: int = 100) -> dict:
    """IRLS logistic baseline on binarized Iris; test RMSE on the seeded split."""
    data = datasets.iris_binarize(datasets.iris_load(path))
    if train_n is not None:
        data = datasets.split(data, train_n, seed)
    X, y = data.part("train")
    fit = glm_fit(X, y, max_iter=max_iter, names=data.feature_names)
    result = {"fit": fit.to_dict(), "split_seed": seed, "train_n": int(y.size)}
    if data.test_idx.size:
        Xt, yt = data.part("test")
        result["test"] = kgam.metrics("binary_classification", fit.predict_proba(Xt), yt)
    result["summary"] = fit.summary(result.get("test", {}).get("rmse"))
    return result


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _opt_int(text):
    return None if text.lower() == "none" else int(text)


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kgam", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("psi", help="sample the Köppen function to CSV")
    s.add_argument("--gamma", type=int, default=10)
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--n", type=int, default=2, help="branching parameter of beta(r)")
    s.add_argument("--grid", type=int, default=1001)
    s.add_argument("--lo", type=float, default=0.0)
    s.add_argument("--hi", type=float, default=1.0)
    s.add_argument("--out")

    s = sub.add_parser("embed", help="KST-embed the rows of a CSV")
    s.add_argument("input")
    s.add_argument("--columns", nargs="+")
    s.add_argument("--gamma", type=int, default=10)
    s.add_argument("--k", type=int, default=6)
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--out")

    s = sub.add_parser("simulate", help="write a Friedman #1 sample")
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--noise-sd", type=float, default=1.0)
    s.add_argument("--out")

    s = sub.add_parser("train", help="train a K-GAM model")
    s.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    s.add_argument("--dataset", choices=["friedman", "iris"])
    s.add_argument("--iris-path")
    s.add_argument("--train-n", type=_opt_int)
    for name, typ in [
        ("seed", int), ("gamma", int), ("k-digits", int), ("n-beta", int), ("lambda-base", float),
        ("badic-base", int), ("width", int), ("depth", int), ("learning-rate", float),
        ("epochs", int), ("batch-size", int), ("momentum", float),
    ]:
        s.add_argument(f"--{name}", type=typ)
    s.add_argument("--lambda-mode", choices=["sprecher", "geometric"])
    s.add_argument("--delta-mode", choices=["index", "zero"])
    s.add_argument("--shift-mode", choices=["koppen", "sprecher"])
    s.add_argument("--outer-mode", choices=list(kgam.OUTER_MODES))
    s.add_argument("--optimizer", choices=["sgd", "sgd_momentum"])
    s.add_argument("--out-dir")

    s = sub.add_parser("eval", help="score a checkpoint")
    s.add_argument("checkpoint")
    s.add_argument("--config", help="override the dataset/config stored in the checkpoint")

    s = sub.add_parser("gplot", help="sample a learned outer function to CSV")
    s.add_argument("checkpoint")
    s.add_argument("--channel", default="shared", help="channel index q, or 'shared'")
    s.add_argument("--grid", type=int, default=200)
    s.add_argument("--out")

    s = sub.add_parser("glm", help="IRLS logistic baseline on binarized Iris")
    s.add_argument("--iris-path")
    s.add_argument("--train-n", type=_opt_int, default=105)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--json", action="store_true", help="print the fit as JSON")
    return p


def _read_config(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON config ({exc})") from None


def config_from_args(args) -> RunConfig:
    data = _read_config(args.config) if args.config else {}
    dataset = dict(data.get("dataset", {}))
    if args.dataset:
        if dataset.get("kind") not in (None, args.dataset):
            dataset = {}
        dataset["kind"] = args.dataset
        data.setdefault("task", "regression" if args.dataset == "friedman" else "binary_classification")
        if args.dataset == "iris":
            data["task"] = "binary_classification"
    if args.iris_path:
        dataset["path"] = args.iris_path
    if args.train_n is not None:
        dataset["train_n"] = args.train_n
    if dataset:
        data["dataset"] = dataset
    for f in dataclasses.fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None and f.name not in ("dataset", "task"):
            data[f.name] = value
    return apply_seed_env(RunConfig.from_dict(data))


def _emit(text: str):
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _run(args) -> int:
    if args.command == "psi":
        text = cmd_psi(args.gamma, args.k, args.n, args.grid, args.out, args.lo, args.hi)
        if not args.out:
            _emit(text)
    elif args.command == "embed":
        text = cmd_embed(args.input, args.out, args.gamma, args.k, args.n, args.columns)
        if not args.out:
            _emit(text)
    elif args.command == "simulate":
        text = cmd_simulate(args.n, args.seed, args.noise_sd, args.out)
        if not args.out:
            _emit(text)
    elif args.command == "train":
        metrics = cmd_train(config_from_args(args))
        _emit(dumps(metrics))
        _print_confusion(metrics)
    elif args.command == "eval":
        config = RunConfig.from_dict(_read_config(args.config)) if args.config else None
        metrics = cmd_eval(args.checkpoint, config)
        _emit(dumps(metrics))
        _print_confusion(metrics)
    elif args.command == "gplot":
        text = cmd_gplot(args.checkpoint, args.channel, args.grid, args.out)
        if not args.out:
            _emit(text)
    elif args.command == "glm":
        result = cmd_glm(args.iris_path, args.train_n, args.seed)
        _emit(dumps({k: v for k, v in result.items() if k != "summary"}) if args.json else result["summary"])
        if not args.json and "test" in result:
            _emit(kgam.format_confusion(result["test"]["confusion"]))
    return EXIT_OK


def _print_confusion(metrics: dict):
    for part in ("train", "test"):
        conf = metrics.get(part, {}).get("confusion")
        if conf is not None:
            sys.stderr.write(f"{part} confusion (rows actual, columns predicted):\n")
            sys.stderr.write(kgam.format_confusion(conf) + "\n")


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _run(args)
    except TrainingDivergence as exc:
        sys.stderr.write(f"kgam: {exc}\n")
        return EXIT_DIVERGED
    except UsageError as exc:
        sys.stderr.write(f"kgam: usage error: {exc}\n")
        return EXIT_USAGE
    except (DataError, DomainError, SchemaError, CheckpointError, FileNotFoundError, ValueError, OSError) as exc:
        sys.stderr.write(f"kgam: data error: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
