"""``mcmult`` command line: gen-data, train, eval, ablate, count-params, grad-check, export-attn.

Configuration resolves as defaults < ``--config`` file (flat ``key = value``
lines, ``#`` comments) < command-line flags. The resolved configuration is
written to the output directory of every command that produces files.

Exit codes: 0 success, 1 failed check, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import typing
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .ablation import AXES, ablation_run
from .config import MODALITIES, Modality, ModelConfig, Variant, parse_branches
from .data import (
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    save_dataset,
    split,
)
from .errors import ConfigError, ContractError, DatasetLoadError, MCMulTError
from .export import export_attention
from .model import MCMulT, count_parameters
from .training import TrainConfig, evaluate, smooth_gradient_check, train

log = logging.getLogger("mcmult")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
COMMANDS = ("gen-data", "train", "eval", "ablate", "count-params", "grad-check", "export-attn")
GRAD_TOLERANCE = 1e-4


@dataclass
class RunConfig:
    # model
    dim: int = 8
    heads: int = 2
    blocks: int = 4
    layers: int = 3
    variant: str = "MCMulT"
    kernel_l: int = 3
    kernel_v: int = 3
    kernel_a: int = 3
    attn_dropout: float = 0.2
    fc_dropout: float = 0.1
    branches: str = "all"
    unimodal: str = ""
    num_classes: int = 2
    prediction_layers: int = 1
    flat_depth: int = 0
    positional: bool = True
    # training
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-3
    clip: float = 0.8
    loss: str = "cross_entropy"
    seed: int = 0
    patience: int = 0
    target_acc2: float = 0.0
    split_ratios: str = "0.6,0.2,0.2"
    # synthetic data
    samples: int = 2000
    dim_l: int = 8
    dim_v: int = 6
    dim_a: int = 4
    len_l: str = "6,10"
    len_v: str = "8,14"
    len_a: str = "10,16"
    snr: float = 4.0
    motif_width: int = 3
    label_kind: str = "class"
    # paths
    data_dir: str = ""
    model_dir: str = ""
    out_dir: str = "out"
    # command options
    axis: str = "variants"
    seeds: str = "0"
    branch: str = "V->L"
    block_index: int = 1
    head_index: int = 0
    scale_index: int = 0
    sample_index: int = 0

    def validate(self) -> None:
        self.model_config()
        self.train_config().validate()
        self.synthetic_spec().validate()
        self.ratios()
        if self.axis != "all" and self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES + ('all',)}, got {self.axis!r}")

    def ratios(self) -> tuple[float, float, float]:
        parts = _floats(self.split_ratios, "split_ratios")
        if len(parts) != 3:
            raise ConfigError(f"split_ratios needs three numbers, got {self.split_ratios!r}")
        return tuple(parts)

    def model_config(self, input_dims: tuple[int, int, int] | None = None) -> ModelConfig:
        return ModelConfig(
            input_dims=input_dims or (self.dim_l, self.dim_v, self.dim_a),
            dim=self.dim,
            heads=self.heads,
            blocks=self.blocks,
            layers=self.layers,
            variant=Variant.parse(self.variant),
            kernels=(self.kernel_l, self.kernel_v, self.kernel_a),
            attn_dropout=self.attn_dropout,
            fc_dropout=self.fc_dropout,
            branches=parse_branches(self.branches),
            unimodal=Modality(self.unimodal.upper()) if self.unimodal else None,
            num_classes=self.num_classes,
            regression=self.loss == "l1_regression",
            prediction_layers=self.prediction_layers,
            positional=self.positional,
            flat_depth=self.flat_depth or None,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            clip=self.clip,
            loss=self.loss,
            seed=self.seed,
            patience=self.patience or None,
            target_acc2=self.target_acc2 or None,
        )

    def synthetic_spec(self) -> SyntheticSpec:
        lengths = []
        for key in ("len_l", "len_v", "len_a"):
            lo_hi = [int(v) for v in _floats(getattr(self, key), key)]
            if len(lo_hi) != 2:
                raise ConfigError(f"{key} must be 'min,max', got {getattr(self, key)!r}")
            lengths.append(tuple(lo_hi))
        return SyntheticSpec(
            n_samples=self.samples,
            dims=(self.dim_l, self.dim_v, self.dim_a),
            lengths=tuple(lengths),
            snr=self.snr,
            num_classes=self.num_classes,
            motif_width=self.motif_width,
            seed=self.seed,
            label_kind=self.label_kind,
        )

    def dump(self) -> str:
        return "".join(f"{f.name} = {_render(getattr(self, f.name))}\n" for f in fields(self))


def _floats(text: str, key: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError as err:
        raise ConfigError(f"{key}: cannot parse {text!r}") from err


def _render(value) -> str:
    return str(value).lower() if isinstance(value, bool) else str(value)


_TYPES = typing.get_type_hints(RunConfig)


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError as err:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {raw!r}") from err


def read_config_file(path) -> dict[str, str]:
    values = {}
    text = Path(path).read_text()
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    return values


def parse_config(path=None, overrides: dict[str, object] | None = None) -> RunConfig:
    """Resolve defaults < file < overrides; unknown keys and bad values raise ConfigError."""
    merged: dict[str, object] = {}
    if path:
        merged.update(read_config_file(path))
    merged.update(overrides or {})
    known = {f.name for f in fields(RunConfig)}
    kwargs = {}
    for key, value in merged.items():
        norm = key.replace("-", "_")
        if norm not in known:
            raise ConfigError(f"unknown config key {key!r}")
        kwargs[norm] = _coerce(norm, value) if isinstance(value, str) else value
    cfg = RunConfig(**kwargs)
    cfg.validate()
    return cfg


# -- commands ----------------------------------------------------------------------


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.dump())
    return out


def _load(cfg: RunConfig):
    if not cfg.data_dir:
        raise ConfigError("this command needs data_dir (--data)")
    samples, manifest = load_dataset(cfg.data_dir)
    dims = tuple(int(manifest["dims"][m.value]) for m in MODALITIES)
    return samples, dims


def _save_model(model: MCMulT, out: Path) -> Path:
    path = out / "params.npz"
    np.savez(path, **model.state_dict())
    return path


MODEL_CONFIG = "model_config.txt"


def _load_model(cfg: RunConfig) -> MCMulT:
    if not cfg.model_dir:
        raise ConfigError("this command needs model_dir (--model)")
    mdir = Path(cfg.model_dir)
    saved = parse_config(mdir / MODEL_CONFIG)
    arrays = np.load(mdir / "params.npz")
    defaults = (saved.dim_l, saved.dim_v, saved.dim_a)
    dims = tuple(
        arrays[f"embed/{m.value}/kernel"].shape[1] if f"embed/{m.value}/kernel" in arrays.files else d
        for m, d in zip(MODALITIES, defaults)
    )
    model = MCMulT(saved.model_config(dims))
    model.load_state_dict({k: arrays[k] for k in arrays.files})
    return model


def cmd_gen_data(cfg: RunConfig) -> int:
    out = _out(cfg)
    target = Path(cfg.data_dir) if cfg.data_dir else out / "data"
    samples = generate_synthetic(cfg.synthetic_spec())
    save_dataset(samples, target, num_classes=cfg.num_classes)
    print(f"wrote {len(samples)} samples to {target}")
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    samples, dims = _load(cfg)
    tr, va, te = split(samples, cfg.ratios(), cfg.seed)
    out = _out(cfg)
    model = MCMulT(cfg.model_config(dims), seed=cfg.seed)
    history = train(model, tr, va, cfg.train_config())
    _save_model(model, out)
    (out / MODEL_CONFIG).write_text(cfg.dump())
    history.to_csv(out / "history.csv")
    report = evaluate(model, te)
    _write_metrics(report, out / "metrics.csv")
    print(f"trained {len(history)} epochs; test {report}")
    return EXIT_OK


def _write_metrics(report, path: Path) -> None:
    d = report.as_dict()
    path.write_text(",".join(d) + "\n" + ",".join(repr(v) for v in d.values()) + "\n")


def cmd_eval(cfg: RunConfig) -> int:
    model = _load_model(cfg)
    samples, _ = _load(cfg)
    _, _, te = split(samples, cfg.ratios(), cfg.seed)
    report = evaluate(model, te)
    out = _out(cfg)
    _write_metrics(report, out / "metrics.csv")
    d = report.as_dict()
    print(",".join(d))
    print(",".join(f"{v:.6f}" for v in d.values()))
    print(report)
    return EXIT_OK


def cmd_ablate(cfg: RunConfig) -> int:
    samples, dims = _load(cfg)
    splits = split(samples, cfg.ratios(), cfg.seed)
    out = _out(cfg)
    seeds = [int(s) for s in _floats(cfg.seeds, "seeds")]
    axes = AXES if cfg.axis == "all" else (cfg.axis,)
    for axis in axes:
        path = out / f"ablation_{axis}.csv"
        rows = ablation_run(cfg.model_config(dims), axis, seeds, splits, cfg.train_config(), path)
        print(f"{axis}: {len(rows)} rows -> {path}")
    return EXIT_OK


def cmd_count_params(cfg: RunConfig) -> int:
    base = cfg.model_config()
    counts = [(v.value, count_parameters(base.with_(variant=v, flat_depth=None))) for v in Variant]
    counts.sort(key=lambda kv: -kv[1])
    print("variant,params")
    for name, n in counts:
        print(f"{name},{n}")
    return EXIT_OK


def cmd_grad_check(cfg: RunConfig) -> int:
    model = MCMulT(cfg.model_config(), seed=cfg.seed)
    report, sample_seed = smooth_gradient_check(model, cfg.synthetic_spec())
    crossings = sum(report.kink_crossings.values())
    print(
        f"max relative error {report.max_error:.3e} ({report.worst}) over "
        f"{report.n_parameters} parameters; sample seed {sample_seed}; "
        f"ReLU kink crossings {crossings}"
    )
    if not report.smooth:
        print("no kink-free sample found; finite differences are not a valid oracle here",
              file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK if report.max_error < GRAD_TOLERANCE else EXIT_CHECK


def cmd_export_attn(cfg: RunConfig) -> int:
    model = _load_model(cfg)
    samples, _ = _load(cfg)
    if not 0 <= cfg.sample_index < len(samples):
        raise ConfigError(f"sample_index {cfg.sample_index} out of range 0..{len(samples) - 1}")
    out = _out(cfg)
    try:
        csv_path, meta_path = export_attention(
            model, samples[cfg.sample_index], cfg.branch, cfg.block_index, cfg.head_index,
            out, scale=cfg.scale_index,
        )
    except ContractError as err:  # indices come from the configuration
        raise ConfigError(str(err)) from err
    print(f"wrote {csv_path} and {meta_path}")
    return EXIT_OK


HANDLERS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "count-params": cmd_count_params,
    "grad-check": cmd_grad_check,
    "export-attn": cmd_export_attn,
}

_FLAGS = {
    "--out": "out_dir",
    "--data": "data_dir",
    "--model": "model_dir",
    "--seed": "seed",
    "--variant": "variant",
    "--blocks": "blocks",
    "--layers": "layers",
    "--dim": "dim",
    "--heads": "heads",
    "--epochs": "epochs",
    "--branches": "branches",
    "--block-index": "block_index",
    "--head-index": "head_index",
    "--axis": "axis",
    "--seeds": "seeds",
    "--branch": "branch",
    "--samples": "samples",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcmult", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", metavar="PATH")
    for flag, key in _FLAGS.items():
        parser.add_argument(flag, dest=key, metavar=key.upper())
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def run_command(command: str, cfg: RunConfig) -> int:
    try:
        return HANDLERS[command](cfg)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetLoadError, OSError) as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    except MCMulTError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CHECK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {key: getattr(args, key) for key in _FLAGS.values() if getattr(args, key) is not None}
    for item in args.set:
        if "=" not in item:
            print(f"configuration error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return EXIT_CONFIG
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    try:
        cfg = parse_config(args.config, overrides)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    return run_command(args.command, cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
