"""Command-line entry point.

Subcommands: gen-data, train, attack-tsi, attack-ctri, transfer, tradeoff,
heatmap, convert-report. Options may come from the command line or from an
INI config file (--config) with one section per subcommand; flags given on
the command line win. Angle-valued options accept plain floats or
pi-expressions like "pi", "-pi/8", "0.3".

Exit codes: 0 success, 1 configuration/usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
from pathlib import Path

import numpy as np

from isoattack import harness
from isoattack.model import DivergenceError, TrainConfig, load_checkpoint, save_checkpoint, train
from isoattack.pointcloud import (
    AugmentConfig,
    ParseError,
    ShapeDatasetSpec,
    generate_shapes,
    load_dataset,
    save_dataset,
)


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def parse_angle(text: str) -> float:
    """Float radians, with 'pi' shorthand: pi, -pi, pi/8, 2pi, 0.5."""
    s = str(text).strip().replace(" ", "")
    sign = 1.0
    if s.startswith(("-", "+")):
        sign = -1.0 if s[0] == "-" else 1.0
        s = s[1:]
    try:
        if "pi" in s:
            head, _, tail = s.partition("pi")
            value = float(head) if head else 1.0
            value *= math.pi
            if tail:
                if not tail.startswith("/"):
                    raise ValueError
                value /= float(tail[1:])
        else:
            value = float(s)
    except ValueError:
        raise ConfigError(f"cannot parse angle {text!r}") from None
    return sign * value


def _parse_list(text: str, conv) -> tuple:
    items = [t for t in str(text).split(",") if t.strip()]
    if not items:
        raise ConfigError(f"expected a comma-separated list, got {text!r}")
    return tuple(conv(t.strip()) for t in items)


def _add_common(sub):
    sub.add_argument("--config", type=Path, help="INI config file")
    sub.add_argument("--seed", type=int, help="run seed (default 0)")
    sub.add_argument("--out", type=Path, help="output directory")
    sub.add_argument("--format", choices=("json", "csv"), help="report format where applicable")


def build_parser() -> _Parser:
    parser = _Parser(prog="isoattack", description="Isometry attacks on point-cloud classifiers")
    subs = parser.add_subparsers(dest="command")

    p = subs.add_parser("gen-data", help="generate the synthetic shape dataset")
    _add_common(p)
    p.add_argument("--classes")
    p.add_argument("--points", type=int)
    p.add_argument("--train-count", type=int)
    p.add_argument("--test-count", type=int)
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--text", action="store_true", help="write text clouds instead of binary")

    p = subs.add_parser("train", help="train a classifier on a generated dataset")
    _add_common(p)
    p.add_argument("--data", type=Path, help="dataset manifest.json")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--widths")
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--rotate-augment", action="store_true",
                   help="include random y-rotation in the augmentation pipeline")
    p.add_argument("--p-rotation", type=float)

    p = subs.add_parser("attack-tsi", help="black-box bandit isometry attack evaluation")
    _add_common(p)
    p.add_argument("--model", type=Path)
    p.add_argument("--data", type=Path)
    p.add_argument("--save-clouds", action="store_true",
                   help="also write the transformed clouds as point-cloud files")
    p.add_argument("--s-list")
    p.add_argument("--lo")
    p.add_argument("--hi")
    p.add_argument("--divisions", type=int)
    p.add_argument("--family", choices=("rotation", "reflection"))
    p.add_argument("--n-clouds", type=int)

    p = subs.add_parser("attack-ctri", help="white-box penalized isometry attack evaluation")
    _add_common(p)
    p.add_argument("--model", type=Path)
    p.add_argument("--data", type=Path)
    p.add_argument("--save-clouds", action="store_true",
                   help="also write the transformed clouds as point-cloud files")
    p.add_argument("--k-list")
    p.add_argument("--ranges", help="comma list of half-widths, e.g. pi,pi/8")
    p.add_argument("--warm-samples", type=int)
    p.add_argument("--divisions", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--n-clouds", type=int)

    p = subs.add_parser("transfer", help="cross-model transfer evaluation")
    _add_common(p)
    p.add_argument("--models", help="comma list of checkpoint paths")
    p.add_argument("--data", type=Path)
    p.add_argument("--range", dest="range_half")
    p.add_argument("--warm-samples", type=int)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--n-clouds", type=int)

    p = subs.add_parser("tradeoff", help="accuracy/robustness sweep over p-rotation training")
    _add_common(p)
    p.add_argument("--data", type=Path)
    p.add_argument("--p-list")
    p.add_argument("--repeats", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--n-clouds", type=int)

    p = subs.add_parser("heatmap", help="export heat-map CSV/PGM files from a run summary")
    _add_common(p)
    p.add_argument("--report", type=Path, help="summary.json of a tsi-eval run")

    p = subs.add_parser("convert-report", help="convert outcome lines to CSV")
    _add_common(p)
    p.add_argument("--report", type=Path, help="outcomes.jsonl of a run")

    return parser


def _merge_config(args: argparse.Namespace) -> dict:
    """Layer: defaults < INI section < command line."""
    merged: dict = {}
    if args.config:
        if not Path(args.config).exists():
            raise ConfigError(f"config file not found: {args.config}")
        ini = configparser.ConfigParser()
        try:
            ini.read(args.config)
        except configparser.Error as exc:
            raise ConfigError(f"bad config file {args.config}: {exc}") from exc
        for section in ("global", args.command):
            if ini.has_section(section):
                for key, value in ini.items(section):
                    merged[key.replace("-", "_")] = value
    for key, value in vars(args).items():
        if key in ("config", "command") or value is None or value is False:
            continue
        merged[key] = value
    return merged


def _validated(factory, /, **kwargs):
    """Dataclass construction with validation failures mapped to exit 1."""
    try:
        return factory(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _get(merged, key, conv, default):
    """Typed option lookup; INI values arrive as strings and are coerced."""
    if key not in merged:
        return default
    value = merged[key]
    if not isinstance(value, str) or conv is str:
        return value
    if conv is bool:
        return value.strip().lower() in ("1", "true", "yes", "on")
    try:
        return conv(value)
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def _angles(text) -> tuple[float, ...]:
    return _parse_list(text, parse_angle)


def _ints(text) -> tuple[int, ...]:
    return _parse_list(text, int)


def _floats(text) -> tuple[float, ...]:
    return _parse_list(text, float)


def _out_dir(merged) -> Path:
    return Path(_get(merged, "out", str, "runs"))


def _require(merged, key) -> str:
    if key not in merged or merged[key] in (None, ""):
        raise ConfigError(f"missing required option --{key.replace('_', '-')}")
    return str(merged[key])


def _check_file(path, what) -> Path:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _cmd_gen_data(merged) -> int:
    spec = _validated(
        ShapeDatasetSpec,
        classes=_get(merged, "classes", lambda s: _parse_list(s, str), ("sphere", "box", "cone", "stairs")),
        points_per_cloud=_get(merged, "points", int, 512),
        train_count=_get(merged, "train_count", int, 100),
        test_count=_get(merged, "test_count", int, 50),
        noise_sigma=_get(merged, "noise_sigma", float, 0.01),
        seed=_get(merged, "seed", int, 0),
    )
    out = _out_dir(merged)
    dataset = generate_shapes(spec)
    manifest = save_dataset(dataset, out, binary=not _get(merged, "text", bool, False))
    print(f"wrote {len(dataset.train)} train / {len(dataset.test)} test clouds; manifest {manifest}")
    return 0


def _cmd_train(merged) -> int:
    manifest = _check_file(_require(merged, "data"), "dataset manifest")
    dataset = load_dataset(manifest)
    rotate = _get(merged, "rotate_augment", bool, False)
    cfg = _validated(
        TrainConfig,
        epochs=_get(merged, "epochs", int, 80),
        batch_size=_get(merged, "batch_size", int, 32),
        learning_rate=_get(merged, "learning_rate", float, 0.15),
        widths=_get(merged, "widths", _ints, (32, 64, 32)),
        augment=not _get(merged, "no_augment", bool, False),
        augment_cfg=AugmentConfig() if rotate else harness.VICTIM_AUGMENT,
        p_rotation=_get(merged, "p_rotation", float, 0.0),
        seed=_get(merged, "seed", int, 0),
    )
    model, report = train(dataset, cfg)
    out = _out_dir(merged)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "model.mpn")
    (out / "train_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"test accuracy {report['test_accuracy']:.4f}; checkpoint {out / 'model.mpn'}")
    return 0


def _cmd_attack_tsi(merged) -> int:
    cfg = _validated(
        harness.TsiEvalConfig,
        checkpoint=str(_check_file(_require(merged, "model"), "checkpoint")),
        manifest=str(_check_file(_require(merged, "data"), "dataset manifest")),
        s_list=_get(merged, "s_list", _ints, (1, 2, 10)),
        lo=_get(merged, "lo", parse_angle, -math.pi),
        hi=_get(merged, "hi", parse_angle, math.pi),
        divisions=_get(merged, "divisions", int, 4),
        family=_get(merged, "family", str, "rotation"),
        n_clouds=_get(merged, "n_clouds", int, 200),
        seed=_get(merged, "seed", int, 0),
    )
    report = harness.run_tsi_eval(cfg)
    out = harness.write_report(report, _out_dir(merged))
    if _get(merged, "save_clouds", bool, False):
        harness.export_adversarial_clouds(report, out / "adversarial")
    rates = report.aggregates["success_rate_by_s"]
    print(f"success rates by S: {rates}; report in {out}")
    return 0


def _cmd_attack_ctri(merged) -> int:
    cfg = _validated(
        harness.CtriEvalConfig,
        checkpoint=str(_check_file(_require(merged, "model"), "checkpoint")),
        manifest=str(_check_file(_require(merged, "data"), "dataset manifest")),
        k_list=_get(merged, "k_list", _ints, (7, 50, 1000)),
        ranges=_get(merged, "ranges", _angles, (math.pi,)),
        warm_samples=_get(merged, "warm_samples", int, 50),
        divisions=_get(merged, "divisions", int, 4),
        eta=_get(merged, "eta", float, 0.0005),
        lam=_get(merged, "lam", float, harness.DESK_LAMBDA),
        kappa=_get(merged, "kappa", float, 0.0),
        n_clouds=_get(merged, "n_clouds", int, 200),
        seed=_get(merged, "seed", int, 0),
    )
    report = harness.run_ctri_eval(cfg)
    out = harness.write_report(report, _out_dir(merged))
    if _get(merged, "save_clouds", bool, False):
        harness.export_adversarial_clouds(report, out / "adversarial")
    for sweep in report.aggregates["sweeps"]:
        k_max = max(int(k) for k in sweep["by_k"])
        rate = sweep["by_k"][str(k_max)]["success_rate"]
        print(f"range +-{sweep['range_half']:.4f}: tsi {sweep['tsi_success_rate']}, ctri@K={k_max} {rate}")
    print(f"report in {out}")
    return 0


def _cmd_transfer(merged) -> int:
    paths = _parse_list(_require(merged, "models"), str)
    for p in paths:
        _check_file(p, "checkpoint")
    cfg = _validated(
        harness.TransferEvalConfig,
        checkpoints=paths,
        manifest=str(_check_file(_require(merged, "data"), "dataset manifest")),
        range_half=_get(merged, "range_half", parse_angle, math.pi),
        warm_samples=_get(merged, "warm_samples", int, 50),
        max_iters=_get(merged, "max_iters", int, 1000),
        n_clouds=_get(merged, "n_clouds", int, 200),
        seed=_get(merged, "seed", int, 0),
    )
    report = harness.run_transfer_eval(cfg)
    out = harness.write_report(report, _out_dir(merged))
    print("transfer matrix (rows craft, columns evaluate):")
    names = report.aggregates["models"]
    for name, row in zip(names, report.aggregates["transfer_matrix"]):
        cells = ["/" if v is None else f"{v:.3f}" for v in row]
        print(f"  {name}: {cells}")
    print(f"report in {out}")
    return 0


def _cmd_tradeoff(merged) -> int:
    cfg = _validated(
        harness.TradeoffConfig,
        manifest=str(_check_file(_require(merged, "data"), "dataset manifest")),
        p_list=_get(merged, "p_list", _floats, tuple(round(0.1 * i, 1) for i in range(11))),
        repeats=_get(merged, "repeats", int, 3),
        epochs=_get(merged, "epochs", int, 40),
        n_clouds=_get(merged, "n_clouds", int, 200),
        seed=_get(merged, "seed", int, 0),
    )
    report = harness.run_augmentation_tradeoff(cfg)
    out = harness.write_report(report, _out_dir(merged))
    print(f"{len(report.aggregates['rows'])} p-rows; report in {out}")
    return 0


def _cmd_heatmap(merged) -> int:
    report_path = _check_file(_require(merged, "report"), "run summary")
    summary = json.loads(Path(report_path).read_text())
    heatmap = summary.get("aggregates", {}).get("heatmap")
    if not heatmap:
        raise ConfigError(f"{report_path} carries no heatmap block")
    out = _out_dir(merged)
    out.mkdir(parents=True, exist_ok=True)
    from isoattack.bandit import write_heatmap_csv, write_heatmap_pgm

    for plane, matrix in heatmap["planes"].items():
        arr = np.asarray(matrix, dtype=np.float64)
        write_heatmap_csv(arr, out / f"heatmap_{plane}.csv")
        write_heatmap_pgm(arr, out / f"heatmap_{plane}.pgm")
        print(f"wrote heatmap_{plane}.csv / .pgm in {out}")
    return 0


def _cmd_convert_report(merged) -> int:
    report_path = _check_file(_require(merged, "report"), "outcomes file")
    lines = [json.loads(l) for l in Path(report_path).read_text().splitlines() if l.strip()]
    if not lines:
        raise ConfigError(f"{report_path} holds no outcome lines")
    out = _out_dir(merged)
    out.mkdir(parents=True, exist_ok=True)
    fmt = _get(merged, "format", str, "csv")
    if fmt == "json":
        target = out / (Path(report_path).stem + ".json")
        target.write_text(json.dumps(lines, indent=2, sort_keys=True) + "\n")
    else:
        keys = sorted({k for line in lines for k in line})
        rows = [",".join(keys)]
        for line in lines:
            rows.append(",".join(_csv_cell(line.get(k)) for k in keys))
        target = out / (Path(report_path).stem + ".csv")
        target.write_text("\n".join(rows) + "\n")
    print(f"wrote {target}")
    return 0


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (list, dict)):
        return '"' + json.dumps(value).replace('"', '""') + '"'
    return repr(value) if isinstance(value, float) else str(value)


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "attack-tsi": _cmd_attack_tsi,
    "attack-ctri": _cmd_attack_ctri,
    "transfer": _cmd_transfer,
    "tradeoff": _cmd_tradeoff,
    "heatmap": _cmd_heatmap,
    "convert-report": _cmd_convert_report,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_usage(sys.stderr)
            return 1
        merged = _merge_config(args)
        return _COMMANDS[args.command](merged)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ParseError, DivergenceError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
