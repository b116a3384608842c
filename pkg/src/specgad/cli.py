"""Command-line surface: synth, train, score, eval, ablate.

Config files are INI documents (key = value under [window], [synth],
[train], [detect] sections); dataset manifests are CSV files with header
path,label,split preceded by a "# format_version=1" comment line. Every
command is deterministic given its config, and CSV output uses '.'
decimals with LF line endings.

Exit codes: 0 success, 1 I/O error, 2 validation error, 3 numerical
failure.
"""

import argparse
import configparser
import csv
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import experiment, metrics, signals
from .model import DetectConfig, TrainConfig, combine_score, load_checkpoint, score_components
from .signals import Signal, SynthConfig, WindowSpec

MANIFEST_VERSION = 1
MANIFEST_HEADER = ["path", "label", "split"]


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    split: str


@dataclass(frozen=True)
class RunConfig:
    window: WindowSpec
    synth: SynthConfig
    train: TrainConfig
    detect: DetectConfig
    test_normal: int = 0
    file_format: str = "wav"  # wav | csv
    aggregate: str = "mean"   # mean | max

    def __post_init__(self):
        if self.synth.signal_len < self.window.window_size:
            raise ValueError("signal_len must be >= window_size")
        if self.file_format not in ("wav", "csv"):
            raise ValueError(f"unknown file_format {self.file_format!r}")
        if self.aggregate not in ("mean", "max"):
            raise ValueError(f"unknown aggregate {self.aggregate!r}")
        if not 0 <= self.test_normal <= self.synth.n_normal:
            raise ValueError("test_normal must be within [0, n_normal]")


def load_config(path, seed_override=None) -> RunConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise OSError(f"cannot read config {path}")
    w = parser["window"] if parser.has_section("window") else {}
    s = parser["synth"] if parser.has_section("synth") else {}
    t = parser["train"] if parser.has_section("train") else {}
    d = parser["detect"] if parser.has_section("detect") else {}

    window = WindowSpec(
        window_size=int(w.get("window_size", 512)),
        step_size=int(w.get("step_size", w.get("window_size", 512))),
    )
    synth = SynthConfig(
        n_normal=int(s.get("n_normal", 10)),
        n_anomalous=int(s.get("n_anomalous", 10)),
        signal_len=int(s.get("signal_len", 4096)),
        sample_rate=float(s.get("sample_rate", 8000.0)),
        snr_db=float(s.get("snr_db", 6.0)),
        anomaly_kind=s.get("anomaly_kind", "harmonic_burst"),
        rng_seed=int(s.get("rng_seed", 0)),
    )
    train_cfg = TrainConfig(
        alpha=float(t.get("alpha", 0.5)),
        gamma=float(t.get("gamma", 0.2)),
        lam=float(t.get("lambda", 0.5)),
        sigma=float(t.get("sigma", 0.1)),
        lr_g=float(t.get("lr_g", 1e-3)),
        lr_d=float(t.get("lr_d", 1e-4)),
        epochs=int(t.get("epochs", 50)),
        batch_size=int(t.get("batch_size", 16)),
        rng_seed=int(t.get("rng_seed", 0)),
        output_repr=t.get("output_repr", "real_imag_channels"),
        train_filter=str(t.get("train_filter", "true")).lower()
        in ("1", "true", "yes", "on"),
    )
    detect = DetectConfig(
        beta=float(d.get("beta", 0.5)),
        tau=float(d["tau"]) if "tau" in d else None,
    )
    cfg = RunConfig(
        window=window,
        synth=synth,
        train=train_cfg,
        detect=detect,
        test_normal=int(s.get("test_normal", 0)),
        file_format=s.get("file_format", "wav"),
        aggregate=d.get("aggregate", "mean"),
    )
    if seed_override is not None:
        cfg = replace(
            cfg,
            synth=replace(cfg.synth, rng_seed=seed_override),
            train=replace(cfg.train, rng_seed=seed_override),
        )
    return cfg


# ---------------------------------------------------------------------------
# Manifest I/O
# ---------------------------------------------------------------------------

def write_manifest(path, entries):
    lines = [f"# format_version={MANIFEST_VERSION}", ",".join(MANIFEST_HEADER)]
    lines += [f"{e.path},{e.label},{e.split}" for e in entries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path):
    text = Path(path).read_text(encoding="utf-8")
    rows = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not rows or rows[0].split(",") != MANIFEST_HEADER:
        raise ValueError(f"{path}: manifest must start with header "
                         + ",".join(MANIFEST_HEADER))
    entries = []
    for ln in rows[1:]:
        parts = ln.split(",")
        if len(parts) != 3:
            raise ValueError(f"{path}: malformed manifest row {ln!r}")
        entry = ManifestEntry(*parts)
        if entry.label not in (signals.NORMAL, signals.ANOMALOUS):
            raise ValueError(f"{path}: unknown label in row {ln!r}")
        if entry.split not in ("train", "test"):
            raise ValueError(f"{path}: unknown split in row {ln!r}")
        if entry.split == "train" and entry.label != signals.NORMAL:
            raise ValueError(
                f"one-class violation: train entry {entry.path} is labeled "
                f"{entry.label}"
            )
        entries.append(entry)
    return entries


def _load_entry(entry: ManifestEntry, base_dir: Path, csv_rate) -> Signal:
    p = Path(entry.path)
    if not p.is_absolute():
        p = base_dir / p
    fmt = "csv" if p.suffix.lower() == ".csv" else "wav_pcm16_mono"
    rate = csv_rate if fmt == "csv" else None
    return signals.load_signal(p, fmt, sample_rate=rate, label=entry.label)


# ---------------------------------------------------------------------------
# CSV helpers (deterministic: repr floats, LF endings)
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)

def write_csv_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(cfg: RunConfig, out_dir) -> Path:
    """Write synthetic WAV/CSV files plus the manifest; anomalous signals
    go to the test split only."""
    if cfg.synth.n_normal - cfg.test_normal <= 0:
        raise ValueError("one-class training requires normal data")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_sigs, test_sigs = experiment.split_dataset(cfg.synth, cfg.test_normal)
    entries = []
    for split, sigs in (("train", train_sigs), ("test", test_sigs)):
        for sig in sigs:
            name = f"{sig.source_id}.{cfg.file_format}"
            if cfg.file_format == "wav":
                signals.write_wav(out / name, sig)
            else:
                signals.write_csv(out / name, sig)
            entries.append(ManifestEntry(path=name, label=sig.label,
                                         split=split))
    manifest = out / "manifest.csv"
    write_manifest(manifest, entries)
    return manifest


def cmd_train(cfg: RunConfig, manifest_path, out_dir) -> Path:
    """Window and train on the manifest's train split; writes per-epoch
    checkpoints and the loss trace CSV."""
    entries = read_manifest(manifest_path)
    train_entries = [e for e in entries if e.split == "train"]
    if not train_entries:
        raise ValueError("manifest has no train entries")
    base = Path(manifest_path).parent
    sigs = [_load_entry(e, base, cfg.synth.sample_rate) for e in train_entries]
    ws = experiment.prepare_windows(sigs, cfg.window)

    out = Path(out_dir)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    from .model import DetectorModel, train as train_model

    model = DetectorModel(cfg.window.window_size,
                          output_repr=cfg.train.output_repr,
                          rng_seed=cfg.train.rng_seed)
    trace = train_model(model, ws, cfg.train, checkpoint_dir=ckpt_dir)
    write_csv_rows(
        out / "loss_trace.csv",
        ["epoch", "d_loss", "g_loss_recon", "g_loss_adv", "composite"],
        [[r["epoch"], r["d_loss"], r["g_loss_recon"], r["g_loss_adv"],
          r["composite"]] for r in trace],
    )
    return ckpt_dir / f"epoch_{cfg.train.epochs:04d}.npz"


def cmd_score(checkpoint, out_dir, manifest_path=None, split="test",
              files=(), beta=0.5, aggregate="mean", csv_rate=None,
              expected_window=None) -> Path:
    """Score windows of the selected signals; writes window_scores.csv
    (one row per window) and signal_scores.csv (per-signal aggregate)."""
    ckpt = Path(checkpoint)
    if not ckpt.exists():
        raise OSError(f"missing checkpoint {ckpt}")
    model = load_checkpoint(ckpt)
    if expected_window is not None and expected_window != model.window_len:
        raise ValueError(
            f"window-length mismatch: config says {expected_window}, "
            f"checkpoint was trained with {model.window_len}"
        )
    sigs = []
    if manifest_path is not None:
        entries = read_manifest(manifest_path)
        if split != "all":
            entries = [e for e in entries if e.split == split]
        base = Path(manifest_path).parent
        sigs += [_load_entry(e, base, csv_rate) for e in entries]
    for f in files:
        p = Path(f)
        fmt = "csv" if p.suffix.lower() == ".csv" else "wav_pcm16_mono"
        if fmt == "csv" and csv_rate is None:
            raise ValueError(f"{p}: CSV input requires --sample-rate")
        sigs.append(signals.load_signal(
            p, fmt, sample_rate=csv_rate if fmt == "csv" else None))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = WindowSpec(model.window_len, model.window_len)
    window_rows = []
    signal_rows = []
    agg = np.mean if aggregate == "mean" else np.max
    for sig in sigs:
        ws = signals.normalize_windows(signals.sliding_window(sig, spec))
        scores = combine_score(score_components(model, ws.windows), beta)
        for idx, score in zip(ws.indices, scores):
            window_rows.append([sig.source_id, idx, score])
        signal_rows.append([sig.source_id, agg(scores)])
    window_csv = out / "window_scores.csv"
    write_csv_rows(window_csv, ["source_id", "window_index", "score"],
                   window_rows)
    write_csv_rows(out / "signal_scores.csv", ["source_id", "score"],
                   signal_rows)
    return window_csv


REPORT_FIELDS = ("auc", "ap", "tau", "accuracy", "precision", "recall", "f1")


def cmd_eval(scores_csv, manifest_path, out_dir) -> dict:
    """Join scores with manifest labels and emit the metrics report plus
    the ROC curve CSV. Works on either window- or signal-level scores."""
    label_by_id = {}
    for e in read_manifest(manifest_path):
        label_by_id[Path(e.path).stem] = 1 if e.label == signals.ANOMALOUS else 0

    with open(scores_csv, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or "source_id" not in header or "score" not in header:
            raise ValueError(f"{scores_csv}: expected source_id/score columns")
        id_col, score_col = header.index("source_id"), header.index("score")
        scores, labels = [], []
        for row in reader:
            sid = row[id_col]
            if sid not in label_by_id:
                raise ValueError(f"unknown source_id {sid!r} in {scores_csv}")
            scores.append(float(row[score_col]))
            labels.append(label_by_id[sid])

    roc = metrics.roc_auc(scores, labels)
    ap = metrics.average_precision(scores, labels)
    tau = metrics.youden_threshold(scores, labels)
    accuracy, precision, recall, f1 = metrics.prf1(
        metrics.confusion(scores, labels, tau))
    report = {"auc": roc.auc, "ap": ap, "tau": tau, "accuracy": accuracy,
              "precision": precision, "recall": recall, "f1": f1}

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv_rows(out / "metrics.csv", ["metric", "value"],
                   [[k, report[k]] for k in REPORT_FIELDS])
    write_csv_rows(out / "roc.csv", ["fpr", "tpr", "threshold"],
                   zip(roc.fpr, roc.tpr, roc.thresholds))
    return report


ABLATE_MODES = ("strategy", "beta_sweep", "window_sweep", "downsample",
                "noise_sweep")


def cmd_ablate(cfg: RunConfig, mode, out_dir) -> Path:
    """Run one ablation protocol on synthetic data and emit its table."""
    args = (cfg.synth, cfg.window, cfg.train, cfg.test_normal)
    kwargs = {"aggregate": cfg.aggregate}
    if mode == "strategy":
        rows = experiment.ablate_strategy(*args, beta=cfg.detect.beta, **kwargs)
        key = "strategy"
    elif mode == "beta_sweep":
        rows = experiment.ablate_beta(*args, **kwargs)
        key = "beta"
    elif mode == "window_sweep":
        rows = experiment.ablate_window(*args, beta=cfg.detect.beta, **kwargs)
        key = "window_size"
    elif mode == "downsample":
        rows = experiment.ablate_downsample(*args, beta=cfg.detect.beta,
                                            **kwargs)
        key = "factor"
    elif mode == "noise_sweep":
        rows = experiment.ablate_noise(*args, beta=cfg.detect.beta, **kwargs)
        key = "snr_db"
    else:
        raise ValueError(f"unknown ablation mode {mode!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = out / f"ablate_{mode}.csv"
    write_csv_rows(table, [key, "auc", "f1"],
                   [[r[key], r["auc"], r["f1"]] for r in rows])
    return table


# ---------------------------------------------------------------------------
# Argument parsing / dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specgad",
        description="Anomalous sound detection pipeline (synthesize, "
                    "train, score, evaluate, ablate).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic data + manifest")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("train", help="train on a manifest's train split")
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("score", help="score signals with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest")
    p.add_argument("--split", default="test", choices=("train", "test", "all"))
    p.add_argument("--out", required=True)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--aggregate", default=None, choices=("mean", "max"))
    p.add_argument("--config")
    p.add_argument("--sample-rate", type=float, default=None)
    p.add_argument("files", nargs="*")

    p = sub.add_parser("eval", help="metrics report from scores + manifest")
    p.add_argument("--scores", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ablate", help="run an ablation protocol")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", required=True, choices=ABLATE_MODES)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    return parser


def _dispatch(args) -> None:
    if args.command == "synth":
        cfg = load_config(args.config, args.seed)
        manifest = cmd_synth(cfg, args.out)
        print(f"wrote {manifest}")
    elif args.command == "train":
        cfg = load_config(args.config, args.seed)
        last = cmd_train(cfg, args.manifest, args.out)
        print(f"final checkpoint {last}")
    elif args.command == "score":
        cfg = load_config(args.config) if args.config else None
        beta = args.beta if args.beta is not None else (
            cfg.detect.beta if cfg else 0.5)
        aggregate = args.aggregate or (cfg.aggregate if cfg else "mean")
        csv_rate = args.sample_rate if args.sample_rate is not None else (
            cfg.synth.sample_rate if cfg else None)
        window_csv = cmd_score(
            args.checkpoint, args.out, manifest_path=args.manifest,
            split=args.split, files=args.files, beta=beta,
            aggregate=aggregate, csv_rate=csv_rate,
            expected_window=cfg.window.window_size if cfg else None,
        )
        print(f"wrote {window_csv}")
    elif args.command == "eval":
        report = cmd_eval(args.scores, args.manifest, args.out)
        for k in REPORT_FIELDS:
            print(f"{k} = {report[k]:.6f}")
    elif args.command == "ablate":
        cfg = load_config(args.config, args.seed)
        table = cmd_ablate(cfg, args.mode, args.out)
        print(f"wrote {table}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _dispatch(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FloatingPointError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
