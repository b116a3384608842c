"""End-to-end desk-scale experiment: synthesize, train on normal signals,
score a held-out test set, and evaluate. Backs the CLI and the ablation
protocols; everything is driven by seeded configs, so reruns are
bit-identical.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics, model as model_mod, signals
from .model import DetectorModel, TrainConfig, combine_score, train
from .signals import Signal, SynthConfig, WindowSpec


@dataclass
class ExperimentResult:
    """Trained model plus per-window test scores with provenance."""

    model: DetectorModel
    trace: list
    window_source_ids: list
    window_indices: list
    window_labels: np.ndarray  # 0/1 per window
    components: dict           # d_x / d_local / d_regional per window
    recon: dict                # mse_local / mse_regional per window
    signal_ids: list = field(default_factory=list)
    signal_labels: np.ndarray = None

    def window_scores(self, beta: float) -> np.ndarray:
        return combine_score(self.components, beta)

    def signal_scores(self, values: np.ndarray, aggregate: str = "mean"):
        """Aggregate per-window values to one score per signal."""
        if aggregate not in ("mean", "max"):
            raise ValueError(f"unknown aggregate {aggregate!r}")
        agg = np.mean if aggregate == "mean" else np.max
        by_id = {sid: [] for sid in self.signal_ids}
        for sid, v in zip(self.window_source_ids, values):
            by_id[sid].append(v)
        return np.array([agg(by_id[sid]) for sid in self.signal_ids])

    def signal_auc_f1(self, beta: float, aggregate: str = "mean"):
        """Per-signal ROC-AUC and F1 at the Youden threshold."""
        scores = self.signal_scores(self.window_scores(beta), aggregate)
        return auc_f1(scores, self.signal_labels)


def auc_f1(scores, labels):
    roc = metrics.roc_auc(scores, labels)
    tau = metrics.youden_threshold(scores, labels)
    _, _, _, f1 = metrics.prf1(metrics.confusion(scores, labels, tau))
    return roc.auc, f1


def split_dataset(cfg: SynthConfig, test_normal: int):
    """Synthesize and split: anomalous signals go to test only; the last
    test_normal normal signals are held out for test."""
    if cfg.n_normal - test_normal <= 0:
        raise ValueError("one-class training requires normal data")
    if test_normal < 0:
        raise ValueError("test_normal must be non-negative")
    all_signals = signals.synth_dataset(cfg)
    normals = all_signals[: cfg.n_normal]
    anomalous = all_signals[cfg.n_normal :]
    train_sigs = normals[: cfg.n_normal - test_normal]
    test_sigs = normals[cfg.n_normal - test_normal :] + anomalous
    return train_sigs, test_sigs


def prepare_windows(sigs, spec: WindowSpec):
    return signals.normalize_windows(signals.window_signals(sigs, spec))


def run_experiment(synth_cfg: SynthConfig, window_spec: WindowSpec,
                   train_cfg: TrainConfig, test_normal: int,
                   checkpoint_dir=None) -> ExperimentResult:
    train_sigs, test_sigs = split_dataset(synth_cfg, test_normal)
    return run_on_signals(train_sigs, test_sigs, window_spec, train_cfg,
                          checkpoint_dir=checkpoint_dir)


def run_on_signals(train_sigs, test_sigs, window_spec: WindowSpec,
                   train_cfg: TrainConfig, checkpoint_dir=None,
                   model: DetectorModel = None) -> ExperimentResult:
    """Train (unless a trained model is supplied) and score test signals."""
    if model is None:
        model = DetectorModel(window_spec.window_size,
                              output_repr=train_cfg.output_repr,
                              rng_seed=train_cfg.rng_seed)
        trace = train(model, prepare_windows(train_sigs, window_spec),
                      train_cfg, checkpoint_dir=checkpoint_dir)
    else:
        trace = []
    test_ws = prepare_windows(test_sigs, window_spec)
    components = model_mod.score_components(model, test_ws.windows)
    recon = model_mod.reconstruction_errors(model, test_ws.windows)
    labels = np.array([1 if lab == signals.ANOMALOUS else 0
                       for lab in test_ws.labels])
    sig_ids = [s.source_id for s in test_sigs]
    sig_labels = np.array([1 if s.label == signals.ANOMALOUS else 0
                           for s in test_sigs])
    return ExperimentResult(
        model=model,
        trace=trace,
        window_source_ids=list(test_ws.source_ids),
        window_indices=list(test_ws.indices),
        window_labels=labels,
        components=components,
        recon=recon,
        signal_ids=sig_ids,
        signal_labels=sig_labels,
    )


# ---------------------------------------------------------------------------
# Ablation protocols
# ---------------------------------------------------------------------------

STRATEGIES = (
    "d_x",
    "recon_local",
    "recon_regional",
    "d_recon_local",
    "d_recon_regional",
    "d_recon_sum",
    "combined",
)

BETA_SWEEP = (0.0, 0.25, 0.5, 0.75, 1.0)
DOWNSAMPLE_FACTORS = (1, 2, 4, 6, 8, 32)
NOISE_SWEEP_DB = (-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0)


def strategy_values(result: ExperimentResult, strategy: str,
                    beta: float) -> np.ndarray:
    """Per-window score for one detection strategy."""
    c, r = result.components, result.recon
    if strategy == "d_x":
        return c["d_x"]
    if strategy == "recon_local":
        return r["mse_local"]
    if strategy == "recon_regional":
        return r["mse_regional"]
    if strategy == "d_recon_local":
        return c["d_local"]
    if strategy == "d_recon_regional":
        return c["d_regional"]
    if strategy == "d_recon_sum":
        return c["d_local"] + c["d_regional"]
    if strategy == "combined":
        return combine_score(c, beta)
    raise ValueError(f"unknown strategy {strategy!r}")


def ablate_strategy(synth_cfg, window_spec, train_cfg, test_normal,
                    beta=0.5, aggregate="mean"):
    """One training run scored under each detection strategy."""
    result = run_experiment(synth_cfg, window_spec, train_cfg, test_normal)
    rows = []
    for strat in STRATEGIES:
        values = strategy_values(result, strat, beta)
        scores = result.signal_scores(values, aggregate)
        auc, f1 = auc_f1(scores, result.signal_labels)
        rows.append({"strategy": strat, "auc": auc, "f1": f1})
    return rows


def ablate_beta(synth_cfg, window_spec, train_cfg, test_normal,
                betas=BETA_SWEEP, aggregate="mean"):
    result = run_experiment(synth_cfg, window_spec, train_cfg, test_normal)
    rows = []
    for beta in betas:
        auc, f1 = result.signal_auc_f1(beta, aggregate)
        rows.append({"beta": beta, "auc": auc, "f1": f1})
    return rows


def ablate_window(synth_cfg, window_spec, train_cfg, test_normal,
                  sizes=None, beta=0.5, aggregate="mean"):
    """Retrain per window size; the default sweep brackets the configured
    size with two halvings and one doubling."""
    base = window_spec.window_size
    if sizes is None:
        sizes = (max(base // 4, 4), max(base // 2, 4), base, base * 2)
    rows = []
    for size in sizes:
        if size > synth_cfg.signal_len:
            raise ValueError(f"window {size} exceeds signal_len")
        spec = WindowSpec(window_size=size, step_size=size)
        result = run_experiment(synth_cfg, spec, train_cfg, test_normal)
        auc, f1 = result.signal_auc_f1(beta, aggregate)
        rows.append({"window_size": size, "auc": auc, "f1": f1})
    return rows


def ablate_downsample(synth_cfg, window_spec, train_cfg, test_normal,
                      factors=DOWNSAMPLE_FACTORS, beta=0.5,
                      aggregate="mean"):
    """Retrain on sample-dropped signals. Windows keep their physical
    duration: the window size shrinks with the factor (floor 8 samples)."""
    train_sigs, test_sigs = split_dataset(synth_cfg, test_normal)
    rows = []
    for factor in factors:
        tr = [signals.decimate(s, factor) for s in train_sigs]
        te = [signals.decimate(s, factor) for s in test_sigs]
        size = max(window_spec.window_size // factor, 8)
        spec = WindowSpec(window_size=size, step_size=size)
        result = run_on_signals(tr, te, spec, train_cfg)
        auc, f1 = result.signal_auc_f1(beta, aggregate)
        rows.append({"factor": factor, "auc": auc, "f1": f1})
    return rows


def ablate_noise(synth_cfg, window_spec, train_cfg, test_normal,
                 snrs=NOISE_SWEEP_DB, beta=0.5, aggregate="mean"):
    rows = []
    for snr in snrs:
        cfg = replace(synth_cfg, snr_db=snr)
        result = run_experiment(cfg, window_spec, train_cfg, test_normal)
        auc, f1 = result.signal_auc_f1(beta, aggregate)
        rows.append({"snr_db": snr, "auc": auc, "f1": f1})
    return rows
