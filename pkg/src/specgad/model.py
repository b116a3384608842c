"""Detector model: learnable spectral filter front end, two reconstruction
generators (fine / coarse kernels), and a discriminator, trained
adversarially on normal data only.

Training alternates block-wise per minibatch: the discriminator is pushed
toward 0 on filtered real windows and 1 on both generators' reconstructions
of noised inputs; the generators minimize reconstruction error plus an
adversarial term that asks the discriminator to read their outputs as real.
The anomaly score blends the discriminator's view of the raw input and of
both reconstructions with the weight beta.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import nn, spectral
from .signals import ANOMALOUS, NORMAL, WindowSet

OUTPUT_REPRS = ("real_imag_channels", "magnitude")

# Generator/Discriminator defaults. Spectrum bin magnitudes grow with the
# window length, so generators rescale by half the window length at entry
# and exit; batch norm makes the interior scale-free either way.
G_CHANNELS = (16, 32, 64)
D_CHANNELS = (16, 32)
LOCAL_KERNEL = 3
REGIONAL_KERNEL = 7
D_KERNEL = 3


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters.

    alpha weighs real vs fake terms in the discriminator loss, gamma weighs
    adversarial vs reconstruction terms in the generator loss, lam weighs
    the composite diagnostic loss, sigma scales the training-time input
    noise relative to each sample's standard deviation.
    """

    alpha: float = 0.5
    gamma: float = 0.2
    lam: float = 0.5
    sigma: float = 0.1
    lr_g: float = 1e-3
    lr_d: float = 1e-4
    epochs: int = 50
    batch_size: int = 16
    rng_seed: int = 0
    output_repr: str = "real_imag_channels"
    train_filter: bool = True

    def __post_init__(self):
        for name in ("alpha", "gamma", "lam"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ValueError("learning rates must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.output_repr not in OUTPUT_REPRS:
            raise ValueError(f"unknown output_repr {self.output_repr!r}")


@dataclass(frozen=True)
class DetectConfig:
    beta: float = 0.5
    tau: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")


class GlobalFilterLayer:
    """Layer norm -> real-input DFT (half spectrum) -> learnable per-bin
    complex filter -> real channel representation.

    The filter starts at all-ones, so an untrained layer reproduces the
    plain normalized half spectrum. With output_repr="real_imag_channels"
    the result is (B, 2, nbins) holding real and imaginary parts; with
    "magnitude" it is (B, 1, nbins).
    """

    def __init__(self, window_len: int, output_repr: str = "real_imag_channels"):
        if output_repr not in OUTPUT_REPRS:
            raise ValueError(f"unknown output_repr {output_repr!r}")
        self.window_len = window_len
        self.nbins = window_len // 2 + 1
        self.output_repr = output_repr
        self.ln = nn.LayerNorm(window_len)
        self.filter_re = nn.Tensor(np.ones(self.nbins))
        self.filter_im = nn.Tensor(np.zeros(self.nbins))
        self._cache = None

    @property
    def channels(self) -> int:
        return 2 if self.output_repr == "real_imag_channels" else 1

    def params(self):
        return [self.ln.weight, self.ln.bias, self.filter_re, self.filter_im]

    def state(self):
        return {
            "ln.weight": self.ln.weight.data,
            "ln.bias": self.ln.bias.data,
            "filter_re": self.filter_re.data,
            "filter_im": self.filter_im.data,
        }

    def forward(self, windows) -> np.ndarray:
        w = np.asarray(windows, dtype=np.float64)
        single = w.ndim == 1
        if single:
            w = w[None, :]
        if w.shape[-1] != self.window_len:
            raise ValueError(
                f"window length {w.shape[-1]} != configured {self.window_len}"
            )
        xhat = self.ln.forward(w)
        spec = spectral.fft(xhat)[:, : self.nbins]
        filt = self.filter_re.data + 1j * self.filter_im.data
        y = filt * spec
        if self.output_repr == "real_imag_channels":
            out = np.stack([y.real, y.imag], axis=1)
        else:
            out = np.sqrt(y.real**2 + y.imag**2 + 1e-24)[:, None, :]
        self._cache = (spec, y, out)
        return out

    def backward(self, gout) -> None:
        """Accumulate gradients into the filter and layer-norm parameters."""
        spec, y, out = self._cache
        if self.output_repr == "real_imag_channels":
            gy = gout[:, 0, :] + 1j * gout[:, 1, :]
        else:
            gy = gout[:, 0, :] * (y / out[:, 0, :])
        gfilt = (np.conj(spec) * gy).sum(axis=0)
        self.filter_re.grad += gfilt.real
        self.filter_im.grad += gfilt.imag
        filt = self.filter_re.data + 1j * self.filter_im.data
        gspec = np.conj(filt) * gy
        gfull = np.zeros(gspec.shape[:-1] + (self.window_len,), dtype=np.complex128)
        gfull[..., : self.nbins] = gspec
        gxhat = (self.window_len * spectral.ifft(gfull)).real
        self.ln.backward(gxhat)


def global_filter_forward(window, layer: GlobalFilterLayer) -> np.ndarray:
    """Filter a single window; returns a (1, C, nbins) array."""
    w = np.asarray(window, dtype=np.float64)
    if w.ndim != 1:
        raise ValueError("expected a single 1-D window")
    return layer.forward(w)


def _conv_out_len(length, kernel, stride, padding):
    return (length + 2 * padding - kernel) // stride + 1


def _build_generator(in_ch, length, kernel, value_scale, rng) -> nn.Sequential:
    """Strided conv encoder mirrored by transposed-conv decoder; output
    length is restored exactly via per-stage output_padding. BN+ReLU after
    every stage except the final (linear) output layer."""
    pad = (kernel - 1) // 2
    layers = [nn.Scale(1.0 / value_scale)]
    chans = (in_ch,) + G_CHANNELS
    lengths = [length]
    for cin, cout in zip(chans[:-1], chans[1:]):
        layers += [
            nn.Conv1d(cin, cout, kernel, stride=2, padding=pad, rng=rng),
            nn.BatchNorm1d(cout),
            nn.ReLU(),
        ]
        lengths.append(_conv_out_len(lengths[-1], kernel, 2, pad))
    rev = chans[::-1]
    for i, (cin, cout) in enumerate(zip(rev[:-1], rev[1:])):
        cur, target = lengths[-1 - i], lengths[-2 - i]
        op = target - ((cur - 1) * 2 - 2 * pad + kernel)
        layers.append(
            nn.ConvTranspose1d(cin, cout, kernel, stride=2, padding=pad,
                               output_padding=op, rng=rng)
        )
        if i < len(rev) - 2:
            layers += [nn.BatchNorm1d(cout), nn.ReLU()]
    layers.append(nn.Scale(value_scale))
    return nn.Sequential(*layers)


def _build_discriminator(in_ch, length, rng) -> nn.Sequential:
    pad = (D_KERNEL - 1) // 2
    layers = []
    chans = (in_ch,) + D_CHANNELS
    cur = length
    for cin, cout in zip(chans[:-1], chans[1:]):
        layers += [
            nn.Conv1d(cin, cout, D_KERNEL, stride=2, padding=pad, rng=rng),
            nn.BatchNorm1d(cout),
            nn.ReLU(),
        ]
        cur = _conv_out_len(cur, D_KERNEL, 2, pad)
    layers += [
        nn.Flatten(),
        nn.Linear(D_CHANNELS[-1] * cur, 1, rng=rng),
        nn.Sigmoid(),
    ]
    return nn.Sequential(*layers)


class DetectorModel:
    """Spectral filter layer + local/regional generators + discriminator."""

    def __init__(self, window_len: int, output_repr: str = "real_imag_channels",
                 rng_seed: int = 0):
        rng = np.random.default_rng([rng_seed, 0])
        self.window_len = window_len
        self.rng_seed = rng_seed
        self.gfl = GlobalFilterLayer(window_len, output_repr)
        c, nbins = self.gfl.channels, self.gfl.nbins
        scale = max(window_len / 2.0, 1.0)
        self.g_local = _build_generator(c, nbins, LOCAL_KERNEL, scale, rng)
        self.g_regional = _build_generator(c, nbins, REGIONAL_KERNEL, scale, rng)
        self.d = _build_discriminator(c, nbins, rng)

    @property
    def nbins(self) -> int:
        return self.gfl.nbins

    @property
    def output_repr(self) -> str:
        return self.gfl.output_repr

    def set_training(self, flag: bool):
        self.g_local.set_training(flag)
        self.g_regional.set_training(flag)
        self.d.set_training(flag)

    def generator_params(self, include_filter=True):
        out = self.g_local.params() + self.g_regional.params()
        if include_filter:
            out += self.gfl.params()
        return out

    def discriminator_params(self):
        return self.d.params()

    def state(self):
        out = {}
        for prefix, part in (("gfl", self.gfl), ("g_local", self.g_local),
                             ("g_regional", self.g_regional), ("d", self.d)):
            for name, arr in part.state().items():
                out[f"{prefix}.{name}"] = arr
        return out

    def load_state(self, arrays):
        live = self.state()
        if set(arrays) != set(live):
            missing = set(live) - set(arrays)
            extra = set(arrays) - set(live)
            raise ValueError(f"state mismatch: missing={missing} extra={extra}")
        for name, arr in arrays.items():
            if live[name].shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}")
            live[name][...] = arr


def generator_forward(model: DetectorModel, which: str, x) -> np.ndarray:
    """Reconstruct a filtered tensor with the local or regional generator."""
    if which == "local":
        return model.g_local.forward(x)
    if which == "regional":
        return model.g_regional.forward(x)
    raise ValueError(f"unknown generator {which!r}")


def discriminator_forward(model: DetectorModel, x) -> np.ndarray:
    """Per-sample score in (0, 1); 0 reads as real, 1 as fake."""
    return model.d.forward(x)[:, 0]


def add_noise(x, sigma, rng) -> np.ndarray:
    """Add Gaussian noise scaled by sigma times each sample's std."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0:
        return x.copy()
    std = x.std(axis=tuple(range(1, x.ndim)), keepdims=True)
    return x + rng.standard_normal(x.shape) * (sigma * std)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def discriminator_step(model, x_real, fake_local, fake_regional, opt_d,
                       alpha) -> float:
    """One discriminator update: min alpha*BCE(D(X), 0)
    + (1-alpha)*(BCE(D(Gl(X~)), 1) + BCE(D(Gr(X~)), 1)).

    Only discriminator parameters move. Returns the weighted loss.
    """
    opt_d.zero_grad()
    p = model.d.forward(x_real)
    loss_real, g = nn.bce_loss(p, np.zeros_like(p))
    model.d.backward(alpha * g)
    p = model.d.forward(fake_local)
    loss_fl, g = nn.bce_loss(p, np.ones_like(p))
    model.d.backward((1.0 - alpha) * g)
    p = model.d.forward(fake_regional)
    loss_fr, g = nn.bce_loss(p, np.ones_like(p))
    model.d.backward((1.0 - alpha) * g)
    opt_d.step()
    return alpha * loss_real + (1.0 - alpha) * (loss_fl + loss_fr)


def generator_step(model, x_target, fake_local, fake_regional, opt_g, cfg):
    """One generator update: min (1-gamma)*(MSE_l + MSE_r)
    + gamma*(BCE(D(Gl(X~)), 0) + BCE(D(Gr(X~)), 0)).

    Relies on the generators' forward caches for fake_local/_regional still
    being current. Only generator (and, if configured, filter) parameters
    move; the reconstruction target is treated as constant. Returns
    (reconstruction loss sum, adversarial loss sum).
    """
    opt_g.zero_grad()
    recon = 0.0
    adv = 0.0
    grads_in = []
    for gen, fake in ((model.g_local, fake_local),
                      (model.g_regional, fake_regional)):
        p = model.d.forward(fake)
        loss_adv, gp = nn.bce_loss(p, np.zeros_like(p))
        gfake = cfg.gamma * model.d.backward(gp)
        loss_mse, gm = nn.mse_loss(fake, x_target)
        gfake = gfake + (1.0 - cfg.gamma) * gm
        grads_in.append(gen.backward(gfake))
        recon += loss_mse
        adv += loss_adv
    if cfg.train_filter:
        # X~ = X + noise, so dX~/dX is the identity.
        model.gfl.backward(grads_in[0] + grads_in[1])
    opt_g.step()
    return recon, adv


def train(model: DetectorModel, windows, cfg: TrainConfig,
          checkpoint_dir=None) -> list:
    """Train on normal windows per the block-wise schedule.

    windows: WindowSet (labels must be absent or all normal) or (N, L)
    array of already-normalized windows. Returns the per-epoch loss trace
    as a list of dict rows; checkpoints are written per epoch when
    checkpoint_dir is given.
    """
    if isinstance(windows, WindowSet):
        if any(lab == ANOMALOUS for lab in windows.labels):
            raise ValueError("training windows must all be normal")
        arr = windows.windows
    else:
        arr = np.asarray(windows, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("empty training set")
    if arr.shape[1] != model.window_len:
        raise ValueError("window length does not match the model")

    rng = np.random.default_rng([cfg.rng_seed, 1])
    opt_g = nn.Adam(model.generator_params(cfg.train_filter), lr=cfg.lr_g)
    opt_d = nn.Adam(model.discriminator_params(), lr=cfg.lr_d)
    model.set_training(True)

    n = arr.shape[0]
    trace = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        sums = np.zeros(3)
        batches = 0
        for start in range(0, n, cfg.batch_size):
            w = arr[order[start : start + cfg.batch_size]]
            x = model.gfl.forward(w)
            x_noisy = add_noise(x, cfg.sigma, rng)
            fake_l = model.g_local.forward(x_noisy)
            fake_r = model.g_regional.forward(x_noisy)
            d_loss = discriminator_step(model, x, fake_l, fake_r, opt_d,
                                        cfg.alpha)
            recon, adv = generator_step(model, x, fake_l, fake_r, opt_g, cfg)
            if not np.isfinite([d_loss, recon, adv]).all():
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch} batch {batches}"
                )
            sums += (d_loss, recon, adv)
            batches += 1
        d_mean, recon_mean, adv_mean = sums / batches
        trace.append({
            "epoch": epoch,
            "d_loss": d_mean,
            "g_loss_recon": recon_mean,
            "g_loss_adv": adv_mean,
            "composite": cfg.lam * (d_mean + adv_mean)
            + (1.0 - cfg.lam) * recon_mean,
        })
        if checkpoint_dir is not None:
            save_checkpoint(
                Path(checkpoint_dir) / f"epoch_{epoch:04d}.npz", model,
                extra_meta={"epoch": epoch},
            )
    model.set_training(False)
    return trace


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------

def score_components(model: DetectorModel, windows) -> dict:
    """Discriminator outputs on raw input and on both reconstructions.

    windows: (B, L) or single (L,). Returns arrays d_x, d_local,
    d_regional of shape (B,). Evaluation mode; the model is not modified.
    """
    w = np.asarray(windows, dtype=np.float64)
    if w.ndim == 1:
        w = w[None, :]
    if w.shape[1] != model.window_len:
        raise ValueError(
            f"window length {w.shape[1]} does not match model "
            f"({model.window_len})"
        )
    model.set_training(False)
    x = model.gfl.forward(w)
    return {
        "d_x": discriminator_forward(model, x),
        "d_local": discriminator_forward(model, model.g_local.forward(x)),
        "d_regional": discriminator_forward(model, model.g_regional.forward(x)),
    }


def reconstruction_errors(model: DetectorModel, windows) -> dict:
    """Per-window mean squared reconstruction error of each generator
    (generator-only detection strategies). Evaluation mode."""
    w = np.asarray(windows, dtype=np.float64)
    if w.ndim == 1:
        w = w[None, :]
    model.set_training(False)
    x = model.gfl.forward(w)
    return {
        "mse_local": ((model.g_local.forward(x) - x) ** 2).mean(axis=(1, 2)),
        "mse_regional": ((model.g_regional.forward(x) - x) ** 2).mean(axis=(1, 2)),
    }


def combine_score(components: dict, beta: float) -> np.ndarray:
    """score = beta*(D(Gl(x)) + D(Gr(x))) + (1-beta)*D(x)."""
    return beta * (components["d_local"] + components["d_regional"]) + (
        1.0 - beta
    ) * components["d_x"]


def anomaly_score(model: DetectorModel, window, beta: float = 0.5):
    """Combined anomaly score; higher means more anomalous."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    single = np.asarray(window).ndim == 1
    scores = combine_score(score_components(model, window), beta)
    return float(scores[0]) if single else scores


def classify(score: float, tau: float) -> str:
    """Thresholded decision; the boundary score counts as anomalous."""
    return ANOMALOUS if score >= tau else NORMAL


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, model: DetectorModel, extra_meta=None):
    meta = {
        "window_len": model.window_len,
        "output_repr": model.output_repr,
        "rng_seed": model.rng_seed,
    }
    meta.update(extra_meta or {})
    nn.save_params(path, model.state(), meta)


def load_checkpoint(path) -> DetectorModel:
    arrays, meta = nn.load_params(path)
    model = DetectorModel(
        window_len=int(meta["window_len"]),
        output_repr=meta["output_repr"],
        rng_seed=int(meta.get("rng_seed", 0)),
    )
    model.load_state(arrays)
    return model
