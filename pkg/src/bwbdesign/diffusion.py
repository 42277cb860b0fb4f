"""Conditional denoising diffusion over the 9-D planform vector.

Cosine noise schedule, forward noising q(x_t | x_0), noise-prediction
training, and full ancestral reverse sampling. Geometry is mapped to [-1, 1]
by a symmetric min-max scaler bound to the parameter box; the 5-entry
condition vector [altitude_kft, log10_Re, mach, alpha_deg, ld_target] is
z-scored with training statistics.

Timesteps are stored 0-based: array index t corresponds to the (t+1)-th
diffusion step, so ``alpha_bar[0]`` is the largest (first-step) signal
fraction and the reverse loop at index 0 is the noiseless final step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .dataset import DIFFUSION_COND_NAMES, diffusion_condition_vector
from .geometry import ParamBox

__all__ = [
    "NoiseSchedule",
    "cosine_schedule",
    "forward_noise",
    "GeomScaler",
    "ConditionScaler",
    "DenoiserModel",
    "train_denoiser",
    "sample",
    "DiffusionBundle",
]

_HIDDEN = 512
_BLOCKS = 6
_TIME_EMBED = 128
_COND_EMBED = 128
_BETA_MIN = 1e-8
_BETA_MAX = 0.999
_X0_CLAMP = 1.5
_LN_EPS = 1e-5


def _ln(h: np.ndarray) -> np.ndarray:
    # reciprocal-multiply to stay bit-identical with the tape op
    mean = h.mean(axis=1, keepdims=True)
    var = h.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    return (h - mean) * inv


@dataclass
class NoiseSchedule:
    """beta/alpha/alpha_bar tables; alpha_bar is the cumprod of alpha."""

    t_count: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    s_offset: float = 0.008

    def __post_init__(self):
        if not (np.all(self.beta > 0.0) and np.all(self.beta < 1.0)):
            raise ValueError("beta must lie strictly inside (0, 1)")
        if np.any(np.diff(self.alpha_bar) >= 0.0):
            raise ValueError("alpha_bar must be strictly decreasing")


def cosine_schedule(t_count: int, s: float = 0.008) -> NoiseSchedule:
    """Cosine beta schedule; betas clipped to keep variances positive/finite.

    alpha_bar is recomputed from the clipped betas so the definitional
    round-trip alpha_bar[t] = prod(1 - beta[:t+1]) holds exactly.
    """
    if t_count < 2:
        raise ValueError("need at least 2 timesteps")
    grid = np.arange(t_count + 1, dtype=float)
    f = np.cos(((grid / t_count + s) / (1.0 + s)) * (math.pi / 2.0)) ** 2
    bar_raw = f[1:] / f[0]
    prev = np.concatenate([[1.0], bar_raw[:-1]])
    beta = np.clip(1.0 - bar_raw / prev, _BETA_MIN, _BETA_MAX)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule(t_count=t_count, beta=beta, alpha=alpha, alpha_bar=alpha_bar, s_offset=s)


def forward_noise(x0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    if not 0 <= t < sched.t_count:
        raise ValueError(f"timestep {t} outside [0, {sched.t_count})")
    abar = sched.alpha_bar[t]
    return math.sqrt(abar) * np.asarray(x0, dtype=float) + math.sqrt(1.0 - abar) * np.asarray(eps, dtype=float)


@dataclass
class GeomScaler:
    """Affine map of the parameter box onto [-1, 1] per coordinate."""

    lo: np.ndarray
    hi: np.ndarray

    @staticmethod
    def from_box(box: ParamBox) -> "GeomScaler":
        return GeomScaler(lo=box.lo.copy(), hi=box.hi.copy())

    def to_unit(self, p):
        return 2.0 * (np.asarray(p, dtype=float) - self.lo) / (self.hi - self.lo) - 1.0

    def from_unit(self, x):
        return (np.asarray(x, dtype=float) + 1.0) * 0.5 * (self.hi - self.lo) + self.lo


@dataclass
class ConditionScaler:
    mean: np.ndarray
    std: np.ndarray

    @staticmethod
    def fit(mu_rows: np.ndarray) -> "ConditionScaler":
        std = mu_rows.std(axis=0)
        std = np.where(std <= 0.0, 1.0, std)
        return ConditionScaler(mean=mu_rows.mean(axis=0), std=std)

    def normalize(self, mu):
        return (np.asarray(mu, dtype=float) - self.mean) / self.std


@dataclass
class DenoiserModel:
    """Residual MLP noise predictor.

    Input is [x_t | linear(time embed) | linear(cond)]; each of the 6 blocks
    applies LayerNorm -> SiLU MLP with an additive skip; a final LayerNorm
    feeds the 9-wide head.
    """

    params: dict
    hidden: int = _HIDDEN
    blocks: int = _BLOCKS
    time_embed: int = _TIME_EMBED
    cond_embed: int = _COND_EMBED
    x_dim: int = 9
    cond_dim: int = len(DIFFUSION_COND_NAMES)

    @staticmethod
    def init(seed) -> "DenoiserModel":
        rng = np.random.default_rng(seed)
        p = {}
        p["Wt"], p["bt"] = ad.init_linear(rng, _TIME_EMBED, _TIME_EMBED)
        p["Wc"], p["bc"] = ad.init_linear(rng, len(DIFFUSION_COND_NAMES), _COND_EMBED)
        in_width = 9 + _TIME_EMBED + _COND_EMBED
        p["Win"], p["bin"] = ad.init_linear(rng, in_width, _HIDDEN)
        for blk in range(_BLOCKS):
            p[f"g{blk}"] = np.ones((1, _HIDDEN))
            p[f"n{blk}"] = np.zeros((1, _HIDDEN))
            p[f"W1_{blk}"], p[f"b1_{blk}"] = ad.init_linear(rng, _HIDDEN, _HIDDEN)
            p[f"W2_{blk}"], p[f"b2_{blk}"] = ad.init_linear(rng, _HIDDEN, _HIDDEN)
        p["gf"] = np.ones((1, _HIDDEN))
        p["nf"] = np.zeros((1, _HIDDEN))
        p["Wout"], p["bout"] = ad.init_linear(rng, _HIDDEN, 9)
        return DenoiserModel(params=p)

    def forward(self, tape, x_t: np.ndarray, t_steps: np.ndarray, mu_std: np.ndarray):
        """Predicted noise (N, 9) for noised geometry rows at integer steps."""
        x_t = np.atleast_2d(x_t)
        mu_std = np.atleast_2d(mu_std)
        if x_t.shape[1] != self.x_dim or mu_std.shape[1] != self.cond_dim:
            raise ValueError(
                f"expected widths ({self.x_dim}, {self.cond_dim}), "
                f"got ({x_t.shape[1]}, {mu_std.shape[1]})"
            )
        p = {k: tape.leaf(v) for k, v in self.params.items()}
        t_sin = ad.sinusoidal_embed(np.asarray(t_steps, dtype=float), self.time_embed)
        temb = ad.add(ad.matmul(tape.leaf(t_sin), p["Wt"]), p["bt"])
        cemb = ad.add(ad.matmul(tape.leaf(mu_std), p["Wc"]), p["bc"])
        h = ad.add(ad.matmul(ad.concat(tape.leaf(x_t), temb, cemb), p["Win"]), p["bin"])
        for blk in range(self.blocks):
            u = ad.add(ad.mul(ad.layer_norm(h), p[f"g{blk}"]), p[f"n{blk}"])
            v = ad.silu(ad.add(ad.matmul(u, p[f"W1_{blk}"]), p[f"b1_{blk}"]))
            w = ad.add(ad.matmul(v, p[f"W2_{blk}"]), p[f"b2_{blk}"])
            h = ad.add(h, w)
        y = ad.add(ad.mul(ad.layer_norm(h), p["gf"]), p["nf"])
        out = ad.add(ad.matmul(y, p["Wout"]), p["bout"])
        return out, p

    def predict_eps(self, x_t, t_steps, mu_std) -> np.ndarray:
        """Tape-free forward for sampling (no gradients needed).

        Kept numerically identical to :meth:`forward`; a regression test
        asserts bit equality between the two paths.
        """
        p = self.params
        x_t = np.atleast_2d(np.asarray(x_t, dtype=float))
        mu_std = np.atleast_2d(np.asarray(mu_std, dtype=float))
        t_sin = ad.sinusoidal_embed(np.asarray(t_steps, dtype=float), self.time_embed)
        temb = t_sin @ p["Wt"] + p["bt"]
        cemb = mu_std @ p["Wc"] + p["bc"]
        h = np.concatenate([x_t, temb, cemb], axis=1) @ p["Win"] + p["bin"]
        for blk in range(self.blocks):
            u = _ln(h) * p[f"g{blk}"] + p[f"n{blk}"]
            a = u @ p[f"W1_{blk}"] + p[f"b1_{blk}"]
            v = a * (1.0 / (1.0 + np.exp(-a)))
            h = h + (v @ p[f"W2_{blk}"] + p[f"b2_{blk}"])
        y = _ln(h) * p["gf"] + p["nf"]
        out = y @ p["Wout"] + p["bout"]
        if not np.all(np.isfinite(out)):
            raise ad.NonFiniteError("denoiser produced a non-finite prediction")
        return out


@dataclass
class DiffusionBundle:
    """Frozen sampler state: model + schedule + both scalers."""

    model: DenoiserModel
    sched: NoiseSchedule
    geom_scaler: GeomScaler
    cond_scaler: ConditionScaler
    seed: int = 0


def train_denoiser(
    cases,
    sched: NoiseSchedule,
    epochs: int,
    seed,
    batch: int = 64,
    lr: float = 5e-4,
    weight_decay: float = 1e-5,
    box: ParamBox | None = None,
):
    """Noise-prediction training with AdamW.

    Each case supplies (planform, condition-with-realized-L/D); per sample a
    uniform timestep and unit Gaussian noise are drawn and the model regresses
    the noise. Returns a frozen :class:`DiffusionBundle` plus the loss history.
    """
    if len(cases) < 2:
        raise ValueError("need at least 2 training pairs")
    box = box or ParamBox.default()
    geom_scaler = GeomScaler.from_box(box)
    mu_rows = np.stack([diffusion_condition_vector(c) for c in cases])
    cond_scaler = ConditionScaler.fit(mu_rows)
    x0_all = np.stack([geom_scaler.to_unit(c.params.to_array()) for c in cases])
    mu_std_all = cond_scaler.normalize(mu_rows)

    seed_int = _seed_int(seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed_int, 31]))
    model = DenoiserModel.init(np.random.SeedSequence([seed_int, 32]))
    state = ad.AdamState.for_params(model.params, lr=lr, weight_decay=weight_decay)
    history = []
    n = len(cases)
    for epoch in range(epochs):
        order = rng.permutation(n)
        ep = []
        for start in range(0, n, batch):
            sel = order[start:start + batch]
            x0 = x0_all[sel]
            t = rng.integers(0, sched.t_count, size=len(sel))
            eps = rng.standard_normal((len(sel), 9))
            ab = sched.alpha_bar[t][:, None]
            x_t = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
            tape = ad.Tape()
            pred, leaves = model.forward(tape, x_t, t, mu_std_all[sel])
            loss = ad.scale(ad.mse(pred, eps), 9.0)  # summed over the 9 coords
            grads = ad.backward(tape, loss)
            ad.adam_step(
                model.params,
                {k: grads[t_.idx] for k, t_ in leaves.items() if t_.idx in grads},
                state,
            )
            ep.append(float(loss.value[0, 0]))
        history.append(float(np.mean(ep)))
    bundle = DiffusionBundle(
        model=model, sched=sched, geom_scaler=geom_scaler,
        cond_scaler=cond_scaler, seed=seed_int,
    )
    return bundle, history


def _seed_int(seed) -> int:
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.generate_state(1)[0])
    return int(seed)


def sample(
    bundle: DiffusionBundle,
    mu_raw,
    k: int,
    seed,
    box: ParamBox | None = None,
    clamp_x0: float | None = _X0_CLAMP,
    return_unit: bool = False,
):
    """K planform samples by full ancestral reverse diffusion.

    Each chain owns an RNG stream derived from (seed, chain index), so the
    result is independent of batching and fully reproducible. Samples are
    denormalized and projected onto the parameter box by componentwise clip.
    """
    box = box or ParamBox.default()
    sched = bundle.sched
    mu_std = bundle.cond_scaler.normalize(np.asarray(mu_raw, dtype=float))
    mu_block = np.tile(mu_std, (k, 1))
    rngs = [np.random.default_rng(np.random.SeedSequence([_seed_int(seed), chain]))
            for chain in range(k)]
    x = np.stack([r.standard_normal(9) for r in rngs])
    for idx in range(sched.t_count - 1, -1, -1):
        abar = sched.alpha_bar[idx]
        abar_prev = sched.alpha_bar[idx - 1] if idx > 0 else 1.0
        beta = sched.beta[idx]
        alpha = sched.alpha[idx]
        t_arr = np.full(k, idx)
        eps_hat = bundle.model.predict_eps(x, t_arr, mu_block)
        x0_hat = (x - math.sqrt(1.0 - abar) * eps_hat) / math.sqrt(abar)
        if clamp_x0 is not None:
            x0_hat = np.clip(x0_hat, -clamp_x0, clamp_x0)
        mean = (
            beta * math.sqrt(abar_prev) / (1.0 - abar) * x0_hat
            + (1.0 - abar_prev) * math.sqrt(alpha) / (1.0 - abar) * x
        )
        if idx > 0:
            sigma = math.sqrt(beta * (1.0 - abar_prev) / (1.0 - abar))
            z = np.stack([r.standard_normal(9) for r in rngs])
            x = mean + sigma * z
        else:
            x = mean
    raw = bundle.geom_scaler.from_unit(x)
    clipped = box.clip(raw)
    if return_unit:
        return clipped, x
    return clipped
