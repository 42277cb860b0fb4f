"""Aerodynamic surrogates.

Two trainable models:

* ``FilmModel`` — per-point field net predicting (Cp, Cfx, Cfz). The base MLP
  sees only pointwise geometry [x, y, z, nx, ny, nz]; a small hypernetwork
  maps the 12-entry conditioning vector to per-layer scale/shift pairs that
  modulate the first 4 hidden layers (feature-wise linear modulation).
* ``LdSurrogate`` — scalar lift-to-drag net on (planform, flight condition),
  differentiable w.r.t. the planform through the tape; this is the model the
  inverse-design loop optimizes against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .dataset import FILM_COND_NAMES, film_condition_vector
from .geometry import FlightCondition, PlanformParams

__all__ = [
    "FieldScaler",
    "FilmModel",
    "film_forward",
    "train_field_surrogate",
    "LdScaler",
    "LdSurrogate",
    "predict_ld",
    "predict_ld_batch",
    "train_ld_surrogate",
]

_FILM_HIDDEN = 256
_FILM_MODULATED = 4
_FILM_PLAIN = 3
_HYPER_HIDDEN = 128
_LD_HIDDEN = 128
_LD_LAYERS = 3

# L/D surrogate input layout: 9 planform entries, 4 condition entries, then a
# reserved bias slot pinned to 1 (not standardized).
LD_FEATURE_NAMES = (
    "b1", "b2", "b3", "c2", "c3", "c4", "s1", "s3", "x3",
    "altitude_kft", "log10_reynolds", "mach", "alpha_deg",
)


def _safe_std(std: np.ndarray):
    """Replace zero stds by 1 and flag them; normalized error on such
    channels is then the raw error."""
    std = np.asarray(std, dtype=float)
    flagged = std <= 0.0
    out = np.where(flagged, 1.0, std)
    return out, flagged


@dataclass
class FieldScaler:
    """Z-score statistics for the 3 output channels and 12 conditioning entries."""

    out_mean: np.ndarray
    out_std: np.ndarray
    cond_mean: np.ndarray
    cond_std: np.ndarray
    out_flagged: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=bool))
    cond_flagged: np.ndarray = field(default_factory=lambda: np.zeros(12, dtype=bool))

    @staticmethod
    def fit(cases) -> "FieldScaler":
        fields = np.concatenate(
            [np.stack([c.cloud.cp, c.cloud.cfx, c.cloud.cfz], axis=1) for c in cases]
        )
        conds = np.stack([film_condition_vector(c) for c in cases])
        out_std, out_flagged = _safe_std(fields.std(axis=0))
        cond_std, cond_flagged = _safe_std(conds.std(axis=0))
        return FieldScaler(
            out_mean=fields.mean(axis=0), out_std=out_std,
            cond_mean=conds.mean(axis=0), cond_std=cond_std,
            out_flagged=out_flagged, cond_flagged=cond_flagged,
        )

    def normalize_fields(self, arr):
        return (arr - self.out_mean) / self.out_std

    def denormalize_fields(self, arr):
        return arr * self.out_std + self.out_mean

    def normalize_cond(self, arr):
        return (arr - self.cond_mean) / self.cond_std


@dataclass
class FilmModel:
    """FiLM-conditioned field net: y = head(plain(modulated(s; cond)))."""

    params: dict
    cond_names: tuple = FILM_COND_NAMES
    in_dim: int = 6
    hidden: int = _FILM_HIDDEN
    n_modulated: int = _FILM_MODULATED
    n_plain: int = _FILM_PLAIN
    out_dim: int = 3

    @staticmethod
    def init(seed) -> "FilmModel":
        rng = np.random.default_rng(seed)
        params = {}
        dims = [6] + [_FILM_HIDDEN] * (_FILM_MODULATED + _FILM_PLAIN) + [3]
        for l in range(len(dims) - 1):
            params[f"W{l}"], params[f"b{l}"] = ad.init_linear(rng, dims[l], dims[l + 1])
        params["HW"], params["Hb"] = ad.init_linear(rng, 12, _HYPER_HIDDEN)
        for l in range(_FILM_MODULATED):
            params[f"GW{l}"], gb = ad.init_linear(rng, _HYPER_HIDDEN, _FILM_HIDDEN)
            params[f"BW{l}"], params[f"Bb{l}"] = ad.init_linear(rng, _HYPER_HIDDEN, _FILM_HIDDEN)
            params[f"Gb{l}"] = gb + 1.0  # start near the identity modulation
        return FilmModel(params=params)

    def forward(self, tape, s_arr, cond_arr, points_per_case: int = 1):
        """Normalized field prediction for stacked points.

        ``s_arr`` is (C*k, 6) with k = points_per_case contiguous points per
        case; ``cond_arr`` is (C, 12) standardized conditioning rows, expanded
        to points via row repetition.
        """
        p = {k: tape.leaf(v) for k, v in self.params.items()}
        cond = tape.leaf(np.atleast_2d(cond_arr))
        trunk = ad.silu(ad.add(ad.matmul(cond, p["HW"]), p["Hb"]))
        h = ad.silu(ad.add(ad.matmul(tape.leaf(np.atleast_2d(s_arr)), p["W0"]), p["b0"]))
        # hidden activations 1..4 are modulated; the transition out of the
        # last modulated layer yields the first of the 3 plain layers
        for l in range(self.n_modulated):
            gamma = ad.add(ad.matmul(trunk, p[f"GW{l}"]), p[f"Gb{l}"])
            beta = ad.add(ad.matmul(trunk, p[f"BW{l}"]), p[f"Bb{l}"])
            if points_per_case > 1:
                gamma = ad.repeat_rows(gamma, points_per_case)
                beta = ad.repeat_rows(beta, points_per_case)
            mod = ad.add(ad.mul(h, gamma), beta)
            h = ad.silu(ad.add(ad.matmul(mod, p[f"W{l + 1}"]), p[f"b{l + 1}"]))
        for l in range(self.n_modulated + 1, self.n_modulated + self.n_plain):
            h = ad.silu(ad.add(ad.matmul(h, p[f"W{l}"]), p[f"b{l}"]))
        head = self.n_modulated + self.n_plain
        out = ad.add(ad.matmul(h, p[f"W{head}"]), p[f"b{head}"])
        return out, p


def film_forward(model: FilmModel, s, cond, points_per_case: int = 1) -> np.ndarray:
    """Normalized (Cp, Cfx, Cfz) rows for standardized inputs."""
    s = np.atleast_2d(np.asarray(s, dtype=float))
    cond = np.atleast_2d(np.asarray(cond, dtype=float))
    if s.shape[1] != model.in_dim:
        raise ValueError(f"point features must have width {model.in_dim}, got {s.shape[1]}")
    if cond.shape[1] != len(model.cond_names):
        raise ValueError(
            f"conditioning must have width {len(model.cond_names)}, got {cond.shape[1]}"
        )
    if cond.shape[0] * points_per_case != s.shape[0]:
        raise ValueError("conditioning rows x points_per_case must match point count")
    tape = ad.Tape()
    out, _ = model.forward(tape, s, cond, points_per_case)
    return out.value


def _point_features(cloud) -> np.ndarray:
    return np.concatenate([cloud.points, cloud.normals], axis=1)


def eq1_loss(tape, model, scaler, cases, rng=None, points_per_case=None):
    """Per-point 3-channel normalized squared-error loss over a case batch."""
    k_list = []
    s_rows, t_rows, c_rows = [], [], []
    for c in cases:
        feats = _point_features(c.cloud)
        targets = np.stack([c.cloud.cp, c.cloud.cfx, c.cloud.cfz], axis=1)
        if points_per_case is not None and points_per_case < feats.shape[0]:
            idx = rng.choice(feats.shape[0], size=points_per_case, replace=False)
            feats, targets = feats[idx], targets[idx]
        s_rows.append(feats)
        t_rows.append(scaler.normalize_fields(targets))
        c_rows.append(scaler.normalize_cond(film_condition_vector(c)))
        k_list.append(feats.shape[0])
    if len(set(k_list)) != 1:
        raise ValueError("cases in one batch must contribute equal point counts")
    s_arr = np.concatenate(s_rows)
    t_arr = np.concatenate(t_rows)
    cond_arr = np.stack(c_rows)
    pred, leaves = model.forward(tape, s_arr, cond_arr, points_per_case=k_list[0])
    # mean over points of the summed 3-channel squared error
    return ad.scale(ad.mse(pred, t_arr), 3.0), leaves


def train_field_surrogate(
    cases,
    epochs: int,
    seed,
    batch_cases: int = 64,
    points_per_case: int = 32,
    lr: float = 5e-4,
    val_fraction: float = 0.1,
    patience: int = 30,
):
    """Train the FiLM field net with Adam and validation early stopping.

    Returns (model, scaler, history). The kept parameters are the best
    validation checkpoint; ties keep the earlier one.
    """
    cases = [c for c in cases if c.cloud is not None and c.cloud.cp is not None]
    if len(cases) < 2:
        raise ValueError("need at least 2 cases with per-point labels")
    rng = np.random.default_rng(np.random.SeedSequence([_as_int(seed), 11]))
    order = rng.permutation(len(cases))
    n_val = max(1, int(round(val_fraction * len(cases))))
    val_cases = [cases[i] for i in order[:n_val]]
    train_cases = [cases[i] for i in order[n_val:]]
    if not train_cases:
        raise ValueError("validation split consumed every case")

    scaler = FieldScaler.fit(train_cases)
    model = FilmModel.init(np.random.SeedSequence([_as_int(seed), 12]))
    state = ad.AdamState.for_params(model.params, lr=lr)

    def val_loss() -> float:
        tape = ad.Tape()
        loss, _ = eq1_loss(tape, model, scaler, val_cases)
        return float(loss.value[0, 0])

    best = (np.inf, None, -1)
    history = {"train": [], "val": []}
    evals_since_best = 0
    for epoch in range(epochs):
        idx = rng.permutation(len(train_cases))
        ep_losses = []
        for start in range(0, len(idx), batch_cases):
            batch = [train_cases[i] for i in idx[start:start + batch_cases]]
            tape = ad.Tape()
            loss, leaves = eq1_loss(
                tape, model, scaler, batch, rng=rng, points_per_case=points_per_case
            )
            grads = ad.backward(tape, loss)
            ad.adam_step(
                model.params,
                {k: grads[t.idx] for k, t in leaves.items() if t.idx in grads},
                state,
            )
            ep_losses.append(float(loss.value[0, 0]))
        v = val_loss()
        history["train"].append(float(np.mean(ep_losses)))
        history["val"].append(v)
        if v < best[0]:
            best = (v, {k: p.copy() for k, p in model.params.items()}, epoch)
            evals_since_best = 0
        else:
            evals_since_best += 1
            if evals_since_best >= patience:
                break
    if best[1] is not None:
        model.params = best[1]
    history["best_epoch"] = best[2]
    return model, scaler, history


@dataclass
class LdScaler:
    """Z-scores for the 13 real input features and the L/D target."""

    in_mean: np.ndarray
    in_std: np.ndarray
    ld_mean: float
    ld_std: float

    @staticmethod
    def fit(features: np.ndarray, ld: np.ndarray) -> "LdScaler":
        in_std, _ = _safe_std(features.std(axis=0))
        ld_std, _ = _safe_std(np.array([ld.std()]))
        return LdScaler(
            in_mean=features.mean(axis=0), in_std=in_std,
            ld_mean=float(ld.mean()), ld_std=float(ld_std[0]),
        )


@dataclass
class LdSurrogate:
    """Plain MLP, input 14 (13 standardized features + bias slot), scalar L/D."""

    params: dict
    in_dim: int = 14
    hidden: int = _LD_HIDDEN
    n_layers: int = _LD_LAYERS

    @staticmethod
    def init(seed) -> "LdSurrogate":
        rng = np.random.default_rng(seed)
        params = {}
        dims = [14] + [_LD_HIDDEN] * _LD_LAYERS + [1]
        for l in range(len(dims) - 1):
            params[f"W{l}"], params[f"b{l}"] = ad.init_linear(rng, dims[l], dims[l + 1])
        return LdSurrogate(params=params)

    def forward(self, tape, x):
        """x: (N, 14) tensor or array -> standardized L/D column (N, 1)."""
        p = {k: tape.leaf(v) for k, v in self.params.items()}
        h = x if isinstance(x, ad.Tensor) else tape.leaf(x)
        if h.cols != self.in_dim:
            raise ValueError(f"L/D input must have width {self.in_dim}, got {h.cols}")
        for l in range(self.n_layers):
            h = ad.silu(ad.add(ad.matmul(h, p[f"W{l}"]), p[f"b{l}"]))
        out = ad.add(ad.matmul(h, p[f"W{self.n_layers}"]), p[f"b{self.n_layers}"])
        return out, p


def _as_int(seed) -> int:
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.generate_state(1)[0])
    return int(seed)


def ld_features(p: PlanformParams, fc: FlightCondition) -> np.ndarray:
    return np.concatenate([
        p.to_array(),
        [fc.altitude_kft, fc.log10_reynolds, fc.mach, fc.alpha_deg],
    ])


def _condition_features(fc: FlightCondition) -> np.ndarray:
    return np.array([fc.altitude_kft, fc.log10_reynolds, fc.mach, fc.alpha_deg])


def ld_input_tensor(tape, model, scaler, p_tensor, fc: FlightCondition):
    """Assemble the standardized 14-wide input from a raw (N, 9) planform tensor."""
    n = p_tensor.rows
    p_std = ad.affine(p_tensor, 1.0 / scaler.in_std[:9], -scaler.in_mean[:9] / scaler.in_std[:9])
    fc_std = (_condition_features(fc) - scaler.in_mean[9:]) / scaler.in_std[9:]
    fc_block = np.tile(fc_std, (n, 1))
    ones = np.ones((n, 1))
    return ad.concat(p_std, tape.leaf(fc_block), tape.leaf(ones))


def predict_ld(model: LdSurrogate, scaler: LdScaler, p: PlanformParams, fc: FlightCondition):
    """Surrogate L/D plus the exact gradient w.r.t. the 9 raw planform entries."""
    tape = ad.Tape()
    p_leaf = tape.leaf(p.to_array().reshape(1, 9))
    x = ld_input_tensor(tape, model, scaler, p_leaf, fc)
    out_std, _ = model.forward(tape, x)
    out = ad.affine(out_std, np.array([scaler.ld_std]), np.array([scaler.ld_mean]))
    grads = ad.backward(tape, out)
    return float(out.value[0, 0]), grads[p_leaf.idx].ravel()


def predict_ld_batch(model: LdSurrogate, scaler: LdScaler, P: np.ndarray, fc: FlightCondition):
    """Surrogate L/D for (N, 9) raw planform rows under one flight condition."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    tape = ad.Tape()
    p_leaf = tape.leaf(P)
    x = ld_input_tensor(tape, model, scaler, p_leaf, fc)
    out_std, _ = model.forward(tape, x)
    return (out_std.value * scaler.ld_std + scaler.ld_mean).ravel()


def train_ld_surrogate(
    cases,
    epochs: int,
    seed,
    batch: int = 64,
    lr: float = 5e-4,
):
    """Train the scalar L/D net with Adam on z-scored features and target."""
    if len(cases) < 2:
        raise ValueError("need at least 2 cases")
    feats = np.stack([ld_features(c.params, c.condition) for c in cases])
    ld = np.array([c.ld for c in cases])
    scaler = LdScaler.fit(feats, ld)
    x_std = (feats - scaler.in_mean) / scaler.in_std
    x_all = np.concatenate([x_std, np.ones((len(cases), 1))], axis=1)
    y_all = ((ld - scaler.ld_mean) / scaler.ld_std).reshape(-1, 1)

    rng = np.random.default_rng(np.random.SeedSequence([_as_int(seed), 21]))
    model = LdSurrogate.init(np.random.SeedSequence([_as_int(seed), 22]))
    state = ad.AdamState.for_params(model.params, lr=lr)
    history = []
    for epoch in range(epochs):
        idx = rng.permutation(len(cases))
        ep = []
        for start in range(0, len(idx), batch):
            sel = idx[start:start + batch]
            tape = ad.Tape()
            pred, leaves = model.forward(tape, x_all[sel])
            loss = ad.mse(pred, y_all[sel])
            grads = ad.backward(tape, loss)
            ad.adam_step(
                model.params,
                {k: grads[t.idx] for k, t in leaves.items() if t.idx in grads},
                state,
            )
            ep.append(float(loss.value[0, 0]))
        history.append(float(np.mean(ep)))
    return model, scaler, history
