"""Inverse design: projected gradient descent on the L/D surrogate.

Three methods share one objective, the squared error between surrogate L/D
and the requested target, and one decision space, the [-1, 1] geometry
scaling also used by the diffusion model:

* ``opt``    — multi-start PGD from uniform-in-box seeds (long schedule)
* ``cdm``    — conditional diffusion sampling only
* ``hybrid`` — PGD refinement (short schedule) of each diffusion sample

Every PGD update steps along the negative gradient in normalized space, maps
to raw units, clips to the parameter box, and maps back.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import diffusion as dif
from .geometry import FlightCondition, ParamBox, PlanformParams
from .surrogate import LdScaler, LdSurrogate, predict_ld_batch

__all__ = [
    "PgdConfig",
    "InverseCondition",
    "InverseResult",
    "pgd",
    "run_opt_baseline",
    "run_cdm",
    "run_hybrid",
    "invert_conditions",
    "METHODS",
]

log = logging.getLogger(__name__)

METHODS = ("cdm", "opt", "hybrid")


@dataclass
class PgdConfig:
    steps: int = 1000        # baseline schedule; the hybrid uses 200
    lr: float = 0.05
    seeds: int = 100         # candidates per condition
    hybrid_steps: int = 200
    max_redraws: int = 3

    def __post_init__(self):
        if self.steps < 0 or self.hybrid_steps < 0:
            raise ValueError("step counts must be non-negative")
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")
        if self.seeds < 1:
            raise ValueError("need at least one seed")


@dataclass
class InverseCondition:
    """One evaluation row: flight condition plus requested L/D."""

    condition_id: str
    fc: FlightCondition
    ld_target: float
    true_params: PlanformParams | None = None

    def mu_raw(self) -> np.ndarray:
        return np.array([
            self.fc.altitude_kft, self.fc.log10_reynolds,
            self.fc.mach, self.fc.alpha_deg, self.ld_target,
        ])


@dataclass
class InverseResult:
    condition_id: str
    method: str
    candidates: np.ndarray      # (K, 9) raw planform rows, inside the box
    ld: np.ndarray              # (K,) surrogate L/D per candidate
    wall_seconds: float
    best_index: int
    dropped: int = 0            # seeds abandoned after repeated divergence


class _TrajectoryDiverged(Exception):
    pass


def _mix_seed(*parts) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def pgd(
    ld_model: LdSurrogate,
    ld_scaler: LdScaler,
    fc: FlightCondition,
    target: float,
    x_init_unit: np.ndarray,
    cfg: PgdConfig,
    geom_scaler: dif.GeomScaler,
    box: ParamBox,
    steps: int | None = None,
) -> np.ndarray:
    """One PGD trajectory; returns the final raw planform row (9,).

    Plain SGD with a fixed step on the normalized decision vector; the flight
    condition stays pinned. Raises _TrajectoryDiverged on a non-finite
    objective so the caller can redraw the seed.
    """
    n_steps = cfg.steps if steps is None else steps
    half = 0.5 * (geom_scaler.hi - geom_scaler.lo)
    mid = 0.5 * (geom_scaler.hi + geom_scaler.lo)
    # fold unit->raw and raw->standardized into one affine per step
    scale9 = half / ld_scaler.in_std[:9]
    shift9 = (mid - ld_scaler.in_mean[:9]) / ld_scaler.in_std[:9]
    fc_feats = np.array([fc.altitude_kft, fc.log10_reynolds, fc.mach, fc.alpha_deg])
    fc_std = (fc_feats - ld_scaler.in_mean[9:]) / ld_scaler.in_std[9:]
    const_block = np.concatenate([fc_std, [1.0]])[None, :]
    out_scale = np.array([ld_scaler.ld_std])
    out_shift = np.array([ld_scaler.ld_mean])
    target_arr = np.array([[float(target)]])

    params = ld_model.params
    weights = [(params[f"W{l}"], params[f"b{l}"]) for l in range(ld_model.n_layers + 1)]

    x = np.asarray(x_init_unit, dtype=float).copy()
    raw = box.clip(geom_scaler.from_unit(x))
    x = geom_scaler.to_unit(raw)
    for _ in range(n_steps):
        try:
            tape = ad.Tape()
            xl = tape.leaf(x[None, :])
            p_std = ad.affine(xl, scale9, shift9)
            h = ad.concat(p_std, tape.leaf(const_block, needs_grad=False))
            for l in range(ld_model.n_layers):
                w, b = weights[l]
                h = ad.silu(ad.add(ad.matmul(h, tape.leaf(w, needs_grad=False)),
                                   tape.leaf(b, needs_grad=False)))
            w, b = weights[ld_model.n_layers]
            pred_std = ad.add(ad.matmul(h, tape.leaf(w, needs_grad=False)),
                              tape.leaf(b, needs_grad=False))
            pred = ad.affine(pred_std, out_scale, out_shift)
            d = ad.sub(pred, target_arr)
            loss = ad.mul(d, d)
            grads = ad.backward(tape, loss)
        except ad.NonFiniteError as exc:
            raise _TrajectoryDiverged(str(exc)) from exc
        x = x - cfg.lr * grads[xl.idx].ravel()
        raw = box.clip(geom_scaler.from_unit(x))
        x = geom_scaler.to_unit(raw)
    return raw


def _finalize(cond, method, candidates, ld_model, ld_scaler, t0, dropped=0) -> InverseResult:
    candidates = np.asarray(candidates, dtype=float)
    ld = predict_ld_batch(ld_model, ld_scaler, candidates, cond.fc)
    err = (ld - cond.ld_target) ** 2
    best = int(np.argmin(err))  # ties resolve to the lowest index
    return InverseResult(
        condition_id=cond.condition_id,
        method=method,
        candidates=candidates,
        ld=ld,
        wall_seconds=time.perf_counter() - t0,
        best_index=best,
        dropped=dropped,
    )


def run_opt_baseline(
    ld_model, ld_scaler, cond: InverseCondition, cfg: PgdConfig,
    seed: int, cond_index: int,
    geom_scaler=None, box: ParamBox | None = None,
) -> InverseResult:
    """Multi-start PGD from cfg.seeds uniform-in-box starts, full schedule."""
    box = box or ParamBox.default()
    geom_scaler = geom_scaler or dif.GeomScaler.from_box(box)
    t0 = time.perf_counter()
    rng = np.random.default_rng(np.random.SeedSequence([_mix_seed(seed, cond_index), 1]))
    finals, dropped = [], 0
    for _ in range(cfg.seeds):
        result = None
        for attempt in range(cfg.max_redraws + 1):
            start_raw = rng.uniform(box.lo, box.hi)
            try:
                result = pgd(ld_model, ld_scaler, cond.fc, cond.ld_target,
                             geom_scaler.to_unit(start_raw), cfg, geom_scaler, box)
                break
            except _TrajectoryDiverged:
                log.warning("condition %s: divergent seed redrawn (attempt %d)",
                            cond.condition_id, attempt + 1)
        if result is None:
            dropped += 1
            log.warning("condition %s: seed dropped after %d redraws",
                        cond.condition_id, cfg.max_redraws)
        else:
            finals.append(result)
    if not finals:
        raise RuntimeError(f"condition {cond.condition_id}: every optimization seed diverged")
    return _finalize(cond, "opt", finals, ld_model, ld_scaler, t0, dropped)


def run_cdm(
    bundle: dif.DiffusionBundle, ld_model, ld_scaler, cond: InverseCondition,
    cfg: PgdConfig, seed: int, cond_index: int, box: ParamBox | None = None,
) -> InverseResult:
    """Conditional diffusion sampling only."""
    box = box or ParamBox.default()
    t0 = time.perf_counter()
    samples = dif.sample(bundle, cond.mu_raw(), k=cfg.seeds,
                         seed=_mix_seed(seed, cond_index), box=box)
    return _finalize(cond, "cdm", samples, ld_model, ld_scaler, t0)


def run_hybrid(
    bundle: dif.DiffusionBundle, ld_model, ld_scaler, cond: InverseCondition,
    cfg: PgdConfig, seed: int, cond_index: int, box: ParamBox | None = None,
) -> InverseResult:
    """Diffusion samples refined by a short PGD pass each."""
    box = box or ParamBox.default()
    t0 = time.perf_counter()
    samples = dif.sample(bundle, cond.mu_raw(), k=cfg.seeds,
                         seed=_mix_seed(seed, cond_index), box=box)
    finals = []
    for row in samples:
        try:
            finals.append(pgd(ld_model, ld_scaler, cond.fc, cond.ld_target,
                              bundle.geom_scaler.to_unit(row), cfg,
                              bundle.geom_scaler, box, steps=cfg.hybrid_steps))
        except _TrajectoryDiverged:
            # keep the unrefined sample rather than discarding the chain
            log.warning("condition %s: refinement diverged, keeping raw sample",
                        cond.condition_id)
            finals.append(row)
    return _finalize(cond, "hybrid", finals, ld_model, ld_scaler, t0)


def _run_one(args):
    (method, cond, cond_index, bundle, ld_model, ld_scaler, cfg, seed, box) = args
    if method == "opt":
        return run_opt_baseline(ld_model, ld_scaler, cond, cfg, seed, cond_index,
                                box=box)
    if method == "cdm":
        return run_cdm(bundle, ld_model, ld_scaler, cond, cfg, seed, cond_index, box)
    if method == "hybrid":
        return run_hybrid(bundle, ld_model, ld_scaler, cond, cfg, seed, cond_index, box)
    raise ValueError(f"unknown method '{method}'")


def invert_conditions(
    method: str,
    conditions,
    ld_model: LdSurrogate,
    ld_scaler: LdScaler,
    bundle: dif.DiffusionBundle | None = None,
    cfg: PgdConfig | None = None,
    seed: int = 0,
    box: ParamBox | None = None,
    workers: int = 1,
):
    """Run one method over many conditions; order-stable, seed-deterministic.

    Per-condition RNG streams derive from (seed, condition index), so results
    do not depend on the worker count.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if method in ("cdm", "hybrid") and bundle is None:
        raise ValueError(f"method '{method}' needs a trained diffusion bundle")
    cfg = cfg or PgdConfig()
    box = box or ParamBox.default()
    jobs = [(method, cond, i, bundle, ld_model, ld_scaler, cfg, seed, box)
            for i, cond in enumerate(conditions)]
    if workers <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))
