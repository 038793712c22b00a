"""Levenberg-Marquardt fitting of the three-parameter creep model

    s(t) = eta + gamma * exp(-t / tau)

to per-pixel cumulative strain curves.  The Jacobian is analytic
(d/d_eta = 1, d/d_gamma = exp(-t/tau), d/d_tau = gamma * t/tau^2 * exp(-t/tau))
and the damping acts on the diagonal of J^T J (Marquardt scaling), which
keeps the step scale-invariant.  tau is clamped to a configurable interval so
noise-dominated pixels cannot run off to infinity.

All pixels of a stack are fitted simultaneously: the iteration is vectorized
over pixels, each pixel carrying its own parameters, damping and convergence
state, and pixels drop out of the active set as they converge.  A single
curve is just the one-pixel case of the same engine.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .phantom import StrainStack, frame_times

__all__ = ["LMConfig", "ExpFit", "TCImage", "exp_model", "jacobian",
           "initial_guess", "fit_exponential", "fit_stack", "cumulate"]

_DAMPING_CAP = 1e14


@dataclass(frozen=True)
class LMConfig:
    """Optimizer settings.

    tau_floor / tau_ceiling default to one tenth of the sampling interval and
    one hundred times the total duration; None means "derive from the data".
    """

    max_iterations: int = 200
    initial_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 10.0
    rel_tolerance: float = 1e-10
    tau_floor: Optional[float] = None
    tau_ceiling: Optional[float] = None

    def __post_init__(self):
        for name in ("max_iterations", "initial_damping", "damping_up",
                     "damping_down", "rel_tolerance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.tau_floor is not None and not self.tau_floor > 0:
            raise ValueError("tau_floor must be positive")

    def resolve_bounds(self, times):
        floor = self.tau_floor if self.tau_floor is not None else (times[1] - times[0]) / 10.0
        ceil = self.tau_ceiling if self.tau_ceiling is not None else 100.0 * times[-1]
        if not floor < ceil:
            raise ValueError(f"tau_floor {floor} must be below tau_ceiling {ceil}")
        return floor, ceil


@dataclass
class ExpFit:
    """Result of fitting one curve; tau is NaN when the input was degenerate."""

    eta: float
    gamma: float
    tau: float
    residual_norm: float
    iterations: int
    converged: bool


@dataclass
class TCImage:
    """Estimated time-constant map with per-pixel convergence flags and an
    optional ground-truth map for error evaluation."""

    tau_map: np.ndarray
    converged_mask: np.ndarray
    truth_map: Optional[np.ndarray] = None


def exp_model(t, eta, gamma, tau):
    return eta + gamma * np.exp(-np.asarray(t, dtype=np.float64) / tau)


def jacobian(t, eta, gamma, tau):
    """Analytic (n, 3) Jacobian of exp_model in (eta, gamma, tau) order."""
    t = np.asarray(t, dtype=np.float64)
    decay = np.exp(-t / tau)
    return np.stack([np.ones_like(t), decay, gamma * t / tau ** 2 * decay], axis=1)


def _as_batch(values):
    v = np.asarray(values, dtype=np.float64)
    return (v[None, :], True) if v.ndim == 1 else (v, False)


def initial_guess(times, values):
    """Starting point (eta0, gamma0, tau0) for the LM iteration.

    eta0 is the mean of the last 10% of samples (the curve has flattened
    there), gamma0 = values[0] - eta0, and tau0 is the earliest time at which
    |values - eta0| has decayed to |gamma0|/e, found by scanning; one third of
    the total duration when there is no crossing.
    """
    times = np.asarray(times, dtype=np.float64)
    v, single = _as_batch(values)
    n = v.shape[1]
    n_tail = max(1, int(round(0.1 * n)))
    eta0 = v[:, -n_tail:].mean(axis=1)
    gamma0 = v[:, 0] - eta0
    dev = np.abs(v - eta0[:, None])
    crossed = dev <= (np.abs(gamma0) / np.e)[:, None]
    has_crossing = crossed.any(axis=1)
    tau0 = np.where(has_crossing, times[crossed.argmax(axis=1)], times[-1] / 3.0)
    if single:
        return float(eta0[0]), float(gamma0[0]), float(tau0[0])
    return eta0, gamma0, tau0


def _lm_engine(times, values, config):
    """Vectorized LM over a (n_pixels, n_samples) batch.

    Returns (eta, gamma, tau, residual_norm, iterations, converged) arrays.
    Constant curves are degenerate for this model: they get eta = value,
    gamma = 0, tau = NaN and converged = False without iterating.
    """
    n_pix, n = values.shape
    tau_floor, tau_ceil = config.resolve_bounds(times)

    eta, gamma, tau = initial_guess(times, values)
    eta, gamma, tau = map(np.array, (eta, gamma, tau))
    tau = np.clip(tau, tau_floor, tau_ceil)
    degenerate = np.ptp(values, axis=1) == 0.0
    eta[degenerate] = values[degenerate, 0]
    gamma[degenerate] = 0.0
    tau[degenerate] = np.nan

    lam = np.full(n_pix, config.initial_damping)
    iterations = np.zeros(n_pix, dtype=np.int64)
    converged = np.zeros(n_pix, dtype=bool)
    cost_out = np.zeros(n_pix)

    active = np.flatnonzero(~degenerate)
    E = np.exp(-times[None, :] / tau[active, None])
    resid = values[active] - (eta[active, None] + gamma[active, None] * E)
    cost = np.einsum("pn,pn->p", resid, resid)
    cost_out[active] = cost

    for _ in range(config.max_iterations):
        if active.size == 0:
            break
        e, g, tv, la = eta[active], gamma[active], tau[active], lam[active]
        G = (g / tv ** 2)[:, None] * times[None, :] * E

        sum_e = E.sum(axis=1)
        sum_g = G.sum(axis=1)
        sum_ee = np.einsum("pn,pn->p", E, E)
        sum_eg = np.einsum("pn,pn->p", E, G)
        sum_gg = np.einsum("pn,pn->p", G, G)
        jtr = np.stack([resid.sum(axis=1),
                        np.einsum("pn,pn->p", E, resid),
                        np.einsum("pn,pn->p", G, resid)], axis=1)
        grad_small = np.abs(jtr).max(axis=1) <= config.rel_tolerance

        jtj = np.empty((active.size, 3, 3))
        jtj[:, 0, 0] = n
        jtj[:, 0, 1] = jtj[:, 1, 0] = sum_e
        jtj[:, 0, 2] = jtj[:, 2, 0] = sum_g
        jtj[:, 1, 1] = sum_ee
        jtj[:, 1, 2] = jtj[:, 2, 1] = sum_eg
        jtj[:, 2, 2] = sum_gg
        diag = np.stack([jtj[:, 0, 0], sum_ee, sum_gg], axis=1)
        # keep the damped system nonsingular even when a Jacobian column
        # vanishes (gamma = 0 zeroes the tau column)
        diag = np.maximum(diag, 1e-12 * diag.max(axis=1, keepdims=True))
        damped = jtj.copy()
        damped[:, [0, 1, 2], [0, 1, 2]] += la[:, None] * diag
        step = np.linalg.solve(damped, jtr[:, :, None])[:, :, 0]

        e_new = e + step[:, 0]
        g_new = g + step[:, 1]
        t_new = np.clip(tv + step[:, 2], tau_floor, tau_ceil)
        E_new = np.exp(-times[None, :] / t_new[:, None])
        resid_new = values[active] - (e_new[:, None] + g_new[:, None] * E_new)
        cost_new = np.einsum("pn,pn->p", resid_new, resid_new)

        accept = cost_new < cost
        assert np.all(cost_new[accept] <= cost[accept])  # accepted cost never rises
        iterations[active] += 1

        acc_idx = active[accept]
        eta[acc_idx] = e_new[accept]
        gamma[acc_idx] = g_new[accept]
        tau[acc_idx] = t_new[accept]
        lam[acc_idx] = la[accept] / config.damping_down
        rej_idx = active[~accept]
        lam[rej_idx] = np.minimum(la[~accept] * config.damping_up, _DAMPING_CAP)

        small_reduction = accept & ((cost - cost_new) <= config.rel_tolerance * cost)
        done = small_reduction | grad_small
        cost = np.where(accept, cost_new, cost)
        cost_out[active] = cost
        converged[active[done]] = True

        keep = ~done
        E = np.where(accept[:, None], E_new, E)[keep]
        resid = np.where(accept[:, None], resid_new, resid)[keep]
        cost = cost[keep]
        active = active[keep]

    return eta, gamma, tau, np.sqrt(cost_out), iterations, converged


def fit_exponential(times, values, config: LMConfig = LMConfig()) -> ExpFit:
    """Fit the creep model to a single curve.

    times must be strictly increasing with at least 4 samples.  A constant
    curve cannot constrain tau and is reported as non-converged with
    gamma = 0 rather than raising.
    """
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if times.ndim != 1 or values.shape != times.shape:
        raise ValueError("times and values must be matching 1-D vectors")
    if times.size < 4:
        raise ValueError(f"need at least 4 samples, got {times.size}")
    if not np.all(np.diff(times) > 0):
        raise ValueError("times must be strictly increasing")
    eta, gamma, tau, rnorm, iters, conv = _lm_engine(times, values[None, :], config)
    return ExpFit(float(eta[0]), float(gamma[0]), float(tau[0]),
                  float(rnorm[0]), int(iters[0]), bool(conv[0]))


def fit_stack(stack: StrainStack, config: LMConfig = LMConfig(),
              truth: Optional[np.ndarray] = None) -> TCImage:
    """Fit every pixel of a cumulative stack and assemble the TC image.

    The input must already be cumulative; use cumulate() on incremental
    stacks first.
    """
    if stack.kind != "cumulative":
        raise ValueError("fit_stack expects a cumulative stack; apply cumulate() first")
    n, height, width = stack.frames.shape
    if n < 4:
        raise ValueError(f"need at least 4 frames, got {n}")
    times = frame_times(n, stack.sample_time_s)
    values = stack.frames.reshape(n, height * width).T
    _, _, tau, _, _, conv = _lm_engine(times, values, config)
    if truth is not None:
        truth = np.asarray(truth, dtype=np.float64)
        if truth.shape != (height, width):
            raise ValueError(f"truth map shape {truth.shape} does not match {(height, width)}")
    return TCImage(tau.reshape(height, width), conv.reshape(height, width), truth)


def cumulate(stack: StrainStack) -> StrainStack:
    """Running sum of an incremental stack along the frame axis."""
    if stack.kind != "incremental":
        raise ValueError("cumulate expects an incremental stack")
    return StrainStack(np.cumsum(stack.frames, axis=0), stack.sample_time_s, "cumulative")

