"""
Iterative MaxSINR beamforming for the K-user interference channel.

Each iteration computes the MaxSINR combiners on the forward channel, then
swaps roles on the reciprocal channel (combiners become precoders) and
computes the reverse combiners, which become the new forward precoders.
Several random restarts are run and the one with the best Gaussian-input
sumrate is kept.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel_model import ChannelSet, reciprocal

__all__ = [
    "BeamformerSet",
    "MaxSinrConfig",
    "interference_covariance",
    "max_sinr_combiner",
    "sinr",
    "gaussian_sumrate",
    "run_maxsinr",
]


@dataclass
class BeamformerSet:
    """Per-user precoders ``V``, combiners ``U`` (rows, unit norm) and powers ``P``."""

    V: np.ndarray
    U: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        self.V = np.atleast_2d(np.asarray(self.V, dtype=float))
        self.U = np.atleast_2d(np.asarray(self.U, dtype=float))
        self.P = np.asarray(self.P, dtype=float).reshape(-1)

    @property
    def num_users(self):
        return self.V.shape[0]

    def to_dict(self):
        return {"V": self.V.tolist(), "U": self.U.tolist(), "P": self.P.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(data["V"], data["U"], data["P"])

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class MaxSinrConfig:
    num_runs: int = 10
    max_iters: int = 200
    tol: float = 1e-8
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_runs < 1 or self.max_iters < 1 or not self.tol > 0:
            raise ValueError("num_runs, max_iters and tol must be positive")


def _interference_only(i, ch, bf):
    n = ch.dim
    B = np.zeros((n, n))
    for j in range(ch.num_users):
        if j == i:
            continue
        hv = ch.H[i, j] @ bf.V[j]
        B += bf.P[j] * np.outer(hv, hv)
    return B


def interference_covariance(i, ch: ChannelSet, bf: BeamformerSet):
    """Interference-plus-noise covariance ``B_i`` seen by receiver ``i``."""
    return _interference_only(i, ch, bf) + ch.sigma2 * np.eye(ch.dim)


def max_sinr_combiner(i, ch: ChannelSet, bf: BeamformerSet):
    """Unit-norm ``B_i^{-1} H_ii V_i``."""
    B = interference_covariance(i, ch, bf)
    u = np.linalg.solve(B, ch.H[i, i] @ bf.V[i])
    return u / np.linalg.norm(u)


def sinr(i, ch: ChannelSet, bf: BeamformerSet, u=None):
    """SINR of user ``i`` after combining with ``u`` (defaults to ``bf.U[i]``).

    Noise enters the denominator once: interference power plus ``sigma2``.
    """
    u = bf.U[i] if u is None else u
    gain = u @ ch.H[i, i] @ bf.V[i]
    leak = u @ _interference_only(i, ch, bf) @ u
    return bf.P[i] * gain**2 / (leak + ch.sigma2)


def gaussian_sumrate(ch: ChannelSet, bf: BeamformerSet):
    """Sum over users of ``log2(1 + SINR_i)`` in bits per channel use."""
    return float(sum(np.log2(1.0 + sinr(i, ch, bf)) for i in range(ch.num_users)))


def _update_combiners(ch, V, P):
    bf = BeamformerSet(V, V, P)
    return np.array([max_sinr_combiner(i, ch, bf) for i in range(ch.num_users)])


def _single_run(ch, rch, V, P, max_iters, tol, trace=None):
    prev = None
    for _ in range(max_iters):
        U = _update_combiners(ch, V, P)
        bf = BeamformerSet(V, U, P)
        rate = gaussian_sumrate(ch, bf)
        if trace is not None:
            trace.append(rate)
        if prev is not None and abs(rate - prev) <= tol * max(abs(prev), 1e-300):
            break
        prev = rate
        # reciprocal half-step: the combiners transmit back
        V = _update_combiners(rch, U, P)
    return bf, rate


def run_maxsinr(ch: ChannelSet, cfg: MaxSinrConfig | None = None, return_all=False):
    """Best-of-``num_runs`` MaxSINR beamformers with unit powers.

    Run ``r`` draws its initial precoders from a stream keyed by
    ``(rng_seed, r)``, so each run is independent of how many runs precede
    it. Ties go to the lowest run index.

    Parameters
    ----------
    ch : ChannelSet
    cfg : MaxSinrConfig, optional
    return_all : bool
        Also return the list of per-run best sumrates.

    Returns
    -------
    BeamformerSet or (BeamformerSet, list of float)
    """
    cfg = cfg or MaxSinrConfig()
    K, n = ch.num_users, ch.dim
    P = np.ones(K)
    rch = reciprocal(ch)
    best, best_rate, rates = None, -np.inf, []
    for r in range(cfg.num_runs):
        rng = np.random.default_rng([cfg.rng_seed, r])
        V = rng.standard_normal((K, n))
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        bf, rate = _single_run(ch, rch, V, P, cfg.max_iters, cfg.tol)
        rates.append(rate)
        if rate > best_rate:
            best, best_rate = bf, rate
    if return_all:
        return best, rates
    return best
