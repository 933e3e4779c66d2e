"""
Discrete messages over the interference channel.

PAM modulation, noise-free receive codebooks, the maximum-likelihood
decoder that marginalizes over uniformly distributed interferer messages,
its temperature-softened variant, Monte-Carlo transition matrices and the
mutual information / sumrate computed from them. Rates are in bits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel_model import ChannelSet

__all__ = [
    "SystemEncoders",
    "Codebook",
    "TransitionMatrix",
    "pam_constellation",
    "build_codebook",
    "log_likelihoods",
    "likelihoods",
    "posterior",
    "ml_decode",
    "soft_posterior",
    "transition_matrix_mc",
    "mutual_information",
    "sumrate_eval",
    "DEFAULT_CODEBOOK_CAP",
]

DEFAULT_CODEBOOK_CAP = 10**6
_CHUNK = 4096


def pam_constellation(M):
    """Unit-power ``M``-PAM points in ascending order.

    >>> pam_constellation(2)
    array([-1.,  1.])
    """
    M = int(M)
    if M < 2 or M & (M - 1):
        raise ValueError(f"alphabet size must be a power of two >= 2, got {M}")
    levels = np.arange(-(M - 1), M, 2, dtype=float)
    return levels / np.sqrt((M * M - 1) / 3.0)


@dataclass
class SystemEncoders:
    """Encoders ``w -> sqrt(P_i) * V_i * points[i, w]`` for every user.

    Attributes
    ----------
    points : (K, M) array
        Per-user real constellations.
    V : (K, n) array
        Unit-norm precoders.
    P : (K,) array
        Powers in [0, 1].
    """

    points: np.ndarray
    V: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.V = np.atleast_2d(np.asarray(self.V, dtype=float))
        self.P = np.asarray(self.P, dtype=float).reshape(-1)
        if not (self.points.shape[0] == self.V.shape[0] == self.P.shape[0]):
            raise ValueError("points, V and P must agree on the number of users")

    @property
    def num_users(self):
        return self.points.shape[0]

    @property
    def alphabet(self):
        return self.points.shape[1]

    @classmethod
    def from_beamformers(cls, bf, M):
        """PAM symbols on the MaxSINR precoders (the DISC-MaxSINR encoder)."""
        pts = np.tile(pam_constellation(M), (bf.num_users, 1))
        return cls(pts, bf.V.copy(), bf.P.copy())

    def transmit_points(self):
        """``(K, M, n)`` array of transmitted vectors."""
        return np.sqrt(self.P)[:, None, None] * self.points[:, :, None] * self.V[:, None, :]

    def to_dict(self):
        return {"points": self.points.tolist(), "V": self.V.tolist(), "P": self.P.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(data["points"], data["V"], data["P"])


@dataclass
class Codebook:
    """Noise-free receive points at one receiver.

    ``points[w, k]`` is the point for own message ``w`` and the ``k``-th
    interferer tuple, tuples enumerated lexicographically over the other
    users in increasing user order.
    """

    receiver: int
    points: np.ndarray

    @property
    def alphabet(self):
        return self.points.shape[0]

    @property
    def cluster_size(self):
        return self.points.shape[1]

    def to_dict(self):
        return {"receiver": self.receiver, "points": self.points.tolist()}


@dataclass
class TransitionMatrix:
    """Joint table ``joint[w, l] = P(W = w, What = l)``."""

    joint: np.ndarray

    def __post_init__(self):
        self.joint = np.asarray(self.joint, dtype=float)

    def to_dict(self):
        return {"joint": self.joint.tolist()}


def received_grid(i, encoders: SystemEncoders, ch: ChannelSet):
    """Noise-free receive points for every message tuple, shape ``(M,)*K + (n,)``."""
    X = encoders.transmit_points()
    K, M, n = X.shape
    grid = np.zeros((M,) * K + (n,))
    for j in range(K):
        contrib = X[j] @ ch.H[i, j].T
        shape = [1] * K + [n]
        shape[j] = M
        grid = grid + contrib.reshape(shape)
    return grid


def build_codebook(i, encoders: SystemEncoders, ch: ChannelSet, cap=DEFAULT_CODEBOOK_CAP):
    """Enumerate the ``M**(K-1)`` interfered points per own message at receiver ``i``."""
    K, M = encoders.num_users, encoders.alphabet
    if M ** (K - 1) > cap:
        raise ValueError(f"{M}**{K - 1} interferer tuples exceeds the codebook cap {cap}")
    grid = np.moveaxis(received_grid(i, encoders, ch), i, 0)
    return Codebook(i, grid.reshape(M, M ** (K - 1), ch.dim))


def _exponents(y, pts, sigma2):
    """``-||y - p||^2 / (2 sigma2)`` for rows of ``y`` against flat ``pts``."""
    d = y[:, None, :] - pts[None, :, :]
    return -np.einsum("nkd,nkd->nk", d, d) / (2.0 * sigma2)


def log_likelihoods(y, cb: Codebook, sigma2):
    """Log of the unnormalized likelihood of every own message.

    Parameters
    ----------
    y : (n,) or (N, n) array
    cb : Codebook
    sigma2 : float

    Returns
    -------
    (M,) or (N, M) array
        ``log sum_k exp(-||y - points[w, k]||^2 / (2 sigma2))``, reduced with
        the largest exponent factored out.
    """
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    Y = np.atleast_2d(y)
    M, C, n = cb.points.shape
    out = np.empty((Y.shape[0], M))
    flat = cb.points.reshape(M * C, n)
    for s in range(0, Y.shape[0], _CHUNK):
        e = _exponents(Y[s:s + _CHUNK], flat, sigma2).reshape(-1, M, C)
        top = e.max(axis=2, keepdims=True)
        out[s:s + _CHUNK] = top[..., 0] + np.log(np.exp(e - top).sum(axis=2))
    return out[0] if single else out


def likelihoods(y, cb: Codebook, sigma2):
    """``sum_k exp(-||y - points[w, k]||^2 / (2 sigma2))`` for every own message."""
    return np.exp(log_likelihoods(y, cb, sigma2))


def _normalize_logs(logl):
    top = logl.max(axis=-1, keepdims=True)
    p = np.exp(logl - top)
    return p / p.sum(axis=-1, keepdims=True)


def posterior(y, cb: Codebook, sigma2):
    """Posterior over own messages under uniform priors."""
    return _normalize_logs(log_likelihoods(y, cb, sigma2))


def ml_decode(y, cb: Codebook, sigma2):
    """Maximum-likelihood message index (ties go to the lowest index)."""
    return np.argmax(log_likelihoods(y, cb, sigma2), axis=-1)


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    q = np.exp(z)
    return q / q.sum(axis=-1, keepdims=True)


def soft_posterior(y, cb: Codebook, sigma2, beta):
    """``softmax(beta * posterior)``; uniform at ``beta = 0``, ML argmax as beta grows."""
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    return _softmax(beta * posterior(y, cb, sigma2))


def _project(cb: Codebook, combiner):
    u = np.asarray(combiner, dtype=float)
    return Codebook(cb.receiver, (cb.points @ u)[..., None])


def transition_matrix_mc(encoders: SystemEncoders, ch: ChannelSet, i, N, mode="hard",
                         beta=None, rng_seed=0, combiner=None):
    """Monte-Carlo joint table of (sent, decoded) messages for user ``i``.

    For every own message ``N`` receptions are drawn with uniform interferer
    messages and white Gaussian noise. Hard mode counts ML decisions, soft
    mode accumulates ``soft_posterior`` rows. Each row is scaled by ``1/M``.

    If ``combiner`` is given the receiver first projects onto it and decodes
    the scalar output against the equally projected codebook.

    The draws depend only on ``(rng_seed, i)``, so hard and soft modes, and
    the linear and full receivers, see the same samples.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if mode not in ("hard", "soft"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "soft" and beta is None:
        raise ValueError("soft mode needs beta")
    cb = build_codebook(i, encoders, ch)
    M, C, n = cb.points.shape
    rng = np.random.default_rng([rng_seed, i])
    tuples = rng.integers(0, C, size=(M, N))
    noise = rng.standard_normal((M, N, n)) * np.sqrt(ch.sigma2)
    dec_cb = cb if combiner is None else _project(cb, combiner)
    joint = np.zeros((M, M))
    for w in range(M):
        y = cb.points[w, tuples[w]] + noise[w]
        if combiner is not None:
            y = y @ np.asarray(combiner, dtype=float)[:, None]
        if mode == "hard":
            joint[w] = np.bincount(ml_decode(y, dec_cb, ch.sigma2), minlength=M) / N
        else:
            joint[w] = soft_posterior(y, dec_cb, ch.sigma2, beta).mean(axis=0)
    return TransitionMatrix(joint / M)


def mutual_information(tm):
    """``I(W; What)`` in bits from a joint table (``0 log 0 = 0``)."""
    joint = tm.joint if isinstance(tm, TransitionMatrix) else np.asarray(tm, dtype=float)
    pw = joint.sum(axis=1, keepdims=True)
    pl = joint.sum(axis=0, keepdims=True)
    mask = joint > 0
    ratio = np.where(mask, joint, 1.0) / np.where(mask, pw * pl, 1.0)
    mi = float(np.sum(np.where(mask, joint * np.log2(ratio), 0.0)))
    return max(mi, 0.0)


def sumrate_eval(encoders: SystemEncoders, ch: ChannelSet, N=10**5, rng_seed=0, combiners=None):
    """Per-user hard-decision rates and their sum.

    Returns
    -------
    rates : (K,) array
    total : float
    """
    rates = np.empty(encoders.num_users)
    for i in range(encoders.num_users):
        u = None if combiners is None else combiners[i]
        tm = transition_matrix_mc(encoders, ch, i, N, "hard", rng_seed=rng_seed, combiner=u)
        rates[i] = mutual_information(tm)
    return rates, float(rates.sum())


def save_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
