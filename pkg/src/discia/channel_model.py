"""
K-user interference channel realizations.

Channels live in a real signal space of dimension ``n`` (default 2). A
cross link ``H_ij`` is a scaled planar rotation whose gain is set by the
interference strength ``alpha_ij`` relative to the direct-link SNR; direct
links are the identity. Noise is white with variance ``sigma2`` per real
dimension, ``sigma2 = 10**(-snr_db / 10)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = [
    "ChannelConfig",
    "ChannelSet",
    "gain_from_alpha",
    "rotation_channel",
    "build_channel_set",
    "reciprocal",
    "load_channel_config",
    "save_channel_config",
    "median_channel_config",
]

THETA_POLICIES = ("symmetric", "fixed", "random")


def gain_from_alpha(alpha, snr_db):
    """Cross-link amplitude gain for interference strength ``alpha``.

    The gain is ``SNR ** ((alpha - 1) / 2)`` so that the resulting
    interference-to-noise ratio is ``SNR ** alpha``.

    Parameters
    ----------
    alpha : float or array_like
        Interference strength, ``log INR / log SNR``.
    snr_db : float
        Direct-link SNR in dB. Must be positive.

    Returns
    -------
    float or np.ndarray
    """
    if not snr_db > 0:
        raise ValueError(f"snr_db must be > 0 for the alpha parameterization, got {snr_db}")
    snr_lin = 10.0 ** (snr_db / 10.0)
    gain = snr_lin ** ((np.asarray(alpha, dtype=float) - 1.0) / 2.0)
    return float(gain) if np.ndim(gain) == 0 else gain


def rotation_channel(gain, theta, n=2):
    """Return ``gain * Rot(theta)`` for n == 2, ``gain * I`` otherwise."""
    if n == 2:
        c, s = np.cos(theta), np.sin(theta)
        return gain * np.array([[c, -s], [s, c]])
    if theta != 0:
        raise ValueError(f"a nonzero rotation needs n == 2 (got n={n}, theta={theta})")
    return gain * np.eye(n)


@dataclass
class ChannelConfig:
    """Parameterization of a K-user channel.

    ``theta`` is ignored for the random policy, a scalar (radians) for the
    symmetric policy and a K x K matrix (radians) for the fixed policy.
    ``alpha`` may be a scalar, broadcast to every cross link.
    """

    num_users: int
    snr_db: float
    alpha: np.ndarray | float = 0.9
    theta_policy: str = "random"
    theta: np.ndarray | float | None = None
    real_dim: int = 2

    def __post_init__(self):
        if self.num_users < 1 or self.real_dim < 1:
            raise ValueError("num_users and real_dim must be positive")
        if self.theta_policy not in THETA_POLICIES:
            raise ValueError(f"unknown theta policy {self.theta_policy!r}")
        K = self.num_users
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.ndim == 0:
            alpha = np.full((K, K), float(alpha))
        if alpha.shape != (K, K):
            raise ValueError(f"alpha must be {K}x{K}, got shape {alpha.shape}")
        if not np.all(np.isfinite(alpha)):
            raise ValueError("alpha entries must be finite")
        self.alpha = alpha
        if self.theta_policy == "symmetric":
            if self.theta is None:
                raise ValueError("symmetric policy needs a scalar theta")
            self.theta = float(self.theta)
        elif self.theta_policy == "fixed":
            theta = np.asarray(self.theta, dtype=float)
            if theta.shape != (K, K):
                raise ValueError(f"fixed theta must be {K}x{K}")
            if np.any(np.diag(theta) != 0):
                raise ValueError("direct-link angles must be 0")
            self.theta = theta

    def theta_matrix(self, rng_seed=None):
        K = self.num_users
        if self.theta_policy == "symmetric":
            theta = np.full((K, K), self.theta)
        elif self.theta_policy == "fixed":
            theta = np.array(self.theta, dtype=float)
        else:
            rng = np.random.default_rng(rng_seed)
            theta = rng.uniform(-np.pi / 2, np.pi / 2, size=(K, K))
        np.fill_diagonal(theta, 0.0)
        return theta


@dataclass
class ChannelSet:
    """Bank of K x K real ``n x n`` channel matrices plus noise variance.

    ``H[i, j]`` maps transmitter ``j`` onto receiver ``i``.
    """

    H: np.ndarray
    sigma2: float
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def num_users(self):
        return self.H.shape[0]

    @property
    def dim(self):
        return self.H.shape[2]

    def __eq__(self, other):
        if not isinstance(other, ChannelSet):
            return NotImplemented
        return self.sigma2 == other.sigma2 and np.array_equal(self.H, other.H)


def build_channel_set(cfg: ChannelConfig, rng_seed=None) -> ChannelSet:
    """Realize a channel from its configuration.

    The seed only matters for the random theta policy.
    """
    K, n = cfg.num_users, cfg.real_dim
    theta = cfg.theta_matrix(rng_seed)
    if n != 2:
        theta = np.zeros_like(theta)
    H = np.empty((K, K, n, n))
    for i in range(K):
        for j in range(K):
            if i == j:
                H[i, j] = np.eye(n)
            else:
                g = gain_from_alpha(cfg.alpha[i, j], cfg.snr_db)
                H[i, j] = rotation_channel(g, theta[i, j], n)
    sigma2 = 10.0 ** (-cfg.snr_db / 10.0)
    return ChannelSet(H, sigma2, meta={"theta": theta, "snr_db": cfg.snr_db})


def reciprocal(ch: ChannelSet) -> ChannelSet:
    """Reverse-direction channel: ``Hbar[j, i] = H[i, j].T``."""
    Hbar = np.transpose(ch.H, (1, 0, 3, 2)).copy()
    return ChannelSet(Hbar, ch.sigma2, meta=dict(ch.meta))


def load_channel_config(path) -> ChannelConfig:
    """Read a channel fixture ``{K, n, snr_db, alpha, theta_deg}``."""
    data = json.loads(Path(path).read_text())
    return _config_from_fixture(data)


def _config_from_fixture(data):
    K = int(data["K"])
    alpha = np.asarray(data["alpha"], dtype=float)
    theta = np.deg2rad(np.asarray(data["theta_deg"], dtype=float))
    if alpha.ndim == 2:
        alpha = alpha.copy()
        np.fill_diagonal(alpha, 0.0)
    return ChannelConfig(
        num_users=K,
        snr_db=float(data["snr_db"]),
        alpha=alpha,
        theta_policy="fixed",
        theta=theta,
        real_dim=int(data.get("n", 2)),
    )


def save_channel_config(cfg: ChannelConfig, path, rng_seed=None):
    """Write the fixture form of ``cfg``; random angles are frozen by ``rng_seed``."""
    theta = cfg.theta_matrix(rng_seed)
    data = {
        "K": cfg.num_users,
        "n": cfg.real_dim,
        "snr_db": float(cfg.snr_db),
        "alpha": np.asarray(cfg.alpha).tolist(),
        "theta_deg": np.rad2deg(theta).tolist(),
    }
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


def median_channel_config() -> ChannelConfig:
    """The shipped 3-user median channel (alpha 0.9, 18 dB)."""
    text = resources.files("discia").joinpath("fixtures/median_channel.json").read_text()
    return _config_from_fixture(json.loads(text))
