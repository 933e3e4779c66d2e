"""
Trainable encoder: modulation, precoding and power layers.

User ``i`` sends ``sqrt(p_i) * v_i * c_i[w]`` where ``c_i`` is an
antisymmetric constellation built from its upper half ``m_free``. The
decoder is the analytic ML decoder softened by a softmax of temperature
``beta`` over the posterior; the loss is the negative sum of the mutual
informations of the resulting soft transition matrices, estimated on a
batch of messages and noise.

Gradients are computed by a hand-written reverse pass through the whole
pipeline (constellation normalization, codebook construction, received
samples, log-sum-exp posteriors, softmax, mutual information). The
forward pass normalizes the constellation and precoder itself, so the
gradient has no component along the directions the projection removes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .channel_model import ChannelSet
from .discrete_link import SystemEncoders, pam_constellation

__all__ = [
    "EncoderParams",
    "TrainConfig",
    "TrainHistory",
    "TrainingDiverged",
    "AdamState",
    "encode",
    "project_constraints",
    "pretrain_init",
    "random_init",
    "draw_batch",
    "soft_loss",
    "gradient",
    "loss_and_grad",
    "adam_step",
    "train",
]

_LN2 = math.log(2.0)


class TrainingDiverged(RuntimeError):
    """Loss became non-finite at ``epoch``."""

    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


@dataclass
class EncoderParams:
    """Encoder parameters of all users, one row per user.

    Attributes
    ----------
    m_free : (K, M/2) array
        Upper half of each constellation; the lower half is its mirror
        ``-m_free[::-1]``.
    v : (K, n) array
        Precoders.
    p : (K,) array
        Powers.
    beta : (K,) array
        Soft-decoder temperatures.
    """

    m_free: np.ndarray
    v: np.ndarray
    p: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.m_free = np.atleast_2d(np.asarray(self.m_free, dtype=float))
        self.v = np.atleast_2d(np.asarray(self.v, dtype=float))
        K = self.m_free.shape[0]
        self.p = np.broadcast_to(np.asarray(self.p, dtype=float), (K,)).copy()
        self.beta = np.broadcast_to(np.asarray(self.beta, dtype=float), (K,)).copy()

    @property
    def num_users(self):
        return self.m_free.shape[0]

    @property
    def alphabet(self):
        return 2 * self.m_free.shape[1]

    def copy(self):
        return EncoderParams(self.m_free.copy(), self.v.copy(), self.p.copy(), self.beta.copy())

    def constellation(self):
        """Full ``(K, M)`` constellations."""
        return np.concatenate([-self.m_free[:, ::-1], self.m_free], axis=1)

    def to_system(self):
        return SystemEncoders(self.constellation(), self.v.copy(), self.p.copy())

    def pack(self, trainable_beta=False):
        parts = [self.m_free.ravel(), self.v.ravel(), self.p]
        if trainable_beta:
            parts.append(self.beta)
        return np.concatenate(parts)

    def unpack(self, flat, trainable_beta=False):
        """New params with values from ``flat`` (inverse of ``pack``)."""
        K, h = self.m_free.shape
        n = self.v.shape[1]
        a, b, c = K * h, K * h + K * n, K * h + K * n + K
        beta = flat[c:c + K] if trainable_beta else self.beta
        return EncoderParams(flat[:a].reshape(K, h), flat[a:b].reshape(K, n), flat[b:c], beta)

    def to_dict(self):
        c = self.constellation()
        return {
            "users": [
                {"constellation": c[i].tolist(), "v": self.v[i].tolist(),
                 "p": float(self.p[i]), "beta": float(self.beta[i])}
                for i in range(self.num_users)
            ]
        }

    @classmethod
    def from_dict(cls, data):
        users = data["users"]
        c = np.array([u["constellation"] for u in users], dtype=float)
        h = c.shape[1] // 2
        return cls(c[:, h:], [u["v"] for u in users], [u["p"] for u in users],
                   [u["beta"] for u in users])

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def encode(w, params: EncoderParams, i):
    """Transmit vector of user ``i`` for message ``w``."""
    M = params.alphabet
    if not 0 <= w < M:
        raise IndexError(f"message {w} out of range for alphabet {M}")
    c = params.constellation()[i, w]
    return np.sqrt(params.p[i]) * c * params.v[i]


def project_constraints(params: EncoderParams):
    """Unit-power constellations, unit-norm precoders, ``p`` in [0, 1], ``beta >= 0``."""
    rms = np.sqrt(np.mean(params.m_free**2, axis=1, keepdims=True))
    norms = np.linalg.norm(params.v, axis=1, keepdims=True)
    if np.any(rms == 0):
        raise ValueError("cannot normalize an all-zero constellation")
    if np.any(norms == 0):
        raise ValueError("cannot normalize an all-zero precoder")
    return EncoderParams(
        params.m_free / rms,
        params.v / norms,
        np.clip(params.p, 0.0, 1.0),
        np.maximum(params.beta, 0.0),
    )


def pretrain_init(bf, M, beta=20.0):
    """PAM constellations on the MaxSINR precoders at full power."""
    K = bf.num_users
    half = pam_constellation(M)[M // 2:]
    return EncoderParams(np.tile(half, (K, 1)), bf.V.copy(), np.ones(K), np.full(K, float(beta)))


def random_init(K, M, n, rng_seed, beta=20.0):
    """Gaussian constellation entries and isotropic precoders, projected; ``p = 1``."""
    rng = np.random.default_rng(rng_seed)
    m = rng.standard_normal((K, M // 2))
    v = rng.standard_normal((K, n))
    return project_constraints(EncoderParams(m, v, np.ones(K), np.full(K, float(beta))))


def draw_batch(K, M, n, batch_size, sigma2, rng):
    """Message tuples balanced per user and per-receiver noise.

    Returns
    -------
    batch : (B, K) int array
    noise : (K, B, n) array
    """
    base = np.arange(batch_size) % M
    batch = np.stack([rng.permutation(base) for _ in range(K)], axis=1)
    noise = rng.standard_normal((K, batch_size, n)) * np.sqrt(sigma2)
    return batch, noise


def _full_grid(contribs, i, K, M, n):
    """Codebook of receiver ``i`` flattened to ``(M**K, n)``, own message major."""
    grid = np.zeros((M,) * K + (n,))
    for j in range(K):
        shape = [1] * K + [n]
        shape[j] = M
        grid = grid + contribs[j].reshape(shape)
    return np.moveaxis(grid, i, 0).reshape(M**K, n)


def _grid_grad_to_contribs(gS, i, K, M, n):
    g = np.moveaxis(gS.reshape((M,) * K + (n,)), 0, i)
    out = []
    for j in range(K):
        axes = tuple(a for a in range(K) if a != j)
        out.append(g.sum(axis=axes))
    return out


def loss_and_grad(params: EncoderParams, ch: ChannelSet, batch, noise, need_grad=True):
    """Soft-decoder loss, per-user soft MI and (optionally) the gradient.

    Parameters
    ----------
    params : EncoderParams
        Feasible parameters.
    ch : ChannelSet
    batch : (B, K) int array
        Message tuples.
    noise : (K, B, n) array
        Noise already scaled to variance ``ch.sigma2``; held fixed so that
        the loss is a deterministic function of ``params``.
    need_grad : bool

    Returns
    -------
    loss : float
    mi : (K,) array
        Soft mutual information per user, bits.
    grads : EncoderParams or None
        Derivatives with respect to every field of ``params``.
    """
    K, M = params.num_users, params.alphabet
    n = ch.dim
    B = batch.shape[0]
    s2 = ch.sigma2

    # encoder forward
    full = params.constellation()
    rms = np.sqrt(np.mean(full**2, axis=1))
    chat = full / rms[:, None]
    vnorm = np.linalg.norm(params.v, axis=1)
    vhat = params.v / vnorm[:, None]
    amp = np.sqrt(params.p)
    X = amp[:, None, None] * chat[:, :, None] * vhat[:, None, :]

    onehots = [np.eye(M)[batch[:, j]] for j in range(K)]
    gX = np.zeros_like(X)
    gbeta = np.zeros(K)
    mi = np.zeros(K)

    for i in range(K):
        contribs = [X[j] @ ch.H[i, j].T for j in range(K)]
        S = _full_grid(contribs, i, K, M, n)
        Y = noise[i].copy()
        for j in range(K):
            Y += contribs[j][batch[:, j]]

        e = (Y @ S.T) / s2 - (np.sum(S * S, axis=1) / (2 * s2))[None, :]
        e -= (np.sum(Y * Y, axis=1) / (2 * s2))[:, None]
        e -= e.max(axis=1, keepdims=True)
        r = np.exp(e)
        r /= r.sum(axis=1, keepdims=True)
        post = r.reshape(B, M, -1).sum(axis=2)

        z = params.beta[i] * post
        z -= z.max(axis=1, keepdims=True)
        Q = np.exp(z)
        Q /= Q.sum(axis=1, keepdims=True)

        own = onehots[i]
        counts = own.sum(axis=0)
        T = (own.T @ Q) / (counts[:, None] * M)
        pw = T.sum(axis=1, keepdims=True)
        pl = T.sum(axis=0, keepdims=True)
        logratio = np.log(np.maximum(T, 1e-300) / (pw * pl))
        mi[i] = np.sum(T * logratio) / _LN2

        if not need_grad:
            continue

        gT = -logratio / _LN2
        gQ = (own / (counts * M)) @ gT
        gz = Q * (gQ - np.sum(Q * gQ, axis=1, keepdims=True))
        gbeta[i] = np.sum(gz * post)
        gpost = params.beta[i] * gz
        centered = gpost - np.sum(gpost * post, axis=1, keepdims=True)
        ge = (r.reshape(B, M, -1) * centered[:, :, None]).reshape(B, -1)

        gY = (ge @ S - ge.sum(axis=1)[:, None] * Y) / s2
        gS = (ge.T @ Y - ge.sum(axis=0)[:, None] * S) / s2
        gcontribs = _grid_grad_to_contribs(gS, i, K, M, n)
        for j in range(K):
            gc = gcontribs[j] + onehots[j].T @ gY
            gX[j] += gc @ ch.H[i, j]

    loss = -float(mi.sum())
    if not need_grad:
        return loss, mi, None

    # encoder backward
    gamp = np.einsum("kmd,km,kd->k", gX, chat, vhat)
    gvhat = amp[:, None] * np.einsum("kmd,km->kd", gX, chat)
    gchat = amp[:, None] * np.einsum("kmd,kd->km", gX, vhat)
    gp = gamp / (2.0 * np.sqrt(np.maximum(params.p, 1e-12)))
    gv = (gvhat - vhat * np.sum(vhat * gvhat, axis=1, keepdims=True)) / vnorm[:, None]
    gfull = (gchat - chat * np.sum(chat * gchat, axis=1, keepdims=True) / M) / rms[:, None]
    h = M // 2
    gm = gfull[:, h:] - gfull[:, :h][:, ::-1]
    return loss, mi, EncoderParams(gm, gv, gp, gbeta)


def soft_loss(params: EncoderParams, ch: ChannelSet, batch, noise):
    """Negative soft sumrate in bits."""
    return loss_and_grad(params, ch, batch, noise, need_grad=False)[0]


def gradient(params: EncoderParams, ch: ChannelSet, batch, noise):
    """Gradient of ``soft_loss`` as an ``EncoderParams`` of partial derivatives."""
    return loss_and_grad(params, ch, batch, noise)[2]


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size):
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(params: EncoderParams, state: AdamState, grads: EncoderParams, lr,
              b1=0.9, b2=0.999, eps=1e-8, trainable_beta=False):
    """One bias-corrected Adam update followed by projection.

    Returns new ``(params, state)``; the inputs are not modified.
    """
    g = grads.pack(trainable_beta)
    t = state.t + 1
    m = b1 * state.m + (1 - b1) * g
    v = b2 * state.v + (1 - b2) * g * g
    mhat = m / (1 - b1**t)
    vhat = v / (1 - b2**t)
    flat = params.pack(trainable_beta) - lr * mhat / (np.sqrt(vhat) + eps)
    return project_constraints(params.unpack(flat, trainable_beta)), AdamState(m, v, t)


@dataclass
class TrainConfig:
    """Training hyperparameters.

    ``init`` is ``"pretrained"`` or ``"random"``; ``beta_policy`` is
    ``"fixed"`` or ``"trainable"``. If ``mc_samples_per_message`` is set the
    batch holds that many samples per message value.
    """

    batch_size: int = 10000
    epochs: int = 500
    learning_rate: float = 1e-3
    adam_b1: float = 0.9
    adam_b2: float = 0.999
    adam_eps: float = 1e-8
    beta_policy: str = "fixed"
    beta_init: float = 20.0
    init: str = "pretrained"
    init_seed: int = 0
    mc_samples_per_message: int | None = None
    early_stop: bool = True
    early_stop_window: int = 50
    early_stop_delta: float = 1e-4
    rng_seed: int = 0

    def __post_init__(self):
        if self.beta_policy not in ("fixed", "trainable"):
            raise ValueError(f"unknown beta policy {self.beta_policy!r}")
        if self.init not in ("pretrained", "random"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.batch_size < 1 or self.epochs < 1 or self.learning_rate < 0:
            raise ValueError("batch_size and epochs must be positive, learning_rate >= 0")

    def effective_batch(self, M):
        if self.mc_samples_per_message:
            return M * self.mc_samples_per_message
        return self.batch_size

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainHistory:
    epoch: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    mi: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    clipped_power: list = field(default_factory=list)

    def __len__(self):
        return len(self.epoch)

    def to_csv(self, path):
        K = len(self.mi[0]) if self.mi else 0
        header = ["epoch", "loss"] + [f"mi_user{i}" for i in range(K)] + ["grad_norm", "clipped_power"]
        lines = [",".join(header)]
        for e, l, m, g, c in zip(self.epoch, self.loss, self.mi, self.grad_norm, self.clipped_power):
            row = [str(e), repr(l)] + [repr(float(x)) for x in m] + [repr(g), str(c)]
            lines.append(",".join(row))
        Path(path).write_text("\n".join(lines) + "\n")


def _should_stop(losses, window, delta):
    if len(losses) < 2 * window:
        return False
    recent = np.mean(losses[-window:])
    before = np.mean(losses[-2 * window:-window])
    return before - recent < delta


def train(ch: ChannelSet, cfg: TrainConfig, init: EncoderParams | None = None, M=None, bf=None):
    """Train the encoders of all users on channel ``ch``.

    Parameters
    ----------
    ch : ChannelSet
    cfg : TrainConfig
    init : EncoderParams, optional
        Starting point. Otherwise built from ``cfg.init``: pretrained
        needs the MaxSINR beamformers ``bf``, random uses ``cfg.init_seed``.
        ``M`` is required when ``init`` is omitted.

    Returns
    -------
    params : EncoderParams
    history : TrainHistory

    Raises
    ------
    TrainingDiverged
        If the loss stops being finite.
    """
    if init is None:
        if M is None:
            raise ValueError("need M when no initial parameters are given")
        if cfg.init == "pretrained":
            if bf is None:
                raise ValueError("pretrained init needs MaxSINR beamformers")
            init = pretrain_init(bf, M, cfg.beta_init)
        else:
            init = random_init(ch.num_users, M, ch.dim, cfg.init_seed, cfg.beta_init)
    params = project_constraints(init)
    K, M, n = params.num_users, params.alphabet, ch.dim
    trainable_beta = cfg.beta_policy == "trainable"
    state = AdamState.zeros(params.pack(trainable_beta).size)
    B = cfg.effective_batch(M)
    hist = TrainHistory()
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng([cfg.rng_seed, epoch])
        batch, noise = draw_batch(K, M, n, B, ch.sigma2, rng)
        loss, mi, grads = loss_and_grad(params, ch, batch, noise)
        gflat = grads.pack(trainable_beta)
        if not (np.isfinite(loss) and np.all(np.isfinite(gflat))):
            raise TrainingDiverged(epoch, loss)
        params, state = adam_step(params, state, grads, cfg.learning_rate,
                                  cfg.adam_b1, cfg.adam_b2, cfg.adam_eps, trainable_beta)
        hist.epoch.append(epoch)
        hist.loss.append(loss)
        hist.mi.append(mi.tolist())
        hist.grad_norm.append(float(np.linalg.norm(gflat)))
        hist.clipped_power.append(int(np.sum((params.p == 0.0) | (params.p == 1.0))))
        if cfg.early_stop and _should_stop(hist.loss, cfg.early_stop_window, cfg.early_stop_delta):
            break
    return params, hist
