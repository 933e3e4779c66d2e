"""
Figures for the experiment outputs.

Everything renders off-screen with the Agg backend and writes straight to
a file; the CSV/JSON files remain the canonical results.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

LABELS = {
    "maxsinr_linear": "MaxSINR",
    "disc_maxsinr": "DISC-MaxSINR",
    "disc_maxsinr_plus": "DISC-MaxSINR+",
    "plus_U": "DISC-MaxSINR+ (U)",
    "plus_D": "DISC-MaxSINR+ (D)",
}
MARKERS = {"maxsinr_linear": "s", "disc_maxsinr": "o", "disc_maxsinr_plus": "^",
           "plus_U": "v", "plus_D": "D"}
USER_MARKERS = ("o", "s", "*", "^", "D", "v", "P")

_RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
    "svg.hashsalt": "discia",
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None} if str(path).endswith(".svg") else None)
    plt.close(fig)


def plot_sweep(curve, path, title=None):
    """Sumrate against the symmetric channel angle, one line per algorithm."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        algs = list(dict.fromkeys(a for _, a, _ in curve))
        for alg in algs:
            pts = sorted((t, s) for t, a, s in curve if a == alg)
            t, s = zip(*pts)
            ax.plot(t, s, marker=MARKERS.get(alg, "o"), label=LABELS.get(alg, alg))
        ticks = sorted({t for t, _, _ in curve})
        ax.set_xticks(ticks)
        ax.set_xticklabels([_pi_label(t) for t in ticks])
        ax.set_xlabel(r"Channel rotation $\theta$")
        ax.set_ylabel("Sumrate (bits/s/Hz)")
        if title:
            ax.set_title(title)
        ax.legend()
        _save(fig, path)


def _pi_label(theta):
    k = theta / (np.pi / 12)
    if abs(k - round(k)) < 1e-9:
        from fractions import Fraction

        f = Fraction(int(round(k)), 12)
        if f.numerator == 1:
            return rf"$\pi/{f.denominator}$"
        return rf"${f.numerator}\pi/{f.denominator}$"
    return f"{theta:.2f}"


def plot_cdf(cdf, path, title=None):
    """Empirical sumrate CDFs from ``(sumrate, cum_prob, algorithm)`` rows."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for alg in dict.fromkeys(a for _, _, a in cdf):
            x = [s for s, _, a in cdf if a == alg]
            p = [c for _, c, a in cdf if a == alg]
            ax.step([x[0]] + x, [0.0] + p, where="post", label=LABELS.get(alg, alg))
        ax.set_xlabel("Sumrate (bits/s/Hz)")
        ax.set_ylabel("CDF")
        ax.set_ylim(0, 1.02)
        if title:
            ax.set_title(title)
        ax.legend(loc="lower right")
        _save(fig, path)


def plot_constellation(records, path):
    """One panel per receiver with the noise-free contribution of every user."""
    K = 1 + max(r["receiver"] for r in records)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, K, figsize=(3.0 * K, 3.0), squeeze=False)
        for i, ax in enumerate(axes[0]):
            for j in range(K):
                ys = np.array([r["y"] for r in records if r["receiver"] == i and r["user"] == j])
                if ys.shape[1] == 1:
                    ys = np.column_stack([ys[:, 0], np.zeros(len(ys))])
                ax.scatter(ys[:, 0], ys[:, 1], s=18, marker=USER_MARKERS[j % len(USER_MARKERS)],
                           label=f"user {j + 1}")
            ax.set_aspect("equal", adjustable="datalim")
            ax.set_xlabel(rf"$Y_{i + 1}(1)$")
            ax.set_ylabel(rf"$Y_{i + 1}(2)$")
        axes[0][0].legend()
        _save(fig, path)


def plot_history(history, path):
    """Training loss and per-user soft MI against epoch."""
    with plt.rc_context(_RC):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(7.0, 2.8))
        a1.plot(history.epoch, history.loss)
        a1.set_xlabel("epoch")
        a1.set_ylabel("loss (bits)")
        mi = np.asarray(history.mi)
        for j in range(mi.shape[1]):
            a2.plot(history.epoch, mi[:, j], label=f"user {j + 1}")
        a2.set_xlabel("epoch")
        a2.set_ylabel("soft MI (bits)")
        a2.legend()
        _save(fig, path)


def plot_pretrain(pairs, path):
    """CDFs of final sumrate with and without pretraining."""
    cdf = []
    for name, vals in (("pretrained", [p.pretrained for p in pairs]),
                       ("random init", [p.random for p in pairs])):
        v = np.sort(vals)
        cdf.extend((float(x), (k + 1) / v.size, name) for k, x in enumerate(v))
    plot_cdf(cdf, path)
