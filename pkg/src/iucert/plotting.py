"""Plot-data bundle: four CSV tables and matching PNG figures.

PNGs are written with the Agg backend and without the Software/date
metadata, so identical inputs give identical bytes.
"""
from __future__ import annotations

import io as _io
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import atomic_write_bytes, write_csv  # noqa: E402
from . import rosen  # noqa: E402

KERNEL_STRIDE_TARGET = 60  # kernel heat data is subsampled to about this many nodes per axis

CSV_NAMES = ("ground_state_bounds.csv", "schedule.csv", "constants.csv", "kernel_ratio.csv")


def _eps_col(eps):
    return f"eps_q_plus_gamma_{eps:g}"


def bounds_table(state):
    """Rows (r, phi, -ln phi, eps q + gamma(eps) for each eps)."""
    gs, q = state.gs, state.q_nodes
    r = gs.grid.nodes
    neg_log_phi = -np.log(gs.phi)
    eps_list = list(state.cfg.eps_list)
    cols = []
    C = state.rosen_cert.C_used if state.rosen_cert is not None else 0.0
    for eps in eps_list:
        if state.sandwich is not None and state.rosen_cert is not None and state.rosen_cert.sandwich_valid:
            gamma = rosen.gamma_of_eps(state.sandwich, eps, C)
        else:
            gamma = math.nan
        cols.append(eps * q + gamma)
    header = ["r", "phi", "neg_ln_phi"] + [_eps_col(e) for e in eps_list]
    rows = [tuple([r[i], gs.phi[i], neg_log_phi[i]] + [c[i] for c in cols]) for i in range(r.size)]
    return header, rows


def schedule_table(state):
    header = ["t", "s", "p", "log_p", "eps", "N", "log_N"]
    rows = []
    for t, sch in state.schedules.items():
        for smp in sch.samples:
            rows.append(tuple([t] + [math.nan if smp.get(k) is None else smp[k]
                                     for k in ("s", "p", "log_p", "eps", "N", "log_N")]))
    return header, rows


def constants_table(state):
    header = ["t", "t_reduced", "k_steps", "xi", "M", "log_M", "C_t"]
    rows = []
    for t, sch in state.schedules.items():
        rows.append((t, sch.t_reduced, sch.k_steps, sch.xi, sch.M,
                     math.nan if sch.log_M is None else sch.log_M, sch.C_t))
    return header, rows


def kernel_table(state):
    """Subsampled ln(k(t, r_i, r_j) / (phi_i phi_j)) for every t."""
    header = ["t", "r_i", "r_j", "log_ratio"]
    rows = []
    gs = state.gs
    for t, K in state.kernels.items():
        idx = _kernel_index(gs.grid.N)
        lp = np.log(gs.phi[idx])
        with np.errstate(divide="ignore"):
            lr = K.log_scale + np.log(K.scaled[np.ix_(idx, idx)]) - lp[:, None] - lp[None, :]
        r = gs.grid.nodes[idx]
        for a in range(idx.size):
            for b in range(idx.size):
                rows.append((t, r[a], r[b], lr[a, b]))
    return header, rows


def _kernel_index(N):
    stride = max(1, N // KERNEL_STRIDE_TARGET)
    return np.arange(0, N, stride)


def write_tables(state, out_dir):
    out_dir = Path(out_dir)
    tables = (bounds_table(state), schedule_table(state), constants_table(state), kernel_table(state))
    paths = []
    for name, (header, rows) in zip(CSV_NAMES, tables):
        path = out_dir / name
        write_csv(path, header, rows)
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# figures

def _save(fig, path):
    buf = _io.BytesIO()
    fig.savefig(buf, format="png", dpi=120, metadata={"Software": None})
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def plot_bounds(state, path):
    header, rows = bounds_table(state)
    a = np.array(rows, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(a[:, 0], a[:, 2], "k-", lw=1.5, label=r"$-\ln\varphi$")
    for j, name in enumerate(header[3:], start=3):
        if np.all(np.isnan(a[:, j])):
            continue
        ax.plot(a[:, 0], a[:, j], lw=1, label=name.replace("eps_q_plus_gamma_", r"$\epsilon q+\gamma$, $\epsilon$="))
    ax.set_xlabel("r")
    ax.set_yscale("symlog")
    ax.legend(fontsize=7)
    ax.set_title("ground state against Rosen bounds")
    _save(fig, path)


def plot_schedule(state, path):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    for t, sch in state.schedules.items():
        s = [x["s"] for x in sch.samples if x["log_p"] is not None]
        lp = [x["log_p"] for x in sch.samples if x["log_p"] is not None]
        N = [x["N"] for x in sch.samples if x["log_p"] is not None]
        ax1.semilogy(np.array(s) / sch.t_reduced, lp, ".-", ms=3, label=f"t={t:.4g}")
        if all(v is not None and math.isfinite(v) and v > 0 for v in N[1:]):
            ax2.semilogy(np.array(s[1:]) / sch.t_reduced, N[1:], ".-", ms=3, label=f"t={t:.4g}")
    ax1.set_xlabel("s / t")
    ax1.set_ylabel("ln p(s)")
    ax2.set_xlabel("s / t")
    ax2.set_ylabel("N(s)")
    ax1.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def plot_constants(state, path):
    header, rows = constants_table(state)
    fig, ax = plt.subplots(figsize=(6, 4))
    if rows:
        a = np.array(rows, dtype=float)
        # ln ln C_t = ln M stays finite when C_t and M overflow
        ax.plot(a[:, 0], a[:, 5], "o-")
    if state.T is not None:
        ax.axvline(state.T, color="gray", ls="--", lw=1, label="T")
        ax.legend()
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\ln\ln C_t$")
    _save(fig, path)


def plot_kernel(state, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    if state.kernels:
        t = min(state.kernels)
        K = state.kernels[t]
        idx = _kernel_index(state.gs.grid.N)
        lp = np.log(state.gs.phi[idx])
        with np.errstate(divide="ignore"):
            lr = K.log_scale + np.log(K.scaled[np.ix_(idx, idx)]) - lp[:, None] - lp[None, :]
        r = state.gs.grid.nodes[idx]
        im = ax.pcolormesh(r, r, lr, shading="auto")
        fig.colorbar(im, ax=ax, label=r"$\ln k/(\varphi\otimes\varphi)$")
        ax.set_title(f"t = {t:.4g}")
    ax.set_xlabel("r")
    ax.set_ylabel("r'")
    _save(fig, path)


def write_figures(state, out_dir):
    out_dir = Path(out_dir)
    names = ("ground_state_bounds.png", "schedule.png", "constants.png", "kernel_ratio.png")
    funcs = (plot_bounds, plot_schedule, plot_constants, plot_kernel)
    paths = []
    for name, fn in zip(names, funcs):
        fn(state, out_dir / name)
        paths.append(out_dir / name)
    return paths
