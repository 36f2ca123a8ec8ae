"""Exact performance metrics of a full-duplex ISAC design.

Everything here evaluates closed-form quantities at a concrete operating
point: per-link SINRs, downlink/uplink sum secrecy rates, the integrated
sidelobe-to-mainlobe ratio of the transmit beampattern, and a symbol-level
Monte Carlo oracle that validates each SINR formula empirically.

Rates are in bps/Hz (log base 2) and are reported unclipped: a negative
secrecy rate means the eavesdroppers out-receive the intended links.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .scene import ChannelSet, steering_vector

LN2 = math.log(2.0)


class DegenerateBeampatternError(ValueError):
    """Raised when the mainlobe carries no measurable power."""


# ---------------------------------------------------------------------------
# design points
# ---------------------------------------------------------------------------

@dataclass
class DesignPoint:
    """One candidate transceiver design.

    v_cov:   L lifted downlink beamformer covariances (N_T x N_T, PSD)
    w_cov:   artificial-noise covariance (N_T x N_T, PSD)
    p_ul:    K uplink transmit powers
    u_rx:    K unit-norm receive beamformers (K x N_R)
    slack_w: K epigraph slacks for the uplink surrogate rate (varpi)
    slack_t: K quadrature slacks bounding sqrt-SINR (vartheta)
    """

    v_cov: list[np.ndarray]
    w_cov: np.ndarray
    p_ul: np.ndarray
    u_rx: np.ndarray
    slack_w: np.ndarray = None
    slack_t: np.ndarray = None

    def __post_init__(self):
        self.p_ul = np.asarray(self.p_ul, dtype=float)
        k = self.p_ul.shape[0]
        if self.slack_w is None:
            self.slack_w = np.zeros(k)
        if self.slack_t is None:
            self.slack_t = np.zeros(k)
        self.slack_w = np.asarray(self.slack_w, dtype=float)
        self.slack_t = np.asarray(self.slack_t, dtype=float)

    @classmethod
    def zeros(cls, n_tx: int, n_rx: int, n_dl: int, n_ul: int) -> "DesignPoint":
        u = np.zeros((n_ul, n_rx), dtype=complex)
        if n_ul and n_rx:
            u[:, 0] = 1.0
        return cls(
            v_cov=[np.zeros((n_tx, n_tx), dtype=complex) for _ in range(n_dl)],
            w_cov=np.zeros((n_tx, n_tx), dtype=complex),
            p_ul=np.zeros(n_ul),
            u_rx=u,
        )

    def validate(self, eig_tol: float = 1e-8, norm_tol: float = 1e-10) -> None:
        for i, v in enumerate(self.v_cov):
            if np.linalg.eigvalsh((v + v.conj().T) / 2).min() < -eig_tol:
                raise ValueError(f"v_cov[{i}] is not PSD within tolerance")
        if np.linalg.eigvalsh((self.w_cov + self.w_cov.conj().T) / 2).min() < -eig_tol:
            raise ValueError("w_cov is not PSD within tolerance")
        if np.any(self.p_ul < 0):
            raise ValueError("p_ul must be entrywise nonnegative")
        for k in range(self.u_rx.shape[0]):
            if abs(np.linalg.norm(self.u_rx[k]) - 1.0) > norm_tol:
                raise ValueError(f"u_rx[{k}] must be unit norm")


def q_matrix(point: DesignPoint) -> np.ndarray:
    """Total transmit covariance Q = sum_l V_l + W."""
    q = np.array(point.w_cov, dtype=complex)
    for v in point.v_cov:
        q = q + v
    return q


def psd_clean(m: np.ndarray) -> np.ndarray:
    """Symmetrize and clip negative eigenvalues to zero."""
    m = (np.asarray(m) + np.asarray(m).conj().T) / 2
    lam, vec = np.linalg.eigh(m)
    if lam.min() >= 0:
        return m
    lam = np.clip(lam, 0.0, None)
    return (vec * lam) @ vec.conj().T


def coupling_matrix(channels: ChannelSet) -> np.ndarray:
    """Combined echo-plus-self-interference coupling C (N_R x N_T).

    Everything the BS transmits folds back into its receive array through the
    target echoes and the residual direct coupling between the arrays.
    """
    c = math.sqrt(channels.beta) * channels.h_si.astype(complex)
    for p in range(channels.n_eve):
        a_rx = steering_vector(channels.n_rx, channels.theta[p], channels.element_spacing)
        a_tx = steering_vector(channels.n_tx, channels.theta[p], channels.element_spacing)
        c = c + channels.gamma[p] * np.outer(a_rx, a_tx.conj())
    return c


def phi_matrix(k: int, channels: ChannelSet, q_cov: np.ndarray,
               p_ul: np.ndarray) -> np.ndarray:
    """Interference-plus-noise covariance seen when decoding uplink user k."""
    phi = np.array(channels.r_clutter, dtype=complex)
    phi += channels.noise_dfrc * np.eye(channels.n_rx)
    for kk in range(channels.n_ul):
        if kk != k:
            phi += p_ul[kk] * np.outer(channels.h_ul[kk], channels.h_ul[kk].conj())
    c = coupling_matrix(channels)
    phi += c @ q_cov @ c.conj().T
    return (phi + phi.conj().T) / 2


# ---------------------------------------------------------------------------
# per-link SINRs
# ---------------------------------------------------------------------------

def _quad(h: np.ndarray, m: np.ndarray) -> float:
    return float(np.real(h.conj() @ m @ h))


def dl_sinr(ell: int, channels: ChannelSet, point: DesignPoint) -> float:
    """SINR of downlink user ell."""
    h = channels.h_dl[ell]
    num = _quad(h, point.v_cov[ell])
    den = float(channels.noise_dl[ell])
    den += float(point.p_ul @ np.abs(channels.q_ul_dl[:, ell]) ** 2)
    for lp, v in enumerate(point.v_cov):
        if lp != ell:
            den += _quad(h, v)
    den += _quad(h, point.w_cov)
    return num / den


def ul_sinr(k: int, channels: ChannelSet, point: DesignPoint) -> float:
    """SINR of uplink user k after the receive beamformer u_k."""
    u = point.u_rx[k]
    h = channels.h_ul[k]
    num = point.p_ul[k] * abs(np.vdot(u, h)) ** 2
    phi = phi_matrix(k, channels, q_matrix(point), point.p_ul)
    den = _quad(u, phi)
    return float(num / den)


def eve_ul_sinr(p: int, k: int, channels: ChannelSet, point: DesignPoint) -> float:
    """SINR with which eavesdropper p intercepts uplink user k."""
    a = steering_vector(channels.n_tx, channels.theta[p], channels.element_spacing)
    num = point.p_ul[k] * abs(channels.g_ul_eve[k, p]) ** 2
    den = float(channels.noise_eve[p])
    for kk in range(channels.n_ul):
        if kk != k:
            den += point.p_ul[kk] * abs(channels.g_ul_eve[kk, p]) ** 2
    den += abs(channels.alpha[p]) ** 2 * _quad(a, q_matrix(point))
    return float(num / den)


def eve_dl_sinr(p: int, channels: ChannelSet, point: DesignPoint) -> float:
    """SINR with which eavesdropper p intercepts the downlink broadcast.

    The numerator aggregates every downlink stream through the lifted
    covariances; artificial noise and uplink leakage interfere.
    """
    a = steering_vector(channels.n_tx, channels.theta[p], channels.element_spacing)
    num = 0.0
    for v in point.v_cov:
        num += abs(channels.alpha[p]) ** 2 * _quad(a, v)
    den = float(channels.noise_eve[p])
    den += float(point.p_ul @ np.abs(channels.g_ul_eve[:, p]) ** 2)
    den += abs(channels.alpha[p]) ** 2 * _quad(a, point.w_cov)
    return num / den


# ---------------------------------------------------------------------------
# secrecy rates
# ---------------------------------------------------------------------------

def sum_secrecy_dl(channels: ChannelSet, point: DesignPoint) -> float:
    """Downlink sum secrecy rate, bps/Hz, unclipped."""
    rate = 0.0
    for ell in range(channels.n_dl):
        rate += math.log2(1.0 + dl_sinr(ell, channels, point))
    for p in range(channels.n_eve):
        rate -= math.log2(1.0 + eve_dl_sinr(p, channels, point))
    return rate


def sum_secrecy_ul(channels: ChannelSet, point: DesignPoint) -> float:
    """Uplink sum secrecy rate, bps/Hz, unclipped."""
    rate = 0.0
    for k in range(channels.n_ul):
        rate += math.log2(1.0 + ul_sinr(k, channels, point))
    for p in range(channels.n_eve):
        for k in range(channels.n_ul):
            rate -= math.log2(1.0 + eve_ul_sinr(p, k, channels, point))
    return rate


# ---------------------------------------------------------------------------
# beampattern masks and ISMR
# ---------------------------------------------------------------------------

@dataclass
class SensingMasks:
    """Mainlobe / sidelobe integration matrices of the transmit beampattern."""

    a_main: np.ndarray                      # integral of a a^H over mainlobes
    a_side: np.ndarray                      # integral over the complement
    mainlobe_intervals: list[tuple]         # merged [lo, hi] in rad
    grid: float                             # integration step, rad
    n_tx: int
    spacing: float

    def validate(self, tol: float = 1e-9) -> None:
        for name, m in (("a_main", self.a_main), ("a_side", self.a_side)):
            if np.max(np.abs(m - m.conj().T)) > tol:
                raise ValueError(f"{name} must be Hermitian")
            if np.linalg.eigvalsh(m).min() < -tol:
                raise ValueError(f"{name} must be PSD")


def _integrate_response(n: int, spacing: float, intervals, grid: float) -> np.ndarray:
    out = np.zeros((n, n), dtype=complex)
    for lo, hi in intervals:
        if hi <= lo:
            continue
        n_pts = max(2, int(math.ceil((hi - lo) / grid)) + 1)
        theta = np.linspace(lo, hi, n_pts)
        a = np.exp(1j * 2.0 * np.pi * spacing * np.outer(np.sin(theta), np.arange(n)))
        w = np.full(n_pts, theta[1] - theta[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        out += np.einsum("gi,gj->ij", a * w[:, None], a.conj())
    return (out + out.conj().T) / 2


def build_sensing_masks(theta: Sequence[float], halfwidth: float, grid: float,
                        n_tx: int, spacing: float = 0.5) -> SensingMasks:
    """Integrate a(t)a(t)^H over mainlobe and sidelobe angular regions.

    theta:     target angles, rad
    halfwidth: half-extent of each mainlobe around its target, rad
    grid:      trapezoidal integration step, rad

    The angular domain is [-pi/2, pi/2]; overlapping mainlobes merge.
    """
    lo_dom, hi_dom = -np.pi / 2, np.pi / 2
    raw = sorted((max(lo_dom, t - halfwidth), min(hi_dom, t + halfwidth))
                 for t in np.asarray(theta, dtype=float))
    merged: list[tuple] = []
    for lo, hi in raw:
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    side: list[tuple] = []
    cursor = lo_dom
    for lo, hi in merged:
        if lo > cursor:
            side.append((cursor, lo))
        cursor = max(cursor, hi)
    if cursor < hi_dom:
        side.append((cursor, hi_dom))
    a_main = _integrate_response(n_tx, spacing, merged, grid)
    a_side = _integrate_response(n_tx, spacing, side, grid)
    masks = SensingMasks(a_main=a_main, a_side=a_side, mainlobe_intervals=merged,
                         grid=grid, n_tx=n_tx, spacing=spacing)
    masks.validate()
    return masks


def ismr(r_cov: np.ndarray, masks: SensingMasks) -> float:
    """Integrated sidelobe-to-mainlobe ratio of the beampattern of r_cov."""
    main = float(np.real(np.trace(r_cov @ masks.a_main)))
    if main < 1e-12:
        raise DegenerateBeampatternError(
            "mainlobe power below 1e-12; beampattern carries no sensing energy")
    side = float(np.real(np.trace(r_cov @ masks.a_side)))
    return side / main


def ismr_vacuous_only(masks: SensingMasks, ismr_max: float) -> bool:
    """True when only the all-zero covariance can satisfy the ISMR cap.

    The linear form tr(Q (A_s - ismr_max A_m)) <= 0 has a nonzero PSD
    solution exactly when the mask difference has a nonpositive eigenvalue;
    otherwise the cap is stricter than any physical beampattern and the
    optimal transmit covariance is exactly zero.
    """
    m = masks.a_side - ismr_max * masks.a_main
    return float(np.linalg.eigvalsh((m + m.conj().T) / 2).min()) > 0.0


# ---------------------------------------------------------------------------
# Monte Carlo SINR oracle
# ---------------------------------------------------------------------------

class McSinrEstimate(NamedTuple):
    value: float
    stderr: float
    n_symbols: int


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    lam, vec = np.linalg.eigh((m + m.conj().T) / 2)
    lam = np.clip(lam, 0.0, None)
    return vec * np.sqrt(lam) @ vec.conj().T


def _cn(rng: np.random.Generator, *shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def mc_sinr_oracle(which: tuple, channels: ChannelSet, point: DesignPoint,
                   n_symbols: int = 100_000,
                   rng: np.random.Generator | None = None) -> McSinrEstimate:
    """Estimate one link SINR by simulating the transmit equations.

    which selects the link: ("dl", ell), ("ul", k), ("eve_ul", p, k) or
    ("eve_dl", p). Unit-variance symbols drive every stream, artificial noise
    is drawn from w ~ CN(0, W), clutter from CN(0, R_c), and receiver noise is
    AWGN at the configured variance. Returns the ratio of empirical signal
    power to empirical interference-plus-noise power with a delta-method
    standard error.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if n_symbols < 10_000:
        raise ValueError("n_symbols must be at least 10000")
    kind = which[0]
    L, K, P = channels.n_dl, channels.n_ul, channels.n_eve
    nt = channels.n_tx

    v_sqrt = [_psd_sqrt(v) for v in point.v_cov]
    w_sqrt = _psd_sqrt(point.w_cov)
    rc_sqrt = _psd_sqrt(channels.r_clutter)
    sqrt_p = np.sqrt(point.p_ul)

    # Collapse the receive side to scalars: signal and interference rows that
    # multiply the per-source symbol vectors.
    if kind == "dl":
        ell = which[1]
        h = channels.h_dl[ell]
        rows_v = [h.conj() @ vs for vs in v_sqrt]     # per-DL-stream responses
        row_w = h.conj() @ w_sqrt
        ul_gains = sqrt_p * channels.q_ul_dl[:, ell]  # scalar per UL user
        noise_std = math.sqrt(channels.noise_dl[ell])
        sig_idx = ("dl", ell)
    elif kind == "ul":
        k = which[1]
        u = point.u_rx[k]
        c = coupling_matrix(channels)
        uc = u.conj() @ c
        rows_v = [uc @ vs for vs in v_sqrt]
        row_w = uc @ w_sqrt
        ul_gains = sqrt_p * (channels.h_ul @ u.conj())
        row_clutter = u.conj() @ rc_sqrt
        noise_std = math.sqrt(channels.noise_dfrc)    # ||u|| = 1
        sig_idx = ("ul", k)
    elif kind == "eve_ul":
        p, k = which[1], which[2]
        a = steering_vector(nt, channels.theta[p], channels.element_spacing)
        aa = channels.alpha[p] * a.conj()
        rows_v = [aa @ vs for vs in v_sqrt]
        row_w = aa @ w_sqrt
        ul_gains = sqrt_p * channels.g_ul_eve[:, p]
        noise_std = math.sqrt(channels.noise_eve[p])
        sig_idx = ("ul", k)
    elif kind == "eve_dl":
        p = which[1]
        a = steering_vector(nt, channels.theta[p], channels.element_spacing)
        aa = channels.alpha[p] * a.conj()
        rows_v = [aa @ vs for vs in v_sqrt]
        row_w = aa @ w_sqrt
        ul_gains = sqrt_p * channels.g_ul_eve[:, p]
        noise_std = math.sqrt(channels.noise_eve[p])
        sig_idx = ("dl", "all")
    else:
        raise ValueError(f"unknown link kind: {kind!r}")

    sum_s = sum_s2 = sum_d = sum_d2 = 0.0
    chunk = 1 << 16
    done = 0
    while done < n_symbols:
        m = min(chunk, n_symbols - done)
        sig = np.zeros(m, dtype=complex)
        intf = np.zeros(m, dtype=complex)
        for l in range(L):
            contrib = _cn(rng, m, nt) @ rows_v[l]
            if sig_idx == ("dl", l) or sig_idx == ("dl", "all"):
                sig += contrib
            else:
                intf += contrib
        intf += _cn(rng, m, nt) @ row_w
        for kk in range(K):
            contrib = ul_gains[kk] * _cn(rng, m)
            if sig_idx == ("ul", kk):
                sig += contrib
            else:
                intf += contrib
        if kind == "ul":
            intf += _cn(rng, m, channels.n_rx) @ row_clutter
        intf += noise_std * _cn(rng, m)
        s2 = np.abs(sig) ** 2
        d2 = np.abs(intf) ** 2
        sum_s += s2.sum()
        sum_s2 += (s2 ** 2).sum()
        sum_d += d2.sum()
        sum_d2 += (d2 ** 2).sum()
        done += m

    n = float(n_symbols)
    mean_s, mean_d = sum_s / n, sum_d / n
    var_s = max(sum_s2 / n - mean_s**2, 0.0)
    var_d = max(sum_d2 / n - mean_d**2, 0.0)
    value = mean_s / mean_d
    stderr = value * math.sqrt(var_s / (n * mean_s**2) + var_d / (n * mean_d**2))
    return McSinrEstimate(value=value, stderr=stderr, n_symbols=n_symbols)
