"""Concave minorants of the sum secrecy rate for successive convex refinement.

The exact secrecy objective is a difference of concave log terms. Splitting
each SINR into useful power S and interference I, the non-concave parts are
three sums of log(affine) terms (phi_1: downlink interference, phi_2:
eavesdropper downlink reception, phi_3: eavesdropper uplink reception). Each
is replaced by its first-order Taylor expansion around an expansion point;
because log of an affine form is concave, the expansion over-estimates it and
the overall surrogate under-estimates the true rate, with equality at the
expansion point.

The uplink user rate additionally runs through a slack chain: with the
optimal receive beamformer the achievable SINR is hat-Gamma_k =
p_k h^H Phi_k^{-1} h; a slack vartheta_k with vartheta_k^2/p_k below the
linearized inverse-quadratic bound, and an epigraph slack varpi_k below the
linearization of vartheta_k^2, yield a concave lower bound log2(1 + varpi_k).

Everything internal works in nats; public values are bps/Hz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .metrics import DesignPoint, LN2, coupling_matrix, phi_matrix, q_matrix
from .scene import ChannelSet, steering_vector


def _pvw(point) -> tuple:
    """Extract (p, V list, W) from a DesignPoint or an ExpansionPoint."""
    if hasattr(point, "v_cov"):
        return point.p_ul, point.v_cov, point.w_cov
    return point.p_tilde, point.v_tilde, point.w_tilde


def _quad(h: np.ndarray, m: np.ndarray) -> float:
    return float(np.real(h.conj() @ m @ h))


class DlTerms(NamedTuple):
    s_dl: np.ndarray    # (L,) useful downlink powers tr(V_l H_l)
    i_dl: np.ndarray    # (L,) downlink interference, noise excluded
    s_eve: np.ndarray   # (P,) eavesdropped downlink power
    i_eve: np.ndarray   # (P,) interference at each eavesdropper, noise excluded


def dl_terms(channels: ChannelSet, point) -> DlTerms:
    """Useful/interference split of every downlink-side reception."""
    p, v_cov, w_cov = _pvw(point)
    L, P = channels.n_dl, channels.n_eve
    s_dl = np.zeros(L)
    i_dl = np.zeros(L)
    for ell in range(L):
        h = channels.h_dl[ell]
        s_dl[ell] = _quad(h, v_cov[ell])
        acc = float(p @ np.abs(channels.q_ul_dl[:, ell]) ** 2)
        for lp, v in enumerate(v_cov):
            if lp != ell:
                acc += _quad(h, v)
        acc += _quad(h, w_cov)
        i_dl[ell] = acc
    s_eve = np.zeros(P)
    i_eve = np.zeros(P)
    for pp in range(P):
        a = steering_vector(channels.n_tx, channels.theta[pp], channels.element_spacing)
        a2 = abs(channels.alpha[pp]) ** 2
        s_eve[pp] = a2 * sum(_quad(a, v) for v in v_cov)
        i_eve[pp] = float(p @ np.abs(channels.g_ul_eve[:, pp]) ** 2) + a2 * _quad(a, w_cov)
    return DlTerms(s_dl=s_dl, i_dl=i_dl, s_eve=s_eve, i_eve=i_eve)


def _psi_eve(channels: ChannelSet, point) -> np.ndarray:
    """Total reception power at each eavesdropper (uplink view).

    The per-user useful-plus-interference sum S_pk + I_pk is independent of k:
    every uplink power plus the full transmit covariance through the sensing
    steering vector.
    """
    p, v_cov, w_cov = _pvw(point)
    q = np.array(w_cov, dtype=complex)
    for v in v_cov:
        q = q + v
    P = channels.n_eve
    psi = np.zeros(P)
    for pp in range(P):
        a = steering_vector(channels.n_tx, channels.theta[pp], channels.element_spacing)
        psi[pp] = (float(p @ np.abs(channels.g_ul_eve[:, pp]) ** 2)
                   + abs(channels.alpha[pp]) ** 2 * _quad(a, q))
    return psi


@dataclass
class ExpansionPoint:
    """Operating point the surrogates expand around, with cached statistics.

    Caching the interference terms and the uplink whitening data here keeps
    the numeric surrogate evaluation and the conic subproblem builder reading
    the same numbers.
    """

    p_tilde: np.ndarray            # (K,)
    v_tilde: list                  # L Hermitian PSD matrices
    w_tilde: np.ndarray
    t_tilde: np.ndarray            # (K,) slack expansion vartheta-tilde
    phi_tilde: np.ndarray          # (K, N_R, N_R) uplink covariances
    q_tilde: np.ndarray            # total transmit covariance
    i_dl_tilde: np.ndarray         # (L,)
    s_eve_tilde: np.ndarray        # (P,)
    i_eve_tilde: np.ndarray        # (P,)
    psi_tilde: np.ndarray          # (P,)
    phi_inv_h: np.ndarray          # (K, N_R) rows Phi_k^{-1} h_k
    d0: np.ndarray                 # (K,) h^H Phi_k^{-1} h
    c_resp: np.ndarray             # (K, N_T) rows C^H Phi_k^{-1} h_k

    @classmethod
    def build(cls, channels: ChannelSet, p_ul, v_cov, w_cov,
              t_tilde=None) -> "ExpansionPoint":
        K = channels.n_ul
        p_ul = np.asarray(p_ul, dtype=float)
        t_tilde = np.zeros(K) if t_tilde is None else np.asarray(t_tilde, dtype=float)
        q = np.array(w_cov, dtype=complex)
        for v in v_cov:
            q = q + v
        terms = dl_terms(channels, _RawPoint(p_ul, list(v_cov), w_cov))
        psi = _psi_eve(channels, _RawPoint(p_ul, list(v_cov), w_cov))
        c = coupling_matrix(channels)
        phi = np.zeros((K, channels.n_rx, channels.n_rx), dtype=complex)
        phi_inv_h = np.zeros((K, channels.n_rx), dtype=complex)
        d0 = np.zeros(K)
        c_resp = np.zeros((K, channels.n_tx), dtype=complex)
        for k in range(K):
            phi[k] = phi_matrix(k, channels, q, p_ul)
            b = np.linalg.solve(phi[k], channels.h_ul[k])
            phi_inv_h[k] = b
            d0[k] = float(np.real(channels.h_ul[k].conj() @ b))
            c_resp[k] = c.conj().T @ b
        ep = cls(p_tilde=p_ul, v_tilde=[np.array(v) for v in v_cov],
                 w_tilde=np.array(w_cov), t_tilde=t_tilde, phi_tilde=phi,
                 q_tilde=q, i_dl_tilde=terms.i_dl, s_eve_tilde=terms.s_eve,
                 i_eve_tilde=terms.i_eve, psi_tilde=psi, phi_inv_h=phi_inv_h,
                 d0=d0, c_resp=c_resp)
        ep.validate(channels)
        return ep

    @classmethod
    def from_design(cls, channels: ChannelSet, point: DesignPoint) -> "ExpansionPoint":
        """Expansion at a design point with the canonical slack completion.

        t_tilde is recomputed as sqrt of the exact uplink SINR rather than
        taken from the point: that is the unique value making the epigraph
        chain tight at the point, which both preserves the minorize-maximize
        monotonicity guarantee and avoids stalling on the under-determined
        slack values an interior-point solver returns while the slack's
        objective coefficient is still zero.
        """
        t_tilde, _ = canonical_slacks(channels, point.p_ul, point.v_cov,
                                      point.w_cov)
        return cls.build(channels, point.p_ul, point.v_cov, point.w_cov,
                         t_tilde=t_tilde)

    def validate(self, channels: ChannelSet, tol: float = 1e-9) -> None:
        for k in range(self.phi_tilde.shape[0]):
            lam_min = np.linalg.eigvalsh(self.phi_tilde[k]).min()
            if lam_min < channels.noise_dfrc - tol:
                raise ValueError("phi_tilde lost positive definiteness")


class _RawPoint:
    """Minimal (p, V, W) carrier accepted by the term evaluators."""

    def __init__(self, p_ul, v_cov, w_cov):
        self.p_ul = p_ul
        self.v_cov = v_cov
        self.w_cov = w_cov


# ---------------------------------------------------------------------------
# affine majorizers of the three non-concave log sums
# ---------------------------------------------------------------------------

def _delta_terms(channels: ChannelSet, expansion: ExpansionPoint, point):
    p, v_cov, w_cov = _pvw(point)
    dp = np.asarray(p, dtype=float) - expansion.p_tilde
    dv = [v - vt for v, vt in zip(v_cov, expansion.v_tilde)]
    dw = np.asarray(w_cov) - expansion.w_tilde
    return dp, dv, dw


def taylor_phi1(channels: ChannelSet, expansion: ExpansionPoint, point) -> float:
    """Affine expansion of the downlink-interference log sum, bps/Hz."""
    dp, dv, dw = _delta_terms(channels, expansion, point)
    total = 0.0
    for ell in range(channels.n_dl):
        h = channels.h_dl[ell]
        base = expansion.i_dl_tilde[ell] + channels.noise_dl[ell]
        lin = float(dp @ np.abs(channels.q_ul_dl[:, ell]) ** 2)
        for lp, d in enumerate(dv):
            if lp != ell:
                lin += _quad(h, d)
        lin += _quad(h, dw)
        total += math.log(base) + lin / base
    return total / LN2


def taylor_phi2(channels: ChannelSet, expansion: ExpansionPoint, point) -> float:
    """Affine expansion of the eavesdropper downlink-reception log sum."""
    dp, dv, dw = _delta_terms(channels, expansion, point)
    total = 0.0
    for pp in range(channels.n_eve):
        a = steering_vector(channels.n_tx, channels.theta[pp], channels.element_spacing)
        a2 = abs(channels.alpha[pp]) ** 2
        base = expansion.s_eve_tilde[pp] + expansion.i_eve_tilde[pp] + channels.noise_eve[pp]
        lin = float(dp @ np.abs(channels.g_ul_eve[:, pp]) ** 2)
        lin += a2 * (sum(_quad(a, d) for d in dv) + _quad(a, dw))
        total += math.log(base) + lin / base
    return total / LN2


def taylor_phi3(channels: ChannelSet, expansion: ExpansionPoint, point) -> float:
    """Affine expansion of the eavesdropper uplink-reception log sum."""
    dp, dv, dw = _delta_terms(channels, expansion, point)
    total = 0.0
    for pp in range(channels.n_eve):
        a = steering_vector(channels.n_tx, channels.theta[pp], channels.element_spacing)
        a2 = abs(channels.alpha[pp]) ** 2
        base = expansion.psi_tilde[pp] + channels.noise_eve[pp]
        lin = float(dp @ np.abs(channels.g_ul_eve[:, pp]) ** 2)
        lin += a2 * (sum(_quad(a, d) for d in dv) + _quad(a, dw))
        total += math.log(base) + lin / base
    return total / LN2


def surrogate_sr_dl(channels: ChannelSet, expansion: ExpansionPoint, point) -> float:
    """Concave minorant of the downlink sum secrecy rate, bps/Hz.

    Tight at the expansion point; a global lower bound elsewhere.
    """
    terms = dl_terms(channels, point)
    total = 0.0
    for ell in range(channels.n_dl):
        total += math.log(terms.s_dl[ell] + terms.i_dl[ell] + channels.noise_dl[ell])
    for pp in range(channels.n_eve):
        total += math.log(terms.i_eve[pp] + channels.noise_eve[pp])
    total /= LN2
    return total - taylor_phi1(channels, expansion, point) \
                 - taylor_phi2(channels, expansion, point)


# ---------------------------------------------------------------------------
# uplink bound chain
# ---------------------------------------------------------------------------

def ul_hat_sinr(k: int, channels: ChannelSet, p_ul, q_cov) -> float:
    """Best achievable uplink SINR of user k: p_k h^H Phi_k^{-1} h."""
    p_ul = np.asarray(p_ul, dtype=float)
    phi = phi_matrix(k, channels, q_cov, p_ul)
    h = channels.h_ul[k]
    return float(p_ul[k] * np.real(h.conj() @ np.linalg.solve(phi, h)))


def canonical_slacks(channels: ChannelSet, p_ul, v_cov, w_cov) -> tuple:
    """Slack values making the uplink epigraph chain tight at (p, V, W).

    Returns (slack_t, slack_w) with slack_t_k = sqrt(SINR_k) and
    slack_w_k = SINR_k, so log2(1 + slack_w_k) equals the exact uplink rate.
    """
    K = channels.n_ul
    q = np.array(w_cov, dtype=complex)
    for v in v_cov:
        q = q + v
    gam = np.array([ul_hat_sinr(k, channels, p_ul, q) for k in range(K)])
    gam = np.clip(gam, 0.0, None)
    return np.sqrt(gam), gam


def ul_linearized_bound(k: int, channels: ChannelSet, expansion: ExpansionPoint,
                        point) -> float:
    """Affine-in-(p, V, W) lower bound on h^H Phi_k(point)^{-1} h.

    First-order expansion of the matrix inverse around phi_tilde:
    h^H Phi^{-1} h >= 2 h^H Phi_t^{-1} h - b^H Phi b with b = Phi_t^{-1} h.
    """
    p, v_cov, w_cov = _pvw(point)
    q = np.array(w_cov, dtype=complex)
    for v in v_cov:
        q = q + v
    phi_pt = phi_matrix(k, channels, q, np.asarray(p, dtype=float))
    b = expansion.phi_inv_h[k]
    return float(2.0 * expansion.d0[k] - np.real(b.conj() @ phi_pt @ b))


def surrogate_sr_ul_lb(channels: ChannelSet, expansion: ExpansionPoint,
                       point) -> float:
    """Concave minorant of the uplink sum secrecy rate, bps/Hz.

    Uses the epigraph slacks carried by the point (slack_w); valid whenever
    the point satisfies the slack chain constraints.
    """
    p, v_cov, w_cov = _pvw(point)
    p = np.asarray(p, dtype=float)
    K, P = channels.n_ul, channels.n_eve
    slack_w = getattr(point, "slack_w", None)
    if slack_w is None:
        slack_w = np.zeros(K)
    q = np.array(w_cov, dtype=complex)
    for v in v_cov:
        q = q + v
    total = 0.0
    for k in range(K):
        total += math.log(1.0 + slack_w[k])
    for pp in range(P):
        a = steering_vector(channels.n_tx, channels.theta[pp], channels.element_spacing)
        echo = abs(channels.alpha[pp]) ** 2 * _quad(a, q)
        g2 = np.abs(channels.g_ul_eve[:, pp]) ** 2
        all_ul = float(p @ g2)
        for k in range(K):
            i_pk = all_ul - p[k] * g2[k] + echo
            total += math.log(i_pk + channels.noise_eve[pp])
    total /= LN2
    return total - K * taylor_phi3(channels, expansion, point)
