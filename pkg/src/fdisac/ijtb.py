"""Iterative joint transceiver-and-budget optimization and baseline schemes.

run_ijtb alternates two steps from an all-zero start:

  1. closed-form uplink receive beamformers u_k = Phi_k^{-1} h_k at the
     current transmit covariances and powers (the SINR-optimal whitened
     matched filter), and
  2. one conic subproblem solve that refreshes the downlink covariances,
     artificial noise, uplink powers and slack variables around the current
     expansion point.

Both steps never decrease the true sum secrecy rate (the beamformer step is
an exact maximizer; the subproblem maximizes a minorant tight at the current
point), so the rate trace climbs until the stopping rule fires.

Three baselines mirror common non-adaptive designs: isotropic artificial
noise on the nullspace of the downlink channels, no artificial noise with the
freed budget split between downlink beamforming and uplink power, and a
random feasible design.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .metrics import (DesignPoint, SensingMasks, ismr, ismr_vacuous_only,
                      phi_matrix, psd_clean, q_matrix)
from .scene import ChannelSet, ScenarioConfig, steering_vector
from .subproblem import ISMR_SOLVER_MARGIN, SolveTolerances, build_p13, solve
from .surrogate import ExpansionPoint, canonical_slacks, ul_hat_sinr

log = logging.getLogger(__name__)


@dataclass
class IjtbOptions:
    max_iterations: int = 30
    rate_tolerance: float = 1e-3   # bps/Hz
    window: int = 2                # consecutive small deltas required
    warm_start: bool = False       # seed uplink slacks before the first solve
    tolerances: SolveTolerances = field(default_factory=SolveTolerances)


@dataclass
class IterationRecord:
    surrogate_objective: float
    sr_dl: float
    sr_ul: float
    sr_total: float
    ismr: float
    budget_v: float
    budget_w: float
    budget_ul: float
    solver_status: str
    wall_time: float
    backend: str = ""


@dataclass
class SolveReport:
    iterations: list
    point: DesignPoint
    converged: bool
    status: str                   # "ok" or "degraded"
    rank_ratios: np.ndarray       # second-to-first eigenvalue ratio per v_cov
    stop_reason: str = ""         # rate-delta | fixed-point | safeguard |
                                  # max-iterations | solver-failure

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)

    @property
    def sr_trace(self) -> np.ndarray:
        return np.array([r.sr_total for r in self.iterations])

    @property
    def final_sr(self) -> float:
        return self.iterations[-1].sr_total if self.iterations else 0.0


def ul_beamformer(k: int, channels: ChannelSet, q_cov: np.ndarray,
                  p_ul: np.ndarray) -> np.ndarray:
    """SINR-optimal unit-norm receive beamformer Phi_k^{-1} h_k for user k."""
    phi = phi_matrix(k, channels, q_cov, np.asarray(p_ul, dtype=float))
    u = np.linalg.solve(phi, channels.h_ul[k])
    return u / np.linalg.norm(u)


def _assemble_point(channels: ChannelSet, raw: dict,
                    zero_q: bool = False) -> DesignPoint:
    if zero_q:
        # the beampattern cap admits only the vacuous zero covariance, so the
        # solver's interior dust is replaced by the exact optimum
        nt = channels.n_tx
        v_cov = [np.zeros((nt, nt), dtype=complex) for _ in raw["v_cov"]]
        w_cov = np.zeros((nt, nt), dtype=complex)
    else:
        v_cov = list(raw["v_cov"])
        w_cov = raw["w_cov"]
    p_ul = raw["p_ul"]
    q = np.array(w_cov)
    for v in v_cov:
        q = q + v
    u = np.zeros((channels.n_ul, channels.n_rx), dtype=complex)
    for k in range(channels.n_ul):
        u[k] = ul_beamformer(k, channels, q, p_ul)
    # accepted iterates carry the canonical slack completion, not the solver's
    slack_t, slack_w = canonical_slacks(channels, p_ul, v_cov, w_cov)
    return DesignPoint(v_cov=v_cov, w_cov=w_cov, p_ul=p_ul, u_rx=u,
                       slack_w=slack_w, slack_t=slack_t)


# a slack expansion below the floor freezes the user out of the subproblem
# (the epigraph row carries a vanishing coefficient); the cap keeps zero
# power feasible in the seeded program so the solver is free to decline
_REVIVAL_FLOOR = 1e-2
_REVIVAL_CAP = 0.9


def _revived_t_tilde(channels: ChannelSet, cfg: ScenarioConfig,
                     tilde: DesignPoint, base_t: np.ndarray) -> np.ndarray:
    """Seed dead uplink slack expansions with a uniform-power hypothesis.

    The canonical refresh cannot restart a user whose power hit zero, because
    sqrt of its SINR stays zero and the epigraph chain then pins the user's
    rate to zero in every later subproblem. Replacing a dead value with the
    SINR the user would see under a uniform power split re-opens the search
    direction; the surrogate remains a global minorant for any nonnegative
    slack expansion, only tightness at the expansion point is given up for
    that user (whose exact rate term is zero anyway).
    """
    K = channels.n_ul
    if not K or cfg.p_ul <= 0:
        return base_t
    dead = base_t < _REVIVAL_FLOOR
    if not dead.any():
        return base_t
    out = np.array(base_t, dtype=float)
    q = np.array(tilde.w_cov, dtype=complex)
    for v in tilde.v_cov:
        q = q + v
    p_hyp = np.full(K, cfg.p_ul / K)
    for k in np.nonzero(dead)[0]:
        gam = ul_hat_sinr(k, channels, p_hyp, q)
        seed = min(math.sqrt(max(gam, 0.0)), _REVIVAL_CAP)
        out[k] = max(out[k], seed)
    return out


# step multipliers tried by the tail-acceleration line search
_EXTRAPOLATION_GAMMAS = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)


def _project_budgets(channels: ChannelSet, cfg: ScenarioConfig,
                     v_cov, w_cov, p_ul) -> DesignPoint:
    """Project raw (V, W, p) onto the PSD cones and power budgets and
    complete the point with optimal receive beamformers and canonical
    slacks."""
    v_cov = [psd_clean(v) for v in v_cov]
    w_cov = psd_clean(w_cov)
    p_ul = np.clip(p_ul, 0.0, None)
    used_v = sum(float(np.real(np.trace(v))) for v in v_cov)
    if used_v > cfg.p_dl_v and used_v > 0:
        v_cov = [v * (cfg.p_dl_v / used_v) for v in v_cov]
    used_w = float(np.real(np.trace(w_cov)))
    if used_w > cfg.p_dl_w and used_w > 0:
        w_cov = w_cov * (cfg.p_dl_w / used_w)
    used_p = float(p_ul.sum())
    if used_p > cfg.p_ul and used_p > 0:
        p_ul = p_ul * (cfg.p_ul / used_p)
    q = np.array(w_cov, dtype=complex)
    for v in v_cov:
        q = q + v
    u = np.zeros((channels.n_ul, channels.n_rx), dtype=complex)
    for k in range(channels.n_ul):
        u[k] = ul_beamformer(k, channels, q, p_ul)
    slack_t, slack_w = canonical_slacks(channels, p_ul, v_cov, w_cov)
    return DesignPoint(v_cov=v_cov, w_cov=w_cov, p_ul=p_ul, u_rx=u,
                       slack_w=slack_w, slack_t=slack_t)


def _true_sr(channels: ChannelSet, point: DesignPoint) -> float:
    return (metrics.sum_secrecy_dl(channels, point)
            + metrics.sum_secrecy_ul(channels, point))


def _repair_ismr(channels: ChannelSet, cfg: ScenarioConfig,
                 masks: SensingMasks, point: DesignPoint) -> DesignPoint | None:
    """Restore the sidelobe cap on a solver iterate in closed form.

    A solve accepted at reduced accuracy can overshoot a binding cap row by
    far more than its normalized residual when the mainlobe trace is small
    (the ratio magnifies the dust). Mixing the largest covariance with a unit
    beam at a target angle raises the mainlobe integral much faster than the
    sidelobe one, so a small trace-preserving convex combination lands the
    row exactly on the tightened cap, keeping every budget and cone intact.
    Returns the point unchanged when the row already holds and None when no
    target direction can repair it."""
    c = cfg.ismr_max * (1.0 - ISMR_SOLVER_MARGIN)
    q = q_matrix(point)
    s = float(np.real(np.trace(q @ masks.a_side)))
    m = float(np.real(np.trace(q @ masks.a_main)))
    excess = s - c * m
    if excess <= 0:
        return point
    carriers = [("w", point.w_cov)] + [(l, v) for l, v in enumerate(point.v_cov)]
    carriers = [(key, mat, float(np.real(np.trace(mat)))) for key, mat in carriers]
    best = None
    for p in range(channels.n_eve):
        a = steering_vector(channels.n_tx, channels.theta[p],
                            channels.element_spacing)
        d = np.outer(a, a.conj()) / channels.n_tx
        dm = float(np.real(np.trace(d @ masks.a_main)))
        ds = float(np.real(np.trace(d @ masks.a_side)))
        for key, mat, tm in carriers:
            if tm <= 0:
                continue
            sm = float(np.real(np.trace(mat @ masks.a_side)))
            mm = float(np.real(np.trace(mat @ masks.a_main)))
            # replacing an eta-fraction of this carrier with the beam removes
            # excess at this rate
            den = tm * (c * dm - ds) + (sm - c * mm)
            if den <= 0:
                continue
            eta = excess / den
            if eta <= 1.0 and (best is None or eta < best[0]):
                best = (eta, key, d, tm)
    if best is None:
        return None
    eta, key, d, tm = best
    v_cov = list(point.v_cov)
    w_cov = point.w_cov
    if key == "w":
        w_cov = (1.0 - eta) * w_cov + eta * tm * d
    else:
        v_cov[key] = (1.0 - eta) * v_cov[key] + eta * tm * d
    return _project_budgets(channels, cfg, v_cov, w_cov, point.p_ul)


def _extrapolate(channels: ChannelSet, cfg: ScenarioConfig,
                 masks: SensingMasks | None, prev: DesignPoint,
                 new: DesignPoint) -> DesignPoint:
    """Geometric line search along the last accepted step.

    The minorize-maximize tail often crawls along one slowly contracting
    direction, so candidates new + gamma (new - prev), projected back onto
    the budget and beampattern sets, can realize many tail iterations in one
    jump. Evaluation is closed form, and only strictly improving feasible
    candidates are adopted, so the monotone rate trace is preserved and the
    subproblem count is unchanged.
    """
    best, best_sr = new, _true_sr(channels, new)
    for gamma in _EXTRAPOLATION_GAMMAS:
        v = [nv + gamma * (nv - pv) for pv, nv in zip(prev.v_cov, new.v_cov)]
        w = new.w_cov + gamma * (new.w_cov - prev.w_cov)
        p = new.p_ul + gamma * (new.p_ul - prev.p_ul)
        cand = _project_budgets(channels, cfg, v, w, p)
        if masks is not None and channels.n_eve:
            try:
                # candidates must clear the tightened cap the subproblem
                # enforces, so accepted iterates stay feasible for the next
                # expansion's constraint set
                if (ismr(q_matrix(cand), masks)
                        > cfg.ismr_max * (1.0 - ISMR_SOLVER_MARGIN)):
                    break
            except metrics.DegenerateBeampatternError:
                # a zero covariance satisfies the cap vacuously; any other
                # degenerate pattern is rejected
                if float(np.abs(q_matrix(cand)).max()) > 0.0:
                    break
        sr = _true_sr(channels, cand)
        if sr <= best_sr + 1e-12:
            break
        best, best_sr = cand, sr
    return best


def _record(channels, point, masks, surrogate_obj, status, wall,
            cfg, backend="") -> IterationRecord:
    sr_dl = metrics.sum_secrecy_dl(channels, point)
    sr_ul = metrics.sum_secrecy_ul(channels, point)
    q = q_matrix(point)
    try:
        ach = ismr(q, masks) if (masks is not None and channels.n_eve) else math.nan
    except metrics.DegenerateBeampatternError:
        ach = math.nan
    used_v = sum(float(np.real(np.trace(v))) for v in point.v_cov)
    used_w = float(np.real(np.trace(point.w_cov)))
    return IterationRecord(
        surrogate_objective=surrogate_obj, sr_dl=sr_dl, sr_ul=sr_ul,
        sr_total=sr_dl + sr_ul, ismr=ach,
        budget_v=used_v / cfg.p_dl_v if cfg.p_dl_v > 0 else 0.0,
        budget_w=used_w / cfg.p_dl_w if cfg.p_dl_w > 0 else 0.0,
        budget_ul=float(point.p_ul.sum()) / cfg.p_ul if cfg.p_ul > 0 else 0.0,
        solver_status=status, wall_time=wall, backend=backend)


def run_ijtb(channels: ChannelSet, cfg: ScenarioConfig,
             masks: SensingMasks | None = None,
             options: IjtbOptions | None = None) -> SolveReport:
    """Run the alternating optimization from an all-zero start.

    Stops when the true sum secrecy rate moves less than the tolerance for
    `window` consecutive iterations, when the solution is an exact fixed point
    of the iteration, or at the iteration cap. Candidate iterates that would
    lower the exact rate are rejected, so the recorded rate trace is
    non-decreasing by construction; each rejection re-expands geometrically
    closer to the last accepted iterate and re-solves, and three consecutive
    rejections end the run at the best point found. A failed subproblem
    solve retreats the expansion the same way and retries once; a second
    consecutive failure stops with status "degraded". From the second
    iteration on (or from the first under `warm_start`), users whose uplink
    slack expansion has collapsed to zero are re-seeded from a uniform-power
    hypothesis, so a single zero-power iterate cannot permanently silence
    the uplink.
    """
    opts = options or IjtbOptions()
    L, K = channels.n_dl, channels.n_ul
    zero_q = bool(masks is not None and channels.n_eve
                  and ismr_vacuous_only(
                      masks, cfg.ismr_max * (1.0 - ISMR_SOLVER_MARGIN)))
    tilde = DesignPoint.zeros(channels.n_tx, channels.n_rx, L, K)
    prev_tilde = tilde
    # retry blends move only the expansion point `tilde`; the returned design
    # must be the last iterate that actually passed the monotonicity check
    accepted = tilde
    records = []
    deltas = []
    sr_prev = 0.0
    damping = 1.0
    failures = 0
    rejections = 0
    status = "ok"
    converged = False
    stop_reason = "max-iterations"

    it = 0
    skip_revival = False
    while it < opts.max_iterations:
        t_tilde, _ = canonical_slacks(channels, tilde.p_ul, tilde.v_cov,
                                      tilde.w_cov)
        revived = False
        if (it > 0 or opts.warm_start) and not skip_revival:
            seeded = _revived_t_tilde(channels, cfg, tilde, t_tilde)
            revived = not np.array_equal(seeded, t_tilde)
            t_tilde = seeded
        skip_revival = False
        expansion = ExpansionPoint.build(channels, tilde.p_ul, tilde.v_cov,
                                         tilde.w_cov, t_tilde=t_tilde)
        t0 = time.perf_counter()
        program = build_p13(channels, cfg, masks, expansion, zero_tx=zero_q)
        result = solve(program, opts.tolerances)
        wall = time.perf_counter() - t0
        if result.status not in ("optimal", "near-optimal"):
            failures += 1
            if failures == 1:
                # retreat halfway toward the previously accepted iterate and retry
                damping *= 0.5
                tilde = _blend(prev_tilde, tilde, damping, channels)
                continue
            status = "degraded"
            stop_reason = "solver-failure"
            break
        new_point = _assemble_point(channels, result.point, zero_q=zero_q)
        debug = log.isEnabledFor(logging.DEBUG)
        if debug:
            log.debug("it %d: raw candidate sr=%.6f (backend=%s status=%s)",
                      it, _true_sr(channels, new_point), result.backend,
                      result.status)
        if masks is not None and channels.n_eve and not zero_q:
            repaired = _repair_ismr(channels, cfg, masks, new_point)
            if repaired is not None:
                if debug and repaired is not new_point:
                    log.debug("it %d: ismr repair -> sr=%.6f", it,
                              _true_sr(channels, repaired))
                new_point = repaired
        if it > 0 and failures == 0 and rejections == 0:
            new_point = _extrapolate(channels, cfg, masks, tilde, new_point)
        record = _record(channels, new_point, masks, result.objective,
                         result.status, wall, cfg, backend=result.backend)
        if (masks is not None and channels.n_eve
                and not math.isnan(record.ismr)
                and record.ismr > cfg.ismr_max + 1e-6):
            # reduced-accuracy dust on a binding cap row: never accept an
            # iterate that breaks the true sidelobe cap
            failures += 1
            if failures >= 2:
                status = "degraded"
                stop_reason = "solver-failure"
                break
            damping *= 0.5
            tilde = _blend(prev_tilde, tilde, damping, channels)
            continue
        drop = sr_prev - record.sr_total
        if drop > 1e-9:
            if revived:
                # the re-seeded expansion is not tight at the iterate, so a
                # drop is inconclusive; retry once with canonical slacks,
                # whose candidate carries the minorize-maximize guarantee
                skip_revival = True
                continue
            if (drop <= opts.rate_tolerance and failures == 0
                    and rejections == 0):
                # stationarity up to the subproblem solver's accuracy floor
                converged = True
                stop_reason = "safeguard"
                break
            # a worse candidate is a bad solve; shrink the step and re-expand
            # nearer the accepted iterate, where the surrogate is trustworthy
            log.debug("it %d: candidate dropped %.3e bps/Hz (backend=%s, "
                      "rejections=%d)", it, drop, result.backend, rejections)
            rejections += 1
            if rejections >= 3:
                converged = True
                stop_reason = "safeguard"
                break
            damping *= 0.5
            tilde = _blend(prev_tilde, tilde, damping, channels)
            continue
        failures = 0
        rejections = 0
        damping = 1.0
        it += 1
        records.append(record)
        deltas.append(abs(record.sr_total - sr_prev))
        sr_prev = record.sr_total
        moved = _point_distance(tilde, new_point)
        prev_tilde, tilde = tilde, new_point
        accepted = new_point
        if moved < 1e-12:
            converged = True
            stop_reason = "fixed-point"
            break
        if len(deltas) >= opts.window and all(d < opts.rate_tolerance
                                              for d in deltas[-opts.window:]):
            converged = True
            stop_reason = "rate-delta"
            break

    rank_ratios = np.array([_rank_ratio(v) for v in accepted.v_cov])
    return SolveReport(iterations=records, point=accepted, converged=converged,
                       status=status, rank_ratios=rank_ratios,
                       stop_reason=stop_reason)


def _blend(a: DesignPoint, b: DesignPoint, eta: float,
           channels: ChannelSet) -> DesignPoint:
    v = [av + eta * (bv - av) for av, bv in zip(a.v_cov, b.v_cov)]
    w = a.w_cov + eta * (b.w_cov - a.w_cov)
    p = a.p_ul + eta * (b.p_ul - a.p_ul)
    q = np.array(w)
    for vv in v:
        q = q + vv
    u = np.array(b.u_rx)
    for k in range(channels.n_ul):
        u[k] = ul_beamformer(k, channels, q, p)
    return DesignPoint(v_cov=v, w_cov=w, p_ul=p, u_rx=u,
                       slack_w=a.slack_w + eta * (b.slack_w - a.slack_w),
                       slack_t=a.slack_t + eta * (b.slack_t - a.slack_t))


def _point_distance(a: DesignPoint, b: DesignPoint) -> float:
    d = float(np.max(np.abs(a.w_cov - b.w_cov))) if a.w_cov.size else 0.0
    for av, bv in zip(a.v_cov, b.v_cov):
        d = max(d, float(np.max(np.abs(av - bv))))
    if a.p_ul.size:
        d = max(d, float(np.max(np.abs(a.p_ul - b.p_ul))))
    return d


def _rank_ratio(v: np.ndarray) -> float:
    lam = np.linalg.eigvalsh((v + v.conj().T) / 2)
    if lam[-1] <= 1e-12:
        return 0.0
    return float(max(lam[-2], 0.0) / lam[-1]) if lam.size > 1 else 0.0


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------

def _matched_v(channels: ChannelSet, budget: float) -> list:
    """Equal-power matched-filter covariances toward each downlink user."""
    L = channels.n_dl
    out = []
    for ell in range(L):
        h = channels.h_dl[ell]
        nrm = np.linalg.norm(h)
        if nrm == 0:
            out.append(np.zeros((channels.n_tx, channels.n_tx), dtype=complex))
            continue
        hh = h / nrm
        out.append((budget / L) * np.outer(hh, hh.conj()))
    return out


def _finish(channels: ChannelSet, v_cov, w_cov, p_ul) -> DesignPoint:
    q = np.array(w_cov, dtype=complex)
    for v in v_cov:
        q = q + v
    u = np.zeros((channels.n_ul, channels.n_rx), dtype=complex)
    for k in range(channels.n_ul):
        u[k] = ul_beamformer(k, channels, q, p_ul)
    return DesignPoint(v_cov=v_cov, w_cov=w_cov, p_ul=p_ul, u_rx=u)


def bench_iso_an(channels: ChannelSet, cfg: ScenarioConfig) -> DesignPoint:
    """Isotropic artificial noise on the downlink nullspace.

    AN power spreads uniformly over the orthogonal complement of the stacked
    downlink channels; downlink beams are equal-power matched filters; uplink
    power splits equally.
    """
    nt, L, K = channels.n_tx, channels.n_dl, channels.n_ul
    if L >= nt:
        raise ValueError("isotropic AN needs fewer downlink users than antennas")
    if L:
        hmat = channels.h_dl.T  # (N_T, L)
        gram = hmat.conj().T @ hmat
        proj = np.eye(nt) - hmat @ np.linalg.solve(gram, hmat.conj().T)
        proj = (proj + proj.conj().T) / 2
    else:
        proj = np.eye(nt, dtype=complex)
    w_cov = cfg.p_dl_w / (nt - L) * proj
    v_cov = _matched_v(channels, cfg.p_dl_v)
    p_ul = np.full(K, cfg.p_ul / K) if K else np.zeros(0)
    return _finish(channels, v_cov, w_cov, p_ul)


def bench_iso_no_an(channels: ChannelSet, cfg: ScenarioConfig) -> DesignPoint:
    """No artificial noise; its budget splits equally between downlink
    beamforming and uplink transmit power."""
    nt, L, K = channels.n_tx, channels.n_dl, channels.n_ul
    bonus = cfg.p_dl_w / 2.0
    v_budget = cfg.p_dl_v + (bonus if L else 0.0)
    ul_budget = cfg.p_ul + (bonus if K else 0.0)
    w_cov = np.zeros((nt, nt), dtype=complex)
    v_cov = _matched_v(channels, v_budget)
    p_ul = np.full(K, ul_budget / K) if K else np.zeros(0)
    return _finish(channels, v_cov, w_cov, p_ul)


def bench_feasible(channels: ChannelSet, cfg: ScenarioConfig,
                   masks: SensingMasks | None,
                   rng: np.random.Generator,
                   max_draws: int = 100) -> tuple:
    """Random design exhausting every power budget with equality.

    Covariances are random PSD draws rescaled to their budgets, uplink powers
    a rescaled uniform draw, receive beamformers random unit vectors. Draws
    `max_draws` candidates and keeps the one with the smallest
    sidelobe-to-mainlobe ratio; returns (point, ismr_ok) where the flag
    records whether that ratio meets the cap. The draw count is fixed so the
    selected design depends only on the generator state, never on the cap:
    sweeping the cap leaves the baseline unchanged and only flips the flag.
    """
    nt, L, K, P = channels.n_tx, channels.n_dl, channels.n_ul, channels.n_eve

    def draw():
        def rand_psd():
            a = (rng.standard_normal((nt, nt)) + 1j * rng.standard_normal((nt, nt)))
            m = a @ a.conj().T
            return m / np.real(np.trace(m))
        v_cov = [rand_psd() for _ in range(L)]
        if L:
            scale = cfg.p_dl_v / L
            v_cov = [scale * v for v in v_cov]
        w_cov = cfg.p_dl_w * rand_psd()
        if K:
            p_raw = rng.uniform(0.1, 1.0, size=K)
            p_ul = cfg.p_ul * p_raw / p_raw.sum()
        else:
            p_ul = np.zeros(0)
        u = np.zeros((K, channels.n_rx), dtype=complex)
        for k in range(K):
            g = rng.standard_normal(channels.n_rx) + 1j * rng.standard_normal(channels.n_rx)
            u[k] = g / np.linalg.norm(g)
        return DesignPoint(v_cov=v_cov, w_cov=w_cov, p_ul=p_ul, u_rx=u)

    if not P or masks is None:
        return draw(), True
    best, best_ismr = None, math.inf
    for _ in range(max_draws):
        cand = draw()
        ach = ismr(q_matrix(cand), masks)
        if ach < best_ismr:
            best, best_ismr = cand, ach
    return best, bool(best_ismr <= cfg.ismr_max)
