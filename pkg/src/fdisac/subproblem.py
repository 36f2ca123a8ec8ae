"""Conic formulation and solution of the per-iteration convex subproblem.

Given channels, budgets, beampattern masks and an expansion point, the builder
assembles the concave-maximization program over the lifted downlink
covariances V_l, the artificial-noise covariance W, uplink powers p and the
two uplink slack vectors (varpi, vartheta):

  maximize   surrogate downlink secrecy + surrogate uplink secrecy
  subject to sum_l tr(V_l) <= P_DL^V,  tr(W) <= P_DL^W,  sum_k p_k <= P_UL
             tr((sum_l V_l + W)(A_side - ismr_max * A_main)) <= 0
             vartheta_k^2 / p_k <= linearized inverse-quadratic bound
             varpi_k <= t_tilde_k^2 + 2 t_tilde_k (vartheta_k - t_tilde_k)
             V_l >= 0, W >= 0, p >= 0, varpi >= 0, vartheta >= 0

The log objective lands on the exponential cone, the quadratic-over-linear
constraint on a second-order cone and the covariances on PSD cones; the
backend must support all three (CLARABEL by default, SCS as fallback). The
complex Hermitian variables are embedded into real symmetric cones by cvxpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import cvxpy as cp

from .metrics import LN2, SensingMasks, psd_clean
from .scene import ChannelSet, ScenarioConfig, steering_vector
from .surrogate import ExpansionPoint

SUPPORTED_STATUSES = ("optimal", "near-optimal", "infeasible", "numerical-failure")

# relative tightening of the sidelobe cap inside the solver, sized to absorb
# the feasibility dust a reduced-accuracy solve can leave on a binding row
ISMR_SOLVER_MARGIN = 1e-4


@dataclass
class SolveTolerances:
    feasibility: float = 1e-8
    gap: float = 1e-8
    max_iterations: int = 200
    solver: str = "CLARABEL"
    # fallback acceptance when the interior-point solver stalls short of full
    # accuracy; stalled-but-close points come back as "near-optimal"
    reduced_gap: float = 1e-2
    reduced_feasibility: float = 1e-3


@dataclass
class SolverResult:
    status: str
    point: dict | None          # variable name -> value arrays
    objective: float | None     # builder-evaluated objective at the point
    solver_objective: float | None
    max_residual: float | None  # largest normalized constraint violation
    backend: str = ""           # which solver produced the point


@dataclass
class ConicProgram:
    """A built subproblem plus everything needed to audit its solution."""

    problem: cp.Problem
    variables: dict
    manifest: dict                        # variable bookkeeping
    constraint_names: list
    constraint_evals: list                # callables point-dict -> violation
    objective_eval: Callable              # point-dict -> float, bps/Hz
    notes: list = field(default_factory=list)

    def extract(self) -> dict:
        """Pull solved variable values into plain arrays.

        Values are projected back onto their variable domains (PSD cones,
        nonnegative orthants): a solve accepted at reduced accuracy can
        violate them by up to the reduced feasibility tolerance, which is
        enough to push interference terms below the noise floor.
        """
        out = {}
        v = self.variables
        out["v_cov"] = [psd_clean(np.array(x.value)) for x in v["v_cov"]]
        out["w_cov"] = psd_clean(np.array(v["w_cov"].value))
        for name in ("p_ul", "slack_w", "slack_t"):
            out[name] = (np.clip(np.asarray(v[name].value, dtype=float).reshape(-1),
                                 0.0, None)
                         if v[name] is not None else np.zeros(0))
        return out

    def dump(self) -> str:
        """Human-readable program description for debugging."""
        lines = ["variables:"]
        for name, count, size in self.manifest["entries"]:
            lines.append(f"  {name}: {count} x {size}")
        lines.append(f"scalar variables total: {self.manifest['scalar_count']}")
        lines.append(f"matrix variables total: {self.manifest['matrix_count']}")
        lines.append("constraints:")
        for name in self.constraint_names:
            lines.append(f"  {name}")
        for note in self.notes:
            lines.append(f"note: {note}")
        lines.append(f"objective: maximize concave surrogate secrecy rate "
                     f"({self.manifest['log_terms']} log terms)")
        return "\n".join(lines)


def build_p13(channels: ChannelSet, cfg: ScenarioConfig, masks: SensingMasks | None,
              expansion: ExpansionPoint, zero_tx: bool = False) -> ConicProgram:
    """Assemble the convex subproblem at the given expansion point.

    With `zero_tx` the downlink covariances are pinned to zero and the
    beampattern row is dropped: callers set it when the sidelobe cap admits
    only the vacuous zero covariance, where pinning replaces an interior-dust
    solution whose shape would depend on the (irrelevant) cap value.
    """
    nt = channels.n_tx
    L, K, P = channels.n_dl, channels.n_ul, channels.n_eve
    notes = []

    v_cov = [cp.Variable((nt, nt), hermitian=True, name=f"v_cov_{l}") for l in range(L)]
    w_cov = cp.Variable((nt, nt), hermitian=True, name="w_cov")
    p_ul = cp.Variable(K, nonneg=True, name="p_ul") if K else None
    slack_w = cp.Variable(K, nonneg=True, name="slack_w") if K else None
    slack_t = cp.Variable(K, nonneg=True, name="slack_t") if K else None

    q_expr = w_cov
    for v in v_cov:
        q_expr = q_expr + v

    cons = []
    names = []
    evals = []

    def add(name, constraint, evaluator):
        cons.append(constraint)
        names.append(name)
        evals.append(evaluator)

    def np_q(pt):
        q = np.array(pt["w_cov"], dtype=complex)
        for v in pt["v_cov"]:
            q = q + v
        return q

    # --- cones ---
    for l in range(L):
        add(f"psd: v_cov_{l} >= 0", v_cov[l] >> 0,
            lambda pt, l=l: max(0.0, -float(np.linalg.eigvalsh(
                (pt["v_cov"][l] + pt["v_cov"][l].conj().T) / 2).min())))
    add("psd: w_cov >= 0", w_cov >> 0,
        lambda pt: max(0.0, -float(np.linalg.eigvalsh(
            (pt["w_cov"] + pt["w_cov"].conj().T) / 2).min())))

    # --- budgets ---
    pv, pw, pul = cfg.p_dl_v, cfg.p_dl_w, cfg.p_ul
    if L:
        add(f"budget: sum tr(v_cov) <= {pv:g}",
            sum(cp.real(cp.trace(v)) for v in v_cov) <= pv,
            lambda pt: (sum(float(np.real(np.trace(v))) for v in pt["v_cov"]) - pv)
            / max(1.0, pv))
    add(f"budget: tr(w_cov) <= {pw:g}", cp.real(cp.trace(w_cov)) <= pw,
        lambda pt: (float(np.real(np.trace(pt["w_cov"]))) - pw) / max(1.0, pw))
    if K:
        add(f"budget: sum p_ul <= {pul:g}", cp.sum(p_ul) <= pul,
            lambda pt: (float(pt["p_ul"].sum()) - pul) / max(1.0, pul))

    # --- beampattern ---
    if zero_tx:
        for l in range(L):
            add(f"zero tx: v_cov_{l} == 0", v_cov[l] == 0,
                lambda pt, l=l: float(np.abs(pt["v_cov"][l]).max()))
        add("zero tx: w_cov == 0", w_cov == 0,
            lambda pt: float(np.abs(pt["w_cov"]).max()))
        notes.append("ismr cap admits only the zero covariance; "
                     "downlink covariances pinned, cap row dropped")
    elif P and masks is not None:
        # the row is tightened by a relative margin so that points accepted at
        # the solver's reduced feasibility tolerance still satisfy the true
        # cap, and scaled to O(1) data for the solver
        mmax = cfg.ismr_max * (1.0 - ISMR_SOLVER_MARGIN)
        mask_mat = (masks.a_side - mmax * masks.a_main) / max(1.0, mmax)
        add(f"ismr: tr(Q (A_side - {mmax:g} A_main)) <= 0",
            cp.real(cp.trace(q_expr @ mask_mat)) <= 0,
            lambda pt: float(np.real(np.trace(np_q(pt) @ mask_mat))))
    else:
        notes.append("ismr constraint skipped (no sensing targets or masks)")

    # --- uplink slack chain ---
    for k in range(K):
        tt = expansion.t_tilde[k]
        if tt <= 0.0:
            # dead expansion point: the epigraph collapses to slack_w_k = 0 and
            # the rate bound row would be a degenerate cone vertex, so pin the
            # slacks instead of emitting it
            add(f"ul slack pinned: slack_t_{k} == 0 (dead expansion)",
                slack_t[k] == 0,
                lambda pt, k=k: abs(float(pt["slack_t"][k])))
            add(f"ul slack pinned: slack_w_{k} == 0 (dead expansion)",
                slack_w[k] == 0,
                lambda pt, k=k: abs(float(pt["slack_w"][k])))
            continue
        b = expansion.phi_inv_h[k]
        ck = expansion.c_resp[k]           # C^H Phi_t^{-1} h
        m_k = np.outer(ck, ck.conj())
        const_k = float(np.real(b.conj() @ channels.r_clutter @ b)
                        + channels.noise_dfrc * np.real(b.conj() @ b))
        cross = np.array([abs(np.vdot(b, channels.h_ul[kk])) ** 2 for kk in range(K)])
        rhs = 2.0 * expansion.d0[k] - const_k - cp.real(cp.trace(q_expr @ m_k))
        for kk in range(K):
            if kk != k:
                rhs = rhs - cross[kk] * p_ul[kk]

        def rhs_np(pt, k=k, cross=cross, m_k=m_k, const_k=const_k):
            val = 2.0 * expansion.d0[k] - const_k
            val -= float(np.real(np.trace(np_q(pt) @ m_k)))
            for kk in range(len(pt["p_ul"])):
                if kk != k:
                    val -= cross[kk] * pt["p_ul"][kk]
            return val

        # both chain rows carry SINR-scale data (1e3..1e5) next to unit-scale
        # budget and cone rows, which pushes the solver's equilibration past
        # its window; dividing each row by its expansion-point magnitude
        # keeps the encoded data O(1) without changing the constraint
        s_bound = max(1.0, 2.0 * expansion.d0[k])
        add(f"ul bound: slack_t_{k}^2 / p_{k} <= linearized inverse-quadratic",
            cp.quad_over_lin(slack_t[k] / math.sqrt(s_bound), p_ul[k])
            <= rhs / s_bound,
            lambda pt, k=k, rhs_np=rhs_np: (
                (pt["slack_t"][k] ** 2 / pt["p_ul"][k] if pt["p_ul"][k] > 0
                 else (0.0 if pt["slack_t"][k] <= 1e-12 else math.inf)) - rhs_np(pt)))
        s_epi = 1.0 + tt * tt
        add(f"ul epigraph: slack_w_{k} <= linearized slack_t_{k}^2",
            slack_w[k] / s_epi
            <= (tt**2 + 2.0 * tt * (slack_t[k] - tt)) / s_epi,
            lambda pt, k=k, tt=tt: pt["slack_w"][k] - (tt**2 + 2.0 * tt * (pt["slack_t"][k] - tt)))

    # --- objective, nats ---
    # Every log argument is divided by its value at the expansion point, so
    # the exponential cones see coefficients in the argument's own relative
    # scale instead of the raw noise floor (up to 1e8 apart); this shifts the
    # solver objective by a constant without moving the argmax.
    obj = 0
    log_terms = 0

    # downlink user terms: log(S + I + sigma) minus the phi_1 expansion
    for ell in range(L):
        h = channels.h_dl[ell]
        h_mat = np.outer(h, h.conj())
        sig = channels.noise_dl[ell]
        expr = cp.real(cp.trace(q_expr @ h_mat)) + sig
        val = float(np.real(np.trace(expansion.q_tilde @ h_mat))) + sig
        if K:
            gains = np.abs(channels.q_ul_dl[:, ell]) ** 2
            expr = expr + gains @ p_ul
            val += float(gains @ expansion.p_tilde)
        obj = obj + cp.log(expr / val)
        log_terms += 1
        base = expansion.i_dl_tilde[ell] + sig
        lin = cp.Constant(0.0)
        if K:
            lin = lin + np.abs(channels.q_ul_dl[:, ell]) ** 2 @ (p_ul - expansion.p_tilde)
        for lp in range(L):
            if lp != ell:
                lin = lin + cp.real(cp.trace((v_cov[lp] - expansion.v_tilde[lp]) @ h_mat))
        lin = lin + cp.real(cp.trace((w_cov - expansion.w_tilde) @ h_mat))
        obj = obj - (math.log(base) + lin / base)

    # eavesdropper terms
    for pp in range(P):
        a = steering_vector(nt, channels.theta[pp], channels.element_spacing)
        a_mat = np.outer(a, a.conj())
        a2 = abs(channels.alpha[pp]) ** 2
        g2 = np.abs(channels.g_ul_eve[:, pp]) ** 2
        sig = channels.noise_eve[pp]

        # log(I_eve^dl + sigma): AN plus uplink leakage at the eavesdropper
        i_dl_eve = a2 * cp.real(cp.trace(w_cov @ a_mat)) + sig
        val = a2 * float(np.real(np.trace(expansion.w_tilde @ a_mat))) + sig
        if K:
            i_dl_eve = i_dl_eve + g2 @ p_ul
            val += float(g2 @ expansion.p_tilde)
        obj = obj + cp.log(i_dl_eve / val)
        log_terms += 1

        # shared affine delta through the sensing direction
        dq = q_expr - expansion.q_tilde
        lin = a2 * cp.real(cp.trace(dq @ a_mat))
        if K:
            lin = lin + g2 @ (p_ul - expansion.p_tilde)

        # phi_2 expansion
        base2 = expansion.s_eve_tilde[pp] + expansion.i_eve_tilde[pp] + sig
        obj = obj - (math.log(base2) + lin / base2)

        if K:
            # uplink interception: log(I_pk + sigma) terms and K * phi_3
            echo = a2 * cp.real(cp.trace(q_expr @ a_mat))
            echo_val = a2 * float(np.real(np.trace(expansion.q_tilde @ a_mat)))
            for k in range(K):
                i_pk = echo + sig
                val = echo_val + sig
                for kk in range(K):
                    if kk != k:
                        i_pk = i_pk + g2[kk] * p_ul[kk]
                        val += float(g2[kk] * expansion.p_tilde[kk])
                obj = obj + cp.log(i_pk / val)
                log_terms += 1
            base3 = expansion.psi_tilde[pp] + sig
            obj = obj - K * (math.log(base3) + lin / base3)

    for k in range(K):
        tt = expansion.t_tilde[k]
        obj = obj + cp.log((1 + slack_w[k]) / (1.0 + tt * tt))
        log_terms += 1

    notes.append("solver objective shifted by a constant "
                 "(log arguments normalized at the expansion point)")
    problem = cp.Problem(cp.Maximize(obj / LN2), cons)

    # independent numpy evaluation of the same objective
    def objective_eval(pt: dict) -> float:
        from .surrogate import surrogate_sr_dl, surrogate_sr_ul_lb
        from .metrics import DesignPoint
        K_ = len(pt["p_ul"])
        u = np.zeros((K_, channels.n_rx), dtype=complex)
        if K_:
            u[:, 0] = 1.0
        dp = DesignPoint(v_cov=list(pt["v_cov"]), w_cov=pt["w_cov"], p_ul=pt["p_ul"],
                         u_rx=u, slack_w=pt["slack_w"], slack_t=pt["slack_t"])
        return (surrogate_sr_dl(channels, expansion, dp)
                + surrogate_sr_ul_lb(channels, expansion, dp))

    manifest = {
        "entries": [("v_cov", L, f"{nt}x{nt} hermitian"),
                    ("w_cov", 1, f"{nt}x{nt} hermitian"),
                    ("p_ul", 1, f"{K} nonneg"),
                    ("slack_w", 1, f"{K} nonneg"),
                    ("slack_t", 1, f"{K} nonneg")],
        "matrix_count": L + 1,
        "scalar_count": 3 * K,
        "log_terms": log_terms,
    }
    return ConicProgram(problem=problem,
                        variables={"v_cov": v_cov, "w_cov": w_cov, "p_ul": p_ul,
                                   "slack_w": slack_w, "slack_t": slack_t},
                        manifest=manifest, constraint_names=names,
                        constraint_evals=evals, objective_eval=objective_eval,
                        notes=notes)


_STATUS_MAP = {
    cp.OPTIMAL: "optimal",
    cp.OPTIMAL_INACCURATE: "near-optimal",
    cp.INFEASIBLE: "infeasible",
    cp.INFEASIBLE_INACCURATE: "infeasible",
}


def solve(program: ConicProgram, tolerances: SolveTolerances | None = None) -> SolverResult:
    """Solve a built program and audit the returned point.

    Maps backend statuses onto {optimal, near-optimal, infeasible,
    numerical-failure}; on success the result carries the builder-evaluated
    objective and the largest normalized constraint violation.
    """
    tol = tolerances or SolveTolerances()

    def backend_kwargs(solver):
        if solver == "CLARABEL":
            return {"max_iter": tol.max_iterations, "tol_feas": tol.feasibility,
                    "tol_gap_abs": tol.gap, "tol_gap_rel": tol.gap,
                    "reduced_tol_gap_abs": tol.reduced_gap,
                    "reduced_tol_gap_rel": tol.reduced_gap,
                    "reduced_tol_feas": tol.reduced_feasibility,
                    "reduced_tol_ktratio": 0.1}
        if solver == "SCS":
            return {"max_iters": max(tol.max_iterations * 100, 5000),
                    "eps": max(tol.feasibility, 1e-6)}
        return {}

    chain = [tol.solver]
    if tol.solver == "CLARABEL":
        chain.append("SCS")
    status = "numerical-failure"
    used = ""
    for solver in chain:
        try:
            program.problem.solve(solver=solver, **backend_kwargs(solver))
        except (cp.SolverError, ValueError, ArithmeticError):
            status = "numerical-failure"
            continue
        status = _STATUS_MAP.get(program.problem.status, "numerical-failure")
        if status != "numerical-failure":
            used = solver
            break
    if status in ("infeasible", "numerical-failure"):
        return SolverResult(status=status, point=None, objective=None,
                            solver_objective=None, max_residual=None,
                            backend=used)
    try:
        pt = program.extract()
    except np.linalg.LinAlgError:
        return SolverResult(status="numerical-failure", point=None, objective=None,
                            solver_objective=None, max_residual=None,
                            backend=used)
    if any(np.any(~np.isfinite(np.asarray(v, dtype=complex).view(float)))
           for v in [pt["w_cov"], pt["p_ul"], pt["slack_w"], pt["slack_t"]] + pt["v_cov"]):
        return SolverResult(status="numerical-failure", point=None, objective=None,
                            solver_objective=None, max_residual=None,
                            backend=used)
    residual = max((ev(pt) for ev in program.constraint_evals), default=0.0)
    objective = program.objective_eval(pt)
    return SolverResult(status=status, point=pt, objective=objective,
                        solver_objective=float(program.problem.value),
                        max_residual=float(residual), backend=used)
