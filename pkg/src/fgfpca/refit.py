"""Full-resolution model refit with the estimated eigenfunctions fixed.

The model is g(E[Z_i(s_j)]) = beta0(s_j) + sum_k xi_ik phi_k(s_j), with
beta0 expanded in a penalized cubic B-spline basis and xi_ik ~ N(0,
sigma_k^2). Fitting is penalized IRLS: every outer iteration solves the
joint working linear mixed model for (spline coefficients, all subject
scores) through the subject-block Schur complement, selects the mean
smoothing parameter by REML on that working model, and updates the
score variances by EM. A final polish at fixed hyperparameters drives
the penalized deviance to a monotone finish.

The REML search for lambda_beta runs over a bounded log-scale grid,
matching the bounded GCV search used by the covariance smoother: with
weak information the working REML profile can flatten one-sidedly in
lambda, and an unbounded search would degenerate the mean curve.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import FunctionalDataset
from .errors import ConfigError, DataError, NumericalError
from .families import get_family
from .fpca import FpcaBasis
from .splines import bspline_basis, difference_penalty, knots_for_dim, penalty_rank_logdet

VAR_FLOOR = 1e-8


@dataclass(frozen=True)
class RefitOptions:
    nbasis: int = 20
    max_outer: int = 100
    tol: float = 1e-6
    loglam_lower: float = 0.0
    loglam_upper: float = 7.5
    loglam_step: float = 0.5
    polish_iters: int = 30

    @property
    def loglam_grid(self):
        return np.arange(self.loglam_lower, self.loglam_upper + 1e-12, self.loglam_step)


@dataclass(frozen=True)
class GfpcaFit:
    grid: np.ndarray  # (J,) original coordinates
    beta0_full: np.ndarray  # (J,)
    beta0_coefs: np.ndarray  # (p,)
    lambda_beta: float
    scores: np.ndarray  # (N, K)
    score_vars: np.ndarray  # (K,)
    basis: FpcaBasis
    eta_full: np.ndarray  # (N, J) = beta0 + scores @ phi'
    fitted_means: np.ndarray  # (N, J)
    family: object
    subject_ids: tuple
    sigma2_resid: float | None = None  # gaussian residual variance
    iterations: int = 0
    converged: bool = True
    timings: dict = field(default_factory=dict)  # minutes per step
    diagnostics: dict = field(default_factory=dict)


def _blocks(wts, u, B, Phi):
    """Accumulate the working-model blocks, chunking subjects so the
    N x J x K intermediate stays small."""
    N, J = wts.shape
    p = B.shape[1]
    K = Phi.shape[1]
    BtWB = B.T @ (wts.sum(axis=0)[:, None] * B)
    rB = B.T @ (wts * u).sum(axis=0)
    uWu = float(np.sum(wts * u * u))
    Ai0 = np.empty((N, K, K))
    Ci = np.empty((N, K, p))
    ri = np.empty((N, K))
    chunk = max(1, int(4_000_000 // max(J * K, 1)))
    for a in range(0, N, chunk):
        b = min(a + chunk, N)
        WPhi = wts[a:b, :, None] * Phi[None, :, :]
        Ai0[a:b] = np.einsum("cjk,jl->ckl", WPhi, Phi)
        Ci[a:b] = np.einsum("cjk,jp->ckp", WPhi, B)
        ri[a:b] = np.einsum("cjk,cj->ck", WPhi, u[a:b])
    return BtWB, rB, uWu, Ai0, Ci, ri


def _working_solve(lam, P, BtWB, rB, uWu, Ai, Aii, Ci, ri, CAiC, rhs0):
    """Solve the joint working system at one lambda; returns the
    candidate (theta, xi), the minimized penalized working RSS, and
    log|M| of the Schur complement."""
    M = BtWB + lam * P - CAiC
    theta = np.linalg.solve(M, rhs0)
    ct = np.einsum("ikp,p->ik", Ci, theta)
    xi = np.einsum("ikl,il->ik", Aii, ri - ct)
    xiAxi = float(np.einsum("ik,ikl,il->", xi, Ai, xi))
    rsspen = (
        uWu
        - 2.0 * (theta @ rB + float(np.sum(xi * ri)))
        + theta @ (BtWB @ theta)
        + lam * (theta @ P @ theta)
        + 2.0 * float(np.sum(xi * ct))
        + xiAxi
    )
    sign, logdetM = np.linalg.slogdet(M)
    if sign <= 0:
        raise NumericalError("working-model system lost positive definiteness")
    return theta, xi, float(rsspen), float(logdetM), M


def refit_global(
    data: FunctionalDataset, basis: FpcaBasis, opts: RefitOptions = RefitOptions()
) -> GfpcaFit:
    """Fit the full-grid model holding the eigenfunctions fixed.

    Convergence: relative change of the penalized deviance < opts.tol,
    within opts.max_outer outer iterations (then a short fixed-
    hyperparameter polish). Raises ConfigError when K > N-1.
    """
    t_start = time.perf_counter()
    family = data.family
    z = data.values
    N, J = z.shape
    if basis.eigenfunctions_full is None:
        raise DataError("basis has no full-grid eigenfunctions; run project_to_full_grid first")
    Phi = basis.eigenfunctions_full
    if Phi.shape[0] != J:
        raise DataError(f"eigenfunctions evaluated on {Phi.shape[0]} points but data has J={J}")
    K = Phi.shape[1]
    if K < 1:
        raise ConfigError("need at least one component")
    if K > N - 1:
        raise ConfigError(f"K={K} components cannot exceed N-1={N - 1}")

    x = data.grid_normalized
    nknots = knots_for_dim(opts.nbasis, data.cyclic)
    B = bspline_basis(x, nknots, data.cyclic)
    p = B.shape[1]
    P = difference_penalty(p, 2, data.cyclic)
    rankP, _ = penalty_rank_logdet(P)
    grid_loglam = opts.loglam_grid

    theta = np.zeros(p)
    xi = np.zeros((N, K))
    sig2 = np.clip(np.asarray(basis.eigenvalues[:K], dtype=float), 1e-4, None)
    sigma_e2 = float(np.var(z)) if family.name == "gaussian" else None
    if family.name == "gaussian" and sigma_e2 < 1e-12:
        sigma_e2 = 1e-12
    lam_b = float(np.exp(grid_loglam[0]))

    def pen_dev(th, xx, lam, s2, se2):
        eta = (B @ th)[None, :] + xx @ Phi.T
        scale = se2 if se2 is not None else 1.0
        return (
            -2.0 * family.loglik(z, eta, scale=scale)
            + lam * (th @ P @ th)
            + float(np.sum(xx * xx / s2))
        )

    pd_prev = None
    n_iter = 0
    adapt_converged = False
    pd_path = []

    for outer in range(opts.max_outer):
        n_iter += 1
        eta = (B @ theta)[None, :] + xi @ Phi.T
        scale = sigma_e2 if sigma_e2 is not None else 1.0
        wts = family.working_weights(eta, scale=scale)
        if family.name == "gaussian":
            u = z.astype(float)
        else:
            mu = family.inv_link(eta)
            u = eta + (z - mu) / wts

        BtWB, rB, uWu, Ai0, Ci, ri = _blocks(wts, u, B, Phi)
        D = 1.0 / sig2
        Ai = Ai0 + np.diag(D)[None, :, :]
        Aii = np.linalg.inv(Ai)
        CAiC = np.einsum("ikp,ikl,ilq->pq", Ci, Aii, Ci)
        rhs0 = rB - np.einsum("ikp,ikl,il->p", Ci, Aii, ri)

        if not adapt_converged:
            # working-model REML over the bounded lambda grid
            best = None
            for ll in grid_loglam:
                lam = float(np.exp(ll))
                cand = _working_solve(lam, P, BtWB, rB, uWu, Ai, Aii, Ci, ri, CAiC, rhs0)
                crit = cand[2] + cand[3] - rankP * ll
                if best is None or crit < best[0]:
                    best = (crit, lam, cand)
            lam_b = best[1]
            theta_new, xi_new, _, _, M = best[2]
        else:
            theta_new, xi_new, _, _, M = _working_solve(
                lam_b, P, BtWB, rB, uWu, Ai, Aii, Ci, ri, CAiC, rhs0
            )

        pd_old = pen_dev(theta, xi, lam_b, sig2, sigma_e2)
        step = 1.0
        th, xx = theta_new, xi_new
        for _ in range(30):
            th = theta + step * (theta_new - theta)
            xx = xi + step * (xi_new - xi)
            if pen_dev(th, xx, lam_b, sig2, sigma_e2) <= pd_old + 1e-10:
                break
            step *= 0.5
        theta, xi = th, xx

        Minv = np.linalg.inv(M)
        AiiCi = np.einsum("ikl,ilp->ikp", Aii, Ci)
        Vi_diag = np.einsum("ikk->ik", Aii) + np.einsum(
            "ikp,pq,ikq->ik", AiiCi, Minv, AiiCi
        )

        if not adapt_converged:
            sig2 = np.clip((np.sum(xi * xi, axis=0) + Vi_diag.sum(axis=0)) / N, VAR_FLOOR, None)
            if family.name == "gaussian":
                edf = p + N * K - lam_b * float(np.sum(Minv * P)) - float(
                    np.sum(Vi_diag / sig2)
                )
                resid = z - ((B @ theta)[None, :] + xi @ Phi.T)
                sigma_e2 = max(float(np.sum(resid * resid)) / max(N * J - edf, 1.0), 1e-12)

        pd = pen_dev(theta, xi, lam_b, sig2, sigma_e2)
        if adapt_converged:
            pd_path.append(pd)
            grad_norm = _grad_norm(z, B, P, Phi, theta, xi, lam_b, sig2, sigma_e2, family)
            if grad_norm < 1e-6 or (
                pd_prev is not None and abs(pd_prev - pd) <= 1e-12 * (abs(pd_prev) + 1.0)
            ):
                pd_prev = pd
                break
            if len(pd_path) >= opts.polish_iters:
                pd_prev = pd
                break
        else:
            if pd_prev is not None and abs(pd_prev - pd) < opts.tol * (abs(pd_prev) + 1e-10):
                adapt_converged = True
        pd_prev = pd

    converged = adapt_converged

    # report-time variance floor: dead components carry exact zeros
    score_vars = sig2.copy()
    dead = score_vars < VAR_FLOOR * (1.0 + score_vars.max())
    score_vars[dead] = 0.0
    xi = xi.copy()
    xi[:, dead] = 0.0

    beta0_full = B @ theta
    eta_full = beta0_full[None, :] + xi @ Phi.T
    fitted = family.inv_link(eta_full)
    minutes = (time.perf_counter() - t_start) / 60.0
    return GfpcaFit(
        grid=data.grid.copy(),
        beta0_full=beta0_full,
        beta0_coefs=theta,
        lambda_beta=lam_b,
        scores=xi,
        score_vars=score_vars,
        basis=basis,
        eta_full=eta_full,
        fitted_means=fitted,
        family=family,
        subject_ids=data.subject_ids,
        sigma2_resid=sigma_e2,
        iterations=n_iter,
        converged=converged,
        timings={"step4_minutes": minutes},
        diagnostics={
            "pen_dev_path": pd_path,
            "final_pen_dev": pd_prev,
            "lambda_grid": [float(v) for v in grid_loglam],
        },
    )


def _grad_norm(z, B, P, Phi, theta, xi, lam, sig2, sigma_e2, family):
    g_th, g_xi = penalized_gradient(z, B, P, Phi, theta, xi, lam, sig2, sigma_e2, family)
    return max(np.max(np.abs(g_th)), np.max(np.abs(g_xi)))


def penalized_gradient(z, B, P, Phi, theta, xi, lam, sig2, sigma_e2, family):
    """Gradient of the penalized log-likelihood (the -pen_dev/2 surface)
    in the spline coefficients and scores."""
    eta = (B @ theta)[None, :] + xi @ Phi.T
    mu = family.inv_link(eta)
    resid = z - mu
    if family.name == "gaussian":
        resid = resid / (sigma_e2 if sigma_e2 else 1.0)
    g_theta = B.T @ resid.sum(axis=0) - lam * (P @ theta)
    g_xi = resid @ Phi - xi / sig2
    return g_theta, g_xi


def score_only_fit(
    z_i,
    beta0_full,
    phi_full,
    score_vars,
    family,
    sigma2_resid: float | None = None,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> np.ndarray:
    """Posterior-mode scores for one subject, all population quantities
    fixed. Components with zero variance get score 0 by definition.
    """
    family = get_family(family)
    z_i = np.asarray(z_i, dtype=float)
    phi_full = np.asarray(phi_full, dtype=float)
    score_vars = np.asarray(score_vars, dtype=float)
    K = phi_full.shape[1]
    out = np.zeros(K)
    active = score_vars > 0
    if not active.any():
        return out
    Phi = phi_full[:, active]
    v = score_vars[active]

    if family.name == "gaussian":
        se2 = sigma2_resid if sigma2_resid else 1.0
        H = Phi.T @ Phi / se2 + np.diag(1.0 / v)
        out[active] = np.linalg.solve(H, Phi.T @ (z_i - beta0_full) / se2)
        return out

    xi = np.zeros(int(active.sum()))

    def objective(x):
        eta = beta0_full + Phi @ x
        return family.loglik(z_i, eta) - 0.5 * float(np.sum(x * x / v))

    obj = objective(xi)
    for _ in range(max_iter):
        eta = beta0_full + Phi @ xi
        mu = family.inv_link(eta)
        grad = Phi.T @ (z_i - mu) - xi / v
        if np.max(np.abs(grad)) < tol:
            break
        w = family.working_weights(eta)
        H = Phi.T @ (w[:, None] * Phi) + np.diag(1.0 / v)
        step = np.linalg.solve(H, grad)
        for _ in range(30):
            cand = xi + step
            cand_obj = objective(cand)
            if cand_obj >= obj - 1e-12:
                xi = cand
                obj = cand_obj
                break
            step = 0.5 * step
    out[active] = xi
    return out


def refit_global_subsampled(
    data: FunctionalDataset,
    basis: FpcaBasis,
    n_subsamples: int,
    subsample_size: int,
    seed: int = 0,
    opts: RefitOptions = RefitOptions(),
) -> GfpcaFit:
    """Refit on disjoint random subject subsets and average the
    population quantities; every subject then gets posterior-mode scores
    against the averaged fit.
    """
    t_start = time.perf_counter()
    N = data.N
    if n_subsamples < 1:
        raise ConfigError("n_subsamples must be >= 1")
    if subsample_size < 2:
        raise ConfigError("subsample_size must be >= 2")
    if n_subsamples * subsample_size > N:
        raise ConfigError(
            f"{n_subsamples} x {subsample_size} subjects requested but only {N} available"
        )

    rng = np.random.default_rng(seed)
    perm = rng.permutation(N)
    fits = []
    for s in range(n_subsamples):
        rows = np.sort(perm[s * subsample_size : (s + 1) * subsample_size])
        fits.append(refit_global(data.subset(rows), basis, opts))

    beta0_full = np.mean([f.beta0_full for f in fits], axis=0)
    beta0_coefs = np.mean([f.beta0_coefs for f in fits], axis=0)
    score_vars = np.mean([f.score_vars for f in fits], axis=0)
    lambda_beta = float(np.exp(np.mean([np.log(f.lambda_beta) for f in fits])))
    sigma_e2 = None
    if data.family.name == "gaussian":
        sigma_e2 = float(np.mean([f.sigma2_resid for f in fits]))

    Phi = basis.eigenfunctions_full
    scores = np.empty((N, Phi.shape[1]))
    for i in range(N):
        scores[i] = score_only_fit(
            data.values[i], beta0_full, Phi, score_vars, data.family, sigma2_resid=sigma_e2
        )

    eta_full = beta0_full[None, :] + scores @ Phi.T
    minutes = (time.perf_counter() - t_start) / 60.0
    return GfpcaFit(
        grid=data.grid.copy(),
        beta0_full=beta0_full,
        beta0_coefs=beta0_coefs,
        lambda_beta=lambda_beta,
        scores=scores,
        score_vars=score_vars,
        basis=basis,
        eta_full=eta_full,
        fitted_means=data.family.inv_link(eta_full),
        family=data.family,
        subject_ids=data.subject_ids,
        sigma2_resid=sigma_e2,
        iterations=max(f.iterations for f in fits),
        converged=all(f.converged for f in fits),
        timings={"step4_minutes": minutes},
        diagnostics={
            "n_subsamples": n_subsamples,
            "subsample_size": subsample_size,
            "subsample_lambdas": [f.lambda_beta for f in fits],
        },
    )
