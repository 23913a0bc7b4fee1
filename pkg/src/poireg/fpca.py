"""Principal-component series benchmark estimator.

Fits the response on the leading K principal-component scores of the
trajectories plus candidate impact columns, choosing the truncation K,
the search window delta, and the impact subset simultaneously by BIC.
The directed prefix search over candidates mirrors the one used by the
sequential pipelines, so the two approaches differ only in how they
regularize the smooth component and in the simultaneous (rather than
sequential) model selection.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .dataset import FunctionalDataset, _readonly, center, standardize
from .errors import AllDeltaFailed, EigenFailure, PoiRegError
from .impact_search import make_delta_spec, search_potential_pois
from .ridge import SlopeEstimate
from .select import FitResult, ImpactTerm, default_delta_grid, _RSS_FLOOR

DEFAULT_K_MAX = 150
_RANK_RTOL = 1e-12


@dataclass(frozen=True)
class FpcaDecomposition:
    """Eigenpairs of the empirical covariance operator.

    Eigenfunctions are grid evaluations, orthonormal in the quadrature
    inner product p^-1 <.,.>; scores are the corresponding projections
    of the centered trajectories.
    """

    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray  # p x K
    scores: np.ndarray  # n x K

    def __post_init__(self):
        for name in ("eigenvalues", "eigenfunctions", "scores"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def k_max(self) -> int:
        return self.eigenvalues.shape[0]


def fpca(Xc: np.ndarray, k_max: int) -> FpcaDecomposition:
    """Leading k_max eigenpairs of the covariance operator
    (Gamma f)(s) = p^-1 sum_j sigma(s, t_j) f(t_j), with
    sigma = n^-1 Xc'Xc."""
    n, p = Xc.shape
    if not 1 <= k_max <= min(n, p):
        raise ValueError(f"k_max must be in [1, min(n, p)] = [1, {min(n, p)}]")
    M = Xc.T @ Xc / (n * p)
    try:
        eigvals, eigvecs = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"covariance eigendecomposition failed: {exc}") from None
    order = np.argsort(eigvals)[::-1][:k_max]
    lam = eigvals[order]
    ef = math.sqrt(p) * eigvecs[:, order]
    scores = Xc @ ef / p
    return FpcaDecomposition(eigenvalues=lam, eigenfunctions=ef, scores=scores)


@dataclass(frozen=True)
class KpsConfig:
    k_max: int = DEFAULT_K_MAX
    delta_grid: tuple[float, ...] | None = None
    sd_floor: float | None = None
    standardize_preselect: bool = True
    # The simultaneous search considers subsets of the strongest few
    # candidates per window, which keeps its combinatorics bounded the
    # way the original best-subset implementation was.  Without the cap
    # the candidate columns of a narrow window act as a Riemann grid
    # that absorbs the smooth component outright, a regime the
    # benchmark procedure does not exhibit.
    max_candidates: int | None = 4
    # Legacy mode that pins the search window instead of optimizing it;
    # kept for study reproduction, not exposed on the CLI.
    fixed_delta: float | None = None


@dataclass(frozen=True)
class _Cell:
    bic: float
    delta: float
    k: int
    indices: tuple[int, ...]


def _sweep_delta(delta, *, p, Xc, Yc, decomp, u_cols, a, cuma2, Xpre, Ypre, cfg, n):
    """Best (BIC, K, prefix) for one window width."""
    spec = make_delta_spec(delta, p)
    cand_list = search_potential_pois(Xpre, Ypre, spec)
    cands = cand_list.candidates
    if cfg.max_candidates is not None:
        cands = cands[: cfg.max_candidates]
    idx = [c.index for c in cands]
    s_cnt = len(idx)
    k_cap = min(decomp.k_max, min(n, p) - s_cnt - 1)
    if k_cap < 1:
        raise PoiRegError(f"too many candidates ({s_cnt}) for the sample size")
    P = Xc[:, idx]
    yy = float(Yc @ Yc)
    B = u_cols[:, :k_cap].T @ P  # k_cap x s
    G = P.T @ P
    Cv0 = P.T @ Yc
    logn = math.log(n)

    best: _Cell | None = None

    def consider(bic, k, r):
        nonlocal best
        if best is None or bic < best.bic:
            best = _Cell(bic=bic, delta=spec.delta, k=k, indices=tuple(idx[:r]))

    Gm = G.copy()
    Cv = Cv0.copy()
    for k in range(1, k_cap + 1):
        bk = B[k - 1]
        if s_cnt:
            Gm -= np.outer(bk, bk)
            Cv -= bk * a[k - 1]
        rss_k = yy - cuma2[k - 1]
        consider(n * math.log(max(rss_k, _RSS_FLOOR) / n) + logn * k, k, 0)
        if not s_cnt:
            continue
        try:
            L = np.linalg.cholesky(Gm)
            z = solve_triangular(L, Cv, lower=True)
            quads = np.cumsum(z**2)
            ranks = np.arange(1, s_cnt + 1)
        except np.linalg.LinAlgError:
            # Collinear prefix: rank-aware fallback, dependent columns
            # contribute nothing and do not count as parameters.
            quads = np.empty(s_cnt)
            ranks = np.empty(s_cnt, dtype=int)
            for r in range(1, s_cnt + 1):
                coef, _, rank, _ = np.linalg.lstsq(Gm[:r, :r], Cv[:r], rcond=None)
                quads[r - 1] = float(Cv[:r] @ coef)
                ranks[r - 1] = rank
        for r in range(1, s_cnt + 1):
            if k + ranks[r - 1] >= n:
                break
            rss = max(rss_k - quads[r - 1], _RSS_FLOOR)
            consider(n * math.log(rss / n) + logn * (k + ranks[r - 1]), k, r)
    if best is None:
        raise PoiRegError("no admissible (K, subset) cell")
    return best


def kps_fit(
    ds: FunctionalDataset, cfg: KpsConfig = KpsConfig(), with_std_errors: bool = False
) -> FitResult:
    """Series-benchmark fit with simultaneous BIC model selection."""
    cds = center(ds)
    sds = standardize(cds, cfg.sd_floor)
    Xpre, Ypre = (sds.Xst, sds.Yst) if cfg.standardize_preselect else (cds.Xc, cds.Yc)
    n, p = cds.Xc.shape

    k_hard = min(cfg.k_max, min(n, p) - 1)
    decomp = fpca(cds.Xc, max(k_hard, 1))
    # Drop numerically null components: their scores are pure roundoff.
    lam = decomp.eigenvalues
    keep = int(np.sum(lam > lam[0] * _RANK_RTOL)) if lam[0] > 0 else 0
    if keep < 1:
        raise EigenFailure("covariance has no nonzero eigenvalue")
    norms = np.sqrt(n * lam[:keep])
    u_cols = decomp.scores[:, :keep] / norms
    a = u_cols.T @ cds.Yc
    cuma2 = np.cumsum(a**2)
    decomp_kept = FpcaDecomposition(
        eigenvalues=lam[:keep],
        eigenfunctions=decomp.eigenfunctions[:, :keep],
        scores=decomp.scores[:, :keep],
    )

    if cfg.fixed_delta is not None:
        deltas: tuple[float, ...] = (cfg.fixed_delta,)
    elif cfg.delta_grid is not None:
        deltas = cfg.delta_grid
    else:
        deltas = default_delta_grid(p)
    best: _Cell | None = None
    for delta in deltas:
        try:
            cell = _sweep_delta(
                delta,
                p=p,
                Xc=cds.Xc,
                Yc=cds.Yc,
                decomp=decomp_kept,
                u_cols=u_cols,
                a=a,
                cuma2=cuma2,
                Xpre=Xpre,
                Ypre=Ypre,
                cfg=cfg,
                n=n,
            )
        except PoiRegError as exc:
            warnings.warn(f"delta={delta:.6g} skipped: {exc}", RuntimeWarning, stacklevel=2)
            continue
        if best is None or cell.bic < best.bic:
            best = cell
    if best is None:
        raise AllDeltaFailed("every delta in the grid failed")

    # Refit the winning cell explicitly to recover the coefficients.
    k, idx = best.k, list(best.indices)
    D = np.hstack([decomp_kept.scores[:, :k], cds.Xc[:, idx]]) if idx else decomp_kept.scores[:, :k]
    coef, _, _, _ = np.linalg.lstsq(D, cds.Yc, rcond=None)
    resid = cds.Yc - D @ coef
    rss = float(resid @ resid)
    beta_grid = decomp_kept.eigenfunctions[:, :k] @ coef[:k]
    beta_poi = coef[k:]
    dof = D.shape[1]

    std = None
    if with_std_errors and idx:
        sigma2 = rss / max(n - dof, 1.0)
        cov = sigma2 * np.linalg.pinv(D.T @ D)
        std = np.sqrt(np.diag(cov)[k:])

    t = ds.grid.points
    selected = tuple(
        ImpactTerm(
            index=j,
            location=float(t[j]),
            coefficient=float(beta_poi[s]),
            std_err=float(std[s]) if std is not None else None,
        )
        for s, j in enumerate(idx)
    )
    estimate = SlopeEstimate(
        beta_grid=beta_grid,
        beta_poi=beta_poi,
        rho=float("nan"),
        gcv_value=float("nan"),
        edf=float(dof),
        rss=rss,
        smoother_trace=float(dof),
    )
    return FitResult(
        estimate=estimate,
        selected_pois=selected,
        delta=best.delta,
        bic_delta=best.bic,
        variant="KPS",
        standard_errors=None,
    )
