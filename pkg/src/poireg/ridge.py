"""Penalized estimation of the functional slope with impact-point
columns appended to the design.

The coefficient vector solves

    ((n p)^-1 X'X + rho * A_T) theta = n^-1 X'Y,

where X = [Xc | p*Xc(tau_1) | ... | p*Xc(tau_S)] and A_T carries the
grid penalty A in its top-left block and zeros for the impact columns.
Fitted values are H Y with H = (np)^-1 X (...)^-1 X'.

Internally each design is factorized once, independently of Y and rho:
the impact block is QR-factorized, the grid block is whitened with the
Cholesky factor of A and residualized against the impact block, and the
result is SVD-decomposed.  Every quantity needed by GCV (residual sum
of squares, Tr H, Tr H'H) then costs O(n + p) per rho, which makes the
smoothing-parameter sweep essentially free.  The smoother matrix is
exactly symmetric in this form: eigenvalue 1 on the unpenalized impact
directions and d_i^2/(d_i^2 + n p rho) on the whitened grid directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .dataset import _readonly
from .errors import AllRhoInvalid, DuplicatePoI, SingularSystem
from .penalty import PenaltyBundle

DEFAULT_RHO_MIN = 1e-6
DEFAULT_RHO_MAX = 200.0
DEFAULT_RHO_POINTS = 30
_GOLDEN_STEPS = 24
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def default_rho_grid(
    rho_min: float = DEFAULT_RHO_MIN,
    rho_max: float = DEFAULT_RHO_MAX,
    points: int = DEFAULT_RHO_POINTS,
) -> np.ndarray:
    """Log-spaced smoothing-parameter grid."""
    if not (0 < rho_min <= rho_max) or points < 1:
        raise ValueError("need 0 < rho_min <= rho_max and points >= 1")
    return np.geomspace(rho_min, rho_max, points)


@dataclass(frozen=True)
class SlopeEstimate:
    """Fitted slope on the grid plus impact-point coefficients."""

    beta_grid: np.ndarray
    beta_poi: np.ndarray
    rho: float
    gcv_value: float
    edf: float  # Tr(H'H)
    rss: float
    smoother_trace: float  # Tr(H)

    def __post_init__(self):
        object.__setattr__(self, "beta_grid", _readonly(self.beta_grid))
        object.__setattr__(self, "beta_poi", _readonly(self.beta_poi))


class _Factorization:
    """Y- and rho-independent decomposition of one augmented design.

    Spectra come from the eigendecomposition of the smaller Gram matrix
    of the whitened, impact-residualized grid block; the lam >= n p
    rho_min regularization swamps the squared-condition roundoff this
    introduces in the near-null modes.
    """

    def __init__(self, design: "AugmentedDesign"):
        X = design.matrix
        n, q = X.shape
        p = design.bundle.p
        s = q - p
        self.n, self.p, self.s = n, p, s
        Xg = X[:, :p]
        # Whiten the grid block: G1 = Xg A^{-1/2} via the Cholesky factor.
        R = design.bundle.chol_upper
        G1 = solve_triangular(R, Xg.T, trans="T", lower=False).T
        if s > 0:
            G2 = X[:, p:]
            Q2, R2 = np.linalg.qr(G2)
            diag = np.abs(np.diag(R2))
            tol = max(n, q) * np.finfo(float).eps * (diag.max() if diag.size else 0.0)
            if diag.size == 0 or diag.min() <= tol:
                raise SingularSystem(
                    "impact-point columns are collinear; drop a candidate"
                )
            self.q2 = Q2
            self.r2 = R2
            self.q2t_g1 = Q2.T @ G1
            G1 = G1 - Q2 @ self.q2t_g1
        else:
            self.q2 = np.zeros((n, 0))
            self.r2 = np.zeros((0, 0))
            self.q2t_g1 = np.zeros((0, p))
        G1 = np.ascontiguousarray(G1)
        if n <= p:
            w, U = np.linalg.eigh(G1 @ G1.T)
            self.d2 = np.clip(w, 0.0, None)
            self.u = U
            self.g1t_u = G1.T @ U  # columns scale as d * v_k
            self.v = None
            self.spans_rows = True  # u is a full orthobasis of R^n
        else:
            w, V = np.linalg.eigh(G1.T @ G1)
            d2 = np.clip(w, 0.0, None)
            d = np.sqrt(d2)
            cut = d.max() * 1e-14 if d.size and d.max() > 0 else np.inf
            keep = d > cut
            self.d2 = d2[keep]
            self.v = V[:, keep]
            self.u = G1 @ (self.v / np.sqrt(self.d2))
            self.g1t_u = None
            self.spans_rows = False

    def traces(self, rho: float) -> tuple[float, float]:
        lam = self.n * self.p * rho
        shrink = self.d2 / (self.d2 + lam)
        return self.s + float(shrink.sum()), self.s + float((shrink**2).sum())

    def prepare(self, Y: np.ndarray) -> dict:
        q2ty = self.q2.T @ Y
        Yt = Y - self.q2 @ q2ty
        uy = self.u.T @ Yt
        if self.spans_rows:
            rn2 = 0.0
        else:
            rn2 = max(float(Yt @ Yt - uy @ uy), 0.0)
        return {"q2ty": q2ty, "uy": uy, "rn2": rn2}

    def rss(self, parts: dict, rho: float) -> float:
        lam = self.n * self.p * rho
        keep = lam / (self.d2 + lam)
        return parts["rn2"] + float(np.sum((parts["uy"] * keep) ** 2))

    def solve(self, parts: dict, rho: float, bundle: PenaltyBundle) -> tuple[np.ndarray, np.ndarray]:
        lam = self.n * self.p * rho
        if self.spans_rows:
            psi1 = self.g1t_u @ (parts["uy"] / (self.d2 + lam))
        else:
            psi1 = self.v @ (np.sqrt(self.d2) / (self.d2 + lam) * parts["uy"])
        beta_grid = self.p * solve_triangular(bundle.chol_upper, psi1, lower=False)
        if self.s > 0:
            rhs = parts["q2ty"] - self.q2t_g1 @ psi1
            beta_poi = self.p * solve_triangular(self.r2, rhs, lower=False)
        else:
            beta_poi = np.zeros(0)
        return beta_grid, beta_poi


@dataclass(frozen=True)
class AugmentedDesign:
    """Centered design with impact-point columns scaled by p appended."""

    matrix: np.ndarray
    bundle: PenaltyBundle
    poi_indices: tuple[int, ...]
    _fact: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "matrix", _readonly(self.matrix))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_poi(self) -> int:
        return len(self.poi_indices)

    @property
    def penalty_matrix(self) -> np.ndarray:
        """Block penalty: grid penalty top-left, zeros for impact columns."""
        q = self.matrix.shape[1]
        p = self.bundle.p
        A_T = np.zeros((q, q))
        A_T[:p, :p] = self.bundle.combined
        return A_T

    def factorization(self) -> _Factorization:
        if not self._fact:
            self._fact.append(_Factorization(self))
        return self._fact[0]


def augment(Xc: np.ndarray, bundle: PenaltyBundle, poi_indices) -> AugmentedDesign:
    """Append p-scaled centered impact columns to the centered design."""
    poi_indices = tuple(int(j) for j in poi_indices)
    p = bundle.p
    if Xc.shape[1] != p:
        raise ValueError("Xc column count does not match the penalty grid")
    if len(set(poi_indices)) != len(poi_indices):
        raise DuplicatePoI(f"duplicate impact indices in {poi_indices}")
    if any(not 0 <= j < p for j in poi_indices):
        raise ValueError(f"impact indices out of range [0, {p})")
    if poi_indices:
        X = np.hstack([Xc, p * Xc[:, list(poi_indices)]])
    else:
        X = np.asarray(Xc, dtype=np.float64)
    return AugmentedDesign(matrix=X, bundle=bundle, poi_indices=poi_indices)


def fit_penalized(design: AugmentedDesign, Yc: np.ndarray, rho: float) -> SlopeEstimate:
    """Solve the penalized normal equations at a fixed rho."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    fact = design.factorization()
    parts = fact.prepare(np.asarray(Yc, dtype=np.float64))
    beta_grid, beta_poi = fact.solve(parts, rho, design.bundle)
    trace_h, trace_hth = fact.traces(rho)
    return SlopeEstimate(
        beta_grid=beta_grid,
        beta_poi=beta_poi,
        rho=float(rho),
        gcv_value=float("nan"),
        edf=trace_hth,
        rss=fact.rss(parts, rho),
        smoother_trace=trace_h,
    )


def smoother_trace_and_rss(
    design: AugmentedDesign, Yc: np.ndarray, rho: float
) -> tuple[float, float, float]:
    """(rss, Tr H, Tr H'H) without materializing the smoother."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    fact = design.factorization()
    parts = fact.prepare(np.asarray(Yc, dtype=np.float64))
    trace_h, trace_hth = fact.traces(rho)
    return fact.rss(parts, rho), trace_h, trace_hth


def smoother_matrix(design: AugmentedDesign, rho: float) -> np.ndarray:
    """Materialized smoother H; intended for small diagnostic instances."""
    fact = design.factorization()
    lam = fact.n * fact.p * rho
    shrink = fact.d2 / (fact.d2 + lam)
    H = (fact.u * shrink) @ fact.u.T
    if fact.s > 0:
        H = H + fact.q2 @ fact.q2.T
    return H


def optimize_gcv(design: AugmentedDesign, Yc: np.ndarray, rho_grid) -> SlopeEstimate:
    """Pick rho minimizing GCV(rho) = (rss/n) / (1 - Tr(H)/n)^2.

    Grid points where Tr(H)/n >= 1 are skipped.  Ties prefer the larger
    rho.  One golden-section pass in log-rho between the neighbours of
    the grid minimizer refines the pick.
    """
    grid = np.sort(np.asarray(list(rho_grid), dtype=np.float64))
    if grid.size == 0 or grid[0] <= 0:
        raise ValueError("rho_grid must be nonempty and positive")
    n = design.n
    fact = design.factorization()
    parts = fact.prepare(np.asarray(Yc, dtype=np.float64))

    def gcv_at(rho: float) -> float:
        trace_h, _ = fact.traces(rho)
        slack = 1.0 - trace_h / n
        if slack <= 0:
            return float("inf")
        return (fact.rss(parts, rho) / n) / slack**2

    values = np.array([gcv_at(r) for r in grid])
    if not np.any(np.isfinite(values)):
        raise AllRhoInvalid("smoother trace reaches n at every rho in the grid")
    best = 0
    for i in range(1, grid.size):
        if values[i] <= values[best]:
            best = i
    evaluated = [(float(grid[best]), float(values[best]))]
    lo = math.log(grid[max(best - 1, 0)])
    hi = math.log(grid[min(best + 1, grid.size - 1)])
    if hi > lo:
        a, b = lo, hi
        c = b - _INVPHI * (b - a)
        d = a + _INVPHI * (b - a)
        fc, fd = gcv_at(math.exp(c)), gcv_at(math.exp(d))
        for _ in range(_GOLDEN_STEPS):
            if fc < fd:
                b, d, fd = d, c, fc
                c = b - _INVPHI * (b - a)
                fc = gcv_at(math.exp(c))
            else:
                a, c, fc = c, d, fd
                d = a + _INVPHI * (b - a)
                fd = gcv_at(math.exp(d))
            evaluated.append((math.exp(c), fc) if fc < fd else (math.exp(d), fd))
    rho_best, gcv_best = evaluated[0]
    for rho, val in evaluated[1:]:
        if np.isfinite(val) and (val < gcv_best or (val == gcv_best and rho > rho_best)):
            rho_best, gcv_best = rho, val
    est = fit_penalized(design, Yc, rho_best)
    return replace(est, gcv_value=gcv_best)


def estimate_noise_variance(est: SlopeEstimate, n: int) -> float:
    """Residual variance rss / (n - Tr(H'H)), denominator floored at 1."""
    return est.rss / max(n - est.edf, 1.0)


def standard_errors(
    design: AugmentedDesign, Yc: np.ndarray, rho: float, sigma2_hat: float | None = None
) -> np.ndarray:
    """Sampling standard errors of the coefficient vector.

    The estimator is linear in Y, theta = n^-1 C^-1 X'Y with
    C = (np)^-1 X'X + rho A_T, so its variance under homoskedastic noise
    is sigma^2 n^-2 C^-1 X'X C^-1; this returns the square roots of the
    diagonal.  These are variability bands, not confidence intervals.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    X = design.matrix
    n = design.n
    p = design.bundle.p
    if sigma2_hat is None:
        rss, _, trace_hth = smoother_trace_and_rss(design, Yc, rho)
        sigma2_hat = rss / max(n - trace_hth, 1.0)
    if sigma2_hat < 0:
        raise ValueError("sigma2_hat must be nonnegative")
    C = X.T @ X / (n * p) + rho * design.penalty_matrix
    try:
        factor = cho_factor(C)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"regularized system is singular: {exc}") from None
    F = cho_solve(factor, X.T)  # C^-1 X', so C^-1 X'X C^-1 = F F'
    return np.sqrt(sigma2_hat * np.sum(F**2, axis=1)) / n
