"""Canonical and grand-canonical ensembles over an exact spectrum.

Weights are w_i ∝ exp(-beta (E_i - mu <N>_i)), always diagonal in the energy
eigenbasis.  Internally the solver works with the natural parameters
a = beta and b = beta * mu, for which the log-partition function is convex
and the Jacobian of (<E>, <N>) is the ensemble covariance matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .basis import ConstrainedBasis
from .errors import ConsistencyError, ConvergenceError, RangeError, ValidationError

RESIDUAL_TOL = 1e-8
HULL_MARGIN = 1e-9
STARTS = ((0.0, 0.0), (1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0), (0.0, 1.0), (0.0, -1.0), (1.0, 0.0), (-1.0, 0.0))


@dataclass
class EnsembleParams:
    beta: float
    mu: float
    weights: np.ndarray
    residual: float = 0.0
    beta_mu: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise ValidationError("ensemble weights must be nonnegative and sum to 1")
        self.weights = w


def gibbs_weights(E, N, a: float, b: float) -> np.ndarray:
    """exp(-a E + b N), normalized with a max shift."""
    x = -a * np.asarray(E, dtype=float) + b * np.asarray(N, dtype=float)
    x -= x.max()
    w = np.exp(x)
    return w / w.sum()


def ensemble_weights(E, N, beta: float, mu: float = 0.0) -> np.ndarray:
    return gibbs_weights(E, np.zeros_like(E) if N is None else N, beta, beta * mu)


def canonical_beta(E, E_target: float, tol: float = 1e-13) -> float:
    """beta with <E>_beta = E_target: bracket, then safeguarded Newton."""
    E = np.asarray(E, dtype=float)
    lo_e, hi_e = E.min(), E.max()
    span = hi_e - lo_e
    if not (lo_e < E_target < hi_e) or span == 0:
        raise RangeError(f"E_target={E_target} outside the open spectral range ({lo_e}, {hi_e})")
    e = (E - E.mean()) / span
    target = (E_target - E.mean()) / span

    def mean_var(beta):
        w = gibbs_weights(e, np.zeros_like(e), beta, 0.0)
        m = w @ e
        return m, w @ (e - m) ** 2

    m0, _ = mean_var(0.0)
    if abs(m0 - target) <= tol:
        return 0.0
    # <E> decreases with beta: target below the mean needs beta > 0
    sign = 1.0 if target < m0 else -1.0
    a, b = 0.0, sign
    while (mean_var(b)[0] - target) * sign > 0:
        a, b = b, 2 * b
        if abs(b) > 1e8:
            raise ConvergenceError("canonical_beta: failed to bracket the root", abs(mean_var(b)[0] - target))
    lo, hi = min(a, b), max(a, b)
    beta = 0.5 * (lo + hi)
    for _ in range(200):
        m, v = mean_var(beta)
        f = m - target
        if abs(f) <= tol:
            break
        if f > 0:
            lo = beta
        else:
            hi = beta
        step = beta + f / v if v > 0 else 0.5 * (lo + hi)
        beta = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo < 1e-15 * max(1.0, abs(beta)):
            break
    return beta / span


def hull_position(points: np.ndarray, target) -> float:
    """Largest facet offset of ``target`` in standardized coordinates.

    Negative means strictly inside the convex hull, about zero on its
    boundary, positive outside.  Degenerate (flat) point sets give +inf.
    """
    pts = np.asarray(points, dtype=float)
    scale = pts.std(axis=0)
    scale[scale == 0] = 1.0
    centre = pts.mean(axis=0)
    p = (pts - centre) / scale
    t = (np.asarray(target, dtype=float) - centre) / scale
    try:
        hull = ConvexHull(p)
    except QhullError:
        return np.inf
    return float(np.max(hull.equations[:, :-1] @ t + hull.equations[:, -1]))


def inside_hull(points: np.ndarray, target, margin: float = 1e-12, closed: bool = False) -> bool:
    """Interior test; ``closed`` also accepts points within ``margin`` of the boundary."""
    pos = hull_position(points, target)
    return pos <= margin if closed else pos < -margin


def _scaled_residual(e, n, w, te, tn) -> np.ndarray:
    return np.array([w @ e - te, w @ n - tn])


def grand_canonical_params(E, N, E_target: float, N_target: float, max_iter: int = 500) -> EnsembleParams:
    """(beta, mu) matching <E> = E_target and <N> = N_target.

    Targets on the hull boundary (a vertex, typically a scar state) are only
    reached as beta and beta*mu grow without bound; the iteration then stops
    at the first finite parameters whose residual is below RESIDUAL_TOL.
    Damped Newton in standardized natural parameters: the step is halved until
    the residual norm decreases; if a start stalls, the next start in a fixed
    list is tried.  Residuals are measured in units of each coordinate's range.
    """
    E = np.asarray(E, dtype=float)
    N = np.asarray(N, dtype=float)
    if E.shape != N.shape:
        raise ValidationError("E and N must have equal length")
    if not inside_hull(np.column_stack([E, N]), (E_target, N_target), margin=HULL_MARGIN, closed=True):
        raise RangeError(f"target ({E_target}, {N_target}) lies outside the (E, N) hull")
    se, sn = np.ptp(E), np.ptp(N)
    e = (E - E.mean()) / se
    n = (N - N.mean()) / sn
    te, tn = (E_target - E.mean()) / se, (N_target - N.mean()) / sn

    best = (np.inf, None)
    for start in STARTS:
        x = np.array(start, dtype=float)
        w = gibbs_weights(e, n, *x)
        r = _scaled_residual(e, n, w, te, tn)
        norm = np.linalg.norm(r)
        for _ in range(max_iter):
            if norm < RESIDUAL_TOL * 1e-4:
                break
            de, dn = e - w @ e, n - w @ n
            jac = np.array([[-(w @ (de * de)), w @ (de * dn)], [-(w @ (de * dn)), w @ (dn * dn)]])
            try:
                step = np.linalg.solve(jac, -r)
            except np.linalg.LinAlgError:
                break
            t = 1.0
            while t > 1e-12:
                xn = x + t * step
                wn = gibbs_weights(e, n, *xn)
                rn = _scaled_residual(e, n, wn, te, tn)
                if np.linalg.norm(rn) < norm:
                    break
                t *= 0.5
            else:
                break
            x, w, r, norm = xn, wn, rn, np.linalg.norm(rn)
        if norm < best[0]:
            best = (norm, x)
        if norm < RESIDUAL_TOL:
            break
    norm, x = best
    if x is None or norm >= RESIDUAL_TOL:
        raise ConvergenceError("grand_canonical_params: Newton did not converge from any start", norm)
    a, b = x[0] / se, x[1] / sn
    mu = b / a if a != 0 else (0.0 if b == 0 else np.copysign(np.inf, b))
    return EnsembleParams(a, mu, gibbs_weights(E, N, a, b), float(norm), b)


def canonical_params(E, E_target: float) -> EnsembleParams:
    beta = canonical_beta(E, E_target)
    E = np.asarray(E, dtype=float)
    w = gibbs_weights(E, np.zeros_like(E), beta, 0.0)
    res = abs(w @ E - E_target) / np.ptp(E)
    return EnsembleParams(beta, 0.0, w, float(res), 0.0)


def ensemble_average(params: EnsembleParams, values) -> float:
    values = np.asarray(values, dtype=float)
    if values.shape != params.weights.shape:
        raise ConsistencyError(f"{len(values)} values for {len(params.weights)} weights")
    return float(params.weights @ values)


# ---------------------------------------------------------------------------
# reduced density matrices


@dataclass
class ReducedDM:
    sites: tuple
    matrix: np.ndarray

    def __post_init__(self):
        m = self.matrix
        if np.abs(m - m.conj().T).max() > 1e-10:
            raise ValidationError("reduced DM is not Hermitian")
        if abs(np.trace(m).real - 1) > 1e-10:
            raise ValidationError(f"reduced DM trace {np.trace(m).real} != 1")
        if np.linalg.eigvalsh(m).min() < -1e-10:
            raise ValidationError("reduced DM is not positive semidefinite")


def _split(basis: ConstrainedBasis, sites) -> tuple[np.ndarray, np.ndarray, int]:
    n, d = basis.n_sites, basis.local_dim
    sites = tuple(int(s) for s in sites)
    if not sites or len(set(sites)) != len(sites) or min(sites) < 0 or max(sites) >= n:
        raise ValidationError(f"subsystem {tuple(s + 1 for s in sites)} outside [1, {n}]")
    rest = [k for k in range(n) if k not in sites]
    a_idx = basis.states[:, list(sites)] @ (d ** np.arange(len(sites) - 1, -1, -1, dtype=np.int64))
    if rest:
        r_idx = basis.states[:, rest] @ (d ** np.arange(len(rest) - 1, -1, -1, dtype=np.int64))
    else:
        r_idx = np.zeros(basis.dim, dtype=np.int64)
    return a_idx, r_idx, d ** len(sites)


def reduced_dm(basis: ConstrainedBasis, vectors: np.ndarray, sites=(0, 1), weights=None) -> ReducedDM:
    """Tr over the complement of ``sites`` (0-based) of sum_i w_i |v_i><v_i|.

    ``vectors`` are constrained-basis columns (or one vector); the partial
    trace pairs basis states that agree outside the subsystem.
    """
    v = np.asarray(vectors)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] != basis.dim:
        raise ConsistencyError(f"vector length {v.shape[0]} != basis dim {basis.dim}")
    w = np.ones(v.shape[1]) if weights is None else np.asarray(weights, dtype=float)
    if len(w) != v.shape[1]:
        raise ConsistencyError("one weight per vector is required")
    a_idx, r_idx, da = _split(basis, sites)
    keep = w != 0
    v, w = v[:, keep], w[keep]
    vw = v * w[None, :]
    rho = np.zeros((da, da), dtype=complex)
    # rows of the constrained basis grouped by subsystem configuration
    rows = {a: np.nonzero(a_idx == a)[0] for a in range(da)}
    for a in range(da):
        ra = rows[a]
        if ra.size == 0:
            continue
        for b in range(a, da):
            rb = rows[b]
            if rb.size == 0:
                continue
            common, ia, ib = np.intersect1d(r_idx[ra], r_idx[rb], assume_unique=True, return_indices=True)
            if common.size == 0:
                continue
            val = np.sum(vw[ra[ia]] * v[rb[ib]].conj())
            rho[a, b] = val
            rho[b, a] = np.conj(val)
    return ReducedDM(tuple(sites), rho)


def schatten_norm(m: np.ndarray, p: float) -> float:
    s = np.linalg.svd(np.asarray(m), compute_uv=False)
    if np.isinf(p):
        return float(s.max())
    return float(np.sum(s**p) ** (1.0 / p))


def schatten_distance(rho, sigma, p: float = 1) -> float:
    """|| rho/||rho||_p - sigma/||sigma||_p ||_p."""
    r = rho.matrix if isinstance(rho, ReducedDM) else np.asarray(rho)
    s = sigma.matrix if isinstance(sigma, ReducedDM) else np.asarray(sigma)
    if r.shape != s.shape:
        raise ConsistencyError(f"dimension mismatch {r.shape} vs {s.shape}")
    if p < 1:
        raise ValidationError("Schatten p must be >= 1")
    nr, ns = schatten_norm(r, p), schatten_norm(s, p)
    if nr == 0 or ns == 0:
        raise ValidationError("Schatten distance of a zero operator is undefined")
    return schatten_norm(r / nr - s / ns, p)
