"""Least-squares fits, decay-rate experiments and the bivariate ETH surface."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .basis import enumerate_basis, product_basis
from .constraint import build_constrained_hamiltonian, build_quasiparticle_counter
from .dynamics import LiouvillianKind, constrained_generator, evolve_master, evolve_projected, parse_kind, time_grid
from .errors import IntegrationError, ValidationError
from .model import ModelSpec
from .spectra import EigenSystem, diagonalize, eigen_expectation, fmt, overlaps, scar_initial_state, top_overlap_state


@dataclass
class FitResult:
    coefficients: np.ndarray
    rms: float
    covariance: np.ndarray
    n_samples: int
    residuals: np.ndarray | None = None
    extra: dict | None = None

    def __post_init__(self):
        self.coefficients = np.atleast_1d(np.asarray(self.coefficients, dtype=float))


def _lstsq(design: np.ndarray, y: np.ndarray) -> FitResult:
    n, p = design.shape
    if np.linalg.matrix_rank(design) < p:
        raise ValidationError(f"design matrix is rank deficient ({np.linalg.matrix_rank(design)} < {p})")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    res = y - design @ coef
    rms = float(np.sqrt(np.mean(res**2)))
    dof = max(n - p, 1)
    sigma2 = float(res @ res) / dof
    cov = sigma2 * np.linalg.inv(design.T @ design)
    return FitResult(coef, rms, cov, n, res)


def fit_exponential(times, values, threshold: float = 0.1) -> FitResult:
    """Rate alpha of values ~ A exp(-alpha t): log-linear least squares.

    Uses the points where values > threshold * values[0]; ``coefficients``
    is (alpha,) and ``extra['log_amplitude']`` the intercept.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if not np.any(v > 0):
        raise ValidationError("fit_exponential: no positive values")
    if v[0] <= 0:
        raise ValidationError("fit_exponential: first value must be positive")
    keep = v > threshold * v[0]
    if keep.sum() < 3:
        raise ValidationError(f"fit_exponential: only {keep.sum()} usable points")
    design = np.column_stack([t[keep], np.ones(keep.sum())])
    fit = _lstsq(design, np.log(v[keep]))
    slope, intercept = fit.coefficients
    return FitResult(np.array([-slope]), fit.rms, fit.covariance[:1, :1], fit.n_samples, fit.residuals, {"log_amplitude": intercept})


def fit_linear(x, y) -> FitResult:
    """Ordinary least squares y = slope x + intercept; coefficients (slope, intercept)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(np.unique(x)) < 2:
        raise ValidationError("fit_linear: need at least two distinct x values")
    return _lstsq(np.column_stack([x, np.ones_like(x)]), y)


def fit_through_origin(x, y) -> FitResult:
    """y = slope x; coefficients (slope,)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.any(x != 0):
        raise ValidationError("fit_through_origin: all x are zero")
    return _lstsq(x[:, None], y)


# ---------------------------------------------------------------------------
# decay experiments


def decay_window(eigsys: EigenSystem, centre: int, size: int = 9, exclude=None) -> np.ndarray:
    """``size`` nondegenerate eigenstates nearest in energy to ``centre`` (itself included)."""
    ok = eigsys.nondegenerate().copy()
    if exclude is not None:
        ok[np.asarray(exclude, dtype=np.int64)] = False
    if not ok[centre]:
        raise ValidationError(f"eigenstate {centre} is degenerate and cannot head a decay window")
    ok[centre] = False
    cand = np.nonzero(ok)[0]
    order = cand[np.argsort(np.abs(eigsys.energies[cand] - eigsys.energies[centre]), kind="stable")]
    return np.sort(np.concatenate([[centre], order[: size - 1]]))


@dataclass
class DecayScan:
    c: float
    indices: np.ndarray
    energies: np.ndarray
    n_expect: np.ndarray
    alphas: np.ndarray
    gamma_fit: float
    intercept_fit: FitResult
    series: dict
    method: str

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "energy", "n_expect", "alpha"])
            for i, e, n, a in zip(self.indices, self.energies, self.n_expect, self.alphas):
                w.writerow([int(i), fmt(e), fmt(n), fmt(a)])


def decay_scan(
    spec: ModelSpec,
    c: float | None = None,
    indices=None,
    t_max: float | None = None,
    n_times: int = 101,
    method: str | None = None,
    kind=LiouvillianKind.POSITIVE,
    eigsys: EigenSystem | None = None,
    dt: float | None = None,
) -> DecayScan:
    """Fit the fidelity decay rate of single eigenstates under a dissipative generator.

    Default indices: 9 nondegenerate states around the highest-overlap
    nondegenerate eigenstate of the scar initial state with |E| < range/4.
    gamma_fit is minus the through-origin slope of alpha against <N>.
    ``method`` is ``projected`` (default: the no-jump part of the evolution,
    in the constrained space) or ``master`` (full density matrix, slow over
    the long horizons that small rates need).
    """
    kind = parse_kind(kind)
    if kind is LiouvillianKind.FULL:
        raise ValidationError("decay_scan needs a dissipative kind (Positive or LindbladPrime)")
    spec = spec if c is None else spec.with_(c=c)
    basis = enumerate_basis(spec)
    if eigsys is None:
        eigsys = diagonalize(build_constrained_hamiltonian(spec, basis), basis)
    n_exp = eigen_expectation(eigsys, build_quasiparticle_counter(spec, basis))
    if indices is None:
        ov = overlaps(eigsys, scar_initial_state(basis))
        quarter = 0.25 * eigsys.spectral_range
        indices = decay_window(eigsys, top_overlap_state(eigsys, ov, (-quarter, quarter)))
    indices = np.sort(np.asarray(indices, dtype=np.int64))
    if indices.min() < 0 or indices.max() >= eigsys.dim:
        raise ValidationError("decay_scan: eigenstate index out of range")
    if not eigsys.nondegenerate()[indices].all():
        raise ValidationError("decay_scan: degenerate eigenstates are excluded from decay windows")
    method = method or "projected"
    rate_scale = 2 * np.sqrt(2 * float(spec.j)) / spec.c
    if t_max is None:
        # about two e-folds for a typical <N> ~ 1
        t_max = 2.0 / max(rate_scale, 1e-12)
    times = np.linspace(0.0, t_max, n_times)
    K = constrained_generator(spec, kind, basis) if method == "projected" else None
    embed = basis.embedding(product_basis(spec)) if method == "master" else None
    alphas = []
    series = {}
    for i in indices:
        v = eigsys.vectors[:, i].astype(complex)
        try:
            if method == "projected":
                ts = evolve_projected(spec, kind, v, times, basis=basis, generator=K)
            elif method == "master":
                ts = evolve_master(spec, kind, embed @ v, times, dt=dt)
            else:
                raise ValidationError(f"decay_scan method {method!r} not in (projected, master)")
        except IntegrationError as exc:
            raise IntegrationError(f"eigenstate {i}: {exc}") from exc
        series[int(i)] = ts
        alphas.append(fit_exponential(ts.times, ts["fidelity"]).coefficients[0])
    alphas = np.array(alphas)
    origin = fit_through_origin(n_exp[indices], alphas)
    free = fit_linear(n_exp[indices], alphas)
    return DecayScan(
        spec.c,
        indices,
        eigsys.energies[indices],
        n_exp[indices],
        alphas,
        float(origin.coefficients[0]),
        free,
        series,
        method,
    )


@dataclass
class CScan:
    cs: np.ndarray
    gamma_fit: np.ndarray
    slope: float
    fit: FitResult
    free_fit: FitResult
    scans: list

    @property
    def relative_residual(self) -> float:
        pred = self.slope / self.cs
        return float(np.sqrt(np.mean((self.gamma_fit - pred) ** 2)) / np.mean(np.abs(self.gamma_fit)))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["c", "inv_c", "gamma_fit"])
            for c, g in zip(self.cs, self.gamma_fit):
                w.writerow([fmt(c), fmt(1 / c), fmt(g)])


def c_scan(spec: ModelSpec, cs, indices=None, **kwargs) -> CScan:
    """gamma_fit for each c, then a through-origin fit of gamma_fit against 1/c."""
    cs = np.asarray(cs, dtype=float)
    if np.any(cs <= 0):
        raise ValidationError("c_scan: every c must be positive")
    basis = enumerate_basis(spec)
    eigsys = kwargs.pop("eigsys", None) or diagonalize(build_constrained_hamiltonian(spec, basis), basis)
    scans = [decay_scan(spec, c, indices, eigsys=eigsys, **kwargs) for c in cs]
    gam = np.array([s.gamma_fit for s in scans])
    fit = fit_through_origin(1 / cs, gam)
    free = fit_linear(1 / cs, gam)
    return CScan(cs, gam, float(fit.coefficients[0]), fit, free, scans)


# ---------------------------------------------------------------------------
# leakage out of the constrained space


def fit_leakage_rate(times, leakage) -> FitResult:
    """Leak rate of h(t) ~ exp(-rate t), i.e. minus the initial slope of h ~ 1 - rate t."""
    return fit_exponential(times, leakage, threshold=0.0)


@dataclass
class LeakageRun:
    labels: list
    energies: np.ndarray
    n_bar: np.ndarray
    predicted: np.ndarray  # gamma2 * n_bar
    fitted: np.ndarray  # fitted initial slope of h(t)
    series: list
    method: str

    @property
    def relative_error(self) -> np.ndarray:
        return np.abs(self.fitted / self.predicted - 1)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["state", "energy", "n_bar", "predicted_slope", "fitted_slope", "relative_error"])
            for k, lab in enumerate(self.labels):
                row = [lab, fmt(self.energies[k]), fmt(self.n_bar[k]), fmt(self.predicted[k]), fmt(self.fitted[k])]
                w.writerow(row + [fmt(self.relative_error[k])])


def leakage_experiment(
    spec: ModelSpec,
    states,
    t_max: float | None = None,
    n_times: int = 401,
    method: str = "trajectories",
    n_traj: int = 500,
    seed: int | None = None,
    eigsys: EigenSystem | None = None,
    threads: int = 1,
) -> LeakageRun:
    """Leakage h(t) = Tr(rho P) under LindbladPrime from product states.

    The fitted initial slope is compared with gamma2 * n_bar, where n_bar is
    the diagonal-ensemble value of N for the state.  ``method`` is
    ``trajectories`` (needs ``seed``), ``projected`` (exact for this kind)
    or ``master``.  Default horizon: one 1/|gamma2|.
    """
    from .dynamics import sample_trajectories
    from .spectra import diagonal_ensemble_mean

    basis = enumerate_basis(spec)
    if eigsys is None:
        eigsys = diagonalize(build_constrained_hamiltonian(spec, basis), basis)
    counter = build_quasiparticle_counter(spec, basis)
    H = build_constrained_hamiltonian(spec, basis).matrix
    gamma2 = -2 * np.sqrt(2 * float(spec.j)) / spec.c
    if t_max is None:
        t_max = 1.0 / abs(gamma2)
    times = np.linspace(0.0, t_max, n_times)
    kind = LiouvillianKind.LINDBLAD_PRIME
    labels, energies, n_bar, fitted, series = [], [], [], [], []
    for st in states:
        psi = basis.product_state(st)
        if method == "trajectories":
            ts = sample_trajectories(spec, kind, psi, times, n_traj, seed, threads=threads)
        elif method == "projected":
            ts = evolve_projected(spec, kind, psi, times, basis=basis)
        elif method == "master":
            ts = evolve_master(spec, kind, psi, times)
        else:
            raise ValidationError(f"leakage method {method!r} not in (trajectories, projected, master)")
        labels.append(" ".join(str(x) for x in st))
        energies.append(float(np.real(np.vdot(psi, H @ psi))))
        n_bar.append(diagonal_ensemble_mean(eigsys, psi, counter))
        fitted.append(-fit_leakage_rate(times, ts["leakage"]).coefficients[0])
        series.append(ts)
    n_bar = np.array(n_bar)
    return LeakageRun(labels, np.array(energies), n_bar, gamma2 * n_bar, np.array(fitted), series, method)


# ---------------------------------------------------------------------------
# ETH surfaces


CUBIC_TERMS = ("1", "e", "n", "e2", "en", "n2", "e3", "e2n", "en2", "n3")


def _standardize(x: np.ndarray) -> tuple[np.ndarray, float, float]:
    m, s = float(np.mean(x)), float(np.std(x))
    if s == 0:
        raise ValidationError("cannot standardize a constant input")
    return (x - m) / s, m, s


def _cubic_design(e: np.ndarray, n: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones_like(e), e, n, e * e, e * n, n * n, e**3, e * e * n, e * n * n, n**3])


@dataclass
class SurfaceFit(FitResult):
    def predict(self, E, N) -> np.ndarray:
        ex = self.extra
        e = (np.asarray(E, dtype=float) - ex["e_mean"]) / ex["e_std"]
        if ex.get("energy_only"):
            return np.column_stack([e**k for k in range(4)]) @ self.coefficients
        n = (np.asarray(N, dtype=float) - ex["n_mean"]) / ex["n_std"]
        return _cubic_design(e, n) @ self.coefficients


def fit_bivariate_cubic(E, N, O, energy_window=None) -> SurfaceFit:
    """O ~ cubic polynomial in standardized (E, N); 10 coefficients."""
    E, N, O = (np.asarray(a, dtype=float) for a in (E, N, O))
    keep = np.ones(len(E), dtype=bool) if energy_window is None else (E > energy_window[0]) & (E < energy_window[1])
    if keep.sum() < 10:
        raise ValidationError("fit_bivariate_cubic needs at least 10 samples")
    e, em, es = _standardize(E[keep])
    n, nm, ns = _standardize(N[keep])
    fit = _lstsq(_cubic_design(e, n), O[keep])
    res = O - SurfaceFit(fit.coefficients, 0, fit.covariance, 0, extra={"e_mean": em, "e_std": es, "n_mean": nm, "n_std": ns}).predict(E, N)
    extra = {"e_mean": em, "e_std": es, "n_mean": nm, "n_std": ns, "terms": CUBIC_TERMS}
    return SurfaceFit(fit.coefficients, fit.rms, fit.covariance, int(keep.sum()), res, extra)


def fit_energy_cubic(E, O, energy_window=None) -> SurfaceFit:
    """O ~ cubic polynomial in standardized E alone (the plain ETH baseline)."""
    E, O = np.asarray(E, dtype=float), np.asarray(O, dtype=float)
    keep = np.ones(len(E), dtype=bool) if energy_window is None else (E > energy_window[0]) & (E < energy_window[1])
    if keep.sum() < 4:
        raise ValidationError("fit_energy_cubic needs at least 4 samples")
    e, em, es = _standardize(E[keep])
    fit = _lstsq(np.column_stack([e**k for k in range(4)]), O[keep])
    extra = {"e_mean": em, "e_std": es, "energy_only": True}
    out = SurfaceFit(fit.coefficients, fit.rms, fit.covariance, int(keep.sum()), None, extra)
    out.residuals = O - out.predict(E, None)
    return out
