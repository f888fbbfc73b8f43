"""Least-squares fits of fringe and decay data, and visibility extraction.

Both model families are fitted with the same damped Gauss-Newton
(Levenberg-Marquardt) iteration using analytic Jacobians.  Standard errors
come from the linearized normal equations, scaled by the residual variance.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .evolution import FringeScan

__all__ = [
    "FitError",
    "FitConvergenceError",
    "DegenerateDataError",
    "DecayUnidentifiableError",
    "VisibilityClampedWarning",
    "SinusoidFit",
    "DecayFit",
    "fit_sinusoid",
    "fit_exponential_decay",
    "visibility_from_fringe",
    "read_series",
    "write_series",
]

MAX_ITER = 200
STEP_RTOL = 1e-10
CLAMP_TOL = 1e-9  # overshoot treated as roundoff, clamped silently


class FitError(ValueError):
    pass


class FitConvergenceError(FitError):
    pass


class DegenerateDataError(FitError):
    pass


class DecayUnidentifiableError(DegenerateDataError):
    pass


class VisibilityClampedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SinusoidFit:
    """offset + amplitude * cos(phi - phase0)."""

    amplitude: float
    phase0: float
    offset: float
    residual_norm: float
    parameter_uncertainties: dict
    iterations: int = 0

    @property
    def negative_minimum(self) -> bool:
        """True when the fitted curve dips below zero counts."""
        return self.offset < self.amplitude

    @property
    def maximum(self) -> float:
        return self.offset + self.amplitude

    @property
    def minimum(self) -> float:
        return self.offset - self.amplitude

    def __call__(self, phi):
        return self.offset + self.amplitude * np.cos(np.asarray(phi, dtype=float) - self.phase0)


@dataclass(frozen=True)
class DecayFit:
    """A * exp(-t / T) + g0."""

    A: float
    T: float
    g0: float
    residual_norm: float
    parameter_uncertainties: dict
    iterations: int = 0

    def __call__(self, t):
        return self.A * np.exp(-np.asarray(t, dtype=float) / self.T) + self.g0


def _levenberg_marquardt(residual, jacobian, p0, lower=None, max_iter=MAX_ITER, xtol=STEP_RTOL):
    """Minimize ||residual(p)||^2 subject to optional lower bounds.

    Parameters sitting on their bound are frozen while the gradient pushes
    them outward.  Converged when an accepted step satisfies
    ||dp|| <= xtol * (||p|| + xtol).  Returns ``(p, iterations)``.
    """
    p = np.array(p0, dtype=float)
    lo = np.full(p.shape, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    p = np.maximum(p, lo)
    r = residual(p)
    cost = float(r @ r)
    lam = 1e-3
    for it in range(1, max_iter + 1):
        if cost == 0.0:
            return p, it - 1
        J = jacobian(p)
        g = J.T @ r
        free = ~((p <= lo) & (g > 0))
        Jf = J[:, free]
        A = Jf.T @ Jf
        d = np.diag(A).copy()
        d[d <= 0] = max(float(d.max(initial=0.0)), 1.0) * 1e-12
        while True:
            step = np.zeros_like(p)
            try:
                step[free] = np.linalg.solve(A + lam * np.diag(d), -g[free])
            except np.linalg.LinAlgError:
                step[free] = np.linalg.lstsq(A + lam * np.diag(d), -g[free], rcond=None)[0]
            trial = np.maximum(p + step, lo)
            small = np.linalg.norm(trial - p) <= xtol * (np.linalg.norm(p) + xtol)
            r_new = residual(trial)
            cost_new = float(r_new @ r_new)
            if cost_new <= cost:
                p, r, cost = trial, r_new, cost_new
                lam = max(lam / 10.0, 1e-15)
                if small:
                    return p, it
                break
            if small:
                # no decrease possible at working precision
                return p, it
            lam *= 10.0
            if lam > 1e20:
                raise FitConvergenceError("damping diverged without reducing the residual")
    raise FitConvergenceError(f"no convergence after {max_iter} iterations")


def _standard_errors(J: np.ndarray, r: np.ndarray, names) -> dict:
    n, k = J.shape
    dof = n - k
    s2 = float(r @ r) / dof if dof > 0 else math.nan
    cov = np.linalg.pinv(J.T @ J) * s2
    return {name: float(math.sqrt(max(cov[i, i], 0.0))) for i, name in enumerate(names)}


def _weights(y: np.ndarray, poisson: bool) -> np.ndarray:
    if not poisson:
        return np.ones_like(y)
    return 1.0 / np.sqrt(np.maximum(y, 1.0))


def _wrap(phase: float) -> float:
    w = math.remainder(phase, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


def fit_sinusoid(scan: FringeScan, *, poisson_weights: bool = False) -> SinusoidFit:
    """Fit offset + amplitude*cos(phi - phase0) to a fringe scan.

    Starts from the first discrete Fourier component of the data, then
    refines with Levenberg-Marquardt.
    """
    phi = np.asarray(scan.phases, dtype=float)
    y = np.asarray(scan.values, dtype=float)
    if np.unique(phi).size < 4:
        raise DegenerateDataError("need at least 4 distinct phases")
    if phi.max() - phi.min() < math.pi - 1e-12:
        raise DegenerateDataError("phases must span at least half a period")
    w = _weights(y, poisson_weights)

    n = phi.size
    c = 2.0 / n * float(np.sum(y * np.cos(phi)))
    s = 2.0 / n * float(np.sum(y * np.sin(phi)))
    p0 = [math.hypot(c, s), math.atan2(s, c), float(np.mean(y))]

    def residual(p):
        return w * (p[2] + p[0] * np.cos(phi - p[1]) - y)

    def jacobian(p):
        cs = np.cos(phi - p[1])
        sn = np.sin(phi - p[1])
        return w[:, None] * np.column_stack([cs, p[0] * sn, np.ones_like(phi)])

    p, it = _levenberg_marquardt(residual, jacobian, p0)
    amp, ph, off = p
    if amp < 0:
        amp, ph = -amp, ph + math.pi
    p = np.array([amp, _wrap(ph), off])
    r = residual(p)
    errs = _standard_errors(jacobian(p), r, ("amplitude", "phase0", "offset"))
    return SinusoidFit(float(amp), float(p[1]), float(off),
                       float(np.linalg.norm(p[2] + amp * np.cos(phi - p[1]) - y)), errs, it)


def fit_exponential_decay(points, *, poisson_weights: bool = False) -> DecayFit:
    """Fit A*exp(-t/T) + g0 to ``[(t_ns, counts), ...]``.

    The start is a log-linear regression of (counts - min counts) against
    time; A, T and g0 are then kept nonnegative during refinement.
    """
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("points must be (time, counts) pairs")
    t, y = arr[:, 0], arr[:, 1]
    if t.size < 4 or np.unique(t).size != t.size:
        raise DegenerateDataError("need at least 4 points with distinct times")
    if np.ptp(y) == 0.0:
        raise DecayUnidentifiableError("decay unidentifiable: all counts equal")
    order = np.argsort(t)
    t, y = t[order], y[order]
    w = _weights(y, poisson_weights)

    z = y - y.min()
    keep = z > 0
    if keep.sum() < 2:
        raise DecayUnidentifiableError("decay unidentifiable: fewer than two points above the floor")
    slope, intercept = np.polyfit(t[keep], np.log(z[keep]), 1)
    if not slope < 0:
        raise DecayUnidentifiableError("decay unidentifiable: counts do not decrease with time")
    T0 = -1.0 / slope
    A0 = math.exp(intercept)
    g0 = float(y.min())
    tiny_T = 1e-9 * max(float(np.ptp(t)), 1.0)

    def residual(p):
        return w * (p[0] * np.exp(-t / p[1]) + p[2] - y)

    def jacobian(p):
        e = np.exp(-t / p[1])
        return w[:, None] * np.column_stack([e, p[0] * t / p[1] ** 2 * e, np.ones_like(t)])

    p, it = _levenberg_marquardt(residual, jacobian, [A0, T0, g0],
                                 lower=[0.0, tiny_T, 0.0])
    if p[0] == 0.0:
        raise DecayUnidentifiableError("decay unidentifiable: fitted amplitude is zero")
    r = residual(p)
    errs = _standard_errors(jacobian(p), r, ("A", "T", "g0"))
    resid = float(np.linalg.norm(p[0] * np.exp(-t / p[1]) + p[2] - y))
    return DecayFit(float(p[0]), float(p[1]), float(p[2]), resid, errs, it)


def visibility_from_fringe(scan: FringeScan, fit: SinusoidFit | None = None) -> float:
    """(max - min) / (max + min) of the fitted sinusoid, clamped to [0, 1].

    A :class:`VisibilityClampedWarning` is issued when clamping changes the
    value (fits whose minimum goes negative).
    """
    if not np.any(np.asarray(scan.values) > 0):
        raise DegenerateDataError("all-zero scan has no visibility")
    fit = fit or fit_sinusoid(scan)
    if fit.offset <= 0:
        warnings.warn("nonpositive fitted offset; visibility clamped to 1", VisibilityClampedWarning)
        return 1.0
    v = fit.amplitude / fit.offset
    if v > 1.0 + CLAMP_TOL:
        warnings.warn(f"fitted visibility {v:.6g} clamped to 1", VisibilityClampedWarning)
        return 1.0
    return min(max(v, 0.0), 1.0)


def write_series(path, columns: dict, comment: str | None = None) -> None:
    """Write equal-length columns as CSV with a header row.

    ``comment`` lines are prefixed with ``#`` and precede the header.
    """
    names = list(columns)
    cols = [np.asarray(columns[n]).reshape(-1) for n in names]
    if len({c.size for c in cols}) > 1:
        raise ValueError("columns differ in length")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in zip(*cols):
            writer.writerow([_fmt(v) for v in row])


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def read_series(path: str | os.PathLike) -> dict:
    """Read a CSV written by :func:`write_series` into float arrays."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(rows)
    header = next(reader)
    data = [row for row in reader if row]
    out = {}
    for i, name in enumerate(header):
        vals = [row[i] for row in data]
        try:
            out[name] = np.array([float(v) for v in vals])
        except ValueError:
            out[name] = np.array(vals)
    return out
