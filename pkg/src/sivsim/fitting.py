"""Nonlinear least-squares fits for the recovery, resonance, fringe and field data.

Every fit goes through :func:`levenberg_marquardt`, a damped Gauss-Newton
solver with a central-difference Jacobian.  Standard errors are asymptotic:
sqrt of the diagonal of (J^T J)^-1 scaled by the residual variance.
Degenerate inputs produce flagged results instead of exceptions so that
sweeps survive bad points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import RankError, SeedingError
from .model import MagneticField, SivParameters, build_ground_hamiltonian, diagonalize, nuclear_preserving_lines

REL_STEP = 1e-6
PARAM_TOL = 1e-10
RSS_TOL = 1e-12
MAX_ITER = 500


@dataclass
class FitResult:
    form: str
    names: tuple
    values: np.ndarray
    stderr: np.ndarray
    rss: float
    converged: bool
    iterations: int
    warnings: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def flagged(self) -> bool:
        return (not self.converged) or bool(self.warnings)

    def __getitem__(self, name):
        if name in self.names:
            return float(self.values[self.names.index(name)])
        if name in self.extra:
            return self.extra[name]
        raise KeyError(name)

    def error(self, name) -> float:
        return float(self.stderr[self.names.index(name)])

    def as_dict(self) -> dict:
        return {name: float(v) for name, v in zip(self.names, self.values)}

    def to_dict(self) -> dict:
        def clean(v):
            v = float(v)
            return v if math.isfinite(v) else None

        return {
            "form": self.form,
            "parameters": {n: clean(v) for n, v in zip(self.names, self.values)},
            "stderr": {n: clean(v) for n, v in zip(self.names, self.stderr)},
            "rss": clean(self.rss),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "warnings": list(self.warnings),
            "extra": {k: clean(v) if isinstance(v, (int, float)) else v for k, v in self.extra.items()},
        }


# --------------------------------------------------------------------------
# core solver


def numerical_jacobian(f: Callable, p: np.ndarray, scale: np.ndarray | None = None, rel_step=REL_STEP):
    """Central-difference Jacobian of ``f`` at ``p``.

    The step for parameter i is ``rel_step * max(|p_i|, scale_i)``.
    """
    p = np.asarray(p, dtype=float)
    scale = np.ones_like(p) if scale is None else np.asarray(scale, dtype=float)
    cols = []
    for i in range(len(p)):
        h = rel_step * max(abs(p[i]), scale[i])
        up, dn = p.copy(), p.copy()
        up[i] += h
        dn[i] -= h
        cols.append((np.asarray(f(up)) - np.asarray(f(dn))) / (2 * h))
    return np.stack(cols, axis=1)


def _covariance(jac, rss, n, k, scale):
    dof = n - k
    # work in scaled coordinates so conditioning reflects identifiability, not units
    jac = jac * scale
    jtj = jac.T @ jac
    try:
        if np.linalg.cond(jtj) > 1e15:
            raise np.linalg.LinAlgError
        inv = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        return np.full(k, np.inf), False
    var = rss / dof if dof > 0 else np.nan
    d = np.clip(np.diag(inv), 0, None) * var
    return (np.sqrt(d) * np.abs(scale)) if dof > 0 else np.full(k, np.nan), True


def levenberg_marquardt(
    model: Callable,
    x: np.ndarray,
    y: np.ndarray,
    p0,
    names: Sequence[str],
    form: str,
    scale=None,
    max_iter: int = MAX_ITER,
) -> FitResult:
    """Minimise sum((y - model(x, p))^2) from ``p0``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.asarray(p0, dtype=float).copy()
    scale = np.abs(p) + 1e-300 if scale is None else np.asarray(scale, dtype=float)
    def f(q):
        # trial steps may push exponentials out of range; such steps are rejected
        with np.errstate(over="ignore", invalid="ignore"):
            return model(x, q)

    r = y - f(p)
    rss = float(r @ r)
    lam = 1e-3
    converged = False
    it = 0
    warnings = []
    for it in range(1, max_iter + 1):
        jac = numerical_jacobian(f, p, scale)
        a = jac.T @ jac
        g = jac.T @ r
        d = np.diag(a).copy()
        d[d <= 0] = max(d.max(), 1.0) * 1e-12 if d.size else 1.0
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(a + lam * np.diag(d), g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = p + step
            r_new = y - f(trial)
            with np.errstate(over="ignore", invalid="ignore"):
                rss_new = float(r_new @ r_new)
            if np.isfinite(rss_new) and rss_new <= rss:
                accepted = True
                break
            lam *= 10
        if not accepted:
            # no descent direction left: the current point is a local minimum
            converged = True
            break
        dp = np.linalg.norm(step / scale) / (np.linalg.norm(p / scale) + 1e-30)
        drss = (rss - rss_new) / max(rss, 1e-300)
        p, r, rss = trial, r_new, rss_new
        lam = max(lam / 10, 1e-12)
        if dp < PARAM_TOL or drss < RSS_TOL or rss == 0.0:
            converged = True
            break
    else:
        warnings.append(f"no convergence after {max_iter} iterations")
    jac = numerical_jacobian(f, p, scale)
    stderr, ok = _covariance(jac, rss, len(y), len(p), scale)
    if not ok:
        warnings.append("curvature matrix is singular; parameters not identifiable")
    return FitResult(form, tuple(names), p, stderr, rss, converged, it, warnings)


def _sorted(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("data contain non-finite values")
    order = np.lexsort((y, x))
    return x[order], y[order]


def _flat_result(form, names, values, y, reason):
    r = y - np.mean(y)
    return FitResult(
        form,
        tuple(names),
        np.asarray(values, dtype=float),
        np.full(len(names), np.inf),
        float(r @ r),
        False,
        0,
        [reason],
    )


# --------------------------------------------------------------------------
# exponential recovery


def exp_recovery(t, a, tau, c):
    return c - a * np.exp(-t / tau)


def _best_decay(t, y, basis_fn, taus):
    """Variable projection: for each trial time constant solve the linear part."""
    best = None
    for tau in taus:
        basis = basis_fn(tau)
        coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
        res = y - basis @ coef
        rss = float(res @ res)
        if best is None or rss < best[0]:
            best = (rss, tau, coef)
    return best


def fit_exp_recovery(t, y) -> FitResult:
    """y = c - a*exp(-t/T)."""
    t, y = _sorted(t, y)
    names = ("a", "T", "c")
    if len(t) < 4:
        raise ValueError("exponential recovery fit needs at least 4 points")
    if np.any(t < 0):
        raise ValueError("times must be non-negative")
    span = t.max() - t.min()
    yr = np.ptp(y)
    if yr <= 1e-12 * max(np.abs(y).max(), 1e-300) or span <= 0:
        return _flat_result("exp_recovery", names, [0.0, np.nan, np.mean(y)], y,
                            "degenerate: data are constant, time constant unidentifiable")
    steps = np.diff(t)
    tmin = max(steps[steps > 0].min() / 4, span * 1e-4)
    taus = np.geomspace(tmin, 20 * span, 240)
    _, tau0, coef = _best_decay(t, y, lambda tau: np.stack([np.ones_like(t), -np.exp(-t / tau)], 1), taus)
    c0, a0 = coef
    res = levenberg_marquardt(
        lambda x, p: exp_recovery(x, *p),
        t, y, [a0, tau0, c0], names, "exp_recovery",
        scale=[yr, span, yr],
    )
    if res["T"] > 10 * span:
        res.warnings.append("time constant exceeds ten times the sampled span")
    if abs(res["a"]) < 1e-6 * yr:
        res.warnings.append("negligible amplitude")
    return res


# --------------------------------------------------------------------------
# Lorentzians


def lorentzians(f, params, n_peaks):
    """Sum of ``n_peaks`` Lorentzians (center, FWHM, amplitude) plus baseline."""
    out = np.full_like(np.asarray(f, dtype=float), params[-1])
    for k in range(n_peaks):
        c, w, a = params[3 * k: 3 * k + 3]
        out = out + a / (1 + ((f - c) / (w / 2)) ** 2)
    return out


def _local_maxima(y):
    idx = []
    n = len(y)
    for i in range(n):
        left = y[i - 1] if i > 0 else -np.inf
        right = y[i + 1] if i < n - 1 else -np.inf
        if y[i] >= left and y[i] >= right and (y[i] > left or y[i] > right):
            idx.append(i)
    return idx


def _half_width(f, y, i, base):
    half = base + (y[i] - base) / 2
    lo = i
    while lo > 0 and y[lo] > half:
        lo -= 1
    hi = i
    while hi < len(y) - 1 and y[hi] > half:
        hi += 1
    w = f[hi] - f[lo]
    return w if w > 0 else (f[-1] - f[0]) / len(f)


def fit_lorentzian_peaks(f, y, n_peaks: int = 2) -> FitResult:
    """Sum-of-Lorentzians fit seeded from the largest local maxima."""
    if n_peaks not in (1, 2):
        raise ValueError("n_peaks must be 1 or 2")
    f, y = _sorted(f, y)
    names = []
    for k in range(n_peaks):
        names += [f"center{k + 1}", f"fwhm{k + 1}", f"amplitude{k + 1}"]
    names.append("baseline")
    yr = np.ptp(y)
    if yr <= 1e-12 * max(np.abs(y).max(), 1e-300):
        vals = []
        for k in range(n_peaks):
            vals += [np.mean(f), np.ptp(f), 0.0]
        return _flat_result("lorentzian_peaks", names, vals + [np.mean(y)], y,
                            "degenerate: data are flat, no peak amplitude")
    base = float(np.median(y)) if n_peaks == 1 else float(np.percentile(y, 10))
    base = min(base, float(np.min(y[[0, -1]])))
    maxima = sorted(_local_maxima(y), key=lambda i: -y[i])
    seeds = maxima[:n_peaks]
    if len(seeds) < n_peaks or len(set(seeds)) < n_peaks:
        raise SeedingError(f"found {len(set(seeds))} distinct maxima, need {n_peaks}")
    seeds = sorted(seeds)
    p0, scale = [], []
    span = np.ptp(f)
    for i in seeds:
        w = _half_width(f, y, i, base)
        p0 += [f[i], w, y[i] - base]
        scale += [span, span, yr]
    p0.append(base)
    scale.append(yr)
    res = levenberg_marquardt(
        lambda x, p: lorentzians(x, p, n_peaks), f, y, p0, names, "lorentzian_peaks", scale=scale
    )
    # report positive widths
    for k in range(n_peaks):
        res.values[3 * k + 1] = abs(res.values[3 * k + 1])
    return res


# --------------------------------------------------------------------------
# oscillations


def damped_cosine(t, amp, freq, phase, t2, c):
    return c + amp * np.cos(2 * np.pi * freq * t + phase) * np.exp(-t / t2)


def double_damped_cosine(t, a1, f1, a2, f2, p1, p2, t2, c):
    env = np.exp(-t / t2)
    return c + env * (a1 * np.cos(2 * np.pi * f1 * t + p1) + a2 * np.cos(2 * np.pi * f2 * t + p2))


def _uniform(t, y):
    dt = np.diff(t)
    if np.allclose(dt, dt[0], rtol=1e-6, atol=0):
        return t, y
    grid = np.linspace(t[0], t[-1], len(t))
    return grid, np.interp(grid, t, y)


def fft_peaks(t, y, n: int = 1, pad: int = 8, min_prominence: float = 4.0):
    """Frequencies of the ``n`` strongest non-DC spectral peaks.

    Raises :class:`SeedingError` when no bin stands out of the background.
    """
    tu, yu = _uniform(t, y)
    dt = tu[1] - tu[0]
    yy = (yu - yu.mean()) * np.hanning(len(yu))
    size = pad * len(yy)
    power = np.abs(np.fft.rfft(yy, n=size)) ** 2
    freqs = np.fft.rfftfreq(size, dt)
    if power[1:].max() <= 0:
        raise SeedingError("data have no spectral content")
    raw = np.abs(np.fft.rfft(yu - yu.mean())) ** 2
    if raw[1:].max() < min_prominence * np.median(raw[1:]):
        raise SeedingError("no dominant frequency component")
    peaks = [i for i in _local_maxima(power) if i > 0]
    peaks.sort(key=lambda i: -power[i])
    return [float(freqs[i]) for i in peaks[:n]], [float(power[i]) for i in peaks[:n]]


def _wrap(phase):
    return float((phase + np.pi) % (2 * np.pi) - np.pi)


def _normalise_cos(values, amp_idx, phase_idx):
    a = values[amp_idx]
    if a < 0:
        values[amp_idx] = -a
        values[phase_idx] = values[phase_idx] + np.pi
    values[phase_idx] = _wrap(values[phase_idx])


def _cos_seed(t, y, freqs, taus):
    def basis(tau):
        env = np.exp(-t / tau)
        cols = [np.ones_like(t)]
        for fr in freqs:
            cols += [env * np.cos(2 * np.pi * fr * t), -env * np.sin(2 * np.pi * fr * t)]
        return np.stack(cols, 1)

    rss, tau, coef = _best_decay(t, y, basis, taus)
    comps = []
    for k in range(len(freqs)):
        cx, sx = coef[1 + 2 * k], coef[2 + 2 * k]
        comps.append((math.hypot(cx, sx), math.atan2(sx, cx)))
    return rss, tau, coef[0], comps


def fit_damped_cosine(t, y) -> FitResult:
    """y = c + A*cos(2*pi*f*t + phi)*exp(-t/T2*), frequency seeded by FFT."""
    t, y = _sorted(t, y)
    names = ("A", "f", "phi", "T2star", "c")
    if len(t) < 5:
        raise ValueError("damped cosine fit needs at least 5 points")
    span = t[-1] - t[0]
    yr = np.ptp(y)
    if yr <= 1e-12 * max(np.abs(y).max(), 1e-300):
        return _flat_result("damped_cosine", names, [0, 0, 0, np.nan, np.mean(y)], y,
                            "degenerate: data are constant")
    taus = np.geomspace(span / 50, 50 * span, 120)
    (f_seed,), _ = fft_peaks(t, y, 1)
    best = None
    # zero frequency is also tried so that plain exponentials fit cleanly
    for fr in (f_seed, 0.0):
        _, tau0, c0, [(a0, ph0)] = _cos_seed(t, y, [fr], taus)
        res = levenberg_marquardt(
            lambda x, p: damped_cosine(x, *p),
            t, y, [a0, fr, ph0, tau0, c0], names, "damped_cosine",
            scale=[yr, max(1.0 / span, fr), 1.0, span, yr],
        )
        if best is None or res.rss < best.rss * (1 - 1e-9):
            best = res
    _normalise_cos(best.values, 0, 2)
    if best["f"] < 0:
        best.values[1] = -best.values[1]
        best.values[2] = _wrap(-best.values[2])
    if best["f"] > 0 and span * best["f"] < 2:
        best.warnings.append("fewer than two oscillation periods sampled; frequency unreliable")
    return best


def fit_double_damped_cosine(
    t, y, min_separation: float | None = None, min_power_ratio: float = 0.01
) -> FitResult:
    """Two cosines under one shared exponential envelope."""
    t, y = _sorted(t, y)
    names = ("A1", "f1", "A2", "f2", "phi1", "phi2", "T2star", "c")
    span = t[-1] - t[0]
    yr = np.ptp(y)
    resolution = 1.0 / span if min_separation is None else min_separation
    try:
        freqs, powers = fft_peaks(t, y, 2)
    except SeedingError:
        freqs = []
    weak = len(freqs) == 2 and powers[1] < min_power_ratio * powers[0]
    if len(freqs) < 2 or weak or abs(freqs[0] - freqs[1]) < resolution:
        single = fit_damped_cosine(t, y)
        single.warnings.append("components not resolvable; fell back to a single damped cosine")
        single.extra["fallback"] = "damped_cosine"
        return single
    taus = np.geomspace(span / 50, 50 * span, 120)
    _, tau0, c0, comps = _cos_seed(t, y, freqs, taus)
    (a1, p1), (a2, p2) = comps
    f1, f2 = freqs
    fs = max(f1, f2)
    res = levenberg_marquardt(
        lambda x, p: double_damped_cosine(x, *p),
        t, y, [a1, f1, a2, f2, p1, p2, tau0, c0], names, "double_damped_cosine",
        scale=[yr, fs, yr, fs, 1.0, 1.0, span, yr],
    )
    _normalise_cos(res.values, 0, 4)
    _normalise_cos(res.values, 2, 5)
    # order the components by frequency, highest first
    if res.values[1] < res.values[3]:
        v, e = res.values.copy(), res.stderr.copy()
        for i, j in ((0, 2), (1, 3), (4, 5)):
            v[i], v[j] = res.values[j], res.values[i]
            e[i], e[j] = res.stderr[j], res.stderr[i]
        res.values, res.stderr = v, e
    return res


# --------------------------------------------------------------------------
# Rabi traces and effective Rabi frequency


def _oscillation_model(n, baseline):
    def model(t, p):
        env = np.exp(-t / p[3 * n])
        out = np.full_like(t, p[3 * n + 1])
        for k in range(n):
            a, fr, ph = p[3 * k: 3 * k + 3]
            out = out + a * env * np.cos(2 * np.pi * fr * t + ph)
        if baseline == "saturating":
            out = out - p[3 * n + 2] * np.exp(-t / p[3 * n + 3])
        elif baseline == "linear":
            out = out + p[3 * n + 2] * t
        return out

    return model


def _oscillation_names(n, baseline):
    names = []
    for k in range(n):
        sfx = "" if n == 1 else str(k + 1)
        names += [f"A{sfx}", f"f{sfx}", f"phi{sfx}"]
    names += ["T2star", "c"]
    if baseline == "saturating":
        names += ["drift", "T_drift"]
    elif baseline == "linear":
        names += ["slope"]
    return tuple(names)


def fit_drifting_oscillation(t, y, n_components: int = 1, baseline: str = "auto") -> FitResult:
    """Damped cosine(s) with a shared envelope on top of a relaxing baseline.

    ``baseline`` is "saturating" (c - drift*exp(-t/T_drift)), "linear" or
    "auto", which keeps whichever of the two is better posed.  The trend is
    projected out before FFT seeding so slow drifts do not take the
    dominant bin.
    """
    t, y = _sorted(t, y)
    n = n_components
    if n not in (1, 2):
        raise ValueError("n_components must be 1 or 2")
    if baseline == "auto":
        sat = fit_drifting_oscillation(t, y, n, "saturating")
        lin = fit_drifting_oscillation(t, y, n, "linear")
        degenerate = sat.flagged or sat["T_drift"] > 20 * (t[-1] - t[0])
        if degenerate and not lin.flagged or lin.rss < sat.rss * (1 - 1e-6):
            return lin
        return sat
    names = _oscillation_names(n, baseline)
    form = f"oscillation_{n}_{baseline}"
    span = t[-1] - t[0]
    yr = np.ptp(y)
    if yr <= 1e-12 * max(np.abs(y).max(), 1e-300):
        vals = [0.0] * len(names)
        return _flat_result(form, names, vals, y, "degenerate: data are constant")
    taus = np.geomspace(span / 20, 50 * span, 40)
    _, td0, coef = _best_decay(t, y, lambda tau: np.stack([np.ones_like(t), -np.exp(-t / tau)], 1), taus)
    trend = coef[0] - coef[1] * np.exp(-t / td0)
    freqs, powers = fft_peaks(t, y - trend, n)
    if n == 2 and (len(freqs) < 2 or powers[1] < 0.01 * powers[0] or abs(freqs[0] - freqs[1]) < 1 / span):
        res = fit_drifting_oscillation(t, y, 1, baseline)
        res.warnings.append("components not resolvable; fell back to a single damped cosine")
        res.extra["fallback"] = "single"
        return res

    best = None
    for t2 in np.geomspace(span / 10, 100 * span, 16):
        env = np.exp(-t / t2)
        osc = []
        for fr in freqs:
            osc += [env * np.cos(2 * np.pi * fr * t), -env * np.sin(2 * np.pi * fr * t)]

        if baseline == "saturating":
            basis = lambda tau: np.stack([np.ones_like(t), -np.exp(-t / tau)] + osc, 1)
            rss, td, cf = _best_decay(t, y, basis, taus)
        else:
            b = np.stack([np.ones_like(t), t] + osc, 1)
            cf, *_ = np.linalg.lstsq(b, y, rcond=None)
            r = y - b @ cf
            rss, td = float(r @ r), None
        if best is None or rss < best[0]:
            best = (rss, td, t2, cf)
    _, td, t2, cf = best
    p0, scale = [], []
    for k, fr in enumerate(freqs):
        cx, sx = cf[2 + 2 * k], cf[3 + 2 * k]
        p0 += [math.hypot(cx, sx), fr, math.atan2(sx, cx)]
        scale += [yr, max(fr, 1 / span), 1.0]
    p0 += [t2, cf[0]]
    scale += [span, yr]
    if baseline == "saturating":
        p0 += [cf[1], td]
        scale += [yr, span]
    else:
        p0 += [cf[1]]
        scale += [yr / span]
    res = levenberg_marquardt(_oscillation_model(n, baseline), t, y, p0, names, form, scale=scale)
    for k in range(n):
        _normalise_cos(res.values, 3 * k, 3 * k + 2)
        if res.values[3 * k + 1] < 0:
            res.values[3 * k + 1] *= -1
            res.values[3 * k + 2] = _wrap(-res.values[3 * k + 2])
    if n == 2 and res.values[1] < res.values[4]:
        perm = [3, 4, 5, 0, 1, 2] + list(range(6, len(names)))
        res.values, res.stderr = res.values[perm], res.stderr[perm]
    res.extra["baseline"] = baseline
    return res


def fit_rabi_trace(t, y) -> FitResult:
    """Rabi trace: one damped cosine on a drifting baseline."""
    return fit_drifting_oscillation(t, y, 1, "auto")


def generalized_rabi(delta, omega):
    return np.sqrt(omega ** 2 + np.asarray(delta) ** 2)


def fit_generalized_rabi(delta, f_eff) -> FitResult:
    """f_eff = sqrt(Omega^2 + delta^2); one free parameter."""
    delta, f_eff = _sorted(delta, f_eff)
    if len(delta) < 1:
        raise ValueError("need at least one point")
    sq = np.asarray(f_eff) ** 2 - np.asarray(delta) ** 2
    omega0 = math.sqrt(max(float(np.median(sq)), 0.0)) or float(np.max(f_eff))
    res = levenberg_marquardt(
        lambda x, p: generalized_rabi(x, p[0]), delta, f_eff, [omega0], ("Omega",),
        "generalized_rabi", scale=[max(omega0, 1e-300)],
    )
    res.values[0] = abs(res.values[0])
    omega = res["Omega"]
    if len(delta) < 3:
        res.warnings.append("fewer than 3 points")
    if not np.any(np.abs(delta) < omega / 2):
        res.warnings.append("ill-conditioned: no point with |delta| < Omega/2")
    pred = generalized_rabi(delta, omega)
    res.extra["relative_rms"] = float(np.sqrt(np.mean(((f_eff - pred) / pred) ** 2)))
    return res


# --------------------------------------------------------------------------
# linear


def fit_linear(x, y) -> FitResult:
    """Closed-form least-squares line with R^2."""
    x, y = _sorted(x, y)
    if len(np.unique(x)) < 2:
        raise RankError("linear fit needs at least two distinct x values")
    n = len(x)
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    slope = float(((x - xm) * (y - ym)).sum() / sxx)
    intercept = float(ym - slope * xm)
    res = y - (slope * x + intercept)
    rss = float(res @ res)
    sst = float(((y - ym) ** 2).sum())
    r2 = 1.0 - rss / sst if sst > 0 else 1.0
    if n > 2:
        s2 = rss / (n - 2)
        se_slope = math.sqrt(s2 / sxx)
        se_int = math.sqrt(s2 * (1.0 / n + xm ** 2 / sxx))
    else:
        se_slope = se_int = math.nan
    return FitResult(
        "linear", ("slope", "intercept"), np.array([slope, intercept]),
        np.array([se_slope, se_int]), rss, True, 0, [], {"r_squared": r2},
    )


# --------------------------------------------------------------------------
# hyperfine constant from resonance-vs-field data


def model_line_pairs(b_values, params: SivParameters, polar, azimuth=0.0) -> np.ndarray:
    """Nuclear-preserving line frequencies (sorted descending) for each field."""
    out = []
    for b in b_values:
        fld = MagneticField(float(b), polar, azimuth)
        spec = diagonalize(build_ground_hamiltonian(params, fld), params)
        out.append(sorted((l.frequency for l in nuclear_preserving_lines(spec)), reverse=True))
    return np.array(out)


def fit_a_parallel(
    b_values,
    frequencies,
    geometry: tuple[float, float] = (math.radians(109.0), 0.0),
    params_prior: SivParameters | None = None,
    fit_gamma_s: bool = False,
) -> FitResult:
    """Fit A_par (and optionally gamma_S) to pairs of resonance frequencies vs field.

    ``frequencies`` has shape (n_fields, 2); pairs are matched after sorting.
    Parameters not fitted stay at ``params_prior``.
    """
    prior = params_prior or SivParameters()
    b = np.asarray(b_values, dtype=float)
    fr = np.sort(np.asarray(frequencies, dtype=float), axis=1)[:, ::-1]
    if fr.shape != (len(b), 2):
        raise ValueError("frequencies must have shape (n_fields, 2)")
    if len(b) < 3:
        raise ValueError("need at least 3 field points")
    order = np.argsort(b, kind="stable")
    b, fr = b[order], fr[order]
    polar, azimuth = geometry

    def predict(_, p):
        kw = {"a_par": p[0]}
        if fit_gamma_s:
            kw["gamma_s"] = p[1]
        return model_line_pairs(b, prior.replace(**kw), polar, azimuth).ravel()

    y = fr.ravel()
    # coarse scan on A_par to avoid sign or branch ambiguities in the seed
    grid = np.linspace(0.0, 200e6, 41)
    costs = []
    for a in grid:
        p = [a] + ([prior.gamma_s] if fit_gamma_s else [])
        r = y - predict(None, p)
        costs.append(float(r @ r))
    a0 = grid[int(np.argmin(costs))]
    names = ("a_par",) + (("gamma_s",) if fit_gamma_s else ())
    p0 = [a0] + ([prior.gamma_s] if fit_gamma_s else [])
    scale = [1e6] + ([prior.gamma_s] if fit_gamma_s else [])
    res = levenberg_marquardt(predict, np.zeros_like(y), y, p0, names, "a_parallel", scale=scale)
    res.extra["fit_gamma_s"] = bool(fit_gamma_s)
    return res


FIT_FORMS = {
    "exp_recovery": "y = c - a*exp(-t/T)",
    "lorentzian_peaks": "y = baseline + sum_k A_k / (1 + ((f - f_k)/(w_k/2))^2)",
    "damped_cosine": "y = c + A*cos(2*pi*f*t + phi)*exp(-t/T2star)",
    "double_damped_cosine": "y = c + exp(-t/T2star)*(A1*cos(2*pi*f1*t + phi1) + A2*cos(2*pi*f2*t + phi2))",
    "rabi_trace": "y = c + A*cos(2*pi*f*t + phi)*exp(-t/T2star) + relaxing baseline",
    "generalized_rabi": "f_eff = sqrt(Omega^2 + delta^2)",
    "linear": "y = slope*x + intercept",
    "a_parallel": "resonances = eigenvalue differences of the ground Hamiltonian",
}
