"""
Damped Gauss-Newton (Levenberg-Marquardt) least squares and the three
model families used for holes, PLE lines and decays.

The damping schedule is fixed so that fits are reproducible: start at
1e-3, divide by 10 after an accepted step, multiply by 10 after a rejected
one. Damping is applied to the diagonal of J^T J (Marquardt scaling), which
makes the step independent of parameter units.
"""

from dataclasses import dataclass, field

import numpy as np

LN2 = np.log(2.0)
LAMBDA0 = 1e-3
REL_COST_TOL = 1e-10
GRAD_TOL = 1e-8
GRAD_TOL_AT_PLATEAU = 1e-6
MAX_ITER = 200
LAMBDA_MAX = 1e16
COND_MAX = 1e12
ROUNDOFF = 1e-13


class FitError(ValueError):
    """Input data cannot be fitted (bad shape, no dynamic range, ...)."""


@dataclass
class FitResult:
    names: tuple
    values: np.ndarray
    stderr: np.ndarray
    residual_rms: float
    iterations: int
    converged: bool
    gradient_norm: float = 0.0
    rank_deficient: bool = False
    covariance: np.ndarray = None
    message: str = ""
    model: object = None
    extras: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return float(self.values[self.names.index(name)])

    def error(self, name):
        return float(self.stderr[self.names.index(name)])

    @property
    def params(self):
        return dict(zip(self.names, map(float, self.values)))

    @property
    def uncertainties(self):
        return dict(zip(self.names, map(float, self.stderr)))

    def predict(self, x):
        return self.model.f(np.asarray(x, dtype=float), self.values)


class LorentzianModel:
    """amplitude / (1 + (2 (x - center) / fwhm)^2) + baseline"""

    names = ("center", "fwhm", "amplitude", "baseline")

    def f(self, x, p):
        c, w, a, b = p
        u = 2.0 * (x - c) / w
        return a / (1.0 + u * u) + b

    def jac(self, x, p):
        c, w, a, b = p
        u = 2.0 * (x - c) / w
        d = 1.0 / (1.0 + u * u)
        J = np.empty((x.size, 4))
        J[:, 0] = a * d * d * 4.0 * u / w
        J[:, 1] = a * d * d * 2.0 * u * u / w
        J[:, 2] = d
        J[:, 3] = 1.0
        return J


class GaussianMixtureModel:
    """Sum of peak-height Gaussians (center, fwhm, amplitude) plus baseline."""

    def __init__(self, n_peaks):
        if not 1 <= n_peaks <= 5:
            raise FitError(f"n_peaks must be in [1, 5], got {n_peaks}")
        self.n_peaks = n_peaks
        names = []
        for i in range(n_peaks):
            names += [f"center_{i}", f"fwhm_{i}", f"amplitude_{i}"]
        self.names = tuple(names) + ("baseline",)

    def f(self, x, p):
        out = np.full(x.shape, p[-1], dtype=float)
        for i in range(self.n_peaks):
            c, w, a = p[3 * i:3 * i + 3]
            out += a * np.exp(-4.0 * LN2 * ((x - c) / w) ** 2)
        return out

    def jac(self, x, p):
        J = np.empty((x.size, len(p)))
        for i in range(self.n_peaks):
            c, w, a = p[3 * i:3 * i + 3]
            d = (x - c) / w
            g = np.exp(-4.0 * LN2 * d * d)
            J[:, 3 * i] = a * g * 8.0 * LN2 * d / w
            J[:, 3 * i + 1] = a * g * 8.0 * LN2 * d * d / w
            J[:, 3 * i + 2] = g
        J[:, -1] = 1.0
        return J


class ExponentialModel:
    """amplitude * exp(-t / time_constant) + offset"""

    names = ("amplitude", "time_constant", "offset")

    def f(self, t, p):
        a, tau, b = p
        return a * np.exp(-t / tau) + b

    def jac(self, t, p):
        a, tau, b = p
        e = np.exp(-t / tau)
        J = np.empty((t.size, 3))
        J[:, 0] = e
        J[:, 1] = a * e * t / (tau * tau)
        J[:, 2] = 1.0
        return J


def numeric_jacobian(model, x, p, rel_step=1e-6):
    """
    Central finite differences with step ``rel_step * |p_i|``; a zero
    parameter borrows the largest parameter magnitude as its scale.
    """
    p = np.asarray(p, dtype=float)
    J = np.empty((x.size, p.size))
    fallback = max(float(np.abs(p).max()), 1e-300)
    for i in range(p.size):
        h = rel_step * (abs(p[i]) if p[i] != 0 else fallback)
        up, dn = p.copy(), p.copy()
        up[i] += h
        dn[i] -= h
        J[:, i] = (model.f(x, up) - model.f(x, dn)) / (2.0 * h)
    return J


def _scaled_gradient(J, r):
    rn = np.linalg.norm(r)
    cn = np.linalg.norm(J, axis=0)
    if rn == 0:
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.abs(J.T @ r) / (cn * rn)
    g[cn == 0] = 0.0
    return float(g.max())


def _at_roundoff(r, y):
    """Residual no larger than floating-point noise on the data."""
    return float(np.linalg.norm(r)) <= ROUNDOFF * float(np.linalg.norm(y))


def _is_rank_deficient(J):
    cn = np.linalg.norm(J, axis=0)
    if np.any(cn == 0):
        return True
    sv = np.linalg.svd(J / cn, compute_uv=False)
    return sv[-1] <= sv[0] / COND_MAX


def damped_least_squares(model, x, y, p0, jac=None):
    """
    Minimise sum((model.f(x, p) - y)^2) from ``p0``.

    Non-convergence is reported through ``converged=False``; only malformed
    input raises :class:`FitError`.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.array(p0, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise FitError("x and y must be 1-D arrays of equal length")
    if y.size < 2 * p.size:
        raise FitError(f"need at least {2 * p.size} points for {p.size} parameters, got {y.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(p))):
        raise FitError("data and initial guess must be finite")
    jac = jac or model.jac

    r = model.f(x, p) - y
    cost = 0.5 * float(r @ r)
    lam = LAMBDA0
    iterations = 0
    converged = False
    message = "maximum iterations reached"
    J = jac(x, p)
    grad = _scaled_gradient(J, r)

    if cost == 0.0 or _at_roundoff(r, y):
        converged, message = True, "exact fit"
    while not converged and iterations < MAX_ITER:
        if grad < GRAD_TOL:
            converged, message = True, "gradient below tolerance"
            break
        A = J.T @ J
        g = J.T @ r
        diag = np.diag(A).copy()
        diag[diag == 0] = 1.0
        accepted = False
        while lam <= LAMBDA_MAX:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_new = p + step
            r_new = model.f(x, p_new) - y
            cost_new = 0.5 * float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            if _at_roundoff(r, y):
                converged, message = True, "exact fit to round-off"
            elif grad < GRAD_TOL_AT_PLATEAU:
                converged, message = True, "no further decrease possible"
            else:
                message = "damping exhausted"
            break
        iterations += 1
        rel = (cost - cost_new) / cost
        p, r, cost = p_new, r_new, cost_new
        lam = max(lam / 10.0, 1e-12)
        J = jac(x, p)
        grad = _scaled_gradient(J, r)
        if cost == 0.0 or _at_roundoff(r, y):
            converged, message = True, "exact fit"
        elif rel < REL_COST_TOL and grad < GRAD_TOL_AT_PLATEAU:
            converged, message = True, "relative cost decrease below tolerance"

    rank_def = _is_rank_deficient(J)
    dof = y.size - p.size
    s2 = 2.0 * cost / dof
    A = J.T @ J
    try:
        cov = s2 * np.linalg.inv(A) if not rank_def else np.full(A.shape, np.inf)
    except np.linalg.LinAlgError:
        cov = np.full(A.shape, np.inf)
        rank_def = True
    stderr = np.sqrt(np.abs(np.diag(cov)))
    if rank_def:
        message += "; rank-deficient Jacobian"
    return FitResult(
        names=tuple(model.names), values=p, stderr=stderr,
        residual_rms=float(np.sqrt(2.0 * cost / y.size)), iterations=iterations,
        converged=converged, gradient_norm=grad, rank_deficient=rank_def,
        covariance=cov, message=message, model=model,
    )


def half_max_width(x, y, i_peak, baseline):
    """FWHM around ``y[i_peak]`` by linear interpolation of half-height crossings."""
    half = baseline + 0.5 * (y[i_peak] - baseline)
    n = y.size

    def crossing(direction):
        i = i_peak
        while 0 <= i + direction < n and y[i + direction] > half:
            i += direction
        j = i + direction
        if not 0 <= j < n:
            return x[i]
        frac = (y[i] - half) / (y[i] - y[j]) if y[i] != y[j] else 0.0
        return x[i] + frac * (x[j] - x[i])

    return abs(crossing(+1) - crossing(-1))


def _finalize(result, positive=("fwhm",)):
    vals = result.values
    for i, name in enumerate(result.names):
        if any(name.startswith(p) for p in positive):
            vals[i] = abs(vals[i])
    return result


def fit_lorentzian(x, y, init=None, window=None):
    """
    Lorentzian peak plus constant baseline.

    Default start: center at argmax, baseline = median, amplitude =
    max - median, fwhm from half-maximum crossings. With ``window`` set,
    only points within ``window * fwhm_init`` of the initial center are used.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if init is None:
        i = int(np.argmax(y))
        base = float(np.median(y))
        amp = float(y[i] - base)
        w = half_max_width(x, y, i, base) if amp > 0 else 0.0
        if not w > 0:
            w = abs(x[-1] - x[0]) / 10.0
        init = (x[i], w, amp, base)
    p0 = np.array(init, dtype=float)
    sel = slice(None)
    if window is not None:
        mask = np.abs(x - p0[0]) <= window * abs(p0[1])
        if mask.sum() >= 16:
            sel = mask
    res = damped_least_squares(LorentzianModel(), x[sel], y[sel], p0)
    res.extras["n_points"] = int(np.count_nonzero(np.ones_like(x)[sel]))
    return _finalize(res)


def lorentzian_area(result):
    """Integrated area of a fitted Lorentzian peak (baseline excluded)."""
    return np.pi / 2.0 * result["amplitude"] * result["fwhm"]


def lorentzian_area_error(result):
    a, w = result["amplitude"], result["fwhm"]
    cov = result.covariance
    ia, iw = result.names.index("amplitude"), result.names.index("fwhm")
    var = (w * w * cov[ia, ia] + a * a * cov[iw, iw] + 2 * a * w * cov[ia, iw])
    return float(np.pi / 2.0 * np.sqrt(max(var, 0.0)))


def smooth5(y):
    """Centred 5-point moving average with shrinking edge windows."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    n = y.size
    for i in range(n):
        lo, hi = max(0, i - 2), min(n, i + 3)
        out[i] = y[lo:hi].mean()
    return out


def local_maxima(y):
    idx = [i for i in range(1, y.size - 1) if y[i] > y[i - 1] and y[i] >= y[i + 1]]
    return np.array(idx, dtype=int)


def fit_gaussian_mixture(x, y, n_peaks=1, init=None):
    """
    Sum of ``n_peaks`` Gaussians with a shared baseline.

    Default start uses the ``n_peaks`` highest local maxima of the 5-point
    smoothed data; widths from half-maximum crossings.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    model = GaussianMixtureModel(n_peaks)
    if init is None:
        ys = smooth5(y)
        base = float(ys.min())
        peaks = local_maxima(ys)
        if peaks.size < n_peaks:
            extra = [int(i) for i in np.argsort(ys)[::-1] if i not in set(peaks.tolist())]
            peaks = np.concatenate([peaks, extra[:n_peaks - peaks.size]]).astype(int)
        peaks = peaks[np.argsort(ys[peaks])[::-1][:n_peaks]]
        peaks = np.sort(peaks)
        init = []
        for i in peaks:
            w = half_max_width(x, ys, i, base)
            if not w > 0:
                w = abs(x[-1] - x[0]) / (4.0 * n_peaks)
            init += [x[i], w, ys[i] - base]
        init.append(base)
    res = damped_least_squares(model, x, y, np.array(init, dtype=float))
    return _finalize(res)


def fit_exponential(t, y, init=None, offset=None):
    """
    Single exponential plus offset.

    Default start: offset at the tail extreme (min for decays), time constant
    and amplitude from a log-linear regression of ``|y - offset|``. Passing
    ``offset`` holds it fixed (reported with zero uncertainty).
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 6:
        raise FitError(f"exponential fit needs at least 6 points, got {t.size}")
    if t.shape != y.shape:
        raise FitError("time and value arrays differ in length")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise FitError("time series must be finite")
    span = float(np.ptp(y))
    if not span > 0 or span <= 1e-12 * max(np.abs(y).max(), 1e-300):
        raise FitError("series has no dynamic range")
    message = ""
    if init is None:
        decaying = y[np.argmin(t)] >= y[np.argmax(t)]
        sign = 1.0 if decaying else -1.0
        base = float(y.min() if decaying else y.max()) if offset is None else float(offset)
        z = sign * (y - base)
        keep = z > 1e-3 * span
        if keep.sum() >= 2:
            slope, icpt = np.polyfit(t[keep], np.log(z[keep]), 1)
        else:
            slope, icpt = -1.0 / np.ptp(t), np.log(span)
        tau = -1.0 / slope if slope < 0 else np.ptp(t)
        init = (sign * np.exp(icpt), tau, base)
    if np.ptp(t) < 0.3 * abs(init[1]):
        message = "time span shorter than 0.3 x initial time constant"
    if offset is None:
        res = damped_least_squares(ExponentialModel(), t, y, np.array(init, dtype=float))
    else:
        res = _fit_fixed_offset(t, y, init[:2], float(offset))
    if message:
        res.message += "; " + message
    return res


class _ExponentialFixedOffset(ExponentialModel):
    names = ("amplitude", "time_constant")

    def __init__(self, offset):
        self.offset = offset

    def f(self, t, p):
        return super().f(t, (p[0], p[1], self.offset))

    def jac(self, t, p):
        return super().jac(t, (p[0], p[1], self.offset))[:, :2]


def _fit_fixed_offset(t, y, init, offset):
    res = damped_least_squares(_ExponentialFixedOffset(offset), t, y, np.array(init, dtype=float))
    cov = np.zeros((3, 3))
    cov[:2, :2] = res.covariance
    res.names = ExponentialModel.names
    res.values = np.append(res.values, offset)
    res.stderr = np.append(res.stderr, 0.0)
    res.covariance = cov
    res.model = ExponentialModel()
    res.extras["fixed_offset"] = True
    return res


HOLE_FIT_WINDOW = 1.0


def fit_lorentzian_hole(hole, init=None, window=HOLE_FIT_WINDOW):
    """
    Fit the central hole of a hole spectrum.

    ``window`` (in units of the initial FWHM estimate) keeps satellite holes
    and anti-holes out of the fit; pass ``None`` to fit the whole axis.
    """
    if len(hole.axis) < 64:
        raise FitError(f"hole spectrum needs >= 64 points, got {len(hole.axis)}")
    return fit_lorentzian(hole.axis, hole.values, init=init, window=window)
