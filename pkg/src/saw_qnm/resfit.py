"""Reflection-resonance model and S11 fitting.

The model is the one-port reflection of a resonator with internal and
external quality factors ``Q_i``, ``Q_e`` and an asymmetry angle ``phi0``
applied to the resonant term, multiplied by a cable baseline
``a * exp(i (theta - 2 pi f tau))``.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import optimize

log = logging.getLogger(__name__)

PARAMS = ("f0", "q_internal", "q_external", "phi0", "amplitude", "delay", "phase_offset")


class FitError(RuntimeError):
    """Fit failed; ``best`` holds the best parameters found, if any."""

    def __init__(self, message: str, best: "ResonanceModel | None" = None):
        super().__init__(message)
        self.best = best


class NoResonanceError(FitError):
    pass


def wrap_phase(x: float) -> float:
    """Map an angle to (-pi, pi]."""
    y = math.remainder(x, 2.0 * math.pi)
    return math.pi if y == -math.pi else y


@dataclass(frozen=True)
class ResonanceModel:
    f0: float
    q_internal: float
    q_external: float
    phi0: float = 0.0
    amplitude: float = 1.0
    delay: float = 0.0
    phase_offset: float = 0.0

    def __post_init__(self):
        if not self.f0 > 0:
            raise ValueError("f0 must be positive")
        if not (self.q_internal > 0 and self.q_external > 0):
            raise ValueError("quality factors must be positive")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")

    @property
    def q_loaded(self) -> float:
        return 1.0 / (1.0 / self.q_internal + 1.0 / self.q_external)

    def to_dict(self) -> dict:
        return asdict(self)


def resonance_term(f, f0, q_internal, q_external, phi0):
    """Bare reflection ``1 - (2Qi/Qe) e^{i phi0} / ((Qe+Qi)/Qe + 2i Qi (f-f0)/f0)``."""
    f = np.asarray(f, dtype=float)
    return 1.0 - (2.0 * q_internal / q_external) / (
        (q_external + q_internal) / q_external + 2j * q_internal * (f - f0) / f0
    ) * np.exp(1j * phi0)


def model_s11(model: ResonanceModel, f):
    """Complex S11 at frequency/frequencies ``f`` (Hz)."""
    bare = resonance_term(f, model.f0, model.q_internal, model.q_external, model.phi0)
    if model.amplitude == 1.0 and model.delay == 0.0 and model.phase_offset == 0.0:
        return bare
    f = np.asarray(f, dtype=float)
    return model.amplitude * np.exp(1j * (model.phase_offset - 2.0 * np.pi * f * model.delay)) * bare


@dataclass(frozen=True)
class S11Trace:
    frequencies: np.ndarray
    s11: np.ndarray
    power_dbm: float | None = None
    temperature_k: float | None = None
    label: str = ""

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        s = np.asarray(self.s11, dtype=complex)
        if f.ndim != 1 or f.shape != s.shape:
            raise ValueError("frequencies and s11 must be 1-D arrays of equal length")
        if f.size < 8:
            raise ValueError("at least 8 points are required")
        if np.any(np.diff(f) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "s11", s)

    @property
    def metadata(self) -> dict:
        return {"power_dbm": self.power_dbm, "temperature_k": self.temperature_k, "label": self.label}


@dataclass
class FitReport:
    residual_norm: float
    stderr: dict
    iterations: int
    noise_estimate: float
    dip_depth: float
    partial: bool = False
    message: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


# --- initial estimates --------------------------------------------------------

def _noise_estimate(s: np.ndarray) -> float:
    """Per-component noise sigma from the MAD of second differences."""
    if s.size < 5:
        return 0.0
    d2 = s[2:] - 2.0 * s[1:-1] + s[:-2]
    parts = np.concatenate([d2.real, d2.imag])
    return float(1.4826 * np.median(np.abs(parts - np.median(parts))) / math.sqrt(6.0))


def _fit_circle(z: np.ndarray):
    """Algebraic (Kasa) circle fit; returns center, radius, rms residual."""
    x, y = z.real, z.imag
    a = np.column_stack([x, y, np.ones_like(x)])
    rhs = x * x + y * y
    sol, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    xc, yc = sol[0] / 2.0, sol[1] / 2.0
    r2 = sol[2] + xc * xc + yc * yc
    r = math.sqrt(max(r2, 0.0))
    center = complex(xc, yc)
    rms = float(np.sqrt(np.mean((np.abs(z - center) - r) ** 2)))
    return center, r, rms


def _edge_delay(f: np.ndarray, s: np.ndarray, frac: float = 0.1) -> float:
    k = max(3, int(frac * f.size))
    slopes = []
    for sl in (slice(0, k), slice(-k, None)):
        ph = np.unwrap(np.angle(s[sl]))
        slopes.append(np.polyfit(f[sl] - f[sl].mean(), ph, 1)[0])
    return -float(np.mean(slopes)) / (2.0 * math.pi)


def _phase_fit(f, angles, f_guess, ql_guess):
    """Fit ``beta - 2 arctan(2 Q_l (f - f0) / f0)`` to unwrapped angles around the circle center."""
    def resid(p):
        beta, ql, f0 = p
        return angles - (beta - 2.0 * np.arctan(2.0 * ql * (f - f0) / f0))

    beta0 = float(angles[np.argmin(np.abs(f - f_guess))])
    sol = optimize.least_squares(resid, [beta0, ql_guess, f_guess],
                                 x_scale=[1.0, ql_guess, f_guess / ql_guess], method="lm")
    return sol.x


def initial_guess(trace: S11Trace) -> ResonanceModel:
    """Estimate all seven parameters from the trace geometry.

    Delay from the off-resonant phase slope (refined so the trace is most
    circular), f0 from the magnitude dip, loaded Q from the half-depth width,
    then the circle fit splits the loaded Q into Q_i and Q_e.
    """
    f, s = trace.frequencies, trace.s11
    f_ref = float(np.mean(f))
    tau0 = _edge_delay(f, s)
    span = f[-1] - f[0]

    def circle_rms(tau):
        return _fit_circle(s * np.exp(2j * np.pi * (f - f_ref) * tau))[2]

    width = 0.5 / span
    res = optimize.minimize_scalar(circle_rms, bounds=(tau0 - width, tau0 + width), method="bounded",
                                   options={"xatol": 1e-6 / span})
    tau = float(res.x) if res.fun <= circle_rms(tau0) else tau0
    z = s * np.exp(2j * np.pi * (f - f_ref) * tau)
    center, radius, _ = _fit_circle(z)

    mag = np.abs(z - np.median(np.concatenate([z[:3], z[-3:]])))
    k0 = int(np.argmax(mag))
    f_guess = float(f[k0])
    half = mag[k0] / 2.0
    above = np.flatnonzero(mag >= half)
    fwhm = max(float(f[above[-1]] - f[above[0]]), 2.0 * float(np.median(np.diff(f))))
    ql_guess = f_guess / fwhm

    angles = np.unwrap(np.angle(z - center))
    beta, ql, f0 = _phase_fit(f, angles, f_guess, ql_guess)
    ql = abs(ql)
    off = center - radius * np.exp(1j * beta)  # off-resonant point on the circle
    amplitude = abs(off)
    theta = math.atan2(off.imag, off.real)
    phi0 = wrap_phase(beta - math.pi - theta)
    ratio = min(radius / amplitude, 0.999)  # Q_l / Q_e
    q_e = ql / ratio
    q_i = 1.0 / max(1.0 / ql - 1.0 / q_e, 1e-12 / ql)
    phase_offset = wrap_phase(theta + 2.0 * math.pi * f_ref * tau)
    return ResonanceModel(float(f0), float(q_i), float(q_e), phi0, float(amplitude), tau, phase_offset)


# --- least squares ------------------------------------------------------------

def _pack(model: ResonanceModel, f_ref: float) -> np.ndarray:
    theta_ref = model.phase_offset - 2.0 * math.pi * f_ref * model.delay
    return np.array([(model.f0 - f_ref) / f_ref, model.q_internal, model.q_external, model.phi0,
                     model.amplitude, theta_ref, model.delay])


def _unpack(x: np.ndarray, f_ref: float) -> ResonanceModel:
    u, qi, qe, phi0, amp, theta_ref, tau = (float(v) for v in x)
    return ResonanceModel(
        f0=f_ref * (1.0 + u),
        q_internal=abs(qi),
        q_external=abs(qe),
        phi0=wrap_phase(phi0),
        amplitude=abs(amp),
        delay=tau,
        phase_offset=wrap_phase(theta_ref + 2.0 * math.pi * f_ref * tau),
    )


def _model_packed(x, f, f_ref):
    u, qi, qe, phi0, amp, theta_ref, tau = x
    f0 = f_ref * (1.0 + u)
    bare = resonance_term(f, f0, qi, qe, phi0)
    return amp * np.exp(1j * (theta_ref - 2.0 * np.pi * (f - f_ref) * tau)) * bare


def _jacobian_packed(x, f, f_ref):
    """Analytic d(model)/d(packed parameters), shape (len(f), 7)."""
    u, qi, qe, phi0, amp, theta_ref, tau = x
    f0 = f_ref * (1.0 + u)
    detune = (f - f0) / f0
    k = 2.0 * qi / qe
    d = (qe + qi) / qe + 2j * qi * detune
    rot = np.exp(1j * phi0)
    g = k * rot / d
    phase = np.exp(1j * (theta_ref - 2.0 * np.pi * (f - f_ref) * tau))
    s = amp * phase * (1.0 - g)
    front = -amp * phase
    dd_du = 2j * qi * (-f * f_ref / f0 ** 2)
    dg_du = -k * rot * dd_du / d ** 2
    dg_dqi = rot * ((2.0 / qe) * d - k * (1.0 / qe + 2j * detune)) / d ** 2
    dg_dqe = rot * ((-2.0 * qi / qe ** 2) * d - k * (-qi / qe ** 2)) / d ** 2
    return np.column_stack([
        front * dg_du,
        front * dg_dqi,
        front * dg_dqe,
        front * 1j * g,
        phase * (1.0 - g),
        1j * s,
        -2j * np.pi * (f - f_ref) * s,
    ])


def fit_trace(trace: S11Trace, init: ResonanceModel | None = None, max_nfev: int = 2000,
              allow_partial: bool = False) -> tuple[ResonanceModel, FitReport]:
    """Least-squares fit of all seven model parameters to a measured trace.

    The metric is the unweighted sum of ``|S11_data - S11_model|^2``.
    Raises :class:`NoResonanceError` for traces without a resolvable dip and
    :class:`FitError` (carrying the best parameters) on non-convergence.
    """
    f, s = trace.frequencies, trace.s11
    f_ref = float(np.mean(f))
    noise = _noise_estimate(s)
    edge = np.concatenate([s[: max(3, f.size // 20)], s[-max(3, f.size // 20):]])
    baseline = np.polyfit(np.r_[f[: max(3, f.size // 20)], f[-max(3, f.size // 20):]] - f_ref, edge, 1)
    depth = float(np.max(np.abs(s - np.polyval(baseline, f - f_ref))))
    if depth <= 5.0 * noise or depth <= 1e-12 * float(np.max(np.abs(s))):
        raise NoResonanceError(f"no resonance: dip depth {depth:.3g} vs noise {noise:.3g}")

    if init is None:
        try:
            init = initial_guess(trace)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise FitError(f"initial estimate failed: {exc}") from exc
    partial = (f[-1] - f[0]) < 3.0 * init.f0 / init.q_loaded
    if partial and not allow_partial:
        log.info("trace %r spans fewer than 3 linewidths", trace.label)

    x0 = _pack(init, f_ref)
    scale = np.array([1.0 / init.q_loaded, init.q_internal, init.q_external, 1.0,
                      init.amplitude, 1.0, 1.0 / (2.0 * math.pi * (f[-1] - f[0]))])

    def resid(x):
        d = _model_packed(x, f, f_ref) - s
        return np.concatenate([d.real, d.imag])

    def jac(x):
        j = _jacobian_packed(x, f, f_ref)
        return np.vstack([j.real, j.imag])

    sol = optimize.least_squares(resid, x0, jac=jac, x_scale=scale, method="lm", xtol=1e-15,
                                 ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
    best = _unpack(sol.x, f_ref)
    if sol.status <= 0:
        raise FitError(f"fit did not converge: {sol.message}", best=best)

    dof = max(2 * f.size - len(x0), 1)
    sigma2 = float(np.sum(sol.fun ** 2)) / dof
    stderr = dict.fromkeys(PARAMS, float("nan"))
    try:
        cov = np.linalg.inv(sol.jac.T @ sol.jac) * sigma2
        sd = np.sqrt(np.abs(np.diag(cov)))
        stderr.update(f0=f_ref * sd[0], q_internal=sd[1], q_external=sd[2], phi0=sd[3],
                      amplitude=sd[4], delay=sd[6],
                      phase_offset=math.sqrt(abs(cov[5, 5] + (2 * math.pi * f_ref) ** 2 * cov[6, 6]
                                                 + 4 * math.pi * f_ref * cov[5, 6])))
    except np.linalg.LinAlgError:
        pass
    report = FitReport(
        residual_norm=float(np.linalg.norm(sol.fun)),
        stderr={k: float(v) for k, v in stderr.items()},
        iterations=int(sol.nfev),
        noise_estimate=noise,
        dip_depth=depth,
        partial=bool(partial),
        message=str(sol.message),
    )
    return best, report


# --- batches ------------------------------------------------------------------

@dataclass
class BatchRow:
    metadata: dict
    model: ResonanceModel | None = None
    report: FitReport | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "model": None if self.model is None else self.model.to_dict(),
            "report": None if self.report is None else self.report.to_dict(),
            "error": self.error,
        }


def _sort_key(meta: dict, keys: Sequence[str]):
    out = []
    for k in keys:
        v = meta.get(k)
        # None sorts last; numbers before strings within a key.
        out.append((v is None, 0 if isinstance(v, (int, float)) else 1, v if v is not None else 0))
    return out


def batch_fit(traces: Sequence[S11Trace], workers: int = 1,
              order_by: Sequence[str] = ("temperature_k", "power_dbm", "label")) -> list[BatchRow]:
    """Fit every trace; failures become error rows and the batch continues."""
    if not traces:
        raise ValueError("batch_fit needs at least one trace")

    def one(trace):
        try:
            model, report = fit_trace(trace)
            return BatchRow(trace.metadata, model, report)
        except (FitError, ValueError) as exc:
            return BatchRow(trace.metadata, error=f"{type(exc).__name__}: {exc}")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, traces))
    else:
        rows = [one(t) for t in traces]
    return sorted(rows, key=lambda r: _sort_key(r.metadata, order_by))


def synthetic_trace(model: ResonanceModel, n_points: int = 401, span_linewidths: float = 10.0,
                    snr_db: float | None = None, rng: np.random.Generator | None = None,
                    **metadata) -> S11Trace:
    """Sample the model over ``span_linewidths`` loaded linewidths, optionally with complex noise.

    ``snr_db`` is ``20 log10(amplitude / sigma)`` with ``sigma`` the rms of the complex noise.
    """
    width = model.f0 / model.q_loaded
    f = model.f0 + width * span_linewidths * np.linspace(-0.5, 0.5, n_points)
    s = np.asarray(model_s11(model, f), dtype=complex)
    if snr_db is not None:
        rng = rng if rng is not None else np.random.default_rng(0)
        sigma = model.amplitude * 10.0 ** (-snr_db / 20.0)
        s = s + sigma / math.sqrt(2.0) * (rng.standard_normal(n_points) + 1j * rng.standard_normal(n_points))
    return S11Trace(f, s, **metadata)
