"""Quasinormal-mode search, field reconstruction and normalization."""
from __future__ import annotations

import cmath
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .structure import StructureSpec
from .tmm import OVERFLOW_BOUND, chain, characteristic_scaled

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


class ModeError(RuntimeError):
    pass


class NotAModeError(ModeError):
    """Raised when a frequency does not satisfy the outgoing boundary conditions."""

    def __init__(self, residual: float, bound: float):
        self.residual = residual
        self.bound = bound
        super().__init__(f"not a quasinormal mode: terminal residual {residual:.3e} exceeds {bound:.1e}")


class DegenerateNormError(ModeError):
    """Mode norm vanishes (exceptional point); no normalization is attempted."""


@dataclass(frozen=True)
class NodeAmplitudes:
    """Left-going ``b`` and right-going ``c`` amplitudes at every segment midpoint."""

    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        b = np.array(self.b, dtype=complex)
        c = np.array(self.c, dtype=complex)
        if b.shape != c.shape or b.ndim != 1:
            raise ValueError("b and c must be 1-D arrays of equal length")
        b.flags.writeable = False
        c.flags.writeable = False
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    def __mul__(self, s: complex) -> "NodeAmplitudes":
        return NodeAmplitudes(self.b * s, self.c * s)

    __rmul__ = __mul__

    @property
    def total(self) -> np.ndarray:
        """Field value ``b + c`` at each node."""
        return self.b + self.c


@dataclass(frozen=True)
class QnmMode:
    omega: complex
    nodes: NodeAmplitudes
    norm: complex = complex("nan")
    residual: float = 0.0
    index_pair: tuple[int, int] = (0, 0)

    @property
    def frequency_hz(self) -> float:
        return self.omega.real / TWO_PI

    @property
    def q_radiation(self) -> float:
        return q_from_omega(self.omega)


def q_from_omega(omega: complex) -> float:
    """Radiation Q = Re(w) / (-2 Im(w))."""
    return omega.real / (-2.0 * omega.imag)


class ModeList(list):
    """List of modes sorted by frequency, with search diagnostics attached."""

    def __init__(self, modes=(), diagnostics: dict | None = None):
        super().__init__(modes)
        self.diagnostics = dict(diagnostics or {})

    def best(self) -> QnmMode | None:
        """Highest radiation-Q mode (the fundamental), or None."""
        return max(self, key=lambda m: m.q_radiation, default=None)


@dataclass(frozen=True)
class SearchOptions:
    grid_points: float = 8.0  # per free spectral range
    refine_tol: float = 1e-10
    max_q_search: float = 1e7
    max_iter: int = 100
    normalize: bool = True
    cross_check: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.grid_points < 2:
            raise ValueError("grid_points must be >= 2 per free spectral range")
        if not 0 < self.refine_tol < 1:
            raise ValueError("refine_tol must lie in (0, 1)")
        if self.max_q_search <= 0:
            raise ValueError("max_q_search must be positive")


def free_spectral_range(spec: StructureSpec) -> float:
    return spec.v0 / (2.0 * spec.optical_length)


def default_band(spec: StructureSpec, center_strip_period: float | None = None) -> tuple[float, float]:
    """+-10 % around ``v0 / (2 * pitch)`` for the strip pitch at the structure center."""
    if center_strip_period is None:
        _, _, _, mids = _segment_geometry(spec)
        strips = [k for k, s in enumerate(spec.segments) if s.kind == "strip"]
        if len(strips) < 2:
            raise ValueError("cannot infer a strip pitch; pass a band explicitly")
        spacing = np.diff(mids[strips])
        center_strip_period = spacing[len(spacing) // 2]
        # An empty cavity puts its long gap at the center.
        if center_strip_period > 1.5 * np.median(spacing):
            center_strip_period = float(np.median(spacing))
    f_bragg = spec.v0 / (2.0 * center_strip_period)
    return 0.9 * f_bragg, 1.1 * f_bragg


# --- root search ------------------------------------------------------------

def _evaluate(spec, omega, workers):
    if workers <= 1 or omega.size < 256:
        return characteristic_scaled(spec, omega)
    parts = np.array_split(omega, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        out = list(pool.map(lambda w: characteristic_scaled(spec, w), parts))
    return tuple(np.concatenate([o[i] for o in out]) for i in range(3))


def _secant(spec, seeds, step, opts: SearchOptions):
    """Vectorized complex secant iteration from every seed at once.

    Returns (roots, relative residuals, converged mask).
    """
    z0 = seeds.copy()
    z1 = seeds + step
    m0, l0, _ = characteristic_scaled(spec, z0)
    m1, l1, _ = characteristic_scaled(spec, z1)
    log_ref = l0.copy()
    f0 = m0 * np.exp(l0 - log_ref)
    f1 = m1 * np.exp(l1 - log_ref)
    active = np.ones(seeds.shape, dtype=bool)
    converged = np.zeros(seeds.shape, dtype=bool)
    stop = max(1e-3 * opts.refine_tol, 1e-15)
    span = np.abs(step) * 1e4
    for _ in range(opts.max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        denom = f1[idx] - f0[idx]
        bad = denom == 0
        dz = np.zeros(idx.shape, dtype=complex)
        ok = ~bad
        dz[ok] = -f1[idx][ok] * (z1[idx][ok] - z0[idx][ok]) / denom[ok]
        # Exact zero or flat secant: stop here and let the residual decide.
        flat = idx[bad]
        converged[flat] = f1[flat] == 0
        active[flat] = False
        idx, dz = idx[ok], dz[ok]
        z_new = z1[idx] + dz
        wander = (np.abs(z_new - seeds[idx]) > span[idx]) | ~np.isfinite(z_new)
        active[idx[wander]] = False
        idx, dz, z_new = idx[~wander], dz[~wander], z_new[~wander]
        if idx.size == 0:
            continue
        m, l, _ = characteristic_scaled(spec, z_new)
        z0[idx], f0[idx] = z1[idx], f1[idx]
        z1[idx], f1[idx] = z_new, m * np.exp(l - log_ref[idx])
        done = np.abs(dz) <= stop * np.abs(z_new)
        converged[idx[done]] = True
        active[idx[done]] = False
    # Last step size must at least reach the requested tolerance.
    _, _, rel = characteristic_scaled(spec, z1)
    last = np.abs(z1 - z0) <= opts.refine_tol * np.abs(z1)
    converged |= last & ~active
    return z1, rel, converged


def _polish(spec, roots, reach: int = 3):
    """Pick the lowest-residual point among the floating-point neighbours of each root.

    For high-Q roots one ulp of omega already moves ``|T22| / |T|`` by about
    ``Q * eps``, so the last secant iterate is not always the best one.
    """
    if roots.size == 0:
        return roots, np.zeros(0)
    k = np.arange(-reach, reach + 1)
    offsets = (k[:, None] + 1j * k[None, :]).ravel()
    ulp = np.spacing(np.abs(roots))
    trial = roots[:, None] + offsets[None, :] * ulp[:, None]
    _, _, rel = characteristic_scaled(spec, trial)
    pick = np.argmin(rel, axis=1)
    rows = np.arange(roots.size)
    return trial[rows, pick], rel[rows, pick]


def _rounding_floor(spec, roots):
    """Residual reachable at one-ulp resolution: eps * |w| * |dT22/dw| / |T|."""
    if roots.size == 0:
        return np.zeros(0)
    h = roots * 1e-9
    m0, l0, _ = characteristic_scaled(spec, roots)
    m1, l1, _ = characteristic_scaled(spec, roots + h)
    big = np.max(np.abs(np.stack(chain(spec, roots)[:4])), axis=0)
    slope = np.abs(m1 * np.exp(l1 - l0) - m0) / np.abs(h) * np.abs(roots) / big
    return 16.0 * np.finfo(float).eps * slope


def acoustic_fundamental(modes, f_split: float) -> QnmMode | None:
    """Highest-Q mode below ``f_split`` (the acoustic branch of the central crystal)."""
    below = [m for m in modes if m.frequency_hz < f_split]
    return max(below, key=lambda m: m.q_radiation, default=None)


def find_modes(spec: StructureSpec, band: tuple[float, float] | None = None,
               options: SearchOptions | None = None, **kwargs) -> ModeList:
    """All QNMs with ``Re(w) / 2 pi`` inside ``band`` (Hz), sorted by frequency.

    Seeds are the local minima of ``|T22|`` on a real-frequency grid shifted
    by ``-Re(w) / (2 max_q_search)`` into the lower half plane; every seed is
    polished with a complex secant iteration.  Seeds that do not converge are
    dropped and counted in ``diagnostics['dropped']``.
    """
    opts = options or SearchOptions(**kwargs)
    if band is None:
        band = default_band(spec)
    f_lo, f_hi = float(band[0]), float(band[1])
    diagnostics = {"seeds": 0, "dropped": 0, "duplicates": 0, "out_of_band": 0}
    if not (f_lo > 0 and f_hi > f_lo):
        return ModeList([], diagnostics)

    fsr = free_spectral_range(spec)
    n_points = int(math.ceil((f_hi - f_lo) / fsr * opts.grid_points)) + 1
    n_points = max(n_points, 16)
    df = (f_hi - f_lo) / (n_points - 1)
    # One extra point on each side so minima at the band edges are seen.
    freqs = f_lo + df * np.arange(-1, n_points + 1)
    freqs = freqs[freqs > 0]
    grid = TWO_PI * freqs * (1.0 - 0.5j / opts.max_q_search)
    _, _, rel = _evaluate(spec, grid, opts.workers)
    interior = np.flatnonzero((rel[1:-1] < rel[:-2]) & (rel[1:-1] <= rel[2:])) + 1
    diagnostics["seeds"] = int(interior.size)
    diagnostics["grid_points"] = int(grid.size)
    if interior.size == 0:
        return ModeList([], diagnostics)

    seeds = grid[interior]
    step = np.full(seeds.shape, 1e-3 * TWO_PI * df, dtype=complex)
    roots, residual, converged = _secant(spec, seeds, step, opts)
    ok = converged & (roots.imag < 0)
    roots[ok], residual[ok] = _polish(spec, roots[ok])
    accepted = ok & ((residual < opts.refine_tol) | (residual < _rounding_floor(spec, roots)))
    diagnostics["dropped"] = int((~accepted).sum())

    found = []
    for z, r in sorted(zip(roots[accepted], residual[accepted]), key=lambda p: p[0].real):
        f = z.real / TWO_PI
        if not f_lo <= f <= f_hi:
            diagnostics["out_of_band"] += 1
            continue
        if found and abs(z - found[-1][0]) <= 10 * opts.refine_tol * abs(z):
            diagnostics["duplicates"] += 1
            if r < found[-1][1]:
                found[-1] = (complex(z), float(r))
            continue
        found.append((complex(z), float(r)))

    if opts.cross_check:
        q_floor = min((q_from_omega(z) for z, _ in found), default=opts.max_q_search)
        diagnostics["zero_count"] = count_zeros(spec, (f_lo, f_hi), q_min=0.5 * q_floor)

    if not found:
        return ModeList([], diagnostics)

    omegas = np.array([z for z, _ in found])
    node_b, node_c = _propagate(spec, omegas)
    by_q = sorted(range(len(found)), key=lambda k: -q_from_omega(found[k][0]))
    rank = {k: i for i, k in enumerate(by_q)}
    modes = []
    for k, (z, r) in enumerate(found):
        mode = QnmMode(z, NodeAmplitudes(node_b[k], node_c[k]), residual=r, index_pair=(rank[k], 0))
        mode = replace(mode, norm=mode_norm(spec, z, mode.nodes))
        if opts.normalize:
            try:
                mode = normalize_mode(spec, mode)
            except DegenerateNormError:
                log.warning("mode at %.6g Hz has a vanishing norm; left unnormalized", z.real / TWO_PI)
        modes.append(mode)
    return ModeList(modes, diagnostics)


def count_zeros(spec: StructureSpec, band: tuple[float, float], q_min: float = 100.0,
                points_per_fsr: int = 64, max_points: int = 2_000_000) -> int:
    """Argument-principle count of characteristic zeros in a band rectangle.

    The rectangle spans the band in ``Re(w)`` and ``Im(w)`` from 0 down to
    ``-2 pi f_hi / (2 q_min)``.  Edges are resampled until no phase step
    exceeds a quarter turn.
    """
    w_lo, w_hi = TWO_PI * band[0], TWO_PI * band[1]
    depth = w_hi / (2.0 * q_min)
    corners = [complex(w_lo, 0), complex(w_lo, -depth), complex(w_hi, -depth), complex(w_hi, 0)]
    fsr_w = TWO_PI * free_spectral_range(spec)
    total = 0.0
    for a, b in zip(corners, corners[1:] + corners[:1]):
        n = max(int(abs(b - a) / fsr_w * points_per_fsr), 64)
        while True:
            t = np.linspace(0.0, 1.0, n + 1)
            m22, _, _ = characteristic_scaled(spec, a + (b - a) * t)
            steps = np.angle(m22[1:] / m22[:-1])
            if np.max(np.abs(steps)) < math.pi / 2 or n >= max_points:
                break
            n *= 4
        total += float(np.sum(steps))
    return int(round(total / TWO_PI))


# --- node amplitudes --------------------------------------------------------

def _propagate(spec: StructureSpec, omegas: np.ndarray):
    """Rightward propagation from ``(b, c) = (1, 0)`` at node 0 for each omega."""
    segs = spec.segments
    w = np.asarray(omegas, dtype=complex)
    b = np.empty((w.size, len(segs)), dtype=complex)
    c = np.empty_like(b)
    b[:, 0] = 1.0
    c[:, 0] = 0.0
    v0 = spec.v0
    for j in range(len(segs) - 1):
        left, right = segs[j], segs[j + 1]
        e_l = np.exp(1j * 0.5 * left.length * left.index * w / v0)
        e_r = np.exp(1j * 0.5 * right.length * right.index * w / v0)
        # Inverse of the leftward step node j+1 -> node j.
        same = (right.index + left.index) / (2.0 * right.index)
        cross = (right.index - left.index) / (2.0 * right.index)
        bj, cj = b[:, j], c[:, j]
        b[:, j + 1] = same * bj / (e_l * e_r) + cross * cj * e_l / e_r
        c[:, j + 1] = cross * bj * e_r / e_l + same * cj * e_l * e_r
    return b, c


def reconstruct_nodes(spec: StructureSpec, omega: complex, refine_tol: float = 1e-10) -> NodeAmplitudes:
    """Node amplitudes for a converged root, starting from ``b_0 = 1, c_0 = 0``.

    Raises :class:`NotAModeError` when the incoming wave at the right end does
    not vanish relative to the field scale.
    """
    b, c = _propagate(spec, np.array([omega]))
    nodes = NodeAmplitudes(b[0], c[0])
    scale = np.max(np.abs(nodes.b) + np.abs(nodes.c))
    residual = abs(nodes.b[-1]) / scale
    bound = 10.0 * refine_tol
    if not residual < bound:
        raise NotAModeError(residual, bound)
    return nodes


def _segment_geometry(spec: StructureSpec):
    lengths = np.array([s.length for s in spec.segments])
    indices = np.array([s.index for s in spec.segments])
    edges = np.concatenate([[0.0], np.cumsum(lengths)])
    mids = 0.5 * (edges[:-1] + edges[1:])
    return lengths, indices, edges, mids


def mode_norm(spec: StructureSpec, omega: complex, nodes: NodeAmplitudes) -> complex:
    """``2 w Int A^2 / v(x)^2 dx + (i / v0) (A(0)^2 + A(d)^2)``, integrated exactly per segment."""
    lengths, indices, _, _ = _segment_geometry(spec)
    v0 = spec.v0
    kappa = indices * omega / v0
    half = 0.5 * lengths
    b, c = nodes.b, nodes.c
    # Int_{-s}^{s} A^2 du = (b^2 + c^2) sin(2 k s) / k + 4 b c s
    osc = np.where(kappa != 0, np.sin(2.0 * kappa * half) / np.where(kappa != 0, kappa, 1.0), 2.0 * half)
    integral = (b * b + c * c) * osc + 4.0 * b * c * half
    bulk = 2.0 * omega * np.sum(indices ** 2 / v0 ** 2 * integral)
    a_left = b[0] * cmath.exp(1j * kappa[0] * half[0]) + c[0] * cmath.exp(-1j * kappa[0] * half[0])
    a_right = b[-1] * cmath.exp(-1j * kappa[-1] * half[-1]) + c[-1] * cmath.exp(1j * kappa[-1] * half[-1])
    return complex(bulk + 1j / v0 * (a_left ** 2 + a_right ** 2))


def field_at(spec: StructureSpec, omega: complex, nodes: NodeAmplitudes, x) -> np.ndarray:
    """Two-wave field ``A(x)`` for positions inside ``[0, d]``."""
    lengths, indices, edges, mids = _segment_geometry(spec)
    x = np.asarray(x, dtype=float)
    seg = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, len(lengths) - 1)
    kappa = indices[seg] * omega / spec.v0
    u = x - mids[seg]
    return nodes.b[seg] * np.exp(-1j * kappa * u) + nodes.c[seg] * np.exp(1j * kappa * u)


def _canonical_reference(spec: StructureSpec, omega: complex, nodes: NodeAmplitudes) -> complex:
    mid_value = complex(field_at(spec, omega, nodes, [0.5 * spec.length])[0])
    peak = np.max(np.abs(nodes.total))
    if abs(mid_value) > 1e-6 * peak:
        return mid_value
    # Odd modes vanish at the midpoint: use the leftmost near-maximal node instead.
    mags = np.abs(nodes.total)
    k = int(np.flatnonzero(mags >= (1 - 1e-9) * peak)[0])
    return complex(nodes.total[k])


def normalize_mode(spec: StructureSpec, mode: QnmMode) -> QnmMode:
    """Scale the amplitudes so the mode norm equals 1.

    The square-root branch is chosen so the field at the structure midpoint
    has argument in (-pi/2, pi/2].  The returned mode keeps the norm of the
    amplitudes it was given in ``norm``.
    """
    norm = mode_norm(spec, mode.omega, mode.nodes)
    amp2 = float(np.max(np.abs(mode.nodes.b) + np.abs(mode.nodes.c))) ** 2
    if not abs(norm) > 1e-30 * amp2:
        raise DegenerateNormError(f"|norm| = {abs(norm):.3e} at omega = {mode.omega:.6g}")
    nodes = mode.nodes * (1.0 / cmath.sqrt(norm))
    ref = _canonical_reference(spec, mode.omega, nodes)
    phase = cmath.phase(ref)
    if not -math.pi / 2 < phase <= math.pi / 2:
        nodes = nodes * -1.0
    return replace(mode, nodes=nodes, norm=norm)


def sample_field(spec: StructureSpec, mode: QnmMode, samples_per_segment: int = 8):
    """``(x, A)`` arrays on a uniform sub-grid of every segment, closing at ``x = d``."""
    if int(samples_per_segment) != samples_per_segment or samples_per_segment < 1:
        raise ValueError("samples_per_segment must be a positive integer")
    lengths, _, edges, _ = _segment_geometry(spec)
    frac = np.arange(samples_per_segment) / samples_per_segment
    x = (edges[:-1, None] + lengths[:, None] * frac[None, :]).ravel()
    x = np.append(x, edges[-1])
    return x, field_at(spec, mode.omega, mode.nodes, x)


def end_to_peak_ratio(spec: StructureSpec, mode: QnmMode, samples_per_segment: int = 8) -> float:
    """Larger of ``|A(0)|``, ``|A(d)|`` divided by the peak ``|A|``."""
    _, a = sample_field(spec, mode, samples_per_segment)
    mag = np.abs(a)
    return float(max(mag[0], mag[-1]) / mag.max())


def mode_at(spec: StructureSpec, omega: complex, refine_tol: float = 1e-10, normalize: bool = True) -> QnmMode:
    """Build a mode object for a known root."""
    nodes = reconstruct_nodes(spec, omega, refine_tol)
    _, _, rel = characteristic_scaled(spec, np.array([omega]))
    mode = QnmMode(complex(omega), nodes, norm=mode_norm(spec, omega, nodes), residual=float(rel[0]))
    return normalize_mode(spec, mode) if normalize else mode
