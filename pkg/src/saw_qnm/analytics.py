"""Closed-form loss budget for SAW resonators and phononic crystals.

Every Q contribution may be ``math.inf``; an infinite channel drops out of
the harmonic combination.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

INF = math.inf


class AnalyticsError(ValueError):
    pass


@dataclass(frozen=True)
class ResonatorGeometry:
    """Inputs of the analytic Q estimates (SI units)."""

    d_mirror_gap: float = 0.0
    wavelength0: float = 0.96e-6
    r_s: float = 0.015
    n_g: int = 0
    aperture_w: float = 100 * 0.96e-6
    gamma: float = 0.378
    f0: float = 3.1e9
    v: float = 3158.0
    mean_free_path: float = 3.24e-2

    def __post_init__(self):
        for name in ("wavelength0", "aperture_w", "v"):
            if not getattr(self, name) > 0:
                raise AnalyticsError(f"{name} must be positive")
        for name in ("d_mirror_gap", "mean_free_path", "f0"):
            if getattr(self, name) < 0:
                raise AnalyticsError(f"{name} must be non-negative")
        if self.n_g < 0:
            raise AnalyticsError("n_g must be non-negative")


@dataclass(frozen=True)
class GratingQ:
    value: float
    no_mirror_reflectivity: bool = False

    def __float__(self):
        return self.value


def _one_minus_tanh(x: float) -> float:
    # 1 - tanh(x) = 2 / (exp(2x) + 1), without cancellation for large x.
    if x > 354:
        return 0.0
    return 2.0 / (math.exp(2.0 * x) + 1.0)


def q_grating(geom: ResonatorGeometry) -> GratingQ:
    """Mirror-transmission limit ``pi L_c / (lambda0 (1 - tanh(|r_s| N_g)))``.

    ``L_c = d + lambda0 / |2 r_s|``.  Without reflectivity (r_s = 0) the
    result is infinite and flagged.
    """
    if geom.r_s == 0:
        return GratingQ(INF, no_mirror_reflectivity=True)
    l_c = geom.d_mirror_gap + geom.wavelength0 / abs(2.0 * geom.r_s)
    leak = _one_minus_tanh(abs(geom.r_s) * geom.n_g)
    if leak == 0.0:
        return GratingQ(INF)
    return GratingQ(math.pi * l_c / (geom.wavelength0 * leak))


def q_diffraction(geom: ResonatorGeometry) -> float:
    """``5 pi / |1 + gamma| * (W / lambda0)^2``."""
    denom = abs(1.0 + geom.gamma)
    if denom == 0:
        raise AnalyticsError("gamma = -1 makes the diffraction estimate diverge")
    return 5.0 * math.pi / denom * (geom.aperture_w / geom.wavelength0) ** 2


def q_material(geom: ResonatorGeometry) -> float:
    """``pi f0 l / v`` from the phonon mean free path."""
    return math.pi * geom.f0 * geom.mean_free_path / geom.v


def combine(*qs: float) -> float:
    """Harmonic combination ``(sum 1/Q)^-1``; infinite inputs contribute nothing."""
    total = 0.0
    for q in qs:
        q = float(q)
        if not q > 0:
            raise AnalyticsError(f"Q contributions must be positive, got {q!r}")
        total += 0.0 if math.isinf(q) else 1.0 / q
    return INF if total == 0.0 else 1.0 / total


def combine_resonator(qg: float, qd: float, qm: float) -> float:
    return combine(qg, qd, qm)


def combine_crystal(qr: float, qm: float) -> float:
    return combine(qr, qm)


@dataclass(frozen=True)
class LossBudget:
    q_grating: float = INF
    q_diffraction: float = INF
    q_material: float = INF
    q_radiation: float = INF

    @property
    def q_total(self) -> float:
        return combine(self.q_grating, self.q_diffraction, self.q_material, self.q_radiation)

    def to_dict(self) -> dict:
        """JSON-ready mapping; infinite (absent) channels become ``None``."""
        out = asdict(self)
        out["q_total"] = self.q_total
        return {k: (None if math.isinf(v) else v) for k, v in out.items()}


def resonator_budget(geom: ResonatorGeometry) -> LossBudget:
    return LossBudget(q_grating=q_grating(geom).value, q_diffraction=q_diffraction(geom),
                      q_material=q_material(geom))


def crystal_budget(q_radiation: float, q_mat: float) -> LossBudget:
    return LossBudget(q_radiation=q_radiation, q_material=q_mat)


def transverse_mode_limit(n_eff: float, strip_period: float, aperture_w: float) -> tuple[float, int]:
    """Critical angle (degrees) and the highest diffraction-free transverse order.

    Order ``j`` is totally reflected at the lateral boundary when
    ``arctan(k_x / k_y) > alpha_c`` with ``k_x = pi / strip_period`` and
    ``k_y = pi j / W``, i.e. ``j < W / (strip_period * tan(alpha_c))``.
    """
    if not n_eff >= 1.0:
        raise AnalyticsError(f"n_eff must be >= 1, got {n_eff!r}")
    if not (strip_period > 0 and aperture_w > 0):
        raise AnalyticsError("strip_period and aperture_w must be positive")
    alpha_c = math.asin(1.0 / n_eff)
    k_x = math.pi / strip_period
    j = 0
    while True:
        k_y = math.pi * (j + 1) / aperture_w
        if math.atan2(k_x, k_y) > alpha_c:
            j += 1
        else:
            break
    return math.degrees(alpha_c), j
