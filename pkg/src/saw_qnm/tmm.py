"""Half-cell transfer matrices and the QNM characteristic function.

Amplitudes are pairs ``(b, c)``: ``b`` travels left, ``c`` travels right,
with time dependence ``exp(-i w t)``, so inside a segment of index ``n``

    A(x) = b * exp(-i n w (x - x_m) / v0) + c * exp(+i n w (x - x_m) / v0)

where ``x_m`` is the segment midpoint (the node).  A half-step matrix maps
the amplitudes at the node of one segment onto the node of its left
neighbour; chaining them from node 0 to node ``2N`` gives the matrix ``T``
with ``(b_0, c_0) = T (b_2N, c_2N)``.  Outgoing boundary conditions
``c_0 = 0`` and ``b_2N = 0`` leave ``T[1, 1] = 0`` as the mode condition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .structure import Segment, StructureSpec

OVERFLOW_BOUND = 1e100
_GUARD_EVERY = 8


@dataclass(frozen=True)
class TransferMatrix:
    """2x2 complex matrix; the represented value is ``entries * exp(log_scale)``."""

    m11: complex
    m12: complex
    m21: complex
    m22: complex
    log_scale: float = 0.0

    def det(self) -> complex:
        return (self.m11 * self.m22 - self.m12 * self.m21) * math.exp(2.0 * self.log_scale)

    def as_array(self) -> np.ndarray:
        s = math.exp(self.log_scale)
        return np.array([[self.m11, self.m12], [self.m21, self.m22]], dtype=complex) * s

    def scale(self) -> float:
        """Largest entry magnitude (including the log factor)."""
        return max(abs(self.m11), abs(self.m12), abs(self.m21), abs(self.m22)) * math.exp(self.log_scale)

    def __matmul__(self, other: "TransferMatrix") -> "TransferMatrix":
        a, b = self, other
        return TransferMatrix(
            a.m11 * b.m11 + a.m12 * b.m21,
            a.m11 * b.m12 + a.m12 * b.m22,
            a.m21 * b.m11 + a.m22 * b.m21,
            a.m21 * b.m12 + a.m22 * b.m22,
            a.log_scale + b.log_scale,
        )


def interface_coefficients(n_from: float, n_to: float) -> tuple[float, float]:
    """Diagnostic (r, t) of a step between indices: r = (n2 - n1)/(n2 + n1), t = sqrt(4 n1 n2)/(n1 + n2)."""
    r = (n_to - n_from) / (n_to + n_from)
    t = math.sqrt(4.0 * n_from * n_to) / (n_from + n_to)
    return r, t


def _phase(segment_length, index, omega, v0):
    return np.exp(1j * (0.5 * segment_length) * index * omega / v0)


def _step_entries(omega, len_from, n_from, len_to, n_to, v0):
    e_from = _phase(len_from, n_from, omega, v0)
    e_to = _phase(len_to, n_to, omega, v0)
    same = (n_to + n_from) / (2.0 * n_to)
    cross = (n_to - n_from) / (2.0 * n_to)
    return (
        e_to * e_from * same,
        e_to / e_from * cross,
        e_from / e_to * cross,
        same / (e_to * e_from),
    )


def half_step_matrix(omega: complex, from_segment: Segment, to_segment: Segment, v0: float) -> TransferMatrix:
    """Map node amplitudes from the middle of ``from_segment`` to the middle of ``to_segment``.

    Half of each segment is traversed: ``E = exp(i * (length / 2) * n * omega / v0)``.
    The determinant is ``n_from / n_to``.
    """
    entries = _step_entries(complex(omega), from_segment.length, from_segment.index,
                            to_segment.length, to_segment.index, v0)
    return TransferMatrix(*(complex(e) for e in entries))


def _segment_arrays(spec: StructureSpec) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([s.length for s in spec.segments], dtype=float)
    indices = np.array([s.index for s in spec.segments], dtype=float)
    return lengths, indices


def chain(spec: StructureSpec, omega, overflow_bound: float = OVERFLOW_BOUND):
    """Vectorized ordered product over an array of frequencies.

    Returns ``(m11, m12, m21, m22, log_scale)`` arrays shaped like ``omega``.
    Every few steps, entries above ``overflow_bound`` are divided out into
    ``log_scale``; the product itself stays strictly left to right.
    """
    w = np.asarray(omega, dtype=complex)
    shape = w.shape
    w = w.ravel()
    t11 = np.ones_like(w)
    t12 = np.zeros_like(w)
    t21 = np.zeros_like(w)
    t22 = np.ones_like(w)
    log_scale = np.zeros(w.shape, dtype=float)
    segs = spec.segments
    cache: dict[tuple, tuple] = {}
    for j in range(len(segs) - 1):
        # Node j+1 -> node j; consecutive products build T = M(0<-1) M(1<-2) ...
        src, dst = segs[j + 1], segs[j]
        key = (src.length, src.index, dst.length, dst.index)
        m = cache.get(key)
        if m is None:
            m = _step_entries(w, src.length, src.index, dst.length, dst.index, spec.v0)
            cache[key] = m
        a11, a12, a21, a22 = m
        t11, t12, t21, t22 = (
            t11 * a11 + t12 * a21,
            t11 * a12 + t12 * a22,
            t21 * a11 + t22 * a21,
            t21 * a12 + t22 * a22,
        )
        if j % _GUARD_EVERY == _GUARD_EVERY - 1:
            big = np.maximum(np.maximum(np.abs(t11), np.abs(t12)), np.maximum(np.abs(t21), np.abs(t22)))
            hot = big > overflow_bound
            if np.any(hot):
                s = big[hot]
                t11[hot] /= s
                t12[hot] /= s
                t21[hot] /= s
                t22[hot] /= s
                log_scale[hot] += np.log(s)
    return tuple(x.reshape(shape) for x in (t11, t12, t21, t22, log_scale))


def total_matrix(spec: StructureSpec, omega: complex, overflow_bound: float = OVERFLOW_BOUND) -> TransferMatrix:
    """Ordered product of all half-step matrices from node 0 to node 2N."""
    m11, m12, m21, m22, log_scale = chain(spec, np.array([omega], dtype=complex), overflow_bound)
    return TransferMatrix(complex(m11[0]), complex(m12[0]), complex(m21[0]), complex(m22[0]), float(log_scale[0]))


def characteristic(spec: StructureSpec, omega: complex, overflow_bound: float = OVERFLOW_BOUND) -> complex:
    """``T[1, 1]`` at ``omega``; its zeros with ``Im(omega) < 0`` are the QNM frequencies."""
    t = total_matrix(spec, omega, overflow_bound)
    return t.m22 * math.exp(t.log_scale)


def characteristic_scaled(spec: StructureSpec, omega, overflow_bound: float = OVERFLOW_BOUND):
    """Vectorized ``(mantissa, log_scale, relative)`` of the characteristic.

    ``relative`` is ``|T22| / max|T_ij|`` and does not depend on the scale.
    """
    m11, m12, m21, m22, log_scale = chain(spec, omega, overflow_bound)
    big = np.maximum(np.maximum(np.abs(m11), np.abs(m12)), np.maximum(np.abs(m21), np.abs(m22)))
    return m22, log_scale, np.abs(m22) / big


def characteristic_many(spec: StructureSpec, omega, overflow_bound: float = OVERFLOW_BOUND) -> np.ndarray:
    m22, log_scale, _ = characteristic_scaled(spec, omega, overflow_bound)
    return m22 * np.exp(log_scale)
