"""Daubechies-7 discrete and continuous wavelet transforms for 1-D profiles.

The DWT is a Mallat filter bank with symmetric (half-point) boundary
extension, which for a 115-marker profile gives detail coefficient vectors of
length 64, 38 and 25 at levels 1-3.  The CWT correlates each profile with the
db7 wavelet function dilated to integer scales; its output keeps the length of
the input so coefficient ``i`` stays attached to marker ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from typing import Sequence

import numpy as np

DB7_ORDER = 7
MAX_CWT_SCALE = 32
_MODES = ("symmetric", "periodization")


@dataclass(frozen=True)
class FilterBank:
    lowpass_decomp: np.ndarray
    highpass_decomp: np.ndarray
    lowpass_recon: np.ndarray
    highpass_recon: np.ndarray

    @property
    def length(self) -> int:
        return len(self.lowpass_decomp)


@dataclass
class DwtDecomposition:
    """Multilevel DWT output.

    ``details[0]`` is the finest (level-1) detail vector.  ``level_lengths[j]``
    is the length of the signal that entered level ``j + 1``; the inverse
    transform trims to these lengths.
    """

    approx: np.ndarray
    details: list[np.ndarray]
    original_length: int
    level_lengths: list[int] = field(default_factory=list)
    mode: str = "symmetric"

    @property
    def levels(self) -> int:
        return len(self.details)

    def detail_lengths(self) -> list[int]:
        return [len(d) for d in self.details]


@dataclass
class CwtFeatures:
    coeffs: np.ndarray  # n_scales x n
    scales: list[int]


# ---------------------------------------------------------------------------
# filters


def daubechies_lowpass(order: int) -> np.ndarray:
    """Minimum-phase Daubechies scaling filter with ``order`` vanishing moments.

    Built by spectral factorisation of the maxflat half-band polynomial, so the
    taps are computed rather than copied from a table.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    # P(y) = sum_k C(N-1+k, k) y^k with y = sin^2(w/2)
    p = [comb(order - 1 + k, k) for k in range(order)]
    y_roots = np.roots(p[::-1]) if order > 1 else np.array([])
    z_roots = []
    for y in y_roots:
        # y = (2 - z - 1/z) / 4  ->  z^2 - (2 - 4y) z + 1 = 0
        pair = np.roots([1.0, -(2.0 - 4.0 * y), 1.0])
        z_roots.append(pair[np.argmin(np.abs(pair))])
    zeros = np.concatenate([-np.ones(order), np.asarray(z_roots, dtype=complex)])
    h = np.real(np.poly(zeros))
    h = h * (np.sqrt(2.0) / h.sum())
    return h


def db7_filters() -> FilterBank:
    return _filter_bank(DB7_ORDER)


@lru_cache(maxsize=None)
def _filter_bank(order: int) -> FilterBank:
    rec_lo = daubechies_lowpass(order)
    L = len(rec_lo)
    signs = np.where(np.arange(L) % 2 == 0, 1.0, -1.0)
    rec_hi = signs * rec_lo[::-1]
    bank = FilterBank(
        lowpass_decomp=rec_lo[::-1].copy(),
        highpass_decomp=rec_hi[::-1].copy(),
        lowpass_recon=rec_lo,
        highpass_recon=rec_hi,
    )
    for arr in (bank.lowpass_decomp, bank.highpass_decomp, bank.lowpass_recon, bank.highpass_recon):
        arr.setflags(write=False)
    return bank


# ---------------------------------------------------------------------------
# DWT


def dwt_coeff_length(m: int, filter_length: int, mode: str = "symmetric") -> int:
    if mode == "periodization":
        return (m + 1) // 2
    return (m - 1) // 2 + filter_length // 2


def _analysis(x: np.ndarray, filt: np.ndarray, mode: str) -> np.ndarray:
    L = len(filt)
    n = len(x)
    if mode == "periodization":
        if n % 2:
            x = np.append(x, x[-1])
            n += 1
        out_len = n // 2
        # out[i] = sum_j f[j] x[(2i + L/2 - j) mod n]; same alignment as PyWavelets
        idx = (2 * np.arange(out_len)[:, None] + L // 2 - np.arange(L)[None, :]) % n
        return x[idx] @ filt
    padded = np.pad(x, L - 1, mode="symmetric")
    full = np.convolve(padded, filt)
    out_len = dwt_coeff_length(n, L, mode)
    return full[L:L + 2 * out_len:2]


def _synthesis(coeffs: np.ndarray, filt: np.ndarray, out_len: int, mode: str) -> np.ndarray:
    L = len(filt)
    N = len(coeffs)
    if mode == "periodization":
        return _periodic_synthesis(coeffs, filt, out_len)
    up = np.zeros(2 * N - 1)
    up[::2] = coeffs
    full = np.convolve(up, filt)
    return full[L - 2:L - 2 + out_len]


def _periodic_synthesis(coeffs: np.ndarray, filt: np.ndarray, out_len: int) -> np.ndarray:
    # adjoint of the periodic analysis map; filt is the reconstruction filter,
    # i.e. the decomposition filter reversed
    dec = filt[::-1]
    L = len(dec)
    N = len(coeffs)
    n = 2 * N
    x = np.zeros(n)
    pos = (2 * np.arange(N)[:, None] + L // 2 - np.arange(L)[None, :]) % n
    np.add.at(x, pos.ravel(), (coeffs[:, None] * dec[None, :]).ravel())
    return x[:out_len]


def _check_mode(mode: str) -> None:
    if mode not in _MODES:
        raise ValueError(f"unknown boundary mode {mode!r}; expected one of {_MODES}")


def dwt_decompose(signal: Sequence[float], levels: int, mode: str = "symmetric") -> DwtDecomposition:
    """Multilevel db7 decomposition.

    Raises ``ValueError`` when the signal is shorter than the 14-tap filter or
    when a level would receive an empty input.
    """
    _check_mode(mode)
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise ValueError("signal must be one-dimensional")
    bank = db7_filters()
    if len(x) < bank.length:
        raise ValueError(f"signal of length {len(x)} is shorter than the db7 filter ({bank.length} taps)")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    details = []
    lengths = []
    a = x
    for level in range(1, levels + 1):
        if len(a) < 1:
            raise ValueError(f"level {level} input is empty")
        lengths.append(len(a))
        d = _analysis(a, bank.highpass_decomp, mode)
        a = _analysis(a, bank.lowpass_decomp, mode)
        details.append(d)
    return DwtDecomposition(approx=a, details=details, original_length=len(x),
                            level_lengths=lengths, mode=mode)


def _inverse(d: DwtDecomposition, approx: np.ndarray | None, details: list[np.ndarray | None]) -> np.ndarray:
    bank = db7_filters()
    J = d.levels
    a = approx if approx is not None else np.zeros_like(d.approx)
    for level in range(J, 0, -1):
        out_len = d.level_lengths[level - 1]
        det = details[level - 1]
        if det is None:
            det = np.zeros_like(d.details[level - 1])
        a = (_synthesis(a, bank.lowpass_recon, out_len, d.mode)
             + _synthesis(det, bank.highpass_recon, out_len, d.mode))
    return a


def dwt_reconstruct(d: DwtDecomposition) -> np.ndarray:
    return _inverse(d, d.approx, list(d.details))


def dwt_reconstruct_detail(d: DwtDecomposition, level: int) -> np.ndarray:
    """Contribution of the level-``level`` detail coefficients in signal space."""
    if not 1 <= level <= d.levels:
        raise ValueError(f"level must be in 1..{d.levels}, got {level}")
    details: list[np.ndarray | None] = [None] * d.levels
    details[level - 1] = d.details[level - 1]
    return _inverse(d, None, details)


def dwt_reconstruct_approx(d: DwtDecomposition) -> np.ndarray:
    return _inverse(d, d.approx, [None] * d.levels)


# ---------------------------------------------------------------------------
# CWT


@lru_cache(maxsize=4)
def wavelet_function(order: int = DB7_ORDER, refinement: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Cascade-algorithm approximation of the Daubechies wavelet psi.

    Returns ``(t, psi)`` on a grid with ``2**refinement`` points per unit over
    the support ``[0, 2*order - 1]``.
    """
    bank = _filter_bank(order)
    h = np.sqrt(2.0) * bank.lowpass_recon
    g = np.sqrt(2.0) * bank.highpass_recon
    # iterated filter G(z^(2^(R-1))) H(z^(2^(R-2))) ... H(z); the coarsest factor goes first
    psi = g.copy()
    for _ in range(refinement - 1):
        up = np.zeros(2 * len(psi) - 1)
        up[::2] = psi
        psi = np.convolve(up, h)
    t = np.arange(len(psi)) / 2.0 ** refinement
    keep = t <= (2 * order - 1)
    t, psi = t[keep], psi[keep]
    t.setflags(write=False)
    psi.setflags(write=False)
    return t, psi


@lru_cache(maxsize=64)
def cwt_kernel(scale: int) -> tuple[np.ndarray, int]:
    """Sampled, ``1/sqrt(scale)``-normalised wavelet at ``scale``.

    Returns ``(kernel, anchor)`` where ``kernel[k]`` multiplies the signal
    sample at offset ``k - anchor`` from the output position.  The anchor is the
    largest-magnitude tap, so a lone spike at marker ``i`` gives its strongest
    response at coefficient ``i``.
    """
    t, psi = wavelet_function()
    support = t[-1]
    offsets = np.arange(0, int(np.floor(support * scale)) + 1)
    kernel = np.interp(offsets / scale, t, psi) / np.sqrt(scale)
    anchor = int(np.argmax(np.abs(kernel)))
    kernel.setflags(write=False)
    return kernel, anchor


def _check_scales(scales: Sequence[int]) -> list[int]:
    scales = [int(s) for s in scales]
    if not scales:
        raise ValueError("at least one scale is required")
    for s in scales:
        if not 1 <= s <= MAX_CWT_SCALE:
            raise ValueError(f"scales must be integers in 1..{MAX_CWT_SCALE}, got {s}")
    return scales


def _cwt_rows(X: np.ndarray, scale: int) -> np.ndarray:
    kernel, anchor = cwt_kernel(scale)
    n = X.shape[-1]
    K = len(kernel)
    # C[a] = sum_k s[a + k - anchor] * kernel[k], zero outside the signal
    padded = np.zeros(X.shape[:-1] + (n + K - 1,))
    padded[..., anchor:anchor + n] = X
    windows = np.lib.stride_tricks.sliding_window_view(padded, K, axis=-1)[..., :n, :]
    return windows @ kernel


def cwt(signal: Sequence[float], scales: Sequence[int]) -> CwtFeatures:
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise ValueError("signal must be a 1-D vector of length >= 2")
    scales = _check_scales(scales)
    coeffs = np.vstack([_cwt_rows(x, s) for s in scales])
    return CwtFeatures(coeffs=coeffs, scales=scales)


# ---------------------------------------------------------------------------
# feature extraction


@dataclass(frozen=True)
class Transform:
    """``kind`` is ``"cwt"`` (``param`` = scale) or ``"dwt"`` (``param`` = level)."""

    kind: str
    param: int

    def __post_init__(self):
        if self.kind not in ("cwt", "dwt"):
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.param < 1:
            raise ValueError("transform parameter must be >= 1")

    @classmethod
    def parse(cls, text: str) -> "Transform":
        kind, _, param = text.strip().partition(":")
        if not param:
            raise ValueError(f"transform must look like 'cwt:3' or 'dwt:2', got {text!r}")
        return cls(kind.lower(), int(param))

    def __str__(self) -> str:
        return f"{self.kind}:{self.param}"


def extract_features(X: np.ndarray, transform: Transform) -> tuple[np.ndarray, np.ndarray | None]:
    """Apply ``transform`` to every row of ``X``.

    Returns ``(features, index_map)``.  For CWT the index map is the identity
    (feature ``i`` sits on marker ``i``); for DWT it is ``None`` because the
    detail coefficients have no positional link to individual markers.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D samples x markers matrix")
    if transform.kind == "cwt":
        _check_scales([transform.param])
        return _cwt_rows(X, transform.param), np.arange(X.shape[1])
    rows = [dwt_decompose(row, transform.param).details[transform.param - 1] for row in X]
    return np.vstack(rows), None
