"""
Multilevel discrete wavelet transform for 1-D spectra.

Coefficients are stored coarse to fine, ``[A_L | D_L | D_{L-1} | ... | D_1]``,
so that a 992-point spectrum decomposed with the 24-tap Coiflet over five
levels gives 1105 features in blocks ``[53, 53, 83, 144, 265, 507]``.

Two boundary rules are supported:

``"symmetric"``
    Half-sample symmetric extension with full-length convolution.  Each
    level maps ``N`` samples to ``floor((N + F - 1) / 2)`` coefficients.
    Perfect reconstruction, but not an isometry.
``"periodization"``
    Circular convolution, ``N -> N / 2``.  Orthogonal (energy preserving);
    requires the signal length to be divisible by ``2**levels``.

All transforms accept a single signal or a 2-D batch with one signal per row.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

# Order-4 Coiflet (24 taps), decomposition low-pass filter.
COIF4_LOWPASS = np.array([
    -1.7849909144933469e-06,
    -3.259647940030751e-06,
    3.1229861599195265e-05,
    6.233885431278719e-05,
    -0.0002599743371222568,
    -0.0005890202246332165,
    0.0012665610789256603,
    0.0037514346971460866,
    -0.0056582838001308835,
    -0.015211728187697211,
    0.02508225333794961,
    0.03933442260558915,
    -0.09622042453595264,
    -0.06662747236681717,
    0.43438603311435653,
    0.7822389344242826,
    0.41530842700068227,
    -0.05607731960356926,
    -0.08126671024919373,
    0.02668230466960483,
    0.01606894713157503,
    -0.007346167936268051,
    -0.001629492425226786,
    0.000892313902537003,
])

HAAR_LOWPASS = np.array([1.0, 1.0]) / np.sqrt(2.0)

MODES = ("symmetric", "periodization")


def quadrature_mirror(lowpass):
    """High-pass partner ``g[k] = (-1)**(k+1) * h[F-1-k]`` of a low-pass filter."""
    lowpass = np.asarray(lowpass, dtype=float)
    signs = np.where(np.arange(lowpass.size) % 2 == 0, -1.0, 1.0)
    return signs * lowpass[::-1]


@dataclass(frozen=True)
class WaveletBasis:
    """Orthogonal two-channel filter bank plus decomposition depth."""

    lowpass: np.ndarray = field(default_factory=lambda: COIF4_LOWPASS.copy())
    levels: int = 5
    mode: str = "symmetric"
    name: str = "coif4"

    def __post_init__(self):
        lowpass = np.asarray(self.lowpass, dtype=float)
        if lowpass.ndim != 1 or lowpass.size < 2 or lowpass.size % 2:
            raise ValueError("lowpass filter must be a 1-D array of even length")
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.mode not in MODES:
            raise ValueError(f"unknown extension mode {self.mode!r}; expected one of {MODES}")
        object.__setattr__(self, "lowpass", lowpass)

    @property
    def highpass(self):
        return quadrature_mirror(self.lowpass)

    @property
    def taps(self):
        return self.lowpass.size

    def to_dict(self):
        return {
            "name": self.name,
            "taps": int(self.taps),
            "levels": int(self.levels),
            "mode": self.mode,
            "lowpass": self.lowpass.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(lowpass=np.asarray(d["lowpass"], dtype=float), levels=int(d["levels"]),
                   mode=d["mode"], name=d.get("name", "custom"))


def coiflet24(levels=5, mode="symmetric"):
    return WaveletBasis(COIF4_LOWPASS.copy(), levels=levels, mode=mode, name="coif4")


def haar(levels=1, mode="symmetric"):
    return WaveletBasis(HAAR_LOWPASS.copy(), levels=levels, mode=mode, name="haar")


@dataclass
class WaveletFeatures:
    """Concatenated coefficients ``[A_L | D_L | ... | D_1]`` with block bookkeeping.

    ``coefficients`` is 1-D for a single signal or ``(n, total)`` for a batch.
    """

    coefficients: np.ndarray
    level_lengths: tuple
    original_length: int

    @property
    def total(self):
        return int(sum(self.level_lengths))

    @property
    def levels(self):
        return len(self.level_lengths) - 1

    def block_slices(self):
        """Slices into the coefficient axis, keyed ``"A5", "D5", ..., "D1"``."""
        L = self.levels
        names = [f"A{L}"] + [f"D{lev}" for lev in range(L, 0, -1)]
        edges = np.concatenate([[0], np.cumsum(self.level_lengths)])
        return {nm: slice(int(a), int(b)) for nm, a, b in zip(names, edges[:-1], edges[1:])}

    def block(self, name):
        return self.coefficients[..., self.block_slices()[name]]

    def coefficient_level(self):
        """Per-coefficient block label (e.g. ``"D2"``), in storage order."""
        labels = []
        for nm, sl in self.block_slices().items():
            labels.extend([nm] * (sl.stop - sl.start))
        return np.array(labels)

    def to_dict(self):
        return {"level_lengths": [int(v) for v in self.level_lengths],
                "original_length": int(self.original_length)}


def level_lengths(m, taps, levels, mode="symmetric"):
    """Block lengths ``[A_L, D_L, ..., D_1]`` produced by decomposing ``m`` samples."""
    lengths = []
    cur = int(m)
    for _ in range(levels):
        if mode == "symmetric":
            cur = (cur + taps - 1) // 2
        else:
            if cur % 2:
                raise ValueError(f"periodization needs an even length at every level, got {cur}")
            cur //= 2
        lengths.append(cur)
    return [lengths[-1]] + lengths[::-1]


def _analysis_symmetric(x, lo, hi):
    F = lo.size
    ext = np.pad(x, ((0, 0), (F - 1, F - 1)), mode="symmetric")
    n_out = (x.shape[1] + F - 1) // 2
    # window o covers extended samples 2o+1 .. 2o+F
    win = sliding_window_view(ext[:, 1:], F, axis=1)[:, ::2][:, :n_out]
    return win @ lo[::-1], win @ hi[::-1]


def _synthesis_symmetric(a, d, lo, hi, n_out):
    F = lo.size
    rows, nc = a.shape
    u_a = np.zeros((rows, 2 * nc + F))
    u_d = np.zeros((rows, 2 * nc + F))
    u_a[:, 1:2 * nc:2] = a
    u_d[:, 1:2 * nc:2] = d
    wa = sliding_window_view(u_a, F, axis=1)[:, :n_out]
    wd = sliding_window_view(u_d, F, axis=1)[:, :n_out]
    return wa @ lo + wd @ hi


def _periodic_index(n, F):
    o = np.arange(n // 2)[:, None]
    j = np.arange(F)[None, :]
    return (2 * o + 1 - j) % n


def _analysis_periodic(x, lo, hi):
    idx = _periodic_index(x.shape[1], lo.size)
    win = x[:, idx]
    return win @ lo, win @ hi


def _synthesis_periodic(a, d, lo, hi):
    n = 2 * a.shape[1]
    idx = _periodic_index(n, lo.size)
    out = np.zeros((a.shape[0], n))
    # adjoint of the circular analysis operator
    for j in range(lo.size):
        np.add.at(out, (slice(None), idx[:, j]), a * lo[j] + d * hi[j])
    return out


def _as_batch(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim == 2:
        return x, False
    raise ValueError(f"expected a 1-D signal or 2-D batch, got shape {x.shape}")


def dwt(signal, basis=None):
    """Multilevel wavelet decomposition.

    Parameters
    ----------
    signal : array_like
        A length-``m`` signal or an ``(n, m)`` batch.
    basis : WaveletBasis, optional
        Defaults to the 24-tap Coiflet, five levels, symmetric extension.

    Returns
    -------
    WaveletFeatures
    """
    basis = basis or coiflet24()
    x, single = _as_batch(signal)
    m = x.shape[1]
    if m < basis.taps:
        raise ValueError(f"signal length {m} is shorter than the filter ({basis.taps} taps)")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite values")
    lengths = level_lengths(m, basis.taps, basis.levels, basis.mode)
    lo, hi = basis.lowpass, basis.highpass
    details = []
    approx = x
    for _ in range(basis.levels):
        if basis.mode == "symmetric":
            approx, det = _analysis_symmetric(approx, lo, hi)
        else:
            approx, det = _analysis_periodic(approx, lo, hi)
        details.append(det)
    coeffs = np.concatenate([approx] + details[::-1], axis=1)
    if single:
        coeffs = coeffs[0]
    return WaveletFeatures(coeffs, tuple(lengths), m)


def idwt(features, basis=None):
    """Inverse of :func:`dwt`; returns a signal (or batch) of the original length."""
    basis = basis or coiflet24()
    x, single = _as_batch(features.coefficients)
    lengths = list(features.level_lengths)
    expected = level_lengths(features.original_length, basis.taps, basis.levels, basis.mode)
    if lengths != expected or x.shape[1] != sum(lengths):
        raise ValueError(
            f"coefficient bookkeeping {lengths} (total {x.shape[1]}) is inconsistent with "
            f"original length {features.original_length}; expected {expected}")
    lo, hi = basis.lowpass, basis.highpass
    edges = np.concatenate([[0], np.cumsum(lengths)])
    approx = x[:, edges[0]:edges[1]]
    for lev in range(basis.levels):
        det = x[:, edges[lev + 1]:edges[lev + 2]]
        # odd-length levels reconstruct one spare sample; trim to the next block
        n_out = lengths[lev + 2] if lev + 2 < len(lengths) else features.original_length
        if basis.mode == "symmetric":
            approx = _synthesis_symmetric(approx, det, lo, hi, n_out)
        else:
            approx = _synthesis_periodic(approx, det, lo, hi)
    return approx[0] if single else approx


def reconstruct_masked(features, mask, basis=None):
    """Signal-domain image of the coefficients listed in ``mask`` (all others zeroed)."""
    mask = np.asarray(mask, dtype=int).ravel()
    total = features.total
    if mask.size and (mask.min() < 0 or mask.max() >= total):
        raise IndexError(f"mask indices must lie in [0, {total})")
    kept = np.zeros_like(np.asarray(features.coefficients, dtype=float))
    kept[..., mask] = np.asarray(features.coefficients)[..., mask]
    return idwt(WaveletFeatures(kept, features.level_lengths, features.original_length), basis)


def coefficient_centers(features, axis=None, basis=None):
    """Approximate location of each coefficient's basis function on the signal axis.

    Computed as the centre of mass of the squared single-coefficient
    reconstruction.  Returned in sample index units unless ``axis`` (the
    m-point wavenumber grid) is given.
    """
    basis = basis or coiflet24()
    m = features.original_length
    total = features.total
    grid = np.arange(m, dtype=float) if axis is None else np.asarray(axis, dtype=float)
    eye = np.eye(total)
    recon = idwt(WaveletFeatures(eye, features.level_lengths, m), basis)
    w = recon ** 2
    return (w @ grid) / w.sum(axis=1)
