from typing import List, Optional, Sequence

import numpy as np
from scipy import fft


def frequencies(shape: Sequence[int], spacing: Sequence[float]) -> List[np.ndarray]:
    """Angular frequency meshes (one per axis) of the discrete Fourier transform of an array."""
    axes = [2 * np.pi * fft.fftfreq(n, d=h) for n, h in zip(shape, spacing)]
    return list(np.meshgrid(*axes, indexing="ij"))


def bessel_potential(values: np.ndarray, spacing: Sequence[float], order: float, axes: Optional[Sequence[int]] = None) -> np.ndarray:
    """<D>^{-N} as the spectral multiplier (1 + |k|^2)^{-N/2} over the given axes (default: all)."""
    if order == 0:
        return values.copy()
    axes = list(range(values.ndim)) if axes is None else list(axes)
    k = frequencies([values.shape[a] for a in axes], [spacing[a] for a in axes])
    k2 = sum(component ** 2 for component in k)
    spectrum = fft.fftn(values, axes=axes)
    shape = [1] * values.ndim
    for a in axes:
        shape[a] = values.shape[a]
    return np.real(fft.ifftn(spectrum * ((1.0 + k2) ** (-order / 2)).reshape(shape), axes=axes))


def cone_distance(shape: Sequence[int], spacing: Sequence[float], direction: np.ndarray) -> np.ndarray:
    """
    min(|k^ - xi^|, |k^ + xi^|) for unit frequency directions k^ and the unit direction xi^ (inf at k = 0).
    """
    k = np.stack(frequencies(shape, spacing), axis=-1)
    length = np.linalg.norm(k, axis=-1)
    unit = np.divide(k, length[..., None], out=np.zeros_like(k), where=length[..., None] > 0)
    xi = np.asarray(direction, dtype=float)
    xi = xi / np.linalg.norm(xi)
    distance = np.minimum(np.linalg.norm(unit - xi, axis=-1), np.linalg.norm(unit + xi, axis=-1))
    distance[length == 0] = np.inf
    return distance


def cone_filter(values: np.ndarray, spacing: Sequence[float], direction: np.ndarray, h: float) -> np.ndarray:
    """
    The angular cutoff: a smooth Gaussian in the cone distance (width h / 3), equal to 1 on the
    rays through +-xi and vanishing outside B_h(xi) u B_h(-xi).
    """
    distance = cone_distance(values.shape, spacing, direction)
    weight = np.where(distance < h, np.exp(-0.5 * (3.0 * distance / h) ** 2), 0.0)
    return np.real(fft.ifftn(fft.fftn(values) * weight))


def cone_fraction(values: np.ndarray, spacing: Sequence[float], direction: np.ndarray, h: float) -> float:
    """Share of the spectral energy of a space-time array inside B_h(xi) u B_h(-xi)."""
    power = np.abs(fft.fftn(values)) ** 2
    total = float(np.sum(power))
    if total == 0.0:
        return 0.0
    return float(np.sum(power[cone_distance(values.shape, spacing, direction) < h]) / total)


def spacelike_fraction(values: np.ndarray, spacing: Sequence[float], kappa_inverse: Optional[np.ndarray] = None) -> float:
    """
    Share of the spectral energy of a space-time array (time axis first) on spacelike frequencies
    k_t^2 < k'^T kappa^-1 k' (kappa frozen at one point).
    """
    k = frequencies(values.shape, spacing)
    spatial = np.stack(k[1:], axis=-1)
    kinv = np.eye(len(k) - 1) if kappa_inverse is None else np.asarray(kappa_inverse)
    norm = np.einsum("...i,ij,...j->...", spatial, kinv, spatial)
    power = np.abs(fft.fftn(values)) ** 2
    total = float(np.sum(power))
    if total == 0.0:
        return 0.0
    return float(np.sum(power[k[0] ** 2 < norm]) / total)
