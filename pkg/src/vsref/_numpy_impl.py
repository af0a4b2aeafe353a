"""Pure-numpy kernels: the fallback backend for the solver hot loops.

Mirrors the compiled extension's interface exactly; see ``backend`` for the
selection logic and the kernel contracts.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def radii_row(t: np.ndarray, norm: float, ecc: float, out: np.ndarray | None = None) -> np.ndarray:
    """Polar radii of one member over cell axis-cosines ``t``."""
    scale = norm * (1.0 - ecc * ecc) / (2.0 * ecc)
    if out is None:
        out = np.empty_like(t)
    np.multiply(t, -ecc, out=out)
    out += 1.0
    np.divide(scale, out, out=out)
    return out


def rowmax_excluding(H: np.ndarray, exclude: np.ndarray) -> np.ndarray:
    """Columnwise max over the rows of H whose ``exclude`` flag is unset.

    ``exclude`` may be a bool or a uint8 flag array.
    """
    rows = np.flatnonzero(np.asarray(exclude) == 0)
    if rows.size == 0:
        raise ValueError("cannot exclude every row")
    return np.max(H[rows], axis=0)


def crossing_ecc_row(t: np.ndarray, other: np.ndarray, norm: float) -> np.ndarray:
    """Eccentricity at which a member's radius equals ``other`` per cell.

    The member with focus distance ``norm`` along axis-cosines ``t`` passes
    through the point at radius R = other[m] exactly at

        E = norm / (R - sqrt(R^2 - 2 R t norm + norm^2)),

    the eccentricity of the branch through that point.  Because radii shrink
    as the eccentricity grows, the member wins cell m iff its eccentricity is
    <= E[m].  Cells the member cannot reach at any eccentricity > 1 get E = 0.
    """
    disc = other * other - (2.0 * norm) * (other * t) + norm * norm
    np.maximum(disc, 0.0, out=disc)
    denom = other - np.sqrt(disc)
    with np.errstate(divide="ignore", invalid="ignore"):
        E = norm / denom
    # Reference at or below the member's plane limit: the member wins at
    # every admissible eccentricity.  Crossing at or below 1: never wins.
    E[denom <= 0.0] = np.inf
    E[(denom > 0.0) & (E <= 1.0)] = 0.0
    return E


def winner_and_masses(
    H: np.ndarray, w: np.ndarray, rel_tol: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-cell winner (lowest index within rel_tol of the columnwise max),
    per-row winning mass and per-row cell count."""
    top = np.max(H, axis=0)
    winner = np.argmax(H >= (top - rel_tol * np.abs(top)), axis=0).astype(np.int32)
    k = H.shape[0]
    masses = np.bincount(winner, weights=w, minlength=k).astype(float)
    counts = np.bincount(winner, minlength=k).astype(np.int64)
    return winner, masses, counts


def threshold_mass(E: np.ndarray, w: np.ndarray, ecc: float) -> float:
    """Total weight of cells with crossing eccentricity >= ``ecc``."""
    return float(w[E >= ecc].sum())
