"""Kernel backend selection: compiled extension when available, numpy otherwise.

The hot loops of the solver (per-cell member radii, crossing eccentricities,
winner assignment with mass accumulation) exist twice: in ``_ext`` (Cython)
and in ``_numpy_impl`` (vectorized numpy).  Both are deterministic and
single-threaded; the compiled one is just faster.  Selection happens once at
import; set the environment variable ``VSREF_BACKEND`` to ``python`` to force
the fallback or to ``compiled`` to require the extension.

Kernel contracts (shapes, float64 throughout):

    radii_row(t (N,), norm, ecc[, out])      -> (N,) member polar radii
    rowmax_excluding(H (k, N), exclude (k,) uint8) -> (N,) max over kept rows
    crossing_ecc_row(t (N,), other (N,), norm) -> (N,) crossing eccentricity,
        0 where the member cannot reach the reference surface
    winner_and_masses(H (k, N), w (N,), rel_tol) -> (winner int32 (N,),
        masses (k,), counts int64 (k,)), ties going to the lowest row index
    threshold_mass(E (N,), w (N,), ecc) -> float
"""

from __future__ import annotations

import os

from . import _numpy_impl

_forced = os.environ.get("VSREF_BACKEND", "").strip().lower()

if _forced == "python":
    _impl = _numpy_impl
elif _forced == "compiled":
    from . import _ext as _impl  # noqa: F401  (hard requirement)
else:
    try:
        from . import _ext as _impl
    except ImportError:
        _impl = _numpy_impl

NAME = _impl.NAME
radii_row = _impl.radii_row
# numpy's pairwise SIMD reduction beats a scalar loop for the row max; both
# backends share it.
rowmax_excluding = _numpy_impl.rowmax_excluding
crossing_ecc_row = _impl.crossing_ecc_row
winner_and_masses = _impl.winner_and_masses
threshold_mass = _impl.threshold_mass
