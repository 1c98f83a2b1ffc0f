"""Constant-modulus factorization of precoders and combiners.

A target matrix is approximated by a small digital matrix times an
analog matrix whose entries all share one modulus (a phase-shifter
network can only rotate).  The alternating iteration copies phases into
the analog stage, then refits the digital stage by least squares, then
refreshes the phase-copy target through the digital pseudoinverse.
The iteration is not provably monotone, so the best iterate seen is
returned rather than the last.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FactorizeOptions",
    "HybridPrecoder",
    "HybridCombiner",
    "phase_project",
    "factorize",
    "factorize_combiner",
]


@dataclass(frozen=True)
class FactorizeOptions:
    """Iteration controls; ``modulus=None`` means 1/sqrt(n_columns)."""

    max_iterations: int = 100
    stall_tolerance: float = 1e-6
    modulus: float | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.stall_tolerance <= 0:
            raise ValueError("stall_tolerance must be positive")
        if self.modulus is not None and self.modulus <= 0:
            raise ValueError("modulus must be positive")


@dataclass
class HybridPrecoder:
    """Digital (R, R) times constant-modulus analog (R, N) approximation."""

    digital: np.ndarray
    analog: np.ndarray
    modulus: float
    residual: float
    iterations_used: int


@dataclass
class HybridCombiner:
    """Constant-modulus analog (N, R) times digital (R, R) approximation."""

    analog: np.ndarray
    digital: np.ndarray
    modulus: float
    residual: float
    iterations_used: int


def phase_project(m: np.ndarray, modulus: float) -> np.ndarray:
    """Keep each entry's phase but force its magnitude to ``modulus``.

    Zero entries map to ``modulus`` with phase 0 (``np.angle(0) == 0``),
    which keeps the projection deterministic.
    """
    return modulus * np.exp(1j * np.angle(m))


def factorize(target: np.ndarray, opts: FactorizeOptions | None = None) -> HybridPrecoder:
    """Approximate ``target`` (R, N) by digital @ analog with |analog| constant.

    Starts the phase-copy shadow at the target itself, alternates the
    three update steps, and records the objective ``||target - digital @
    analog||_F`` after each digital refit.  Stops at ``max_iterations``
    or when the relative residual change falls below
    ``stall_tolerance``; the lowest-objective iterate is returned.

    Raises
    ------
    ValueError
        If the target is not a matrix with R <= N, or is all zero.
    """
    target = np.asarray(target, dtype=complex)
    if target.ndim != 2:
        raise ValueError("target must be a matrix")
    n_streams, n_elements = target.shape
    if n_streams > n_elements:
        raise ValueError("target must have at most as many rows as columns")
    target_norm = np.linalg.norm(target)
    if target_norm == 0:
        raise ValueError("target must be nonzero")

    opts = opts or FactorizeOptions()
    modulus = opts.modulus if opts.modulus is not None else 1.0 / np.sqrt(n_elements)

    shadow = target
    best_digital = best_analog = None
    best_residual = np.inf
    previous = None
    iterations = 0
    for iterations in range(1, opts.max_iterations + 1):
        analog = phase_project(shadow, modulus)
        digital = target @ np.linalg.pinv(analog)
        residual = np.linalg.norm(target - digital @ analog) / target_norm
        if residual < best_residual:
            best_digital, best_analog, best_residual = digital, analog, residual
        if previous is not None and abs(previous - residual) < opts.stall_tolerance:
            break
        previous = residual
        shadow = np.linalg.pinv(digital) @ target

    return HybridPrecoder(
        digital=best_digital,
        analog=best_analog,
        modulus=modulus,
        residual=float(best_residual),
        iterations_used=iterations,
    )


def factorize_combiner(target: np.ndarray, opts: FactorizeOptions | None = None) -> HybridCombiner:
    """Approximate a combiner ``target`` (N, R) by analog @ digital.

    Runs :func:`factorize` on the conjugate transpose and transposes the
    factors back, so the analog stage keeps the constant-modulus
    property and the residual is unchanged.
    """
    result = factorize(np.asarray(target, dtype=complex).conj().T, opts)
    return HybridCombiner(
        analog=result.analog.conj().T,
        digital=result.digital.conj().T,
        modulus=result.modulus,
        residual=result.residual,
        iterations_used=result.iterations_used,
    )
