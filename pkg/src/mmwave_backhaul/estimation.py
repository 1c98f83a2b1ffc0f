"""Three-phase compressive channel estimation.

Phase 1 sweeps coarse beam pairs from predefined codebooks and keeps the
strongest ones.  Phase 2 points the transmitter along each kept beam and
takes full receive-array snapshots (assembled chain-group by chain-group,
since only a few baseband chains exist); a single-snapshot matrix-pencil
line-spectral estimator turns each snapshot into arrival directions.
Phase 3 swaps roles to estimate departure directions the same way.  A
final least-squares fit recovers the coupling gains between every
estimated departure/arrival pair, the dominant pairs become the path
estimate, and the channel is rebuilt from them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ArrayGeometry, PathSet, assemble_channel, steering_matrix, steering_vector
from .errors import EstimationFailedError, InsufficientMeasurementsError

__all__ = [
    "Codebook",
    "BeamReport",
    "LineSpectrum",
    "EstimationConfig",
    "EstimationReport",
    "ChannelOracle",
    "dft_codebook",
    "coarse_sweep",
    "array_snapshot",
    "line_spectrum_estimate",
    "estimate_gains",
    "estimate_channel",
]


@dataclass
class Codebook:
    """Beamforming codebook: unit-norm steering columns and their angles."""

    beams: np.ndarray   # (n_elements, size)
    angles: np.ndarray  # (size,) in [0, 2*pi)

    @property
    def size(self) -> int:
        return self.beams.shape[1]


@dataclass
class BeamReport:
    """(tx_beam, rx_beam, received_power) triples, strongest first."""

    pairs: list

    def __post_init__(self):
        powers = [p for _, _, p in self.pairs]
        if any(p < 0 for p in powers):
            raise ValueError("received powers must be non-negative")
        if any(powers[i] < powers[i + 1] for i in range(len(powers) - 1)):
            raise ValueError("pairs must be sorted by descending power")


@dataclass
class LineSpectrum:
    """Sum-of-exponentials model fitted to one array snapshot.

    ``frequencies`` are normalized spatial frequencies in [-0.5, 0.5);
    ``coefficients`` are the amplitudes against the unit-norm basis
    ``exp(2j*pi*f*m)/sqrt(N)``; ``residual`` is the remaining snapshot
    energy outside the model.
    """

    frequencies: np.ndarray
    coefficients: np.ndarray
    residual: float = 0.0

    def __post_init__(self):
        self.frequencies = np.atleast_1d(np.asarray(self.frequencies, dtype=float))
        self.coefficients = np.atleast_1d(np.asarray(self.coefficients, dtype=complex))
        if self.frequencies.size != self.coefficients.size:
            raise ValueError("frequencies and coefficients must have equal length")
        if self.frequencies.size > 1:
            gaps = np.diff(np.sort(self.frequencies))
            if np.any(gaps <= 1e-9):
                raise ValueError("frequencies must be pairwise distinct")

    @property
    def order(self) -> int:
        return self.frequencies.size


@dataclass(frozen=True)
class EstimationConfig:
    """Pipeline knobs: codebook sizes, kept beams, chain counts, thresholds.

    ``snr_db`` is the observation SNR used by callers that build the
    measurement oracle (relative to the mean power of one channel
    entry); the pipeline itself never adds noise.

    The codebook defaults suit a 512-element macro and 32-element
    small-cell array: critically sampled grids keep the worst-case beam
    straddle of an off-grid path at half a beamwidth (response no worse
    than -3.9 dB), so no path can hide in a sweep null.
    """

    l_ma: int = 512
    l_sm: int = 32
    keep: int = 8
    n_bb_ma: int = 16
    n_bb_sm: int = 4
    snr_db: float = 20.0
    rank_threshold: float = 1e-2
    max_paths: int = 8
    merge_tol: float | None = None
    path_loss: float = 1.0

    def __post_init__(self):
        for name in ("l_ma", "l_sm", "keep", "n_bb_ma", "n_bb_sm", "max_paths"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 < self.rank_threshold < 1:
            raise ValueError("rank_threshold must be in (0, 1)")
        if self.path_loss <= 0:
            raise ValueError("path_loss must be positive")


@dataclass
class EstimationReport:
    """Everything the pipeline learned about one channel."""

    aoas: np.ndarray            # merged arrival angles, strongest first
    aods: np.ndarray            # merged departure angles, strongest first
    gain_matrix: np.ndarray     # (len(aods), len(aoas)) coupling estimate
    paired_paths: PathSet       # dominant coupling entries
    training_slots_used: int
    reconstruction: np.ndarray  # (n_tx, n_rx) channel rebuilt from the pairs
    beam_report: BeamReport
    gain_residual: float = 0.0
    slots_phase1: int = 0
    slots_phase2: int = 0
    slots_phase3: int = 0


class ChannelOracle:
    """Noisy bilinear measurements of a fixed channel.

    ``observe(tx, rx)`` returns ``rx^H @ h^H @ tx`` plus i.i.d. circular
    complex Gaussian noise of variance ``noise_var`` per entry, one
    fresh draw per call.
    """

    def __init__(self, h: np.ndarray, noise_var: float, rng: np.random.Generator):
        if noise_var < 0:
            raise ValueError("noise_var must be non-negative")
        self._h_herm = np.asarray(h, dtype=complex).conj().T
        self.noise_var = float(noise_var)
        self._rng = rng

    def observe(self, tx: np.ndarray, rx: np.ndarray) -> np.ndarray:
        tx = np.asarray(tx, dtype=complex)
        rx = np.asarray(rx, dtype=complex)
        if tx.ndim == 1:
            tx = tx[:, None]
        if rx.ndim == 1:
            rx = rx[:, None]
        clean = rx.conj().T @ (self._h_herm @ tx)
        if self.noise_var == 0:
            return clean
        scale = np.sqrt(self.noise_var / 2.0)
        noise = self._rng.standard_normal(clean.shape) + 1j * self._rng.standard_normal(clean.shape)
        return clean + scale * noise


def dft_codebook(geom: ArrayGeometry, size: int) -> Codebook:
    """Beams whose pointing directions cover sin-space uniformly.

    Beam m points at ``asin(-1 + (2m+1)/size)``, the midpoints of a
    uniform sin-space grid; every column is a unit-norm steering vector.
    At critical sampling (size == n_elements, half-wavelength spacing)
    the columns are mutually orthogonal.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    sines = -1.0 + (2.0 * np.arange(size) + 1.0) / size
    angles = np.mod(np.arcsin(sines), 2.0 * np.pi)
    return Codebook(beams=steering_matrix(geom, angles), angles=angles)


def _top_pairs(power: np.ndarray, keep: int) -> BeamReport:
    # power has shape (n_rx_beams, n_tx_beams); sort by descending power,
    # then by beam indices so ties resolve deterministically.
    n_rx, n_tx = power.shape
    rx_idx, tx_idx = np.unravel_index(np.arange(power.size), power.shape)
    flat = power.ravel()
    order = np.lexsort((rx_idx, tx_idx, -flat))
    kept = order[: min(keep, power.size)]
    return BeamReport(pairs=[(int(tx_idx[i]), int(rx_idx[i]), float(flat[i])) for i in kept])


def _sweep_report(oracle: ChannelOracle, tx_cb: Codebook, rx_cb: Codebook, keep: int) -> BeamReport:
    observations = oracle.observe(tx_cb.beams, rx_cb.beams)
    return _top_pairs(np.abs(observations) ** 2, keep)


def _top_tx_beams(power: np.ndarray, keep: int) -> list:
    # Rank transmit beams by their best received power over all combining
    # beams; distinct beams (rather than raw pairs) keep weaker paths with
    # different departure directions in the probing budget.
    best = power.max(axis=0)
    order = np.lexsort((np.arange(best.size), -best))
    return [int(i) for i in order[: min(keep, best.size)]]


def coarse_sweep(
    h: np.ndarray,
    tx_cb: Codebook,
    rx_cb: Codebook,
    noise_var: float,
    keep: int,
    rng: np.random.Generator,
) -> BeamReport:
    """Measure every (tx beam, rx beam) pair once and keep the strongest.

    Each pair yields one noisy observation ``rx^H h^H tx + noise``; the
    report holds the top-``keep`` pairs by measured power.
    """
    return _sweep_report(ChannelOracle(h, noise_var, rng), tx_cb, rx_cb, keep)


def _rx_snapshot(oracle: ChannelOracle, tx_beam: np.ndarray, n_rx: int, n_chains: int):
    # Assemble the full receive-array observation group by group: each
    # sub-slot connects n_chains chains to n_chains distinct antennas.
    snapshot = np.empty(n_rx, dtype=complex)
    eye = np.eye(n_rx, dtype=complex)
    slots = 0
    for start in range(0, n_rx, n_chains):
        sel = eye[:, start:start + n_chains]
        snapshot[start:start + n_chains] = oracle.observe(tx_beam, sel)[:, 0]
        slots += 1
    return snapshot, slots


def _tx_snapshot(oracle: ChannelOracle, rx_beam: np.ndarray, n_tx: int, n_chains: int):
    # Role-swapped counterpart: sample the transmit-side array in groups
    # while the other end keeps one combining beam.  The raw observations
    # are rx^H h^H e_i, whose conjugates form the transmit-array snapshot.
    raw = np.empty(n_tx, dtype=complex)
    eye = np.eye(n_tx, dtype=complex)
    slots = 0
    for start in range(0, n_tx, n_chains):
        sel = eye[:, start:start + n_chains]
        raw[start:start + n_chains] = oracle.observe(sel, rx_beam)[0, :]
        slots += 1
    return raw, slots


def array_snapshot(
    h: np.ndarray,
    tx_beam: np.ndarray,
    rx_geom: ArrayGeometry,
    n_chains: int,
    noise_var: float,
    rng: np.random.Generator,
):
    """Full receive-array observation of ``h^H @ tx_beam`` plus noise.

    Returns ``(snapshot, slots_used)`` where ``slots_used`` is
    ``ceil(n_rx / n_chains)``, the number of sub-slots needed to touch
    every antenna with ``n_chains`` baseband chains.
    """
    if n_chains < 1:
        raise ValueError("n_chains must be >= 1")
    h = np.asarray(h, dtype=complex)
    if h.shape[1] != rx_geom.n_elements:
        raise ValueError("channel column count must match the receive array")
    oracle = ChannelOracle(h, noise_var, rng)
    return _rx_snapshot(oracle, np.asarray(tx_beam, dtype=complex), rx_geom.n_elements, n_chains)


def line_spectrum_estimate(snapshot, max_order: int, rank_threshold: float) -> LineSpectrum:
    """Fit a sum of complex exponentials to one snapshot (matrix pencil).

    A Hankel matrix with pencil parameter ``len(snapshot) // 2`` is
    built from the snapshot; the model order is the number of its
    singular values at or above ``rank_threshold`` times the largest,
    capped at ``max_order``.  Frequencies come from the shift-invariance
    eigenvalue problem on the leading left singular vectors, and
    amplitudes from least squares against the snapshot.  For a noiseless
    sum of at most ``len(snapshot)//2 - 1`` distinct exponentials the
    recovery is exact up to rounding.

    Raises
    ------
    ValueError
        If the snapshot is shorter than 4 samples or ``max_order``
        exceeds half its length.
    """
    x = np.asarray(snapshot, dtype=complex).ravel()
    n = x.size
    if n < 4:
        raise ValueError("snapshot must have at least 4 samples")
    pencil = n // 2
    if max_order > pencil:
        raise ValueError(f"max_order must be <= {pencil} for a length-{n} snapshot")

    rows = n - pencil
    hankel = x[np.arange(rows)[:, None] + np.arange(pencil + 1)[None, :]]
    u, s, _ = np.linalg.svd(hankel, full_matrices=False)
    if s[0] == 0:
        return LineSpectrum(np.empty(0), np.empty(0, dtype=complex), residual=0.0)
    order = int(np.sum(s >= rank_threshold * s[0]))
    order = min(order, max_order, rows - 1)
    if order == 0:
        return LineSpectrum(np.empty(0), np.empty(0, dtype=complex), residual=float(np.linalg.norm(x)))

    subspace = u[:, :order]
    shift = np.linalg.pinv(subspace[:-1]) @ subspace[1:]
    roots = np.linalg.eigvals(shift)
    freqs = np.angle(roots) / (2.0 * np.pi)
    freqs = np.mod(freqs + 0.5, 1.0) - 0.5
    freqs = np.sort(freqs)
    # Collapse numerically coincident roots so the model stays identifiable.
    keep_mask = np.ones(freqs.size, dtype=bool)
    keep_mask[1:] = np.diff(freqs) > 1e-9
    freqs = freqs[keep_mask]

    basis = np.exp(2j * np.pi * np.outer(np.arange(n), freqs)) / np.sqrt(n)
    coefs, *_ = np.linalg.lstsq(basis, x, rcond=None)
    residual = float(np.linalg.norm(x - basis @ coefs))
    return LineSpectrum(frequencies=freqs, coefficients=coefs, residual=residual)


def estimate_gains(measurements, aods, aoas, tx_geom: ArrayGeometry, rx_geom: ArrayGeometry,
                   path_loss: float = 1.0, rcond: float = 1e-3):
    """Least-squares coupling matrix between departure and arrival angles.

    Each measurement is a ``(tx, rx, values)`` triple with tx of shape
    (n_tx, a), rx of shape (n_rx, b) and values of shape (b, a) equal to
    ``rx^H h^H tx`` plus noise.  The fit finds the coupling matrix D
    (len(aods), len(aoas)) minimizing the residual of the model channel
    ``sqrt(n_tx*n_rx/path_loss) * A_tx(aods) @ D @ A_rx(aoas)^H`` against
    all scalar observations.  Returns ``(D, relative_residual)``.

    ``rcond`` truncates near-null directions of the design matrix: when
    two estimated angles nearly coincide their steering columns become
    close to collinear, and an unregularized solve would split the gain
    into a huge cancelling pair.

    Raises
    ------
    InsufficientMeasurementsError
        If there are fewer scalar observations than unknowns.
    """
    aods = np.atleast_1d(np.asarray(aods, dtype=float))
    aoas = np.atleast_1d(np.asarray(aoas, dtype=float))
    n_aod, n_aoa = aods.size, aoas.size
    a_tx = steering_matrix(tx_geom, aods)
    a_rx = steering_matrix(rx_geom, aoas)
    scale = np.sqrt(tx_geom.n_elements * rx_geom.n_elements / path_loss)

    # Observation model: values[p, q] = scale * u_p^H X v_q with
    # u = A_rx^H rx, v = A_tx^H tx and X the conjugate transpose of the
    # coupling matrix; each scalar observation is one linear equation in
    # the entries of X.
    design_blocks = []
    rhs_blocks = []
    n_obs = 0
    for tx, rx, values in measurements:
        tx = np.asarray(tx, dtype=complex)
        rx = np.asarray(rx, dtype=complex)
        if tx.ndim == 1:
            tx = tx[:, None]
        if rx.ndim == 1:
            rx = rx[:, None]
        values = np.asarray(values, dtype=complex).reshape(rx.shape[1], tx.shape[1])
        v = a_tx.conj().T @ tx          # (n_aod, a)
        u = a_rx.conj().T @ rx          # (n_aoa, b)
        block = scale * np.einsum("ip,jq->pqij", u.conj(), v).reshape(
            rx.shape[1] * tx.shape[1], n_aoa * n_aod
        )
        design_blocks.append(block)
        rhs_blocks.append(values.ravel())
        n_obs += values.size
    if n_obs < n_aod * n_aoa:
        raise InsufficientMeasurementsError(
            f"{n_obs} observations cannot determine {n_aod * n_aoa} coupling entries"
        )
    design = np.vstack(design_blocks)
    rhs = np.concatenate(rhs_blocks)
    solution, *_ = np.linalg.lstsq(design, rhs, rcond=rcond)
    rhs_norm = np.linalg.norm(rhs)
    residual = float(np.linalg.norm(design @ solution - rhs) / rhs_norm) if rhs_norm > 0 else 0.0
    coupling = solution.reshape(n_aoa, n_aod).conj().T
    return coupling, residual


def _merge_frequencies(detections, tol: float, cap: int, floor: float) -> np.ndarray:
    # detections: iterable of (frequency, weight).  Greedily open a cluster
    # per detection (heaviest first) that is at least tol away from every
    # existing cluster; later detections inside tol refine their cluster's
    # center as a weighted mean.  Detections far below the strongest one
    # are noise artifacts and are dropped outright.
    detections = sorted(detections, key=lambda d: -d[1])
    if not detections:
        return np.empty(0)
    weight_floor = floor * detections[0][1]
    centers = []   # weighted mean frequency per cluster
    anchors = []   # strongest detection per cluster, fixes the gate position
    masses = []
    for freq, weight in detections:
        if weight < weight_floor:
            break
        gaps = [abs(freq - a) for a in anchors]
        if gaps and min(gaps) <= tol:
            i = int(np.argmin(gaps))
            masses[i] += weight
            centers[i] += (freq - centers[i]) * weight / masses[i]
        elif len(anchors) < cap:
            anchors.append(freq)
            centers.append(freq)
            masses.append(weight)
    return np.asarray(centers)


def _freq_to_angle(freqs: np.ndarray, spacing: float) -> np.ndarray:
    sines = np.clip(freqs / spacing, -1.0, 1.0)
    return np.mod(np.arcsin(sines), 2.0 * np.pi)


def _dominant_pairs(coupling: np.ndarray):
    # The strongest min(shape) coupling entries; a departure or arrival
    # direction may appear in several pairs (two paths can share one end).
    n_pairs = min(coupling.shape)
    magnitude = np.abs(coupling)
    flat_order = np.argsort(-magnitude, axis=None, kind="stable")
    return [tuple(int(v) for v in np.unravel_index(k, coupling.shape))
            for k in flat_order[:n_pairs]]


def estimate_channel(
    oracle: ChannelOracle,
    tx_geom: ArrayGeometry,
    rx_geom: ArrayGeometry,
    cfg: EstimationConfig,
) -> EstimationReport:
    """Run the full three-phase pipeline against a measurement oracle.

    Phase 1 sweeps ``l_ma * l_sm`` coarse beam pairs; the report keeps
    the best ``keep`` pairs.  Phase 2 takes one receive-array snapshot
    for each of the ``keep`` strongest distinct transmit beams and
    merges the line-spectral arrival directions.  Phase 3 transmits
    back along each merged arrival direction and merges the departure
    directions the same way.  A joint least-squares fit recovers the
    coupling gains; the dominant entries become the path estimate and
    the channel is rebuilt from them.

    Raises
    ------
    EstimationFailedError
        If no beam pair or no direction survives a phase.
    """
    n_tx, n_rx = tx_geom.n_elements, rx_geom.n_elements
    tx_cb = dft_codebook(tx_geom, cfg.l_ma)
    rx_cb = dft_codebook(rx_geom, cfg.l_sm)

    sweep_power = np.abs(oracle.observe(tx_cb.beams, rx_cb.beams)) ** 2
    report = _top_pairs(sweep_power, cfg.keep)
    slots_phase1 = cfg.l_ma * cfg.l_sm
    if not report.pairs:
        raise EstimationFailedError("coarse sweep produced an empty beam report")

    rx_tol = cfg.merge_tol if cfg.merge_tol is not None else 0.25 / n_rx
    rx_order = min(cfg.max_paths, n_rx // 2)
    rx_detections = []
    phase2_measurements = []
    slots_phase2 = 0
    for tx_idx in _top_tx_beams(sweep_power, cfg.keep):
        beam = tx_cb.beams[:, tx_idx]
        snapshot, slots = _rx_snapshot(oracle, beam, n_rx, cfg.n_bb_sm)
        slots_phase2 += slots
        spectrum = line_spectrum_estimate(snapshot, rx_order, cfg.rank_threshold)
        rx_detections.extend(zip(spectrum.frequencies, np.abs(spectrum.coefficients)))
        phase2_measurements.append((beam, np.eye(n_rx, dtype=complex), snapshot.reshape(n_rx, 1)))
    rx_freqs = _merge_frequencies(rx_detections, rx_tol, cfg.max_paths, cfg.rank_threshold)
    if rx_freqs.size == 0:
        raise EstimationFailedError("no arrival directions detected")
    aoas = _freq_to_angle(rx_freqs, rx_geom.spacing)

    tx_tol = cfg.merge_tol if cfg.merge_tol is not None else 0.25 / n_tx
    tx_order = min(cfg.max_paths, n_tx // 2)
    tx_detections = []
    phase3_measurements = []
    slots_phase3 = 0
    for aoa in aoas:
        back_beam = steering_vector(rx_geom, aoa)
        raw, slots = _tx_snapshot(oracle, back_beam, n_tx, cfg.n_bb_ma)
        slots_phase3 += slots
        spectrum = line_spectrum_estimate(raw.conj(), tx_order, cfg.rank_threshold)
        tx_detections.extend(zip(spectrum.frequencies, np.abs(spectrum.coefficients)))
        phase3_measurements.append((np.eye(n_tx, dtype=complex), back_beam, raw.reshape(1, n_tx)))
    tx_freqs = _merge_frequencies(tx_detections, tx_tol, cfg.max_paths, cfg.rank_threshold)
    if tx_freqs.size == 0:
        raise EstimationFailedError("no departure directions detected")
    aods = _freq_to_angle(tx_freqs, tx_geom.spacing)

    coupling, gain_residual = estimate_gains(
        phase2_measurements + phase3_measurements, aods, aoas, tx_geom, rx_geom, cfg.path_loss
    )
    pairs = _dominant_pairs(coupling)
    paths = PathSet(
        gains=np.array([coupling[i, j] for i, j in pairs]),
        aods=np.array([aods[i] for i, _ in pairs]),
        aoas=np.array([aoas[j] for _, j in pairs]),
        path_loss=cfg.path_loss,
    )
    reconstruction = assemble_channel(tx_geom, rx_geom, paths)
    return EstimationReport(
        aoas=aoas,
        aods=aods,
        gain_matrix=coupling,
        paired_paths=paths,
        training_slots_used=slots_phase1 + slots_phase2 + slots_phase3,
        reconstruction=reconstruction,
        beam_report=report,
        gain_residual=gain_residual,
        slots_phase1=slots_phase1,
        slots_phase2=slots_phase2,
        slots_phase3=slots_phase3,
    )
