"""Truncated Fourier representation of (quasi)periodic fields.

A d-dimensional quasiperiodic field is sampled as a slice of an
n-dimensional periodic field: every retained mode h (an integer n-vector)
carries the physical wavevector P @ B @ h, where B is the reciprocal basis
of the embedding lattice and P the projection matrix.  For periodic
crystals n == d and P is the identity, which reduces everything to a plain
Fourier spectral method on the unit cell.

Stored coefficients are true Fourier coefficients: the forward transform
divides by the number of collocation points, so quadratic spectral sums
equal grid averages of pointwise products (Parseval).  Mode storage is the
FFT frequency layout, row-major across dimensions; this order is also the
on-disk order of the field dump format.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

DUMP_MAGIC = b"MCPF"
DUMP_VERSION = 1

_DET_RTOL = 1e-12
_IMAG_RTOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Validated spectral grid: lattice geometry plus precomputed wavevectors.

    Immutable after construction; shareable across concurrent solves.
    """

    lattice_dim: int
    physical_dim: int
    mode_counts: tuple[int, ...]
    recip_basis: np.ndarray
    projection: np.ndarray
    # derived, filled in __post_init__
    wavevectors: np.ndarray = field(init=False, repr=False, compare=False)
    ksq: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        n, d = self.lattice_dim, self.physical_dim
        if n < 1 or d < 1 or d > n:
            raise ValueError(f"need 1 <= physical_dim <= lattice_dim, got d={d}, n={n}")
        if len(self.mode_counts) != n:
            raise ValueError(f"mode_counts must have {n} entries, got {len(self.mode_counts)}")
        for N in self.mode_counts:
            if N < 2 or N % 2 != 0:
                raise ValueError(f"mode counts must be even and >= 2, got {N}")
        B = np.asarray(self.recip_basis, dtype=float)
        if B.shape != (n, n):
            raise ValueError(f"recip_basis must be {n}x{n}, got {B.shape}")
        scale = np.linalg.norm(B, 2) ** n
        if abs(np.linalg.det(B)) <= _DET_RTOL * max(scale, 1e-300):
            raise ValueError("recip_basis is singular (|det B| below tolerance)")
        P = np.asarray(self.projection, dtype=float)
        if P.shape != (d, n):
            raise ValueError(f"projection must be {d}x{n}, got {P.shape}")
        sv = np.linalg.svd(P, compute_uv=False)
        if sv[-1] <= 1e-12 * sv[0]:
            raise ValueError("projection matrix is rank deficient")
        object.__setattr__(self, "recip_basis", B)
        object.__setattr__(self, "projection", P)
        object.__setattr__(self, "mode_counts", tuple(int(N) for N in self.mode_counts))

        # integer frequencies in FFT layout, one axis per lattice dimension
        freqs = [np.rint(np.fft.fftfreq(N) * N).astype(int) for N in self.mode_counts]
        h = np.stack(np.meshgrid(*freqs, indexing="ij"), axis=-1)  # (*modes, n)
        k = h @ (P @ B).T  # (*modes, d)
        object.__setattr__(self, "wavevectors", k)
        object.__setattr__(self, "ksq", np.sum(k * k, axis=-1))

    @property
    def size(self) -> int:
        return int(np.prod(self.mode_counts))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.mode_counts

    def mode_in_range(self, h) -> bool:
        h = np.asarray(h, dtype=int)
        if h.shape != (self.lattice_dim,):
            return False
        return all(-N // 2 <= hl < N // 2 for hl, N in zip(h, self.mode_counts))

    def flat_index(self, h) -> tuple[int, ...]:
        """Array index of mode h in the FFT frequency layout."""
        if not self.mode_in_range(h):
            raise ValueError(f"mode {tuple(h)} outside truncation range")
        return tuple(int(hl) % N for hl, N in zip(h, self.mode_counts))


def make_grid(n: int, d: int, mode_counts, B, P) -> GridSpec:
    """Build and validate a GridSpec; wavevectors P@B@h are precomputed."""
    return GridSpec(
        lattice_dim=int(n),
        physical_dim=int(d),
        mode_counts=tuple(int(N) for N in mode_counts),
        recip_basis=np.asarray(B, dtype=float),
        projection=np.asarray(P, dtype=float),
    )


def wavevector(grid: GridSpec, h) -> np.ndarray:
    """Physical wavevector P @ B @ h of a single mode."""
    if not grid.mode_in_range(h):
        raise ValueError(f"mode {tuple(np.asarray(h))} outside truncation range")
    return grid.projection @ grid.recip_basis @ np.asarray(h, dtype=float)


@dataclass(frozen=True)
class DiagonalOperator:
    """Diagonal differential operator in mode space, entries >= 0."""

    entries: np.ndarray
    grid: GridSpec


def build_diag_operator(grid: GridSpec, q: float, c: float) -> DiagonalOperator:
    """Entries c * (q^2 - |P B h|^2)^2 over all retained modes.

    A Nyquist index (-N/2) has no sign-flipped partner on the grid, so with a
    projection whose Gram matrix has cross terms, raw entries at conjugate-paired
    indices can disagree.  Averaging each entry with its conjugate partner's makes
    the operator even under conjugation: on Hermitian fields the quadratic energy
    is unchanged, and its gradient d * coeffs becomes exact at every mode.
    """
    if q <= 0:
        raise ValueError(f"length scale q must be positive, got {q}")
    if c <= 0:
        raise ValueError(f"operator scale c must be positive, got {c}")
    raw = c * (q * q - grid.ksq) ** 2
    entries = 0.5 * (raw + raw[_reflect_indices(raw.shape)])
    return DiagonalOperator(entries=entries, grid=grid)


@dataclass
class SpectralField:
    """Truncated Fourier coefficients of one order parameter."""

    coeffs: np.ndarray
    grid: GridSpec

    def copy(self) -> "SpectralField":
        return SpectralField(self.coeffs.copy(), self.grid)

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.coeffs) ** 2))


def zero_field(grid: GridSpec) -> SpectralField:
    return SpectralField(np.zeros(grid.shape, dtype=complex), grid)


def _reflect_indices(shape):
    return np.ix_(*[np.concatenate(([0], np.arange(N - 1, 0, -1))) for N in shape])


def conj_reflect(coeffs: np.ndarray) -> np.ndarray:
    """conj(coeffs(-h)) laid out at h; identity for Hermitian arrays."""
    return np.conj(coeffs[_reflect_indices(coeffs.shape)])


def hermitian_symmetrize(coeffs: np.ndarray) -> np.ndarray:
    """Project onto the Hermitian subspace (real physical field)."""
    return 0.5 * (coeffs + conj_reflect(coeffs))


def hermitian_defect(coeffs: np.ndarray) -> float:
    return float(np.max(np.abs(coeffs - conj_reflect(coeffs))))


def hermitian_expand(half: np.ndarray, shape) -> np.ndarray:
    """Full coefficient array from a real-FFT half-spectrum (last axis 0..N/2)."""
    shape = tuple(shape)
    last = shape[-1] // 2 + 1
    if half.shape != shape[:-1] + (last,):
        raise ValueError(f"half-spectrum shape {half.shape} does not match grid shape {shape}")
    out = np.empty(shape, dtype=complex)
    out[..., :last] = half
    rev = np.ix_(
        *[np.concatenate(([0], np.arange(N - 1, 0, -1))) for N in shape[:-1]],
        np.arange(last - 2, 0, -1),
    )
    out[..., last:] = np.conj(half[rev])
    return out


def to_physical(fld: SpectralField) -> np.ndarray:
    """Synthesize real collocation values; coefficients carry no FFT scale."""
    vals = np.fft.ifftn(fld.coeffs) * fld.grid.size
    residue = float(np.max(np.abs(vals.imag)))
    tol = _IMAG_RTOL * (1.0 + float(np.max(np.abs(vals.real))))
    if residue > tol:
        raise ValueError(
            f"imaginary residue {residue:.3e} exceeds tolerance {tol:.3e}; "
            "Hermitian symmetry is broken"
        )
    return vals.real.copy()


def to_spectral(values: np.ndarray, grid: GridSpec) -> SpectralField:
    """Analyze real collocation values into Fourier coefficients."""
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise ValueError(f"value grid {values.shape} does not match mode counts {grid.shape}")
    return SpectralField(np.fft.fftn(values) / grid.size, grid)


def project_zero_mean(fld: SpectralField) -> SpectralField:
    """Zero the DC coefficient; all other modes unchanged."""
    out = fld.coeffs.copy()
    out[(0,) * fld.grid.lattice_dim] = 0.0
    return SpectralField(out, fld.grid)


def inner(u: SpectralField, v: SpectralField) -> float:
    """Real part of the coefficient inner product sum_h conj(u_h) v_h."""
    if u.grid is not v.grid and u.grid != v.grid:
        raise ValueError("fields live on different grids")
    return float(np.real(np.vdot(u.coeffs, v.coeffs)))


def random_field(grid: GridSpec, rng: np.random.Generator, amplitude: float = 0.1) -> SpectralField:
    """Random zero-mean Hermitian field, for tests and gradient checks."""
    vals = rng.standard_normal(grid.shape) * amplitude
    return project_zero_mean(to_spectral(vals, grid))


# ---------------------------------------------------------------------------
# field dump format (binary, little-endian): magic "MCPF", version u32,
# n, d, s u32, mode_counts (n x u32), per component interleaved re/im f64
# in the documented row-major FFT mode order.
# ---------------------------------------------------------------------------


def write_field_dump(path, components: list[SpectralField]) -> None:
    if not components:
        raise ValueError("nothing to dump")
    grid = components[0].grid
    with open(path, "wb") as fh:
        fh.write(DUMP_MAGIC)
        fh.write(struct.pack("<IIII", DUMP_VERSION, grid.lattice_dim, grid.physical_dim, len(components)))
        fh.write(struct.pack(f"<{grid.lattice_dim}I", *grid.mode_counts))
        for comp in components:
            flat = np.ascontiguousarray(comp.coeffs, dtype=np.complex128).ravel()
            buf = np.empty(2 * flat.size, dtype="<f8")
            buf[0::2] = flat.real
            buf[1::2] = flat.imag
            fh.write(buf.tobytes())


def read_field_dump(path):
    """Return (header dict, list of complex coefficient arrays)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != DUMP_MAGIC:
            raise ValueError(f"bad magic {magic!r}; not a field dump")
        version, n, d, s = struct.unpack("<IIII", fh.read(16))
        if version != DUMP_VERSION:
            raise ValueError(f"unsupported dump version {version}")
        mode_counts = struct.unpack(f"<{n}I", fh.read(4 * n))
        size = int(np.prod(mode_counts))
        comps = []
        for _ in range(s):
            raw = np.frombuffer(fh.read(16 * size), dtype="<f8")
            comps.append((raw[0::2] + 1j * raw[1::2]).reshape(mode_counts))
    header = {"version": version, "n": n, "d": d, "s": s, "mode_counts": mode_counts}
    return header, comps
