"""Periodic-crystal data model and geometry.

A crystal is a triple (atom_types, frac_coords, lattice): one-hot species
columns, fractional coordinates on the unit torus, and a 3x3 lattice matrix
whose *columns* are the basis vectors.  All operations here are pure
functions on immutable values and safe to call from any thread.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError, SingularLatticeError, SpeciesError

# Singularity threshold for lattice inversion (double-precision safety margin).
DET_EPS = 1e-10

# Integer offsets used by the minimum-image search; valid for reasonably
# reduced cells.  Tests bound the error against a wider {-2..2}^3 search.
_MIC_OFFSETS = np.array(
    [(i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1)],
    dtype=float,
)


def wrap(frac):
    """Map coordinates to the unit torus: frac - floor(frac), entries in [0, 1).

    Idempotent.  Raises DomainError on non-finite input.
    """
    frac = np.asarray(frac, dtype=float)
    if not np.all(np.isfinite(frac)):
        raise DomainError("wrap: non-finite fractional coordinates")
    out = frac - np.floor(frac)
    # Guard the floating-point edge where 1 - eps rounds up to exactly 1.0.
    return np.where(out >= 1.0, out - 1.0, out)


def frac_to_cart(lattice, frac):
    """Cartesian position of a fractional point: x = L @ f."""
    lattice = np.asarray(lattice, dtype=float)
    frac = np.asarray(frac, dtype=float)
    if not np.all(np.isfinite(frac)):
        raise DomainError("frac_to_cart: non-finite fractional coordinates")
    return lattice @ frac


def cart_to_frac(lattice, cart):
    """Fractional coordinates of a Cartesian point, wrapped onto [0, 1)^3.

    Raises SingularLatticeError when |det L| <= DET_EPS.
    """
    lattice = np.asarray(lattice, dtype=float)
    cart = np.asarray(cart, dtype=float)
    det = np.linalg.det(lattice)
    if abs(det) <= DET_EPS:
        raise SingularLatticeError(f"lattice is singular (|det| = {abs(det):.3e})")
    return wrap(np.linalg.solve(lattice, cart))


def periodic_diff(f_i, f_j):
    """Canonical wrapped difference d with wrap(f_i + d) = f_j, entries in [-0.5, 0.5)."""
    f_i = np.asarray(f_i, dtype=float)
    f_j = np.asarray(f_j, dtype=float)
    return wrap(f_j - f_i + 0.5) - 0.5


def min_image_distance(lattice, f_i, f_j):
    """Minimum-image Cartesian distance between two fractional points.

    Searches offsets in {-1, 0, 1}^3; adequate for reduced cells.
    """
    lattice = np.asarray(lattice, dtype=float)
    d = np.asarray(f_j, dtype=float) - np.asarray(f_i, dtype=float)
    cand = (d[None, :] + _MIC_OFFSETS) @ lattice.T
    return float(np.min(np.linalg.norm(cand, axis=1)))


def min_image_distance_matrix(lattice, frac_coords):
    """All-pairs minimum-image distances for frac_coords of shape (3, N).

    Returns an (N, N) symmetric matrix with zero diagonal.
    """
    lattice = np.asarray(lattice, dtype=float)
    pts = np.asarray(frac_coords, dtype=float).T  # (N, 3)
    diff = pts[None, :, :] - pts[:, None, :]  # diff[i, j] = f_j - f_i
    cand = diff[:, :, None, :] + _MIC_OFFSETS[None, None, :, :]
    cart = cand @ lattice.T
    return np.min(np.linalg.norm(cart, axis=-1), axis=-1)


def lattice_volume(lattice):
    """Unit-cell volume |det L|."""
    return float(abs(np.linalg.det(np.asarray(lattice, dtype=float))))


@dataclass(frozen=True)
class Crystal:
    """Unit cell: one-hot species (h x N), fractional coordinates (3 x N), lattice (3 x 3).

    Lattice basis vectors are the *columns* of `lattice`, so frac -> cart is a
    plain matrix-vector product.
    """

    atom_types: np.ndarray
    frac_coords: np.ndarray
    lattice: np.ndarray

    def __post_init__(self):
        atom_types = np.asarray(self.atom_types, dtype=float)
        frac = np.asarray(self.frac_coords, dtype=float)
        lattice = np.asarray(self.lattice, dtype=float)
        if atom_types.ndim != 2:
            raise ShapeError("atom_types must be a (num_species, N) matrix")
        if frac.ndim != 2 or frac.shape[0] != 3:
            raise ShapeError("frac_coords must be a (3, N) matrix")
        if lattice.shape != (3, 3):
            raise ShapeError("lattice must be a 3x3 matrix")
        if atom_types.shape[1] != frac.shape[1]:
            raise ShapeError("atom_types and frac_coords disagree on atom count")
        if not np.all(np.isfinite(atom_types)):
            raise SpeciesError("atom_types contains non-finite entries")
        one_hot_ok = (
            np.all((atom_types == 0.0) | (atom_types == 1.0))
            and np.all(atom_types.sum(axis=0) == 1.0)
        )
        if not one_hot_ok:
            raise SpeciesError("atom_types columns must be one-hot")
        if not np.all(np.isfinite(frac)):
            raise DomainError("frac_coords contains non-finite entries")
        if np.any(frac < 0.0) or np.any(frac >= 1.0):
            raise DomainError("frac_coords entries must lie in [0, 1)")
        if not np.all(np.isfinite(lattice)):
            raise DomainError("lattice contains non-finite entries")
        if abs(np.linalg.det(lattice)) == 0.0:
            raise SingularLatticeError("lattice is degenerate (det = 0)")
        for name, arr in (("atom_types", atom_types), ("frac_coords", frac), ("lattice", lattice)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def from_species(cls, species, frac_coords, lattice, num_species=None):
        """Build a crystal from integer species indices instead of one-hot columns."""
        species = np.asarray(species, dtype=int)
        if species.ndim != 1:
            raise ShapeError("species must be a 1-D index array")
        if num_species is None:
            num_species = int(species.max()) + 1 if species.size else 0
        if species.size and (species.min() < 0 or species.max() >= num_species):
            raise SpeciesError(
                f"species indices must lie in [0, {num_species}), got "
                f"[{species.min()}, {species.max()}]"
            )
        one_hot = np.zeros((num_species, species.size))
        one_hot[species, np.arange(species.size)] = 1.0
        return cls(one_hot, frac_coords, lattice)

    @property
    def num_atoms(self) -> int:
        return self.frac_coords.shape[1]

    @property
    def num_species(self) -> int:
        return self.atom_types.shape[0]

    @property
    def species(self) -> np.ndarray:
        """Integer species index per atom."""
        return np.argmax(self.atom_types, axis=0)


def periodic_images(crystal: Crystal, k_range: int):
    """All atom images x_i + L @ k for k in {-k_range..k_range}^3.

    Returns a list of (species_index, cartesian_position) in deterministic
    atom-major, lexicographic-k order; exactly N * (2*k_range + 1)^3 entries.
    """
    if k_range < 0:
        raise DomainError("k_range must be >= 0")
    span = range(-k_range, k_range + 1)
    shifts = np.array([(i, j, k) for i in span for j in span for k in span], dtype=float)
    base = crystal.lattice @ crystal.frac_coords  # (3, N)
    species = crystal.species
    images = []
    for atom in range(crystal.num_atoms):
        positions = base[:, atom][None, :] + shifts @ crystal.lattice.T
        for row in positions:
            images.append((int(species[atom]), row.copy()))
    return images
