"""Tests for the periodic-crystal data model and geometry."""

import numpy as np
import pytest

from crysdiff.crystal import (
    Crystal,
    cart_to_frac,
    frac_to_cart,
    lattice_volume,
    min_image_distance,
    min_image_distance_matrix,
    periodic_diff,
    periodic_images,
    wrap,
)
from crysdiff.errors import DomainError, ShapeError, SingularLatticeError, SpeciesError


def random_lattice(rng, max_cond=10.0):
    """Well-conditioned random triclinic lattice."""
    while True:
        lengths = rng.uniform(2.0, 5.0, size=3)
        lattice = np.diag(lengths) + 0.4 * rng.uniform(-1.0, 1.0, size=(3, 3))
        if np.linalg.cond(lattice) < max_cond and abs(np.linalg.det(lattice)) > 0.5:
            return lattice


class TestWrap:
    def test_values(self):
        assert wrap(0.5) == 0.5
        assert wrap(1.25) == pytest.approx(0.25, abs=1e-15)
        assert wrap(-0.3) == pytest.approx(0.7, abs=1e-15)

    def test_idempotent_exactly(self):
        rng = np.random.default_rng(0)
        frac = rng.uniform(-5, 5, size=(3, 40))
        once = wrap(frac)
        np.testing.assert_array_equal(wrap(once), once)

    def test_range(self):
        rng = np.random.default_rng(1)
        out = wrap(rng.uniform(-100, 100, size=1000))
        assert np.all(out >= 0.0) and np.all(out < 1.0)
        # the rounding edge: 1 - tiny would round up to exactly 1.0
        assert wrap(-1e-18) == 0.0

    def test_non_finite_rejected(self):
        with pytest.raises(DomainError):
            wrap(np.array([0.1, np.nan]))
        with pytest.raises(DomainError):
            wrap(np.inf)


class TestFracCart:
    def test_identity_lattice(self):
        np.testing.assert_allclose(
            frac_to_cart(np.eye(3), [0.5, 0.5, 0.5]), [0.5, 0.5, 0.5]
        )

    def test_diagonal_scaling(self):
        np.testing.assert_allclose(
            frac_to_cart(np.diag([2.0, 2.0, 2.0]), [0.25, 0.0, 0.0]), [0.5, 0.0, 0.0]
        )

    def test_matches_explicit_matrix_product(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            lattice = random_lattice(rng)
            frac = rng.uniform(0, 1, size=3)
            expected = np.zeros(3)
            for i in range(3):
                for j in range(3):
                    expected[i] += lattice[i, j] * frac[j]
            np.testing.assert_allclose(frac_to_cart(lattice, frac), expected, atol=1e-12)

    def test_cart_to_frac_examples(self):
        np.testing.assert_allclose(cart_to_frac(np.eye(3), [0.3, 0.3, 0.3]), [0.3, 0.3, 0.3])
        np.testing.assert_allclose(
            cart_to_frac(np.diag([2.0, 2.0, 2.0]), [0.5, 0.0, 0.0]), [0.25, 0.0, 0.0]
        )

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            lattice = random_lattice(rng)
            frac = rng.uniform(0, 1, size=3)
            back = cart_to_frac(lattice, frac_to_cart(lattice, frac))
            np.testing.assert_allclose(back, wrap(frac), atol=1e-10)

    def test_singular_lattice_rejected(self):
        singular = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]])
        with pytest.raises(SingularLatticeError):
            cart_to_frac(singular, [0.1, 0.2, 0.3])


class TestPeriodicDiff:
    def test_examples(self):
        np.testing.assert_allclose(
            periodic_diff([0.1, 0, 0], [0.2, 0, 0]), [0.1, 0, 0], atol=1e-15
        )
        np.testing.assert_allclose(
            periodic_diff([0.9, 0, 0], [0.1, 0, 0]), [0.2, 0, 0], atol=1e-15
        )

    def test_defining_property(self):
        rng = np.random.default_rng(4)
        f_i = rng.uniform(0, 1, size=(3, 20))
        f_j = rng.uniform(0, 1, size=(3, 20))
        d = periodic_diff(f_i, f_j)
        assert np.all(d >= -0.5) and np.all(d < 0.5)
        np.testing.assert_allclose(wrap(f_i + d), f_j, atol=1e-12)

    def test_translation_invariance(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            f_i = rng.uniform(0, 1, size=3)
            f_j = rng.uniform(0, 1, size=3)
            shift = rng.uniform(-3, 3, size=3)
            base = periodic_diff(f_i, f_j)
            moved = periodic_diff(wrap(f_i + shift), wrap(f_j + shift))
            np.testing.assert_allclose(moved, base, atol=1e-12)


class TestMinImageDistance:
    def test_examples(self):
        assert min_image_distance(np.eye(3), [0.9, 0, 0], [0.1, 0, 0]) == pytest.approx(0.2)
        assert min_image_distance(np.diag([2.0, 2.0, 2.0]), [0.9, 0, 0], [0.1, 0, 0]) == pytest.approx(0.4)

    def test_against_wider_offset_brute_force(self):
        rng = np.random.default_rng(6)
        span = range(-2, 3)
        for _ in range(40):
            lattice = random_lattice(rng)
            f_i = rng.uniform(0, 1, size=3)
            f_j = rng.uniform(0, 1, size=3)
            best = np.inf
            for a in span:
                for b in span:
                    for c in span:
                        cart = lattice @ (f_j - f_i + np.array([a, b, c], dtype=float))
                        best = min(best, float(np.linalg.norm(cart)))
            got = min_image_distance(lattice, f_i, f_j)
            assert got == pytest.approx(best, abs=1e-12)

    def test_symmetry_translation_and_self(self):
        rng = np.random.default_rng(7)
        lattice = random_lattice(rng)
        f_i = rng.uniform(0, 1, size=3)
        f_j = rng.uniform(0, 1, size=3)
        shift = rng.uniform(-2, 2, size=3)
        d_ij = min_image_distance(lattice, f_i, f_j)
        assert d_ij == pytest.approx(min_image_distance(lattice, f_j, f_i), abs=1e-12)
        moved = min_image_distance(lattice, wrap(f_i + shift), wrap(f_j + shift))
        assert moved == pytest.approx(d_ij, abs=1e-12)
        assert min_image_distance(lattice, f_i, f_i) == 0.0

    def test_matrix_version_agrees(self):
        rng = np.random.default_rng(8)
        lattice = random_lattice(rng)
        frac = rng.uniform(0, 1, size=(3, 6))
        matrix = min_image_distance_matrix(lattice, frac)
        for i in range(6):
            for j in range(6):
                assert matrix[i, j] == pytest.approx(
                    min_image_distance(lattice, frac[:, i], frac[:, j]), abs=1e-12
                )


class TestPeriodicImages:
    def _crystal(self):
        return Crystal.from_species(
            [0, 1], np.array([[0.1, 0.2, 0.3], [0.6, 0.7, 0.8]]).T, np.diag([2.0, 3.0, 4.0])
        )

    def test_zero_range_returns_unit_cell(self):
        crystal = self._crystal()
        images = periodic_images(crystal, 0)
        assert len(images) == 2
        np.testing.assert_allclose(images[0][1], crystal.lattice @ crystal.frac_coords[:, 0])

    def test_single_atom_27_images(self):
        crystal = Crystal.from_species([0], np.array([[0.5, 0.5, 0.5]]).T, np.eye(3))
        images = periodic_images(crystal, 1)
        assert len(images) == 27

    def test_counts_and_uniqueness(self):
        crystal = self._crystal()
        images = periodic_images(crystal, 2)
        assert len(images) == 2 * 125
        keys = {(s, tuple(np.round(x, 9))) for s, x in images}
        assert len(keys) == len(images)

    def test_positions_match_hand_enumeration(self):
        crystal = self._crystal()
        images = periodic_images(crystal, 1)
        expected = set()
        base = crystal.lattice @ crystal.frac_coords
        for atom in range(2):
            for a in (-1, 0, 1):
                for b in (-1, 0, 1):
                    for c in (-1, 0, 1):
                        pos = base[:, atom] + crystal.lattice @ np.array([a, b, c], dtype=float)
                        expected.add((int(crystal.species[atom]), tuple(np.round(pos, 9))))
        got = {(s, tuple(np.round(x, 9))) for s, x in images}
        assert got == expected

    def test_negative_range_rejected(self):
        with pytest.raises(DomainError):
            periodic_images(self._crystal(), -1)


class TestLatticeVolume:
    def test_examples(self):
        assert lattice_volume(np.eye(3)) == 1.0
        assert lattice_volume(np.diag([2.0, 3.0, 4.0])) == pytest.approx(24.0)

    def test_against_cofactor_expansion(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            m = rng.uniform(-3, 3, size=(3, 3))
            det = (
                m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
                - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
                + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
            )
            assert lattice_volume(m) == pytest.approx(abs(det), abs=1e-12)


class TestCrystalInvariants:
    def test_valid_roundtrip(self):
        crystal = Crystal.from_species(
            [0, 1, 1], np.array([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6], [0.7, 0.8, 0.9]]).T, np.eye(3)
        )
        np.testing.assert_array_equal(crystal.species, [0, 1, 1])
        assert crystal.num_atoms == 3
        assert crystal.num_species == 2

    def test_bad_one_hot_rejected(self):
        bad = np.array([[1.0, 0.5], [0.0, 0.5]])
        with pytest.raises(SpeciesError):
            Crystal(bad, np.zeros((3, 2)), np.eye(3))

    def test_out_of_range_coords_rejected(self):
        with pytest.raises(DomainError):
            Crystal.from_species([0], np.array([[1.0, 0.0, 0.0]]).T, np.eye(3))
        with pytest.raises(DomainError):
            Crystal.from_species([0], np.array([[-0.1, 0.0, 0.0]]).T, np.eye(3))

    def test_degenerate_lattice_rejected(self):
        with pytest.raises(SingularLatticeError):
            Crystal.from_species([0], np.array([[0.1, 0.1, 0.1]]).T, np.zeros((3, 3)))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            Crystal.from_species([0, 1], np.zeros((3, 3)), np.eye(3))

    def test_arrays_read_only(self):
        crystal = Crystal.from_species([0], np.array([[0.1, 0.1, 0.1]]).T, np.eye(3))
        with pytest.raises(ValueError):
            crystal.frac_coords[0, 0] = 0.5

    def test_bad_species_index(self):
        with pytest.raises(SpeciesError):
            Crystal.from_species([0, 5], np.zeros((3, 2)), np.eye(3), num_species=3)
