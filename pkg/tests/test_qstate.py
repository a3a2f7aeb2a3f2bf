import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import conjugate_loops, random_density_matrix
from polcap.qstate import (
    LABELS,
    SINGLET_KET,
    InvalidStateError,
    PolarizationUnitary,
    TwoQubitState,
    apply_collective,
    half_wave_plate,
    haar_su2,
    haar_unitary,
    load_state,
    make_named_state,
    matrix_from_json,
    matrix_to_json,
    maximally_mixed,
    named_ket,
    save_state,
    singlet_fidelity,
    trace_distance,
    von_neumann_entropy,
    werner_state,
)


class TestNamedStates:
    def test_singlet_matrix(self):
        m = make_named_state("singlet").matrix
        expected = np.zeros((4, 4))
        expected[1, 1] = expected[2, 2] = 0.5
        expected[1, 2] = expected[2, 1] = -0.5
        np.testing.assert_allclose(m, expected, atol=1e-15)

    def test_parallel_matrix(self):
        expected = np.zeros((4, 4))
        expected[0, 0] = 1
        np.testing.assert_array_equal(make_named_state("parallel").matrix, expected)

    def test_triplet_plus_matrix(self):
        expected = np.zeros((4, 4))
        expected[0, 0] = expected[3, 3] = expected[0, 3] = expected[3, 0] = 0.5
        np.testing.assert_allclose(make_named_state("triplet-plus").matrix, expected, atol=1e-15)

    def test_orthogonal_matrix(self):
        expected = np.zeros((4, 4))
        expected[1, 1] = 1
        np.testing.assert_array_equal(make_named_state("orthogonal").matrix, expected)

    @pytest.mark.parametrize("label", LABELS)
    def test_fidelity_one_with_constructed_ket(self, label):
        ket = named_ket(label)
        rho = make_named_state(label).matrix
        assert np.real(ket.conj() @ rho @ ket) == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("label", LABELS)
    def test_bitwise_repeatable(self, label):
        a = make_named_state(label).matrix
        b = make_named_state(label).matrix
        assert a.tobytes() == b.tobytes()

    def test_unknown_label(self):
        with pytest.raises(InvalidStateError, match="unknown state label"):
            make_named_state("horizontal")

    def test_matrix_is_read_only(self):
        m = make_named_state("singlet").matrix
        with pytest.raises(ValueError):
            m[0, 0] = 1


class TestValidation:
    def test_rejects_non_hermitian(self):
        m = np.eye(4) / 4
        m = m.astype(complex)
        m[0, 1] = 0.1
        with pytest.raises(InvalidStateError, match="Hermitian"):
            TwoQubitState(m)

    def test_rejects_bad_trace(self):
        with pytest.raises(InvalidStateError, match="trace"):
            TwoQubitState(np.eye(4) / 2)

    def test_rejects_negative_eigenvalue(self):
        with pytest.raises(InvalidStateError, match="semidefinite"):
            TwoQubitState(np.diag([0.6, 0.5, 0.1, -0.2]))

    def test_rejects_shape(self):
        with pytest.raises(InvalidStateError, match="4x4"):
            TwoQubitState(np.eye(2) / 2)

    def test_singlet_fidelity_validates_raw_input(self):
        with pytest.raises(InvalidStateError):
            singlet_fidelity(np.eye(4))

    def test_non_unitary(self):
        with pytest.raises(InvalidStateError, match="unitary"):
            PolarizationUnitary(np.array([[1, 0], [0, 2]]))


class TestSingletFidelity:
    @pytest.mark.parametrize(
        "label, expected",
        [("singlet", 1.0), ("parallel", 0.0), ("orthogonal", 0.5), ("triplet-plus", 0.0)],
    )
    def test_named(self, label, expected):
        assert singlet_fidelity(make_named_state(label)) == pytest.approx(expected, abs=1e-15)

    def test_maximally_mixed(self):
        assert singlet_fidelity(maximally_mixed()) == pytest.approx(0.25, abs=1e-15)


class TestCollective:
    def test_identity_is_exact(self, rng):
        rho = TwoQubitState(random_density_matrix(rng))
        out = apply_collective(rho, np.eye(2))
        np.testing.assert_array_equal(out.matrix, rho.matrix)

    def test_half_wave_plate_swaps_parallel(self):
        # explicit index-loop oracle for the 4x4 conjugation
        hwp = half_wave_plate(np.pi / 4)
        rho = make_named_state("parallel").matrix
        expected = conjugate_loops(hwp.matrix, rho)
        out = apply_collective(rho, hwp).matrix
        np.testing.assert_allclose(out, expected, atol=1e-14)
        aa = np.zeros((4, 4))
        aa[3, 3] = 1
        assert np.max(np.abs(out - aa)) < 1e-12

    def test_matches_loop_oracle_random(self, rng):
        rho = random_density_matrix(rng)
        u = haar_su2(rng)
        np.testing.assert_allclose(apply_collective(rho, u).matrix, conjugate_loops(u, rho), atol=1e-13)

    def test_singlet_invariant(self, rng):
        s = make_named_state("singlet")
        for _ in range(200):
            out = apply_collective(s, haar_unitary(rng))
            assert singlet_fidelity(out) >= 1 - 1e-12

    def test_chained_preserves_invariants(self, rng):
        rho = TwoQubitState(random_density_matrix(rng, rank=3))
        f0 = singlet_fidelity(rho)
        lam0 = np.linalg.eigvalsh(rho.matrix)
        s0 = von_neumann_entropy(rho)
        out = rho
        for _ in range(1000):
            out = apply_collective(out, haar_unitary(rng))
        m = out.matrix
        assert abs(singlet_fidelity(out) - f0) < 1e-10
        assert abs(np.trace(m) - 1) < 1e-10
        assert np.max(np.abs(m - m.conj().T)) < 1e-10
        np.testing.assert_allclose(np.linalg.eigvalsh(m), lam0, atol=1e-10)
        assert abs(von_neumann_entropy(out) - s0) < 1e-10
        TwoQubitState(m)  # still passes full validation


class TestEntropy:
    def test_pure(self):
        assert von_neumann_entropy(make_named_state("singlet")) == pytest.approx(0.0, abs=1e-12)

    def test_maximally_mixed(self):
        assert von_neumann_entropy(maximally_mixed()) == pytest.approx(2.0, abs=1e-12)

    def test_half_singlet_half_triplet(self):
        # spectrum {1/2, 1/6, 1/6, 1/6}
        expected = 0.5 + 0.5 * np.log2(6)
        assert expected == pytest.approx(1.7924812503605781, abs=1e-15)
        assert von_neumann_entropy(werner_state(0.5)) == pytest.approx(expected, abs=1e-12)


class TestHaar:
    def test_su2(self, rng):
        u = haar_su2(rng, 500)
        eye = np.einsum("nji,njk->nik", u.conj(), u)
        assert np.max(np.abs(eye - np.eye(2))) < 1e-12
        np.testing.assert_allclose(np.linalg.det(u), 1.0, atol=1e-12)

    def test_moments(self, rng):
        # Haar on SU(2): E|U_00|^2 = 1/2, E|U_00|^4 = 1/3, E U_00 = 0
        u = haar_su2(rng, 200_000)
        x = np.abs(u[:, 0, 0]) ** 2
        assert x.mean() == pytest.approx(0.5, abs=0.005)
        assert (x**2).mean() == pytest.approx(1 / 3, abs=0.005)
        assert abs(u[:, 0, 0].mean()) < 0.005


class TestTraceDistance:
    def test_orthogonal_pure_states(self):
        assert trace_distance(make_named_state("parallel"), make_named_state("orthogonal")) == pytest.approx(1.0)

    def test_self(self, rng):
        rho = random_density_matrix(rng)
        assert trace_distance(rho, rho) == 0.0


class TestJsonIO:
    def test_roundtrip(self, rng, tmp_path):
        rho = TwoQubitState(random_density_matrix(rng))
        path = tmp_path / "rho.json"
        save_state(rho, path)
        data = json.loads(path.read_text())
        assert len(data) == 4 and len(data[0]) == 4 and len(data[0][0]) == 2
        np.testing.assert_array_equal(load_state(path).matrix, rho.matrix)

    def test_bad_shape(self):
        with pytest.raises(InvalidStateError, match="4x4"):
            matrix_from_json([[1, 0], [0, 1]])

    def test_invalid_state_named(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(matrix_to_json(np.eye(4))))
        with pytest.raises(InvalidStateError, match="trace"):
            load_state(path)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-1, 1, allow_nan=False), min_size=8, max_size=8),
    st.integers(0, 2**32 - 1),
)
def test_collective_preserves_singlet_weight_property(coeffs, seed):
    ket = np.array(coeffs[:4]) + 1j * np.array(coeffs[4:])
    if np.linalg.norm(ket) < 1e-3:
        return
    rho = TwoQubitState.from_ket(ket)
    u = haar_su2(np.random.default_rng(seed))
    out = apply_collective(rho, u)
    assert abs(singlet_fidelity(out) - singlet_fidelity(rho)) < 1e-10
    assert abs(abs(SINGLET_KET.conj() @ ket) ** 2 / np.vdot(ket, ket).real - singlet_fidelity(rho)) < 1e-12
