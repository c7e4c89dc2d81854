import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from weylstrip import (PotentialProfile, PropagationError, Signature, TimeTrace,
                       assemble_V, build_F, build_G, h_form, propagate_R,
                       propagate_u)

from conftest import complex_matrices

SIG = Signature(1, 1)


class TestAssembleV:
    def test_zero(self):
        assert np.all(assemble_V(np.zeros((1, 1)), SIG) == 0)

    def test_scalar_one(self):
        V = assemble_V(np.array([[1.0]]), SIG)
        assert np.array_equal(V, np.array([[0, 1], [1, 0]], dtype=complex))

    def test_imaginary_entry_hermitian(self):
        V = assemble_V(np.array([[1j]]), SIG)
        assert np.array_equal(V, np.array([[0, 1j], [-1j, 0]]))
        assert np.array_equal(V, V.conj().T)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            assemble_V(np.zeros((2, 1)), SIG)

    @given(complex_matrices(2, 3))
    def test_hermitian_and_anticommutes(self, v):
        sig = Signature(2, 3)
        V = assemble_V(v, sig)
        assert np.allclose(V, V.conj().T)
        assert np.allclose(sig.j @ V + V @ sig.j, 0.0)


class TestBuildG:
    def test_zero_potential(self):
        G = build_G(1j, np.zeros((1, 1)), SIG)
        assert np.allclose(G, np.diag([-1.0, 1.0]))

    def test_zero_z(self):
        G = build_G(0.0, np.array([[1.0]]), SIG)
        assert np.allclose(G, np.array([[0, 1j], [-1j, 0]]))

    def test_sum_case(self):
        G = build_G(1j, np.array([[1.0]]), SIG)
        assert np.allclose(G, np.array([[-1, 1j], [-1j, 1]]))


class TestBuildF:
    def test_zero_potential(self):
        F = build_F(1j, np.zeros((1, 1)), np.zeros((1, 1)), SIG)
        assert np.allclose(F, np.diag([1j, -1j]))

    def test_zero_z_reduces_to_cubic_block(self):
        # F(0) = -(i/2) j V^2; for scalar v = 1 this is diag(-i/2, i/2)
        F = build_F(0.0, np.array([[1.0]]), np.zeros((1, 1)), SIG)
        assert np.allclose(F, np.diag([-0.5j, 0.5j]))

    @given(complex_matrices(2, 1), complex_matrices(2, 1),
           st.floats(-2, 2, allow_nan=False), st.floats(0, 2, allow_nan=False))
    def test_adjoint_identity(self, v, v_x, re, im):
        # F* j + j F = i(conj(z) - z) ((z + conj(z)) I + V)
        sig = Signature(2, 1)
        z = complex(re, im)
        F = build_F(z, v, v_x, sig)
        j = sig.j
        lhs = F.conj().T @ j + j @ F
        rhs = 1j * (z.conjugate() - z) * (
            (z + z.conjugate()) * np.eye(3) + assemble_V(v, sig))
        assert np.allclose(lhs, rhs, atol=1e-12)


class TestHForm:
    def test_identity(self):
        assert np.array_equal(h_form(np.eye(2, dtype=complex), SIG), SIG.j)

    def test_diagonal(self):
        H = h_form(np.diag([np.exp(-1), np.exp(1)]).astype(complex), SIG)
        assert np.allclose(H, np.diag([np.exp(-2), -np.exp(2)]))

    @given(complex_matrices(3, 3))
    def test_hermitian(self, a):
        H = h_form(a, Signature(2, 1))
        assert np.abs(H - H.conj().T).max() < 1e-14


class TestPropagateU:
    def test_zero_potential_diagonal(self):
        s = propagate_u(PotentialProfile.zero(SIG), 1j, (0.0, 1.0), 1e-12, n_points=5)
        assert np.abs(s.values[-1] - np.diag([np.exp(-1), np.exp(1)])).max() < 1e-12
        assert np.array_equal(s.values[0], np.eye(2))

    def test_constant_potential_matches_expm(self):
        prof = PotentialProfile.constant([[1.0]])
        z = 0.75j
        s = propagate_u(prof, z, (0.0, 1.0), 1e-11, n_points=3)
        exact = expm(build_G(z, np.array([[1.0]]), SIG))
        assert np.abs(s.values[-1] - exact).max() < 1e-9

    def test_j_unitary_at_real_z(self):
        prof = PotentialProfile.plane_wave([[0.3]], 1.0)
        tol = 1e-10
        s = propagate_u(prof, 1.0, (0.0, 10.0), tol, n_points=21)
        j = SIG.j
        for i in range(len(s)):
            u = s.values[i]
            assert np.linalg.norm(u.conj().T @ j @ u - j, 2) <= 100 * tol

    def test_loewner_monotone_for_upper_z(self):
        prof = PotentialProfile.plane_wave([[0.3]], 1.0)
        tol = 1e-8
        s = propagate_u(prof, 1j, (0.0, 6.0), tol, n_points=13)
        forms = [h_form(s.values[i], SIG) for i in range(len(s))]
        for a, b in zip(forms[:-1], forms[1:]):
            lam = np.linalg.eigvalsh(a - b)
            assert lam.min() >= -100 * tol

    def test_inverse_consistency(self):
        prof = PotentialProfile.plane_wave([[0.5]], 2.0)
        tol = 1e-9
        s = propagate_u(prof, 0.5 + 1j, (0.0, 8.0), tol, n_points=9)
        for i in range(len(s)):
            prod = s.values[i] @ s.inverse_values[i]
            target = np.exp(-2 * s.scale_log[i]) * np.eye(2)
            assert np.abs(prod - target).max() <= 100 * tol * max(1.0, np.abs(prod).max())

    def test_renormalization_triggers(self):
        prof = PotentialProfile.zero(SIG)
        s = propagate_u(prof, 4j, (0.0, 80.0), 1e-8, n_points=9)
        assert s.scale_log[-1] > 0.0
        assert np.abs(s.values[-1]).max() <= 1e100
        prod = s.values[-1] @ s.inverse_values[-1]
        # u w = exp(-2 * scale_log) I after the shared rescaling
        ratio = prod[1, 1] * np.exp(2 * s.scale_log[-1])
        assert abs(ratio - 1.0) < 1e-5

    def test_invalid_span(self):
        with pytest.raises(ValueError):
            propagate_u(PotentialProfile.zero(SIG), 1j, (1.0, 2.0))
        with pytest.raises(ValueError):
            propagate_u(PotentialProfile.zero(SIG), 1j, (0.0, 0.0))
        with pytest.raises(ValueError):
            propagate_u(PotentialProfile.zero(SIG), -1j, (0.0, 1.0))

    def test_sampled_profile_range_error(self):
        x = np.linspace(0, 1, 9)
        vals = np.zeros((9, 1, 1), dtype=complex)
        prof = PotentialProfile.sampled(x, vals)
        with pytest.raises((ValueError, PropagationError)):
            propagate_u(prof, 1j, (0.0, 2.0))


class TestPropagateR:
    def test_zero_trace_diagonal(self):
        z = 0.3 + 0.7j
        s = propagate_R(TimeTrace.zero(SIG), z, (0.0, 1.5), 1e-11, n_points=4)
        t = 1.5
        exact = np.diag([np.exp(-1j * z * z * t), np.exp(1j * z * z * t)])
        assert np.abs(s.values[-1] - exact).max() < 1e-9

    def test_zero_trace_z_i(self):
        s = propagate_R(TimeTrace.zero(SIG), 1j, (0.0, 1.0), 1e-12, n_points=3)
        assert np.abs(s.values[-1] - np.diag([np.exp(1j), np.exp(-1j)])).max() < 1e-11

    def test_plane_wave_self_convergence(self):
        pw_q, k = 0.3, 1.0
        omega = (k ** 2 + 2 * pw_q ** 2) / 2
        trace = TimeTrace(lambda t: np.array([[pw_q * np.exp(-1j * omega * t)]]),
                          lambda t: np.array([[1j * k * pw_q * np.exp(-1j * omega * t)]]),
                          SIG)
        tol = 1e-8
        coarse = propagate_R(trace, 1 + 1j, (0.0, 1.0), tol, n_points=3)
        fine = propagate_R(trace, 1 + 1j, (0.0, 1.0), tol / 100, n_points=3)
        dev = np.abs(coarse.values[-1] - fine.values[-1]).max()
        assert dev <= 10 * tol * np.abs(fine.values[-1]).max()


class TestProfiles:
    def test_plane_wave_requires_equal_singular_values(self):
        with pytest.raises(ValueError):
            PotentialProfile.plane_wave(np.diag([1.0, 0.5]), 1.0)

    def test_plane_wave_column_always_valid(self):
        prof = PotentialProfile.plane_wave(np.array([[0.3], [0.4]]), 1.0)
        assert abs(prof.sup_norm() - 0.5) < 1e-14

    def test_sampled_interpolates(self, rng):
        x = np.linspace(0, 2, 41)
        truth = lambda xx: np.array([[np.sin(xx) + 1j * np.cos(0.5 * xx)]])
        vals = np.array([truth(xi) for xi in x])
        prof = PotentialProfile.sampled(x, vals)
        # interior accuracy; the clamped ends trade endpoint fidelity for C^1
        for xi in rng.uniform(0.5, 1.5, 7):
            assert np.abs(prof.v(xi) - truth(xi)).max() < 1e-5
        assert np.abs(prof.v(0.0) - truth(0.0)).max() < 1e-14

    def test_sampled_grid_validation(self):
        with pytest.raises(ValueError):
            PotentialProfile.sampled([0.0, 0.0, 1.0], np.zeros((3, 1, 1)))
