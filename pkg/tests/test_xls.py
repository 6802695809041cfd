import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fiberopt.errors import DegenerateFraction
from fiberopt.xls import (
    PAIRS,
    XlsState,
    approx_heaviside,
    characteristic,
    clamp,
    heaviside,
    project_constraint,
    project_pairs,
    smoothed_characteristic,
    update_levelsets,
)

levels = arrays(np.float64, 3, elements=st.floats(-1.0, 1.0))


def state_of(*values):
    return XlsState(*(np.atleast_1d(np.asarray(v, dtype=float)) for v in values))


def total_variation(mesh, w):
    g = w.reshape(mesh.ny + 1, mesh.nx + 1)
    return np.abs(np.diff(g, axis=0)).sum() + np.abs(np.diff(g, axis=1)).sum()


class TestState:
    def test_antisymmetry(self, rng):
        s = state_of(*rng.uniform(-1, 1, (3, 5)))
        for a, b in PAIRS:
            assert np.array_equal(s.phi(b, a), -s.phi(a, b))
        P = s.as_matrix()
        assert np.array_equal(P, -P.transpose(1, 0, 2))
        back = XlsState.from_matrix(P)
        assert all(np.array_equal(x, y) for x, y in zip(back.fields().values(), s.fields().values()))

    def test_same_phase_rejected(self):
        with pytest.raises(ValueError):
            state_of(0, 0, 0).phi("V", "V")


class TestHeaviside:
    def test_sharp(self):
        assert list(heaviside(np.array([-1e-300, 0.0, 2.0]))) == [0.0, 1.0, 1.0]

    def test_quintic_values(self):
        assert approx_heaviside(0.0) == 0.5
        assert approx_heaviside(-1.0) == 0.0 and approx_heaviside(1.0) == 1.0
        assert approx_heaviside(0.5) == 0.896484375
        assert approx_heaviside(-3.0) == 0.0 and approx_heaviside(7.0) == 1.0

    @given(st.floats(-1.0, 1.0))
    def test_odd_symmetry_and_range(self, s):
        h = approx_heaviside(s)
        assert 0.0 <= h <= 1.0
        assert h + approx_heaviside(-s) == pytest.approx(1.0, abs=1e-15)

    def test_c1_at_endpoints(self):
        d = 1e-6
        assert (approx_heaviside(1.0) - approx_heaviside(1.0 - d)) / d == pytest.approx(0.0, abs=1e-5)
        assert (approx_heaviside(-1.0 + d) - approx_heaviside(-1.0)) / d == pytest.approx(0.0, abs=1e-5)


class TestCharacteristic:
    def test_pure_void(self):
        chi = characteristic(state_of(1, 1, 0))
        assert list(chi[:, 0]) == [1.0, 0.0, 0.0]

    def test_zero_product(self):
        for vf in (-1.0, 0.0, 1.0):
            assert characteristic(state_of(-1, vf, 0.3))[0, 0] == 0.0

    def test_all_zero_overlap(self):
        assert list(characteristic(state_of(0, 0, 0))[:, 0]) == [1.0, 1.0, 1.0]


class TestSmoothed:
    def test_deep_interior(self):
        eps = 1e-3
        chi = smoothed_characteristic(state_of(1, 1, 0), 0.5, eps)
        assert chi[0, 0] >= 1 - 2 * eps

    def test_symmetric_zero(self):
        assert np.allclose(smoothed_characteristic(state_of(0, 0, 0)), 1 / 3, atol=1e-15)

    def test_small_band_recovers_hard(self):
        for v in ([1, 1, 0.4], [-1, 0.2, 1], [0.3, -1, -1]):
            s = state_of(*v)
            chi = smoothed_characteristic(s, 1e-6, 1e-12)
            assert np.allclose(chi, characteristic(project_constraint(s)), atol=1e-9)

    def test_bad_width(self):
        with pytest.raises(ValueError):
            smoothed_characteristic(state_of(0, 0, 0), 1.0)

    def test_degenerate(self):
        with pytest.raises(DegenerateFraction):
            smoothed_characteristic(state_of(1, -1, 1), 0.5, 0.0)

    @given(levels, st.floats(0.05, 0.95), st.floats(1e-6, 1e-2))
    @settings(max_examples=200)
    def test_partition_of_unity(self, v, w, eps):
        chi = smoothed_characteristic(state_of(*v), w, eps)
        assert np.all((chi >= 0) & (chi <= 1))
        assert abs(chi.sum() - 1.0) <= 1e-14


class TestProjection:
    def test_printed_rule_example(self):
        out = project_constraint(state_of(1, 1, 0), rule="loser")
        assert out.phi_VI[0] == 0.5 and out.phi_VF[0] == 0.5 and out.phi_IF[0] == 0.0
        assert characteristic(out)[0, 0] == 1.0

    @pytest.mark.parametrize("rule", ["winner", "loser"])
    def test_zero_fixed_point(self, rule):
        out = project_constraint(state_of(0, 0, 0), rule=rule)
        assert all(np.all(v == 0.0) for v in out.fields().values())

    @pytest.mark.parametrize("phase, values", [(0, (1, 1, -1)), (0, (1, 1, 1)), (1, (-1, 1, 1)),
                                               (1, (-1, -1, 1)), (2, (1, -1, -1)), (2, (-1, -1, -1))])
    def test_pure_phase_preserved(self, phase, values):
        out = project_constraint(state_of(*values))
        assert np.argmax(characteristic(out)[:, 0]) == phase
        assert characteristic(out)[:, 0].sum() == 1.0

    def test_pure_phase_is_fixed_point(self):
        pure_f = state_of(0, -1, -1)
        out = project_constraint(pure_f)
        assert out.phi_VF[0] == -1.0 and out.phi_IF[0] == -1.0

    @given(levels)
    @settings(max_examples=300)
    def test_partition_after_projection(self, v):
        out = project_constraint(state_of(*v))
        vals = np.concatenate([x for x in out.fields().values()])
        assume(np.all(vals != 0.0))
        assert characteristic(out).sum() == 1.0
        assert np.all(np.abs(vals) <= 1.0)

    def test_general_phase_count(self, rng):
        M = 4
        U = rng.uniform(-1, 1, (M, M, 6))
        P = 0.5 * (U - U.transpose(1, 0, 2))
        out = project_pairs(P)
        assert np.allclose(out, -out.transpose(1, 0, 2))


class TestClamp:
    def test_values(self):
        out = clamp(state_of(1.7, -0.3, -4))
        assert (out.phi_VI[0], out.phi_VF[0], out.phi_IF[0]) == (1.0, -0.3, -1.0)

    @given(arrays(np.float64, 3, elements=st.floats(-5, 5)))
    def test_idempotent(self, v):
        once = clamp(state_of(*v))
        twice = clamp(once)
        assert all(np.array_equal(a, b) for a, b in zip(once.fields().values(), twice.fields().values()))


class TestUpdate:
    def test_zero_derivative_fixed_point(self, small_helmholtz, rng):
        n, m = small_helmholtz.mesh.n_nodes, small_helmholtz.mesh.n_elements
        s = project_constraint(state_of(*rng.uniform(-1, 1, (3, n))))
        dl = {p: np.zeros(m) for p in PAIRS}
        out = update_levelsets(s, dl, 0.3, 0.0, small_helmholtz, project=False)
        assert all(np.array_equal(a, b) for a, b in zip(out.fields().values(), s.fields().values()))

    def test_uniform_shift(self, small_helmholtz):
        mesh = small_helmholtz.mesh
        s = XlsState.constant(mesh.n_nodes, 0.1)
        # a uniform DL of -0.4 on the reversed pair IV is +0.4 on the stored VI field
        dl = {("V", "I"): np.full(mesh.n_elements, 0.4), ("V", "F"): np.zeros(mesh.n_elements),
              ("I", "F"): np.zeros(mesh.n_elements)}
        out = update_levelsets(s, dl, 0.5, 0.0, small_helmholtz, project=False)
        assert np.allclose(out.phi("I", "V"), -0.1 + 0.2)

    def test_smoothing_reduces_variation(self, small_helmholtz):
        mesh = small_helmholtz.mesh
        s = XlsState.constant(mesh.n_nodes, 0.0)
        ix = np.arange(mesh.n_elements) % mesh.nx
        osc = {p: np.where(ix % 2 == 0, 1.0, -1.0) for p in PAIRS}
        rough = update_levelsets(s, osc, 0.2, 0.0, small_helmholtz, project=False)
        smooth = update_levelsets(s, osc, 0.2, 0.05, small_helmholtz, project=False)
        assert total_variation(mesh, smooth.phi_VI) < total_variation(mesh, rough.phi_VI)

    def test_output_in_range(self, small_helmholtz, rng):
        mesh = small_helmholtz.mesh
        s = XlsState.constant(mesh.n_nodes, 0.0)
        dl = {p: rng.normal(size=mesh.n_elements) * 10 for p in PAIRS}
        out = update_levelsets(s, dl, 1.0, 1e-3, small_helmholtz)
        assert all(np.all(np.abs(v) <= 1.0) for v in out.fields().values())

    def test_rejects_bad_steps(self, small_helmholtz):
        mesh = small_helmholtz.mesh
        dl = {p: np.zeros(mesh.n_elements) for p in PAIRS}
        with pytest.raises(ValueError):
            update_levelsets(XlsState.constant(mesh.n_nodes), dl, 0.0, 0.0, small_helmholtz)
