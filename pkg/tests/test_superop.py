import io
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mgfid.clifford import basis_subsets
from mgfid.matchgate import (
    circuit_to_rotation,
    fsim,
    gate_rotation,
    haar_random_rotation,
    random_matchgate_circuit,
    xy_gate,
)
from mgfid.simulator import NoisyChannel, amplitude_damping, depolarizing
from mgfid.superop import (
    SparseSuperOp,
    block_decays,
    brute_force_superop,
    channel_fidelity,
    compound_matrix,
    entanglement_fidelity,
    matchgate_superop,
    minor_det,
    oracle_entanglement_fidelity,
    read_superop_csv,
    sparsity_count,
    well_conditioning_alpha,
    write_superop_csv,
)
from oracles import (
    average_fidelity,
    depolarizing_fidelity,
    explicit_channel_superop,
    explicit_superop,
    laplace_det,
    planar,
)

seeds = st.integers(0, 2**32 - 1)


class TestMinors:
    @given(st.integers(1, 4), seeds, st.data())
    @settings(max_examples=60, deadline=None)
    def test_minor_vs_laplace(self, n, seed, data):
        r = np.asarray(haar_random_rotation(n, seed))
        k = data.draw(st.integers(0, 2 * n))
        idx = st.lists(st.integers(1, 2 * n), min_size=k, max_size=k, unique=True).map(sorted)
        I, J = data.draw(idx), data.draw(idx)
        assert minor_det(r, I, J) == pytest.approx(laplace_det(r[np.ix_(np.array(I, int) - 1, np.array(J, int) - 1)]), abs=1e-12)

    def test_unequal_sizes(self):
        assert minor_det(np.eye(4), (1,), (1, 2)) == 0.0

    @pytest.mark.parametrize("k", range(7))
    def test_compound_is_orthogonal(self, k):
        c = compound_matrix(haar_random_rotation(3, 7), k)
        assert np.allclose(c @ c.T, np.eye(c.shape[0]), atol=1e-12)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_cauchy_binet(self, k):
        a, b = np.asarray(haar_random_rotation(3, 1)), np.asarray(haar_random_rotation(3, 2))
        assert np.allclose(compound_matrix(a @ b, k), compound_matrix(a, k) @ compound_matrix(b, k), atol=1e-12)

    def test_signed_not_absolute(self):
        r = planar(1, np.pi / 2, 4)
        # R[0, 1] = 1, R[1, 0] = -1
        assert minor_det(r, (2,), (1,)) == pytest.approx(-1.0)


class TestMatchgateSuperop:
    @given(st.integers(1, 3), seeds)
    @settings(max_examples=20, deadline=None)
    def test_equals_explicit_conjugation(self, n, seed):
        c = random_matchgate_circuit(n, seed=seed)
        sup = matchgate_superop(circuit_to_rotation(c))
        assert np.allclose(sup.to_dense(), explicit_superop(c.unitary(), n), atol=1e-10)

    def test_identity(self):
        sup = matchgate_superop(np.eye(4))
        assert sup.nnz == 16 and np.allclose(sup.to_dense(), np.eye(16))
        assert np.allclose(SparseSuperOp.identity(2).to_dense(), np.eye(16))

    def test_haar_n2_is_dense_in_blocks(self):
        sup = matchgate_superop(haar_random_rotation(2, 0))
        assert sup.nnz == 1 + 16 + 36 + 16 + 1
        assert sup.block_structured and sup.is_real

    def test_planar_count(self):
        for n in (1, 2, 3):
            for k in range(1, 2 * n):
                sup = matchgate_superop(planar(k, 0.37, 2 * n))
                assert sparsity_count(sup) == 3 * 4**n // 2

    def test_iswap_is_signed_permutation(self):
        g = xy_gate(np.pi / 2)
        sup = matchgate_superop(gate_rotation(g, 1, 2))
        assert np.allclose(np.abs(sup.values), 1.0)
        assert sup.nnz == 16
        assert np.allclose(sup.to_dense(), brute_force_superop(g))

    def test_getitem(self):
        r = np.asarray(haar_random_rotation(2, 3))
        sup = matchgate_superop(r)
        assert sup[(1, 3), (2, 4)] == pytest.approx(minor_det(r, (1, 3), (2, 4)))
        assert sup[(1,), (1, 2)] == 0
        assert sup.entries[((1,), (2,))] == pytest.approx(r[0, 1])

    def test_block(self):
        r = np.asarray(haar_random_rotation(2, 3))
        assert np.allclose(matchgate_superop(r).block(1), r)

    def test_guard(self):
        with pytest.raises(ValueError):
            matchgate_superop(np.eye(18))

    def test_composition(self):
        a, b = haar_random_rotation(2, 1), haar_random_rotation(2, 2)
        prod = matchgate_superop(a) @ matchgate_superop(b)
        assert np.allclose(prod.to_dense(), matchgate_superop(np.asarray(a) @ np.asarray(b)).to_dense())

    def test_magnitude_check(self):
        with pytest.raises(ValueError):
            SparseSuperOp(1, [0], [0], [1.5])


class TestBruteForce:
    def test_channel_matches_oracle(self):
        u = random_matchgate_circuit(2, seed=3).unitary()
        ch = NoisyChannel.ideal(u).with_noise(amplitude_damping(0.2))
        ref = explicit_channel_superop(ch.kraus_ops, u, 2)
        assert np.allclose(brute_force_superop(ch), ref)

    def test_fsim_phase_breaks_blocks(self):
        d = brute_force_superop(fsim(0.7, 0.3))
        assert not SparseSuperOp.from_dense(d, 2).block_structured

    def test_guard(self):
        with pytest.raises(ValueError):
            brute_force_superop(NoisyChannel.ideal(np.eye(2**7)))


class TestFidelity:
    @pytest.mark.parametrize("p", [0.0, 0.05, 0.3])
    def test_depolarizing(self, p):
        u = random_matchgate_circuit(2, seed=1).unitary()
        sup_u = matchgate_superop(circuit_to_rotation(random_matchgate_circuit(2, seed=1)))
        ch = NoisyChannel.ideal(u).with_noise(depolarizing(p))
        fe = entanglement_fidelity(sup_u, brute_force_superop(ch))
        assert fe == pytest.approx(depolarizing_fidelity(p, 2), abs=1e-12)
        assert entanglement_fidelity(sup_u.to_dense(), brute_force_superop(ch)) == pytest.approx(fe)
        assert oracle_entanglement_fidelity(ch) == pytest.approx(fe, abs=1e-12)

    def test_noiseless_is_one(self):
        sup = matchgate_superop(haar_random_rotation(3, 2))
        assert entanglement_fidelity(sup, sup) == pytest.approx(1.0)

    def test_oracle_matches_superop_for_amplitude_damping(self):
        c = random_matchgate_circuit(2, seed=9)
        ch = NoisyChannel.ideal(c.unitary()).with_noise(amplitude_damping(0.15))
        sup_u = matchgate_superop(circuit_to_rotation(c))
        assert oracle_entanglement_fidelity(ch) == pytest.approx(
            entanglement_fidelity(sup_u, brute_force_superop(ch)), abs=1e-12
        )

    def test_channel_fidelity_values(self):
        assert channel_fidelity(0.0, 1) == pytest.approx(1 / 3)
        assert channel_fidelity(0.9, 2) == pytest.approx(0.92)
        assert channel_fidelity(1.0, 3) == pytest.approx(1.0)
        assert channel_fidelity(0.4, 3) == pytest.approx(average_fidelity(0.4, 3))

    def test_channel_fidelity_warns(self):
        with pytest.warns(UserWarning):
            channel_fidelity(1.2, 2)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            channel_fidelity(1.2, 2, warn=False)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            entanglement_fidelity(np.eye(4), np.eye(16))

    def test_block_decays_depolarizing(self):
        c = random_matchgate_circuit(2, seed=5)
        sup_u = matchgate_superop(circuit_to_rotation(c))
        ch = NoisyChannel.ideal(c.unitary()).with_noise(depolarizing(0.1))
        bd = block_decays(sup_u, brute_force_superop(ch))
        assert bd.lambda_prime[0] == pytest.approx(1.0)
        assert np.allclose(bd.lambda_prime[1:], 0.9)
        assert bd.fidelity() == pytest.approx(depolarizing_fidelity(0.1, 2))

    def test_block_decays_need_blocks(self):
        sup = SparseSuperOp.from_dense(brute_force_superop(fsim(0.7, 0.3)), 2)
        with pytest.raises(ValueError):
            block_decays(sup, sup.to_dense())


class TestCounts:
    def test_alpha(self):
        assert well_conditioning_alpha(matchgate_superop(planar(1, 0.2, 4))) == pytest.approx(np.sin(0.2))
        with pytest.raises(ValueError):
            well_conditioning_alpha(np.zeros((4, 4)))

    def test_threshold_matters(self):
        d = np.diag([1.0, 1e-11, 0.5, 0.0])
        assert sparsity_count(d) == 2
        assert sparsity_count(d, threshold=1e-12) == 3


class TestCsv:
    def test_round_trip_exact(self):
        sup = matchgate_superop(haar_random_rotation(3, 11))
        back = read_superop_csv(write_superop_csv(sup), 3)
        assert np.array_equal(back.rows, sup.rows) and np.array_equal(back.values, sup.values)

    def test_complex_round_trip(self):
        sup = SparseSuperOp.from_dense(brute_force_superop(fsim(0.7, 0.3)), 2)
        buf = io.StringIO()
        write_superop_csv(sup, buf)
        back = read_superop_csv(buf.getvalue(), 2)
        assert np.array_equal(back.to_dense(), sup.to_dense())

    def test_format(self):
        text = write_superop_csv(matchgate_superop(np.eye(2)))
        assert text.splitlines() == ["k,I,J,re,im", "0,0,0,1.0,0.0", "1,1,1,1.0,0.0", "1,2,2,1.0,0.0", "2,12,12,1.0,0.0"]

    def test_bad_header(self):
        with pytest.raises(ValueError):
            read_superop_csv("a,b\n", 1)

    def test_entries_in_basis_order(self):
        text = write_superop_csv(matchgate_superop(haar_random_rotation(2, 0)))
        rows = [line.split(",")[1] for line in text.splitlines()[1:]]
        order = [basis_subsets(2).index(tuple(int(ch) for ch in s if ch != "0")) for s in rows]
        assert order == sorted(order)
