import csv
import io

import numpy as np
import pytest

from mgfid.clifford import PauliString, monomial_to_pauli
from mgfid.matchgate import random_matchgate_circuit
from mgfid.simulator import (
    KrausNoise,
    NoisyChannel,
    ShotRecord,
    ShotSimulator,
    amplitude_damping,
    apply_channel,
    composed,
    depolarizing,
    measure_pauli,
    parse_noise,
    phase_damping,
    prepare_pauli_eigenstate,
    shot,
    write_shot_log,
)
from mgfid.superop import brute_force_superop
from oracles import subsets_degree_lex


def kraus_sum(ops):
    return sum(k.conj().T @ k for k in ops)


class TestNoise:
    @pytest.mark.parametrize(
        "stage", [depolarizing(0.2), amplitude_damping(0.3), phase_damping(0.4)]
    )
    def test_completeness(self, stage):
        assert np.allclose(kraus_sum(stage.kraus_ops(2)), np.eye(4))

    @pytest.mark.parametrize("stage", [depolarizing(0.2), amplitude_damping(0.3), phase_damping(0.4)])
    def test_apply_matches_kraus(self, stage):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        ref = sum(k @ m @ k.conj().T for k in stage.kraus_ops(2))
        assert np.allclose(stage.apply(m), ref)
        ref_adj = sum(k.conj().T @ m @ k for k in stage.kraus_ops(2))
        assert np.allclose(stage.apply_adjoint(m), ref_adj)

    def test_amplitude_damping_on_one(self):
        g = 0.35
        out = amplitude_damping(g).apply(np.diag([0.0, 1.0]).astype(complex))
        assert np.allclose(out, np.diag([g, 1 - g]))

    def test_full_depolarizing_is_maximally_mixed(self):
        rho = np.zeros((4, 4), dtype=complex)
        rho[2, 2] = 1
        assert np.allclose(depolarizing(1.0).apply(rho), np.eye(4) / 4)

    def test_parameter_range(self):
        with pytest.raises(ValueError):
            depolarizing(1.5)
        with pytest.raises(ValueError):
            amplitude_damping(-0.1)

    def test_incomplete_kraus_rejected(self):
        with pytest.raises(ValueError):
            KrausNoise((0.5 * np.eye(2),))

    def test_parse(self):
        assert parse_noise("none") == ()
        assert parse_noise("depolarizing:0.1") == (depolarizing(0.1),)
        assert len(parse_noise("amp_phase:0.1")) == 2
        for bad in ("bogus:0.1", "depolarizing", "amp:x"):
            with pytest.raises(ValueError):
                parse_noise(bad)

    def test_composed_flattens(self):
        stages = composed([depolarizing(0.1), (amplitude_damping(0.1), phase_damping(0.2))])
        assert len(stages) == 3


class TestChannel:
    def test_noise_after_unitary(self):
        u = random_matchgate_circuit(2, seed=2).unitary()
        ch = NoisyChannel.ideal(u).with_noise(amplitude_damping(0.2))
        rho = np.zeros((4, 4), dtype=complex)
        rho[0, 0] = 1
        ref = sum(k @ u @ rho @ u.conj().T @ k.conj().T for k in ch.kraus_ops)
        assert np.allclose(ch.apply(rho), ref)

    def test_adjoint_duality(self):
        rng = np.random.default_rng(4)
        u = random_matchgate_circuit(2, seed=3).unitary()
        ch = NoisyChannel.ideal(u).with_noise(amplitude_damping(0.2), depolarizing(0.1))
        a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        b = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        lhs = np.trace(a.conj().T @ ch.apply(b))
        rhs = np.trace(ch.apply_adjoint(a).conj().T @ b)
        assert lhs == pytest.approx(rhs)

    def test_kraus_complete(self):
        ch = NoisyChannel.ideal(np.eye(8)).with_noise(amplitude_damping(0.2), phase_damping(0.3))
        assert np.allclose(kraus_sum(ch.kraus_ops), np.eye(8))

    def test_validation(self):
        with pytest.raises(ValueError):
            NoisyChannel(2, np.ones((4, 4)))
        with pytest.raises(ValueError):
            NoisyChannel(2, np.eye(8))

    def test_apply_channel_checks_density(self):
        with pytest.raises(ValueError):
            apply_channel(np.eye(2), NoisyChannel.ideal(np.eye(2)))


class TestSingleShot:
    @pytest.mark.parametrize("letters", ["XZ", "YI", "ZY", "II"])
    def test_eigenstate(self, letters):
        p = PauliString.from_letters(letters)
        rng = np.random.default_rng(1)
        for _ in range(10):
            rho, lam = prepare_pauli_eigenstate(p, rng)
            assert np.isclose(np.trace(rho), 1)
            assert np.allclose(p.to_matrix() @ rho, lam * rho)

    def test_measure_deterministic_on_eigenstate(self):
        p = PauliString.from_letters("XY")
        rng = np.random.default_rng(2)
        rho, lam = prepare_pauli_eigenstate(p, rng)
        assert all(measure_pauli(rho, p, rng) == lam for _ in range(20))

    def test_measure_ignores_phase(self):
        p = PauliString.from_letters("Z", phase=1)
        rho = np.diag([1.0, 0.0]).astype(complex)
        assert measure_pauli(rho, p, np.random.default_rng(0)) == 1

    def test_shot_record(self):
        ch = NoisyChannel.ideal(np.eye(4))
        rec = shot(ch, (1, 2), (1, 2), np.random.default_rng(0))
        # c_1 c_2 = iZ; phi = conj(i) * i = 1 and a noiseless Z eigenstate is reproduced
        assert rec.phi == 1 and rec.B == 1
        with pytest.raises(ValueError):
            ShotRecord((1,), (1,), 1, 1, 1, -1)

    def test_shot_determinism(self):
        ch = NoisyChannel.ideal(random_matchgate_circuit(2, seed=1).unitary())
        a = [shot(ch, (1,), (2,), np.random.default_rng(7)).B for _ in range(3)]
        assert len(set(a)) == 1


class TestShotSimulator:
    def test_mean_b_equals_superop_entry(self):
        u = random_matchgate_circuit(2, seed=6).unitary()
        ch = NoisyChannel.ideal(u).with_noise(amplitude_damping(0.2))
        sup = brute_force_superop(ch)
        sim = ShotSimulator(ch)
        subs = subsets_degree_lex(2)
        for a in range(0, 16, 3):
            for b in range(1, 16, 4):
                ci, cj = monomial_to_pauli(subs[a], 2), monomial_to_pauli(subs[b], 2)
                assert sim.mean_B(ci, cj) == pytest.approx(sup[a, b], abs=1e-12)

    def test_sample_mean_converges(self):
        u = random_matchgate_circuit(2, seed=6).unitary()
        ch = NoisyChannel.ideal(u).with_noise(depolarizing(0.1))
        sim = ShotSimulator(ch)
        batch = sim.run_shots((1,), (3,), 40000, np.random.default_rng(3))
        exact = sim.mean_B(monomial_to_pauli((1,), 2), monomial_to_pauli((3,), 2))
        assert abs(np.mean(batch.B) - exact) < 4 / np.sqrt(40000)

    def test_matches_single_shot_distribution(self):
        ch = NoisyChannel.ideal(random_matchgate_circuit(2, seed=8).unitary()).with_noise(phase_damping(0.3))
        rng = np.random.default_rng(5)
        slow = np.mean([shot(ch, (2,), (1, 4), rng).B for _ in range(3000)])
        fast = np.mean(ShotSimulator(ch).run_shots((2,), (1, 4), 3000, np.random.default_rng(6)).B)
        assert abs(slow - fast) < 0.12

    def test_values_are_units(self):
        sim = ShotSimulator(NoisyChannel.ideal(random_matchgate_circuit(2, seed=1).unitary()))
        batch = sim.run_shots((1, 2), (3,), 100, np.random.default_rng(0))
        assert set(np.unique(batch.A)) <= {-1, 1} and set(np.unique(batch.lam)) <= {-1, 1}
        assert np.allclose(np.abs(batch.B), 1) and len(batch) == 100

    def test_reproducible(self):
        sim = ShotSimulator(NoisyChannel.ideal(np.eye(4)).with_noise(depolarizing(0.3)))
        a = sim.run_shots((1,), (1,), 50, np.random.default_rng(11)).B
        b = sim.run_shots((1,), (1,), 50, np.random.default_rng(11)).B
        assert np.array_equal(a, b)


class TestShotLog:
    def test_format(self):
        sim = ShotSimulator(NoisyChannel.ideal(np.eye(4)))
        batch = sim.run_shots((1, 2), (1, 2), 3, np.random.default_rng(0))
        buf = io.StringIO()
        write_shot_log(buf, [(0, (1, 2), (1, 2), batch)], 2)
        rows = list(csv.reader(io.StringIO(buf.getvalue())))
        assert rows[0] == ["mu", "nu", "I", "J", "lambda", "A", "phi_re", "phi_im", "B"]
        assert len(rows) == 4
        assert [r[1] for r in rows[1:]] == ["0", "1", "2"]
        assert all(r[2] == "12" and r[8] in ("+1", "-1") for r in rows[1:])

    def test_imaginary_b(self):
        sim = ShotSimulator(NoisyChannel.ideal(np.eye(4)))
        batch = sim.run_shots((1,), (1, 2), 4, np.random.default_rng(0))
        buf = io.StringIO()
        write_shot_log(buf, [(3, (1,), (1, 2), batch)], 2)
        rows = list(csv.reader(io.StringIO(buf.getvalue())))[1:]
        assert all(r[8] in ("+i", "-i") for r in rows)
