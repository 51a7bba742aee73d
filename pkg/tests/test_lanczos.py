from __future__ import annotations

import math

import numpy as np
import pytest

from lanczos_gf.lanczos import (available_memory, ed_oracle_coeffs, ed_validity_window, effective_budget,
                                ising_current_run, lanczos_run)
from lanczos_gf.pauli import (SpinHamiltonian, TranslationInvariantOperator, energy_current, inner_product,
                              liouvillian_real, mixed_field_ising)
from lanczos_gf.sequences import load_table

Op = TranslationInvariantOperator.from_terms

# first coefficients of the normalized Ising energy current (g_z = -1.05, g_x = 0.5),
# frozen from the dense 10-site ring oracle
ISING_B = [4.221374183841069, 5.17961557535102, 3.795587986695453, 5.725500632909519, 4.927999515860158]


def test_xx_chain_first_coefficient():
    H = SpinHamiltonian.from_terms({"XX": 1.0})
    run = lanczos_run(H, Op({"Z": 1.0}), 1)
    assert run.b[0] == pytest.approx(2 * math.sqrt(2), abs=1e-12)


def test_first_coefficient_is_norm_of_liouvillian():
    H = mixed_field_ising()
    O = Op({"Z": 0.6, "XY": 0.8})
    L = liouvillian_real(H, O)
    assert lanczos_run(H, O, 1).b[0] == pytest.approx(math.sqrt(inner_product(L, L)), rel=1e-14)


def test_ising_matches_frozen_values():
    run, ratio = ising_current_run(5)
    assert np.allclose(run.b, ISING_B, rtol=0, atol=1e-10)
    assert ratio == pytest.approx(4.41 / 2.3525, rel=1e-14)
    assert run.status == "complete" and not run.approximate


def test_run_diagnostics():
    H = mixed_field_ising()
    run = lanczos_run(H, energy_current(H).normalized(), 12)
    assert run.orthogonality < 1e-12
    assert run.diagonal < 1e-12
    assert np.all(run.b > 0)
    # support grows by at most one site per step for a two-site Hamiltonian
    assert np.all(np.diff(run.support_growth) <= 1)
    assert run.term_counts[-1] > run.term_counts[0]


def test_breakdown_status():
    H = SpinHamiltonian.from_terms({"Z": 1.0})
    run = lanczos_run(H, Op({"X": 1.0}), 5)
    assert run.status == "breakdown"
    assert np.allclose(run.b, [2.0])


def test_memory_budget_status():
    H = mixed_field_ising()
    run = lanczos_run(H, energy_current(H).normalized(), 10, memory_budget=1)
    assert run.status == "memory-budget"
    assert run.steps == 0


def test_support_limit_status():
    H = mixed_field_ising()
    run = lanczos_run(H, Op({"X" + "I" * 61 + "Z": 1.0}).normalized(), 3)
    assert run.status == "support-limit"


def test_input_validation():
    H = mixed_field_ising()
    with pytest.raises(ValueError):
        lanczos_run(H, Op({"X": 2.0}), 3)
    with pytest.raises(ValueError):
        lanczos_run(H, Op({"X": 1j}), 3)
    with pytest.raises(ValueError):
        lanczos_run(H, Op({"X": 1.0}), 0)


def test_pruned_run_is_marked_approximate():
    H = mixed_field_ising()
    exact = lanczos_run(H, energy_current(H).normalized(), 10)
    pruned = lanczos_run(H, energy_current(H).normalized(), 10, prune_threshold=1e-3)
    assert pruned.approximate
    assert pruned.term_counts[-1] < exact.term_counts[-1]
    assert np.allclose(pruned.b[:4], exact.b[:4], rtol=1e-2)


def test_save_round_trip(tmp_path):
    run, _ = ising_current_run(4)
    run.save(tmp_path / "b.coeffs")
    seq, meta = load_table(tmp_path / "b.coeffs")
    assert np.array_equal(seq.values(np.arange(1, 5)), run.b)
    assert meta["status"] == "complete"
    assert meta["term_counts"] == run.term_counts


def test_budget_never_exceeds_physical_memory():
    assert effective_budget() <= 0.8 * available_memory() + 1
    assert effective_budget(1024) == 1024


def test_ed_xx_chain():
    H = SpinHamiltonian.from_terms({"XX": 1.0})
    r = ed_oracle_coeffs(H, Op({"Z": 1.0}), 8, 1)
    assert r.b[0] == pytest.approx(2 * math.sqrt(2), abs=1e-12)


def test_ed_matches_chain_inside_window():
    H = mixed_field_ising()
    J = energy_current(H).normalized()
    ed = ed_oracle_coeffs(H, J, 10, 10)
    assert ed.valid_until == ed_validity_window(H, J, 10) == 7
    run = lanczos_run(H, J, ed.valid_until)
    assert np.max(np.abs(ed.valid - run.b)) < 1e-10


def test_ed_finite_size_independence():
    H = mixed_field_ising()
    J = energy_current(H).normalized()
    a = ed_oracle_coeffs(H, J, 8, 5)
    b = ed_oracle_coeffs(H, J, 10, 5)
    assert np.max(np.abs(a.b[: a.valid_until] - b.b[: a.valid_until])) < 1e-10


def test_ed_limits():
    H = mixed_field_ising()
    J = energy_current(H).normalized()
    with pytest.raises(ValueError):
        ed_oracle_coeffs(H, J, 16, 4)
    with pytest.raises(ValueError):
        ed_oracle_coeffs(H, J, 6, 13)
    with pytest.raises(MemoryError):
        ed_oracle_coeffs(H, J, 12, 4, memory_budget=1000)
