from __future__ import annotations

import math

import numpy as np
import pytest

from lanczos_gf.pauli import (PauliWord, SpinHamiltonian, TranslationInvariantOperator, commutator_with_hamiltonian,
                              continuity_residual, energy_current, energy_density, inner_product, liouvillian_real,
                              mixed_field_ising, multiply_words)

W = PauliWord.from_string
Op = TranslationInvariantOperator.from_terms


def test_word_anchoring():
    assert W("IIXZ") == W("XZ")
    assert W("XIY").letters == "XIY"
    assert W("XIY").length == 3
    assert W("").is_identity
    with pytest.raises(ValueError):
        PauliWord(2, 0)  # letter not at site 0
    with pytest.raises(ValueError):
        W("XQ")


def test_multiply_examples():
    assert multiply_words(W("Z"), W("X")) == (1j, W("Y"))
    assert multiply_words(W("X"), W("X")) == (1, None)
    assert multiply_words(W("X"), W("X"), offset=1) == (1, W("XX"))


def test_multiply_negative_offset():
    ph, w = multiply_words(W("X"), W("Z"), offset=-1)
    assert (ph, w) == (1, W("ZX"))


def test_pauli_algebra_table():
    # XY = iZ, YZ = iX, ZX = iY and reversed order flips the sign
    for a, b, c in (("X", "Y", "Z"), ("Y", "Z", "X"), ("Z", "X", "Y")):
        assert multiply_words(W(a), W(b)) == (1j, W(c))
        assert multiply_words(W(b), W(a)) == (-1j, W(c))


def test_commutator_example():
    H = SpinHamiltonian.from_terms({"XX": 1.0})
    C = commutator_with_hamiltonian(H, Op({"Z": 1.0}))
    assert C.terms == {W("XY"): -2j, W("YX"): -2j}


def test_commutator_vanishes_for_commuting_density():
    H = SpinHamiltonian.from_terms({"XX": 1.0})
    assert len(commutator_with_hamiltonian(H, Op({"X": 1.0}))) == 0


def test_liouvillian_real_is_minus_i_commutator():
    H = mixed_field_ising()
    A = Op({"Z": 0.3, "XY": -1.2, "ZIX": 0.7})
    C = commutator_with_hamiltonian(H, A)
    R = liouvillian_real(H, A)
    assert np.isrealobj(R.amp)
    ref = {w: (-1j * a) for w, a in C.terms.items()}
    assert set(ref) == set(R.terms)
    for w, a in R.terms.items():
        assert abs(ref[w].imag) < 1e-14
        assert a == pytest.approx(ref[w].real, abs=1e-14)


def test_inner_product_examples():
    assert inner_product(Op({"XX": 1.0}), Op({"XX": 1.0})) == 1.0
    assert inner_product(Op({"X": 1.0}), Op({"Y": 1.0})) == 0.0
    A = Op({"Z": 0.5, "XY": 2j})
    assert inner_product(A, A) == pytest.approx(4.25)


def test_operator_merges_duplicates():
    A = Op([("XZ", 1.0), ("IXZ", 2.0), ("Y", 1.0), ("Y", -1.0)])
    assert A.terms == {W("XZ"): 3.0}


def test_prune_and_normalize():
    A = Op({"X": 1.0, "Z": 1e-9})
    P = A.prune(1e-6)
    assert len(P) == 1
    assert P.normalized().norm() == pytest.approx(1.0)
    with pytest.raises(ZeroDivisionError):
        TranslationInvariantOperator().normalized()


def test_operator_arithmetic():
    A = Op({"X": 1.0, "Z": 2.0})
    B = Op({"X": 1.0})
    assert (A - B).terms == {W("Z"): 2.0}
    assert (A + B).terms[W("X")] == 2.0


def test_hamiltonian_validation():
    with pytest.raises(ValueError):
        SpinHamiltonian.from_terms({"": 1.0})
    with pytest.raises(ValueError):
        SpinHamiltonian(())
    assert mixed_field_ising().range == 2


def test_current_of_commuting_hamiltonian_is_zero():
    H = SpinHamiltonian.from_terms({"Z": 1.0, "ZZ": 0.5})
    assert len(energy_current(H)) == 0


def test_ising_current():
    H = mixed_field_ising(-1.05, 0.5)
    assert continuity_residual(H) < 1e-12
    J = energy_current(H)
    assert np.isrealobj(J.amp)
    # only [XX, Z] fails to commute across a cut: J = 2 g_z sum X_x Y_{x+1}
    assert J.terms == {W("XY"): pytest.approx(-2.1)}
    assert inner_product(J, J) == pytest.approx(4.41)
    assert inner_product(energy_density(H), energy_density(H)) == pytest.approx(2.3525)


def test_current_diagonal_element_vanishes():
    H = mixed_field_ising(-1.05, 0.0)
    J = energy_current(H)
    assert abs(inner_product(J, liouvillian_real(H, J))) < 1e-14


def test_current_longer_range():
    H = SpinHamiltonian.from_terms({"XX": 1.0, "ZIZ": 0.4, "Z": 0.7, "XZX": -0.3})
    assert continuity_residual(H) < 1e-12
    J = energy_current(H)
    assert inner_product(J, J) > 0
    assert math.isfinite(J.norm())
