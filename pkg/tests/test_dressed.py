import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dressedspin.dressed import (NVConstants, dressed_basis, effective_couplings,
                                 effective_couplings_bruteforce, field_for_lambda, mixing_angle,
                                 moment_difference, onaxis_couplings, project_spin_ops,
                                 qubit_splitting, su2_field, su2_field_bisect)

EXPECTED = json.loads((Path(__file__).parent / "oracles" / "expected.json").read_text())


def test_constants_validated():
    with pytest.raises(ValueError):
        NVConstants(D=-1.0)


def test_zero_field_couplings():
    g = effective_couplings(0.0)
    assert g.g_xy == pytest.approx(4.0, abs=1e-15)
    assert g.g_zz == pytest.approx(0.0, abs=1e-15)
    assert g.lam == pytest.approx(0.5)
    assert qubit_splitting(0.0) == pytest.approx(2870.0, abs=1e-9)


def test_negative_field_rejected():
    with pytest.raises(ValueError):
        effective_couplings(-1.0)


@pytest.mark.parametrize("B", sorted(EXPECTED["pair_couplings"], key=float))
def test_closed_form_matches_independent_projection(B):
    g_xy, g_zz = EXPECTED["pair_couplings"][B]
    g = effective_couplings(float(B))
    assert g.g_xy == pytest.approx(g_xy, abs=1e-9)
    assert g.g_zz == pytest.approx(g_zz, abs=1e-9)


def test_su2_field_matches_oracle():
    assert su2_field() == pytest.approx(EXPECTED["su2_field_G"], abs=1e-9)
    assert su2_field_bisect() == pytest.approx(su2_field(), abs=1e-6)


def test_splitting_at_362p4():
    assert qubit_splitting(362.4) == pytest.approx(EXPECTED["splitting_362p4_MHz"], abs=1e-6)


def test_lambda_vanishes_at_su2_field():
    assert abs(effective_couplings(su2_field()).lam) < 1e-12
    assert abs(effective_couplings(362.4).lam) < 1e-3


def test_moment_difference_matches_oracle():
    assert moment_difference(su2_field()) == pytest.approx(EXPECTED["moment_difference_su2"],
                                                           abs=1e-12)


def test_onaxis_baseline():
    g = onaxis_couplings()
    assert (g.g_xy, g.g_zz) == pytest.approx((-2.0, 2.0), abs=1e-12)
    assert abs(g.trace) == pytest.approx(2.0, abs=1e-12)
    assert np.sign(g.g_xy) == -np.sign(g.g_zz)
    assert g.lam is None
    assert effective_couplings(su2_field()).trace / abs(g.trace) == pytest.approx(4.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=0.0, max_value=3000.0))
def test_trace_is_eight(B):
    g = effective_couplings(B)
    assert g.trace == pytest.approx(8.0, abs=1e-12)
    assert g.J0 == pytest.approx(52.0 * 8 / 3, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=-0.99, max_value=0.5))
def test_field_for_lambda_inverts(lam):
    B = field_for_lambda(lam)
    assert effective_couplings(B).lam == pytest.approx(lam, abs=1e-9)


def test_field_for_lambda_out_of_range():
    with pytest.raises(ValueError):
        field_for_lambda(0.7)


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=0.0, max_value=2000.0))
def test_projected_operators(B):
    px, py, pz = project_spin_ops(dressed_basis(B))
    a = mixing_angle(B)
    np.testing.assert_allclose(px, [[-np.sin(a), np.cos(a)], [np.cos(a), np.sin(a)]], atol=1e-12)
    assert np.linalg.norm(py) < 1e-12 and np.linalg.norm(pz) < 1e-12


@pytest.mark.parametrize("B", [5.0, 200.0, 362.4, 900.0])
def test_bruteforce_residual_small(B):
    g = effective_couplings_bruteforce(B)
    assert g.residual < 1e-9
    assert np.allclose(g.single_body, 0.0, atol=1e-9)
