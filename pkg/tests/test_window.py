import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate

from domain import ConfigurationError
from window import (Window, WindowKind, WindowSpec, kb_eval, kb_hat, pkb_build, pkb_eval,
                    tensor_window_eval, tg_eval, ug_hat)


def test_spec_defaults_follow_window_size():
    spec = WindowSpec("pkb", 8, 0.1)
    assert spec.beta == pytest.approx(20.0)
    assert spec.nu == 6
    assert spec.alpha == pytest.approx(0.91 * 0.5 * math.pi * 8)
    assert spec.a_w == pytest.approx(0.4)
    assert WindowSpec("pkb", 24, 0.1).nu == 10


@pytest.mark.parametrize("P", [3, 0, 7.5])
def test_spec_rejects_odd_or_small_P(P):
    with pytest.raises(ConfigurationError):
        WindowSpec("kb", P, 0.1)


def test_spec_rejects_bad_spacing_and_kind():
    with pytest.raises(ConfigurationError):
        WindowSpec("kb", 8, 0.0)
    with pytest.raises(ConfigurationError):
        WindowKind.parse("gaussian")


def test_kb_peak_and_support():
    spec = WindowSpec("kb", 8, 0.1)
    assert kb_eval(spec, 0.0) == pytest.approx(1.0)
    assert kb_eval(spec, 0.41) == 0.0
    assert kb_eval(spec, 0.4) == pytest.approx(1.0 / np.i0(20.0))
    r = np.linspace(-0.4, 0.4, 11)
    assert_allclose(kb_eval(spec, r), kb_eval(spec, -r))


@pytest.mark.parametrize("k", [0.0, 5.0, 30.0, 80.0, 200.0, 400.0])
def test_kb_hat_is_the_transform_of_kb(k):
    spec = WindowSpec("kb", 8, 0.1)
    value = 2.0 * integrate.quad(lambda r: float(kb_eval(spec, r)) * math.cos(k * r), 0.0, spec.a_w,
                                 epsabs=1e-15, epsrel=1e-12, limit=400)[0]
    assert float(kb_hat(spec, k)) == pytest.approx(value, rel=1e-8, abs=1e-13)


def test_kb_hat_is_continuous_at_the_branch_point():
    spec = WindowSpec("kb", 8, 0.1)
    k0 = spec.beta / spec.a_w
    values = kb_hat(spec, np.array([k0 * (1 - 1e-9), k0, k0 * (1 + 1e-9)]))
    assert_allclose(values, values[1], rtol=1e-6)


@pytest.mark.parametrize("P, bound", [(4, 1e-3), (8, 1e-5), (16, 1e-8)])
def test_pkb_approximates_kb(P, bound):
    spec = WindowSpec("pkb", P, 0.05)
    poly = pkb_build(spec)
    assert poly.degree == spec.nu
    r = np.linspace(-spec.a_w, spec.a_w, 2001)
    assert np.max(np.abs(pkb_eval(poly, r) - kb_eval(spec, r))) < bound
    assert pkb_eval(poly, spec.a_w * 1.01) == 0.0


def test_truncated_gaussian_and_untruncated_transform():
    spec = WindowSpec("tg", 8, 0.1)
    assert tg_eval(spec, 0.0) == pytest.approx(1.0)
    assert tg_eval(spec, 0.5) == 0.0
    k = 10.0
    value = 2.0 * integrate.quad(lambda r: float(tg_eval(spec, r)) * math.cos(k * r),
                                 0.0, spec.a_w)[0]
    # the truncated tail is of size exp(-alpha)
    assert float(ug_hat(spec, k)) == pytest.approx(value, abs=1e-4 * float(ug_hat(spec, 0.0)))


@pytest.mark.parametrize("kind", ["kb", "pkb", "tg"])
def test_window_object_dispatches_and_forms_tensor_product(kind):
    spec = WindowSpec(kind, 6, 0.1)
    window = Window(spec)
    assert window.P == 6
    assert window.h == 0.1
    r = np.array([[0.05, -0.1, 0.2], [0.0, 0.0, 0.0]])
    expected = window.evaluate(r[:, 0]) * window.evaluate(r[:, 1]) * window.evaluate(r[:, 2])
    assert_allclose(window.tensor_evaluate(r), expected)
    assert_allclose(tensor_window_eval(spec, r), expected)
    if kind == "tg":
        assert_allclose(window.hat(3.0), ug_hat(spec, 3.0))
    else:
        assert_allclose(window.hat(3.0), kb_hat(spec, 3.0))
