import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fitsr.fim import FimParams, comp, fim_forward, imaginary_residue, split
from fitsr.tensor import CTensor, ShapeError


def test_zero_input_zero_output(rng):
    p = FimParams.init(3, rng)
    assert np.array_equal(fim_forward(np.zeros((3, 5, 6)), p), np.zeros((3, 5, 6)))


def test_identity_doubles(rng):
    z = rng.normal(size=(4, 6, 5))
    assert np.abs(fim_forward(z, FimParams.identity(4)) - 2 * z).max() < 1e-8


def test_linear_without_bias(rng):
    p = FimParams.init(3, rng)
    a, b = rng.normal(size=(2, 3, 7, 5))
    al, be = 0.7, -1.3
    lhs = fim_forward(al * a + be * b, p)
    assert np.abs(lhs - al * fim_forward(a, p) - be * fim_forward(b, p)).max() < 1e-8


@given(st.integers(1, 9), st.integers(1, 9), st.integers(1, 4))
def test_shape_preserved(h, w, c):
    r = np.random.default_rng(h * 100 + w * 10 + c)
    p = FimParams.init(c, r)
    assert fim_forward(r.normal(size=(c, h, w)), p).shape == (c, h, w)


def test_distributivity_with_tied_kernels(rng):
    k = rng.normal(size=(2, 2, 3, 3))
    from fitsr.tensor import conv2d
    re, im = rng.normal(size=(2, 2, 6, 6))
    split_route = conv2d(re, k) + 1j * conv2d(im, k)
    complex_route = conv2d(re + 1j * im, k)
    assert np.abs(split_route - complex_route).max() < 1e-10


class TestComp:
    def test_roundtrip(self, rng):
        x = CTensor(*rng.normal(size=(2, 3, 4)))
        y = comp(*split(x))
        assert np.array_equal(y.re, x.re) and np.array_equal(y.im, x.im)

    def test_real_only(self, rng):
        z = rng.normal(size=(3, 3))
        assert np.all(comp(z, np.zeros_like(z)).im == 0)

    def test_times_minus_i(self, rng):
        z = rng.normal(size=(3, 3))
        c = comp(np.zeros_like(z), z).to_complex() * (-1j)
        assert np.array_equal(c.real, z) and np.all(c.imag == 0)


def test_mismatched_kernels_rejected(rng):
    p = FimParams.init(2, rng)
    with pytest.raises(ShapeError):
        FimParams(p.conv_re, p.conv_re_bias, p.conv_im[:1], p.conv_im_bias, p.pconv, p.pconv_bias)


def test_identity_has_no_imaginary_residue(rng):
    assert imaginary_residue(rng.normal(size=(2, 4, 4)), FimParams.identity(2)) < 1e-12
