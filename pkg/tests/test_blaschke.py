import math

import numpy as np
import pytest

from calabi import blaschke
from calabi.dsl import parse_immersion
from conftest import make_grid


def test_paraboloid_is_parabolic(paraboloid):
    """Graph of (u1^2 + u2^2)/2: improper affine sphere with constant
    normal (0, 0, 1) and H = 0."""
    for u in [(0.0, 0.0), (0.3, -0.2), (-0.5, 0.1)]:
        frame = blaschke.full_frame(paraboloid, u)
        assert np.allclose(frame.xi, [0.0, 0.0, 1.0], atol=1e-9)
        assert frame.H == pytest.approx(0.0, abs=1e-9)
        assert np.max(np.abs(frame.S)) <= 1e-9


def test_hyperbola_gauge():
    # xy = 1/2 parametrized by arc of exponentials: the H = -1 gauge
    defn = parse_immersion(
        "immersion h2 { vars: s; components: "
        "(0.7071067811865476*exp(s), 0.7071067811865476*exp(-s)); }")
    for s in (-0.4, 0.0, 0.7):
        frame = blaschke.full_frame(defn, (s,))
        assert frame.H == pytest.approx(-1.0, abs=1e-8)
        assert np.allclose(frame.xi, frame.position, atol=1e-8)


def test_quadric_has_zero_difference_tensor(quadric):
    grid = make_grid(-0.4, 0.4, 3, 2)
    worst = max(float(np.max(np.abs(blaschke.full_frame(quadric, tuple(u)).K)))
                for u in grid)
    assert worst <= 1e-7


def test_quadric_normal_is_radial(quadric):
    # centered affine sphere: xi parallel to phi
    frame = blaschke.full_frame(quadric, (0.3, -0.2))
    cosine = float(frame.xi @ frame.position
                   / (np.linalg.norm(frame.xi)
                      * np.linalg.norm(frame.position)))
    assert abs(abs(cosine) - 1.0) <= 1e-8


def test_second_derivative_reconstruction(pair_product):
    """The Gauss formula D_i D_j phi = Gamma^k_ij D_k phi + h_ij xi must
    reproduce the raw second derivatives."""
    frame = blaschke.full_frame(pair_product, (0.1, 0.2, -0.1))
    recon = (np.einsum("ijk,ka->ija", frame.gamma, frame.tangent)
             + np.einsum("ij,a->ija", frame.h, frame.xi))
    assert np.max(np.abs(recon - frame.second)) <= 1e-9
    assert frame.recon_residual <= 1e-9


def test_normal_derivative_gives_shape_operator(point_product):
    # d xi = -S dphi, computed here by finite differences of xi
    u0 = np.array([0.15, -0.2])
    frame = blaschke.full_frame(point_product, tuple(u0))
    eps = 1e-6
    for d in range(2):
        step = np.zeros(2)
        step[d] = eps
        plus = blaschke.full_frame(point_product, tuple(u0 + step)).xi
        minus = blaschke.full_frame(point_product, tuple(u0 - step)).xi
        dxi = (plus - minus) / (2 * eps)
        want = -(frame.S[:, d] @ frame.tangent)
        assert np.allclose(dxi, want, atol=1e-7)


def test_cubic_form_is_totally_symmetric(pair_product):
    frame = blaschke.full_frame(pair_product, (0.2, -0.1, 0.3))
    c = frame.C
    assert np.max(np.abs(c - c.transpose(1, 0, 2))) <= 1e-12
    assert np.max(np.abs(c - c.transpose(0, 2, 1))) <= 1e-12


def test_apolarity_from_normalization(mixed_product):
    frame = blaschke.full_frame(mixed_product, (0.1, 0.05, -0.1, 0.2))
    trace = np.einsum("ijj->i", frame.K)
    assert np.max(np.abs(trace)) <= 1e-10


def _random_unimodular(rng, m):
    a = rng.standard_normal((m, m))
    det = np.linalg.det(a)
    if abs(det) < 1e-3:
        a += np.eye(m)
        det = np.linalg.det(a)
    return a / np.sign(det) / abs(det) ** (1.0 / m)


def test_equiaffine_invariance(point_product):
    """H and the K_T spectrum are unchanged by unimodular ambient maps."""
    from calabi import decompose, dsl

    base = blaschke.full_frame(point_product, (0.1, -0.2))
    base_axes = decompose.find_axes(base)
    base_lams = sorted(round(c.lambda1, 9) for c in base_axes)

    rng = np.random.default_rng(5)
    for _ in range(10):
        a = _random_unimodular(rng, 3)
        assert abs(np.linalg.det(a) - 1.0) <= 1e-9
        comps = []
        for row in a:
            terms = None
            for coef, comp in zip(row, point_product.components):
                term = dsl.mul(dsl.const(float(coef)), comp)
                terms = term if terms is None else dsl.add(terms, term)
            comps.append(terms)
        mapped = dsl.ImmersionDef(name="mapped", vars=point_product.vars,
                                  components=tuple(comps))
        frame = blaschke.full_frame(mapped, (0.1, -0.2))
        assert frame.H == pytest.approx(base.H, abs=1e-8)
        axes = decompose.find_axes(frame)
        lams = sorted(round(c.lambda1, 9) for c in axes)
        assert len(lams) == len(base_lams)
        assert np.allclose(lams, base_lams, atol=1e-8)


def test_degenerate_surface_rejected():
    flat = parse_immersion(
        "immersion flat { vars: u, v; components: (u, v, u + v); }")
    with pytest.raises(blaschke.GeometryError):
        blaschke.full_frame(flat, (0.0, 0.0))


def test_indefinite_metric_rejected():
    saddle = parse_immersion(
        "immersion saddle { vars: u, v; components: (u, v, u*u - v*v); }")
    with pytest.raises(blaschke.IndefiniteMetricError):
        blaschke.full_frame(saddle, (0.1, 0.2))


def test_arity_mismatch_rejected():
    curve = parse_immersion(
        "immersion flat { vars: u1, u2; components: (u1, u2); }")
    with pytest.raises(blaschke.ArityError):
        blaschke.full_frame(curve, (0.1, 0.2))


def test_wrong_point_length_rejected(quadric):
    with pytest.raises(ValueError, match="coordinates"):
        blaschke.full_frame(quadric, (0.1,))
