import numpy as np
import pytest

from calabi import blaschke, checks
from calabi.dsl import parse_immersion
from conftest import make_grid


def test_sphere_report_passes_on_product(pair_product):
    grid = make_grid(-0.3, 0.3, 3, 3)
    report = checks.sphere_residual(pair_product, grid)
    assert report.passed
    assert report.max_residual <= 1e-8
    assert report.samples == 27


def test_sphere_report_fails_on_non_sphere():
    torus_like = parse_immersion(
        "immersion bump { vars: u, v; components: "
        "(u, v, 0.5*(u*u + v*v) + 0.05*u*u*u*u); }")
    report = checks.sphere_residual(torus_like, [(0.3, 0.3)])
    assert not report.passed
    assert report.worst_point == (0.3, 0.3)


def test_apolarity_on_products(point_product, mixed_product):
    grid2 = make_grid(-0.3, 0.3, 3, 2)
    assert checks.apolarity_residual(point_product, grid2).max_residual \
        <= 1e-8
    grid4 = make_grid(-0.2, 0.2, 2, 4)
    assert checks.apolarity_residual(mixed_product, grid4).max_residual \
        <= 1e-8


def test_gauss_codazzi_on_product(pair_product):
    grid = make_grid(-0.2, 0.2, 2, 3)
    reports = checks.gauss_codazzi_residual(pair_product, grid)
    assert reports["gauss"].passed
    assert reports["codazzi"].passed
    assert reports["gauss"].max_residual <= 1e-6
    assert reports["codazzi"].max_residual <= 1e-6


def test_gauss_codazzi_refuses_wrong_gauge():
    # the a = 1 hyperbola is a sphere with H != -1
    defn = parse_immersion(
        "immersion hyp { vars: s; components: (exp(s), exp(-s)); }")
    with pytest.raises(checks.GaugeError):
        checks.gauss_codazzi_residual(defn, [(0.0,), (0.2,)])


def test_quadric_curvature_is_constant_negative():
    """Hyperboloid sheet rescaled to H = -1: with K = 0 the Gauss
    identity forces constant curvature -1."""
    from calabi import decompose
    quadric = parse_immersion(
        "immersion hyperboloid { vars: u1, u2; components: "
        "(u1, u2, sqrt(1 + u1*u1 + u2*u2)); }")
    scaled = decompose.normalize_homothety(quadric).def_scaled
    grid = make_grid(-0.4, 0.4, 3, 2)
    reports = checks.gauss_codazzi_residual(scaled, grid)
    assert reports["gauss"].max_residual <= 1e-6
    frame = blaschke.full_frame(scaled, (0.1, -0.2))
    want = -(np.einsum("jk,il->ijkl", frame.h, np.eye(2))
             - np.einsum("ik,jl->ijkl", frame.h, np.eye(2)))
    assert np.max(np.abs(frame.Rhat - want)) <= 1e-6


def test_parallel_cubic_on_products(pair_product, mixed_product):
    grid3 = make_grid(-0.2, 0.2, 2, 3)
    assert checks.parallel_cubic_residual(pair_product, grid3).passed
    grid4 = make_grid(-0.2, 0.2, 2, 4)
    assert checks.parallel_cubic_residual(mixed_product, grid4).passed


def test_unimodular_criterion_on_product(point_product):
    grid = make_grid(-0.3, 0.3, 3, 2)
    report = checks.unimodular_criterion(point_product, grid)
    assert report.passed
    assert report.max_residual <= 1e-8


def test_unimodular_criterion_rejects_off_center_gauge():
    defn = parse_immersion(
        "immersion hyp { vars: s; components: (exp(s), exp(-s)); }")
    # xi = phi fails for the a = 1 gauge, and the criterion must say so
    with pytest.raises(checks.GaugeError):
        checks.unimodular_criterion(defn, [(0.0,), (0.3,)])


def test_report_from_samples_picks_worst_point():
    report = checks.CheckReport.from_samples(
        "demo", [1e-9, 5e-7, 2e-9], [(0.0,), (1.0,), (2.0,)], 1e-6)
    assert report.passed
    assert report.worst_point == (1.0,)
    assert report.max_residual == pytest.approx(5e-7)
