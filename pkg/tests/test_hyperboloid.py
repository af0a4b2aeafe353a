import math

import numpy as np
import pytest

from vsref.errors import DomainError, TotalInternalReflectionError
from vsref.hyperboloid import (
    Hyperboloid,
    d_radius_d_eccentricity,
    domain_contains,
    polar_radius,
    reflect,
    refract,
    surface_point_and_normal,
)

EZ = np.array([0.0, 0.0, 1.0])


def random_domain_direction(rng, h):
    """Direction inside the polar-radius domain of ``h``."""
    t = rng.uniform(1.0 / h.eccentricity + 1e-3, 1.0)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    s = math.sqrt(1.0 - t * t)
    axis = h.axis
    seed = EZ if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(seed, axis)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    return t * axis + s * (math.cos(phi) * u + math.sin(phi) * v)


class TestPolarRadius:
    def test_vertex_value(self):
        h = Hyperboloid(focus=EZ, eccentricity=2.0)
        assert polar_radius(h, EZ) == pytest.approx(0.75, rel=1e-15)

    def test_vertex_identity_random(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            focus = rng.normal(size=3)
            if np.linalg.norm(focus) < 0.1:
                continue
            eps = 1.0 + 10.0 ** rng.uniform(-3, 2)
            h = Hyperboloid(focus=focus, eccentricity=eps)
            expected = h.norm * (1.0 + eps) / (2.0 * eps)
            assert polar_radius(h, h.axis) == pytest.approx(expected, rel=1e-12)

    def test_plane_limit_on_axis(self):
        h = Hyperboloid(focus=EZ, eccentricity=1e8)
        assert polar_radius(h, EZ) == pytest.approx(0.5, abs=1e-7)

    def test_domain_error(self):
        h = Hyperboloid(focus=EZ, eccentricity=2.0)
        m = np.array([math.sqrt(1 - 0.4**2), 0.0, 0.4])
        with pytest.raises(DomainError):
            polar_radius(h, m)

    def test_monotone_in_eccentricity(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            e1, e2 = sorted(1.0 + 10.0 ** rng.uniform(-2, 1.5, size=2))
            if e2 - e1 < 1e-9:
                continue
            h1 = Hyperboloid(focus=EZ, eccentricity=e1)
            h2 = Hyperboloid(focus=EZ, eccentricity=e2)
            # draw from the smaller domain (the lower-eccentricity member's)
            m = random_domain_direction(rng, h1)
            assert polar_radius(h1, m) > polar_radius(h2, m)

    def test_plane_limit_sup_monotone(self):
        ts = np.linspace(0.9, 1.0, 200)
        sups = []
        for eps in (1e1, 1e2, 1e3, 1e4):
            h = Hyperboloid(focus=EZ, eccentricity=eps)
            vals = [
                abs(polar_radius(h, np.array([math.sqrt(1 - t * t), 0.0, t])) - 0.5 / t)
                for t in ts
            ]
            sups.append(max(vals))
        assert sups[1] < sups[0] and sups[2] < sups[1] and sups[3] < sups[2]
        assert sups[-1] <= 1e-3


class TestDomain:
    def test_inside(self):
        h = Hyperboloid(focus=EZ, eccentricity=2.0)
        assert domain_contains(h, np.array([0.8, 0.0, 0.6]))

    def test_boundary_strict(self):
        h = Hyperboloid(focus=EZ, eccentricity=2.0)
        assert not domain_contains(h, np.array([math.sqrt(0.75), 0.0, 0.5]))

    def test_cap_inside_domain_sweep(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            eps = 1.0 + 10.0 ** rng.uniform(-1, 1.5)
            delta = rng.uniform(1.0 / eps + 1e-6, 1.0)
            h = Hyperboloid(focus=EZ, eccentricity=eps)
            t = rng.uniform(delta, 1.0)
            m = np.array([math.sqrt(1 - t * t), 0.0, t])
            assert domain_contains(h, m)


class TestEccentricityDerivative:
    def test_axis_value(self):
        h = Hyperboloid(focus=EZ, eccentricity=2.0)
        assert d_radius_d_eccentricity(h, EZ) == pytest.approx(-0.125, rel=1e-14)

    def test_always_negative(self):
        rng = np.random.default_rng(4)
        for _ in range(500):
            eps = 1.0 + 10.0 ** rng.uniform(-3, 2)
            h = Hyperboloid(focus=rng.normal(size=3) + 2 * EZ, eccentricity=eps)
            m = random_domain_direction(rng, h)
            assert d_radius_d_eccentricity(h, m) < 0.0

    def test_matches_finite_difference(self):
        h = Hyperboloid(focus=EZ, eccentricity=2.0)
        m = np.array([0.6, 0.0, 0.8])
        step = 1e-6
        hi = Hyperboloid(focus=EZ, eccentricity=2.0 + step)
        lo = Hyperboloid(focus=EZ, eccentricity=2.0 - step)
        fd = (polar_radius(hi, m) - polar_radius(lo, m)) / (2.0 * step)
        assert d_radius_d_eccentricity(h, m) == pytest.approx(fd, rel=1e-6)


class TestSurfaceAndNormal:
    def test_vertex_normal_is_axis(self):
        h = Hyperboloid(focus=EZ, eccentricity=2.0)
        z, n = surface_point_and_normal(h, EZ)
        assert np.allclose(n, EZ, atol=1e-14)
        assert np.allclose(z, 0.75 * EZ)

    def test_two_focus_identity(self):
        rng = np.random.default_rng(5)
        for _ in range(400):
            focus = rng.normal(size=3)
            if np.linalg.norm(focus) < 0.1:
                continue
            eps = 1.0 + 10.0 ** rng.uniform(-2, 1.5)
            h = Hyperboloid(focus=focus, eccentricity=eps)
            m = random_domain_direction(rng, h)
            z, _ = surface_point_and_normal(h, m)
            lhs = np.linalg.norm(z) - np.linalg.norm(z - h.focus)
            assert abs(lhs - h.norm / eps) <= 1e-10 * h.norm

    def test_orientation(self):
        rng = np.random.default_rng(6)
        for _ in range(300):
            h = Hyperboloid(focus=rng.normal(size=3) + 2 * EZ, eccentricity=1.0 + rng.uniform(0.01, 5))
            m = random_domain_direction(rng, h)
            _, n = surface_point_and_normal(h, m)
            assert float(m @ n) > 0.0
            assert abs(np.linalg.norm(n) - 1.0) < 1e-12


class TestReflect:
    def test_normal_incidence(self):
        assert np.allclose(reflect(EZ, EZ), -EZ)

    def test_grazing(self):
        assert np.allclose(reflect([1, 0, 0], EZ), [1, 0, 0])

    def test_hand_value(self):
        y = reflect([0.6, 0.0, 0.8], EZ)
        assert y == pytest.approx([0.6, 0.0, -0.8])

    def test_flips_normal_component(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            m = rng.normal(size=3)
            m /= np.linalg.norm(m)
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
            y = reflect(m, n)
            assert float(y @ n) == pytest.approx(-float(m @ n), abs=1e-12)
            assert abs(np.linalg.norm(y) - 1.0) < 1e-12


class TestRefract:
    def test_reverse_mirror_identity(self):
        rng = np.random.default_rng(8)
        for _ in range(300):
            m = rng.normal(size=3)
            m /= np.linalg.norm(m)
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
            if float(m @ n) <= 1e-6:
                n = -n
            assert np.allclose(refract(m, n, -1.0), -reflect(m, n), atol=1e-14)

    def test_vacuum_identity(self):
        rng = np.random.default_rng(9)
        m = rng.normal(size=3)
        m /= np.linalg.norm(m)
        n = m + 0.3 * rng.normal(size=3)
        n /= np.linalg.norm(n)
        assert np.allclose(refract(m, n, 1.0), m, atol=1e-14)

    def test_total_internal_reflection(self):
        m = np.array([math.sqrt(0.75), 0.0, 0.5])
        with pytest.raises(TotalInternalReflectionError):
            refract(m, EZ, 2.0)

    def test_focal_property(self):
        rng = np.random.default_rng(10)
        for _ in range(500):
            focus = rng.normal(size=3)
            if np.linalg.norm(focus) < 0.1:
                continue
            eps = 1.0 + 10.0 ** rng.uniform(-2, 1.5)
            h = Hyperboloid(focus=focus, eccentricity=eps)
            m = random_domain_direction(rng, h)
            z, n = surface_point_and_normal(h, m)
            y = refract(m, n, -1.0)
            rel = h.focus - z
            miss = np.linalg.norm(rel - (rel @ y) * y)
            assert miss <= 1e-9 * h.norm


class TestConstruction:
    def test_degenerate_eccentricity_rejected(self):
        with pytest.raises(ValueError, match="degenerate"):
            Hyperboloid(focus=EZ, eccentricity=1.0)

    def test_origin_focus_rejected(self):
        with pytest.raises(ValueError):
            Hyperboloid(focus=np.zeros(3), eccentricity=2.0)
