import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []

# the 100-trial ablation is the slowest computation in the suite; run it once
_ABLATION = {}


def default_ablation():
    from polytext.fit import ablation_study

    if "report" not in _ABLATION:
        _ABLATION["report"] = ablation_study(trials=100, seed=0, steps=500, sigma=0.2)
    return _ABLATION["report"]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def star_polygon(rng, n, r_lo=0.5, r_hi=1.0, center=(0.0, 0.0), scale=1.0):
    """Random simple polygon: sorted angles with random radii (star-shaped about ``center``)."""
    # keep angles apart and below a full turn so the outline never wraps onto itself;
    # an angular gap wider than pi would let the closing edges cross
    while True:
        theta = np.sort(rng.uniform(0, 2 * np.pi - n * 1e-3, n)) + np.arange(n) * 1e-3
        if np.diff(np.concatenate([theta, theta[:1] + 2 * np.pi])).max() < np.pi:
            break
    r = rng.uniform(r_lo, r_hi, n)
    pts = np.stack([np.cos(theta) * r, np.sin(theta) * r], axis=1) * scale
    return pts + np.asarray(center)


def convex_polygon(rng, n, scale=1.0, center=(0.0, 0.0)):
    """Random convex polygon with ``n`` vertices on a slightly squashed circle."""
    theta = np.sort(rng.uniform(0, 2 * np.pi, n))
    gaps = np.diff(np.concatenate([theta, theta[:1] + 2 * np.pi]))
    while gaps.min() < 0.2:
        theta = np.sort(rng.uniform(0, 2 * np.pi, n))
        gaps = np.diff(np.concatenate([theta, theta[:1] + 2 * np.pi]))
    ax = rng.uniform(0.6, 1.0)
    pts = np.stack([np.cos(theta), ax * np.sin(theta)], axis=1) * scale
    return pts + np.asarray(center)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rhombus(rng, side, center):
    """Equal-sided quadrilateral, so arc-length resampling to 4 points returns it unchanged."""
    phi = rng.uniform(np.pi / 3, 2 * np.pi / 3)
    rot = rng.uniform(-np.pi / 4, np.pi / 4)
    u = side * np.array([np.cos(rot), np.sin(rot)])
    w = side * np.array([np.cos(rot + phi), np.sin(rot + phi)])
    pts = np.array([(0, 0), u, u + w, w])
    return pts - pts.mean(axis=0) + np.asarray(center)


def quadrilateral(rng, side, center):
    """Convex text-like quadrilateral with unequal sides."""
    w, h = side * rng.uniform(1.0, 2.0), side * rng.uniform(0.5, 0.9)
    box = np.array([(-w, -h), (w, -h), (w, h), (-w, h)]) / 2
    box += rng.uniform(-0.1, 0.1, box.shape) * h
    rot = rng.uniform(-np.pi / 6, np.pi / 6)
    c, s = np.cos(rot), np.sin(rot)
    return box @ np.array([[c, s], [-s, c]]) + np.asarray(center)


def scene(rng, count, shape=rhombus, image=512, n=4):
    """``count`` pairwise separated annotations, each owning at least one positive cell."""
    from polytext.labelgen import Annotation, encode

    polys, boxes = [], []
    while len(polys) < count:
        side = rng.uniform(16, 48)
        poly = shape(rng, side, rng.uniform(40, image - 40, 2))
        lo, hi = poly.min(axis=0) - 2, poly.max(axis=0) + 2
        if lo.min() < 0 or hi.max() > image:
            continue
        if any((lo < bhi).all() and (blo < hi).all() for blo, bhi in boxes):
            continue
        if not list(encode([Annotation(poly)], n=n).positives()):
            continue
        polys.append(poly)
        boxes.append((lo, hi))
    return [Annotation(p) for p in polys]
