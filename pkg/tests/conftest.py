import numpy as np
import pytest

from poolreid.core import GalleryEntry, ImagePool, PoolMember
from poolreid.rerank import pool_weights


def entry(i, vec, cam=0, frame=None, label=None):
    return GalleryEntry(f"img{i}", cam, i if frame is None else frame, vec, label)


def make_pool(vectors, cam=0, capacity=None, roles=None):
    """Pool from raw vectors, first one main, canonical weights."""
    w = pool_weights(len(vectors), roles is not None and "second_main" in roles)
    roles = roles or ["main"] + ["assist"] * (len(vectors) - 1)
    members = [PoolMember(entry(100 + i, v, cam), wi, r)
               for i, (v, wi, r) in enumerate(zip(vectors, w, roles))]
    return ImagePool(tuple(members), capacity or len(vectors), cam)


def random_gallery(rng, n, dim, cams=1):
    return [entry(i, rng.standard_normal(dim), cam=i % cams) for i in range(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def record(criterion, passed, detail):
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"{criterion} {'PASS' if passed else 'FAIL'}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[2:])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'}: {detail}")
