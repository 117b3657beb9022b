import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

# Keep the coset-lattice Monte-Carlo cache at the repo root so its one-time
# cost (~40 s) is paid once per checkout, not once per test.
_CACHE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
                      "lattice-stats.v1")


@pytest.fixture(scope="session")
def stats_cache_path():
    return _CACHE


@pytest.fixture(scope="session")
def coset64(stats_cache_path):
    """The n=64 coset lattice with its cached second-moment statistics."""
    from gainest.lattices import ConvCosetLattice

    lat = ConvCosetLattice(64)
    stats = lat.stats(cache_path=stats_cache_path)
    return lat, stats
