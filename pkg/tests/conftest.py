"""
Shared fixtures: small feeders and profiles with hand-checkable numbers.
"""
import numpy as np
import pytest

from voltgrid.feeder.feeder_model import FeederModel, feeder_from_dict
from voltgrid.feeder.profiles import ScenarioProfile


def feeder_dict(lines, capacitors=(), inverters=(), v0=1.0):
    buses = sorted({line[1] for line in lines} | {line[0] for line in lines} - {0})
    return {
        "base_mva": 1.0,
        "base_kv": 12.0,
        "v0": v0,
        "buses": buses,
        "lines": [{"from": a, "to": b, "r_pu": r, "x_pu": x} for a, b, r, x in lines],
        "capacitors": [{"bus": bus, "q_pu": q} for bus, q in capacitors],
        "inverters": [{"bus": bus, "p_cap_pu": p, "s_cap_pu": s} for bus, p, s in inverters],
    }


def make_profile(p_c, q_c, p_g) -> ScenarioProfile:
    p_c = np.asarray(p_c, dtype=float)
    n_intervals, slots, _ = p_c.shape
    return ScenarioProfile(
        n_intervals=n_intervals,
        slots_per_interval=slots,
        p_c=p_c,
        q_c=np.asarray(q_c, dtype=float),
        p_g=np.asarray(p_g, dtype=float),
    )


@pytest.fixture
def two_bus() -> FeederModel:
    """Substation and one bus; the bus inverter has q_max = 0.05."""
    return feeder_from_dict(feeder_dict([(0, 1, 0.01, 0.02)], inverters=[(1, 0.0, 0.05)]), name="two-bus")


@pytest.fixture
def chain3() -> FeederModel:
    return feeder_from_dict(feeder_dict([(0, 1, 0.01, 0.02), (1, 2, 0.01, 0.02)]), name="chain3")


@pytest.fixture
def toy_feeder() -> FeederModel:
    """Ten buses in two laterals, three capacitors and three inverters."""
    lines = [
        (0, 1, 0.004, 0.008), (1, 2, 0.006, 0.012), (2, 3, 0.006, 0.012), (3, 4, 0.008, 0.012),
        (1, 5, 0.006, 0.012), (5, 6, 0.006, 0.012), (6, 7, 0.008, 0.012),
        (2, 8, 0.008, 0.012), (8, 9, 0.008, 0.012), (6, 10, 0.008, 0.012),
    ]
    capacitors = [(3, 0.06), (7, 0.06), (9, 0.04)]
    inverters = [(4, 0.10, 0.108), (8, 0.05, 0.054), (10, 0.08, 0.0864)]
    return feeder_from_dict(feeder_dict(lines, capacitors, inverters), name="toy")


@pytest.fixture
def random_tree():
    """Factory for random radial feeders with every bus an inverter bus."""
    def build(n_buses: int, seed: int, with_devices: bool = True) -> FeederModel:
        rng = np.random.default_rng(seed)
        lines = []
        for bus in range(1, n_buses + 1):
            parent = int(rng.integers(0, bus))
            lines.append((parent, bus, float(rng.uniform(0.002, 0.01)), float(rng.uniform(0.004, 0.02))))
        inverters = []
        if with_devices:
            inverters = [(bus, 0.0, float(rng.uniform(0.01, 0.05))) for bus in range(1, n_buses + 1)]
        return feeder_from_dict(feeder_dict(lines, inverters=inverters), name=f"random{n_buses}")
    return build


@pytest.fixture
def toy_profile(toy_feeder):
    """Six intervals of two slots with a heavy constant load and idle PV."""
    n = toy_feeder.n_buses
    shape = (6, 2, n)
    p_c = np.zeros(shape)
    load_buses = np.setdiff1d(np.arange(1, n + 1), toy_feeder.cap_buses)
    p_c[:, :, load_buses - 1] = 0.03
    q_c = 0.75 * p_c
    return make_profile(p_c, q_c, np.zeros(shape))
