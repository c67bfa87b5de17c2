"""
Bundled feeders: a 47-bus industrial feeder and the IEEE 123-bus test feeder.

Topologies and device placements follow the published layouts; line
impedances are synthesized (typical per-unit values for the voltage level),
so absolute voltages are illustrative only.
"""
import logging
from typing import Dict, List, Any, Tuple

from voltgrid.feeder.feeder_model import FeederModel, feeder_from_dict, kvar_to_pu, kw_to_pu

logger = logging.getLogger(__name__)

INVERTER_OVERSIZE = 1.08

# Bus 1 is the substation secondary; line 0-1 models the transformer.
SCE47_TRUNK = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7),
               (7, 8), (8, 9), (9, 10), (10, 11), (11, 12)]
SCE47_LATERALS = [
    (2, 13), (13, 14), (14, 15), (15, 16),
    (3, 17), (17, 18), (17, 19), (19, 20),
    (4, 21), (21, 22), (22, 23),
    (5, 24), (24, 25), (25, 26),
    (6, 27), (27, 28), (28, 29),
    (7, 30), (30, 31), (31, 32), (32, 33),
    (8, 34), (34, 35), (35, 36), (36, 37),
    (9, 38), (38, 39), (39, 40),
    (10, 41), (41, 42), (42, 43),
    (11, 44), (44, 45),
    (12, 46), (46, 47),
]
SCE47_CAPACITORS_KVAR = {3: 120.0, 37: 180.0, 47: 180.0}
SCE47_PV_KW = {2: 300.0, 16: 80.0, 18: 300.0, 21: 400.0, 22: 200.0}

# IEEE node numbers; switch and regulator nodes (135, 149, 152, 160, 197)
# are merged into the bus they connect to.
IEEE123_LINES = [
    (0, 1), (1, 2), (1, 3), (1, 7), (3, 4), (3, 5), (5, 6), (7, 8), (8, 12), (8, 9),
    (8, 13), (9, 14), (13, 34), (13, 18), (14, 11), (14, 10), (15, 16), (15, 17),
    (18, 19), (18, 21), (19, 20), (21, 22), (21, 23), (23, 24), (23, 25), (25, 26),
    (25, 28), (26, 27), (26, 31), (27, 33), (28, 29), (29, 30), (31, 32), (34, 15),
    (35, 36), (35, 40), (36, 37), (36, 38), (38, 39), (40, 41), (40, 42), (42, 43),
    (42, 44), (44, 45), (44, 47), (45, 46), (47, 48), (47, 49), (49, 50), (50, 51),
    (52, 53), (53, 54), (54, 55), (54, 57), (55, 56), (57, 58), (57, 60), (58, 59),
    (60, 61), (60, 62), (62, 63), (63, 64), (64, 65), (65, 66), (67, 68), (67, 72),
    (67, 97), (68, 69), (69, 70), (70, 71), (72, 73), (72, 76), (73, 74), (74, 75),
    (76, 77), (76, 86), (77, 78), (78, 79), (78, 80), (80, 81), (81, 82), (81, 84),
    (82, 83), (84, 85), (86, 87), (87, 88), (87, 89), (89, 90), (89, 91), (91, 92),
    (91, 93), (93, 94), (93, 95), (95, 96), (97, 98), (97, 101), (98, 99), (99, 100),
    (101, 102), (101, 105), (102, 103), (103, 104), (105, 106), (105, 108), (106, 107),
    (108, 109), (109, 110), (110, 111), (110, 112), (112, 113), (113, 114),
    (18, 35), (13, 52), (60, 67),
]
IEEE123_CAPACITORS_KVAR = {3: 50.0, 20: 80.0, 44: 100.0, 93: 100.0, 96: 100.0,
                           98: 100.0, 100: 100.0, 114: 60.0}
IEEE123_PV_KW = {47: 100.0, 49: 16.0, 63: 70.0, 73: 20.0, 104: 20.0, 108: 30.0, 113: 10.0}


def _devices(base_mva: float, caps_kvar: Dict[int, float], pv_kw: Dict[int, float]) -> Dict[str, List]:
    capacitors = [{"bus": bus, "q_pu": kvar_to_pu(q, base_mva)} for bus, q in sorted(caps_kvar.items())]
    inverters = []
    for bus, p in sorted(pv_kw.items()):
        p_cap = kw_to_pu(p, base_mva)
        inverters.append({"bus": bus, "p_cap_pu": p_cap, "s_cap_pu": INVERTER_OVERSIZE * p_cap})
    return {"capacitors": capacitors, "inverters": inverters}


def _line(source: int, target: int, r: float, x: float) -> Dict[str, Any]:
    return {"from": source, "to": target, "r_pu": r, "x_pu": x}


def sce47_dict() -> Dict[str, Any]:
    """
    Feeder dictionary of the 47-bus industrial feeder (12 kV, 1 MVA base).

    Returns:
        Dictionary in the feeder file schema
    """
    base_mva = 1.0
    lines = []
    for source, target in SCE47_TRUNK:
        if source == 0:
            lines.append(_line(source, target, 0.001, 0.003))
        else:
            lines.append(_line(source, target, 0.002, 0.004))
    for source, target in SCE47_LATERALS:
        lines.append(_line(source, target, 0.004, 0.006))
    data = {
        "base_mva": base_mva,
        "base_kv": 12.0,
        "v0": 1.0,
        "buses": list(range(1, 48)),
        "lines": lines,
    }
    data.update(_devices(base_mva, SCE47_CAPACITORS_KVAR, SCE47_PV_KW))
    return data


def ieee123_dict() -> Dict[str, Any]:
    """
    Feeder dictionary of the IEEE 123-bus feeder, single-phase equivalent
    (4.16 kV, 1 MVA base).

    Returns:
        Dictionary in the feeder file schema
    """
    base_mva = 1.0
    lines = []
    for k, (source, target) in enumerate(IEEE123_LINES):
        if source == 0:
            lines.append(_line(source, target, 0.0005, 0.001))
        else:
            # three lengths cycling so sibling laterals differ
            scale = (1.0, 1.5, 0.75)[k % 3]
            lines.append(_line(source, target, 0.0012 * scale, 0.0024 * scale))
    data = {
        "base_mva": base_mva,
        "base_kv": 4.16,
        "v0": 1.0,
        "buses": list(range(1, 115)),
        "lines": lines,
    }
    data.update(_devices(base_mva, IEEE123_CAPACITORS_KVAR, IEEE123_PV_KW))
    return data


BUNDLED_FEEDERS = {
    "sce47": sce47_dict,
    "ieee123": ieee123_dict,
}


def bundled_feeder(name: str) -> FeederModel:
    """
    Build one of the bundled feeders.

    Args:
        name: 'sce47' or 'ieee123'

    Returns:
        Validated FeederModel
    """
    if name not in BUNDLED_FEEDERS:
        raise KeyError(f"unknown bundled feeder '{name}', choose from {sorted(BUNDLED_FEEDERS)}")
    logger.info(f"Building bundled feeder {name}")
    return feeder_from_dict(BUNDLED_FEEDERS[name](), name=name)
