"""
Radial feeder model: topology, device placement and per-unit bases.

Per-bus vectors throughout the package have length N and are indexed by
``bus - 1``; the substation (bus 0) is never part of them.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Any, Tuple

import numpy as np

from voltgrid.exceptions import FeederFormatError, FeederValidationError
from voltgrid.feeder.graph_utils import FeederGraph, SUBSTATION

logger = logging.getLogger(__name__)

REQUIRED_KEYS = ("base_mva", "base_kv", "v0", "buses", "lines")


def kvar_to_pu(value: float, base_mva: float) -> float:
    """Convert kVar (or kW) to per-unit on a base_mva system base."""
    return value / (1000.0 * base_mva)


def pu_to_kvar(value: float, base_mva: float) -> float:
    return value * 1000.0 * base_mva


kw_to_pu = kvar_to_pu
pu_to_kw = pu_to_kvar


def inverter_bound(s_cap: float, p_cap: float) -> float:
    """
    Reactive limit of an inverter whose apparent rating exceeds its active rating.

    Args:
        s_cap: Apparent power capacity (per-unit)
        p_cap: Active power capacity (per-unit)

    Returns:
        sqrt(s_cap^2 - p_cap^2)

    Raises:
        FeederValidationError: If s_cap < p_cap or p_cap < 0
    """
    if p_cap < 0:
        raise FeederValidationError(f"inverter active capacity must be >= 0, got {p_cap}")
    if s_cap < p_cap:
        raise FeederValidationError(
            f"inverter apparent capacity {s_cap} is below active capacity {p_cap}"
        )
    return math.sqrt(s_cap * s_cap - p_cap * p_cap)


@dataclass(frozen=True)
class InverterBound:
    """Reactive limits q_max of every inverter bus, constant across slots."""
    buses: np.ndarray
    q_max: np.ndarray


def _frozen(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class FeederModel:
    """
    Immutable radial feeder.

    Line i (1 <= i <= N) joins parent[i] to bus i; line_r[i-1] and
    line_x[i-1] hold its impedance.
    """
    n_buses: int
    parent: np.ndarray
    children: Tuple[Tuple[int, ...], ...]
    line_r: np.ndarray
    line_x: np.ndarray
    cap_buses: np.ndarray
    cap_ratings: np.ndarray
    inv_buses: np.ndarray
    inv_p_cap: np.ndarray
    inv_s_cap: np.ndarray
    v0: float
    base_mva: float
    base_kv: float
    name: str = "feeder"
    order: Tuple[int, ...] = field(default=(), repr=False)

    @property
    def n_caps(self) -> int:
        return int(self.cap_buses.size)

    @property
    def n_inverters(self) -> int:
        return int(self.inv_buses.size)

    @property
    def q_max(self) -> np.ndarray:
        """Reactive limit per inverter bus, aligned with inv_buses."""
        return _frozen([inverter_bound(s, p) for s, p in zip(self.inv_s_cap, self.inv_p_cap)])

    def inverter_bounds(self) -> InverterBound:
        return InverterBound(buses=self.inv_buses, q_max=self.q_max)

    def p_cap_per_bus(self) -> np.ndarray:
        """Active PV capacity per bus (zero off inverter buses)."""
        caps = np.zeros(self.n_buses)
        caps[self.inv_buses - 1] = self.inv_p_cap
        return caps

    def depth_first_order(self) -> List[int]:
        return list(self.order)

    def path_to_root(self, bus: int) -> List[int]:
        """
        Get the buses on the path from a bus up to (excluding) the substation.

        Args:
            bus: Bus index in 1..N

        Returns:
            List starting at bus and ending at the child of the substation
        """
        path = []
        while bus != SUBSTATION:
            path.append(bus)
            bus = int(self.parent[bus])
        return path

    def bottom_up_order(self) -> List[int]:
        """Non-substation buses with every child listed before its parent."""
        return [bus for bus in reversed(self.order) if bus != SUBSTATION]

    def top_down_order(self) -> List[int]:
        return [bus for bus in self.order if bus != SUBSTATION]


def feeder_from_dict(data: Dict[str, Any], name: str = "feeder") -> FeederModel:
    """
    Build and validate a FeederModel from its JSON dictionary form.

    Args:
        data: Dictionary following the feeder file schema
        name: Label used in logs and manifests

    Returns:
        Validated FeederModel

    Raises:
        FeederFormatError: If keys are missing or values are not numeric
        FeederValidationError: If a model invariant is violated
    """
    missing = [key for key in REQUIRED_KEYS if key not in data]
    if missing:
        raise FeederFormatError(f"feeder is missing required keys: {missing}")

    try:
        base_mva = float(data["base_mva"])
        base_kv = float(data["base_kv"])
        v0 = float(data["v0"])
        buses = sorted(int(bus) for bus in data["buses"] if int(bus) != SUBSTATION)
        lines = [
            (int(line["from"]), int(line["to"]), float(line["r_pu"]), float(line["x_pu"]))
            for line in data["lines"]
        ]
        capacitors = [(int(c["bus"]), float(c["q_pu"])) for c in data.get("capacitors", [])]
        inverters = [
            (int(inv["bus"]), float(inv["p_cap_pu"]), float(inv["s_cap_pu"]))
            for inv in data.get("inverters", [])
        ]
    except (KeyError, TypeError, ValueError) as e:
        raise FeederFormatError(f"malformed feeder entry: {e}") from e

    n_buses = len(buses)
    if n_buses == 0:
        raise FeederValidationError("feeder has no non-substation buses")
    if buses != list(range(1, n_buses + 1)):
        raise FeederValidationError(f"buses must be numbered 1..{n_buses} without gaps")
    if base_mva <= 0 or base_kv <= 0:
        raise FeederValidationError("base_mva and base_kv must be positive")
    if v0 <= 0:
        raise FeederValidationError(f"v0 must be positive, got {v0}")

    graph = FeederGraph(n_buses)
    for source, target, r, x in lines:
        if r <= 0 or x <= 0:
            raise FeederValidationError(
                f"line ({source}, {target}) needs r > 0 and x > 0, got r={r}, x={x}"
            )
        graph.add_line(source, target, r_pu=r, x_pu=x)
    graph.orient()

    parent = graph.parents()
    line_r = np.zeros(n_buses)
    line_x = np.zeros(n_buses)
    for bus in range(1, n_buses + 1):
        attrs = graph.get_edge_attributes(parent[bus], bus)
        line_r[bus - 1] = attrs["r_pu"]
        line_x[bus - 1] = attrs["x_pu"]

    cap_map: Dict[int, float] = {}
    for bus, rating in capacitors:
        if not 1 <= bus <= n_buses:
            raise FeederValidationError(f"capacitor at invalid bus {bus}")
        if bus in cap_map:
            raise FeederValidationError(f"duplicate capacitor at bus {bus}")
        if rating <= 0:
            raise FeederValidationError(f"capacitor at bus {bus} needs q_pu > 0, got {rating}")
        cap_map[bus] = rating

    inv_map: Dict[int, Tuple[float, float]] = {}
    for bus, p_cap, s_cap in inverters:
        if not 1 <= bus <= n_buses:
            raise FeederValidationError(f"inverter at invalid bus {bus}")
        if bus in inv_map:
            raise FeederValidationError(f"duplicate inverter at bus {bus}")
        if bus in cap_map:
            raise FeederValidationError(
                f"overlapping device sets: bus {bus} has both a capacitor and an inverter"
            )
        inverter_bound(s_cap, p_cap)
        inv_map[bus] = (p_cap, s_cap)

    # Buses without a device are inverter buses with zero bounds.
    for bus in range(1, n_buses + 1):
        if bus not in cap_map and bus not in inv_map:
            inv_map[bus] = (0.0, 0.0)

    cap_buses = sorted(cap_map)
    inv_buses = sorted(inv_map)

    model = FeederModel(
        n_buses=n_buses,
        parent=_frozen(parent, dtype=int),
        children=tuple(graph.children()),
        line_r=_frozen(line_r),
        line_x=_frozen(line_x),
        cap_buses=_frozen(cap_buses, dtype=int),
        cap_ratings=_frozen([cap_map[bus] for bus in cap_buses]),
        inv_buses=_frozen(inv_buses, dtype=int),
        inv_p_cap=_frozen([inv_map[bus][0] for bus in inv_buses]),
        inv_s_cap=_frozen([inv_map[bus][1] for bus in inv_buses]),
        v0=v0,
        base_mva=base_mva,
        base_kv=base_kv,
        name=name,
        order=tuple(graph.depth_first_order()),
    )
    logger.info(
        f"Loaded feeder '{name}': {n_buses} buses, {model.n_caps} capacitors, "
        f"{int(np.count_nonzero(model.inv_s_cap))} active inverters"
    )
    return model


def feeder_to_dict(model: FeederModel) -> Dict[str, Any]:
    """
    Export a FeederModel to the feeder file schema.

    Args:
        model: Feeder to export

    Returns:
        JSON-serializable dictionary
    """
    return {
        "base_mva": model.base_mva,
        "base_kv": model.base_kv,
        "v0": model.v0,
        "buses": list(range(1, model.n_buses + 1)),
        "lines": [
            {
                "from": int(model.parent[bus]),
                "to": bus,
                "r_pu": float(model.line_r[bus - 1]),
                "x_pu": float(model.line_x[bus - 1]),
            }
            for bus in range(1, model.n_buses + 1)
        ],
        "capacitors": [
            {"bus": int(bus), "q_pu": float(q)}
            for bus, q in zip(model.cap_buses, model.cap_ratings)
        ],
        "inverters": [
            {"bus": int(bus), "p_cap_pu": float(p), "s_cap_pu": float(s)}
            for bus, p, s in zip(model.inv_buses, model.inv_p_cap, model.inv_s_cap)
            if s > 0
        ],
    }


def load_feeder(path: str, name: Optional[str] = None) -> FeederModel:
    """
    Load and validate a feeder JSON file.

    Args:
        path: Path to the feeder file
        name: Optional label (defaults to the file name)

    Returns:
        Validated FeederModel

    Raises:
        FeederFormatError: If the file is not valid JSON or misses keys
        FeederValidationError: If a model invariant is violated
    """
    logger.info(f"Loading feeder from {path}")
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise FeederFormatError(f"cannot parse feeder file {path}: {e}") from e
    if not isinstance(data, dict):
        raise FeederFormatError(f"feeder file {path} must hold a JSON object")
    return feeder_from_dict(data, name=name or path)


def save_feeder(model: FeederModel, path: str):
    with open(path, 'w') as f:
        json.dump(feeder_to_dict(model), f, indent=2)
    logger.info(f"Saved feeder to {path}")
