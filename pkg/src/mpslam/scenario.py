"""Scenario definition, the built-in default scenario, and its YAML form."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .geometry import Anchor, Floorplan, VirtualAnchor, WallSegment, enumerate_vas, reflection_visible
from .measurement_model import BirthModel, FalseAlarmModel, NoiseParams
from .slam_core import FilterParams

SCENARIO_SCHEMA = "mpslam-scenario/1"


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario description."""


@dataclass(frozen=True)
class AmplitudeModel:
    u_ref: float = 30.0  # normalized amplitude at d_ref
    d_ref: float = 1.0


@dataclass(frozen=True)
class SimulationOptions:
    enforce_visibility: bool = True
    max_order: int = 1
    orientation: float = 0.0


@dataclass
class Scenario:
    floorplan: Floorplan
    anchors: list[Anchor]
    track: np.ndarray  # (N, 2) true agent positions
    true_modes: np.ndarray | None = None  # (N,) 1-based
    turn_windows: list[tuple[int, int]] = field(default_factory=list)
    noise: NoiseParams = field(default_factory=NoiseParams)
    false_alarm: FalseAlarmModel = field(default_factory=FalseAlarmModel)
    birth: BirthModel = field(default_factory=BirthModel)
    amplitude: AmplitudeModel = field(default_factory=AmplitudeModel)
    simulation: SimulationOptions = field(default_factory=SimulationOptions)
    filter: FilterParams = field(default_factory=FilterParams)
    runs: int = 10
    base_seed: int = 0
    name: str = "custom"

    def __post_init__(self):
        self.track = np.asarray(self.track, dtype=float)
        if self.track.ndim != 2 or self.track.shape[1] != 2 or len(self.track) < 2:
            raise ScenarioError("track must be an (N >= 2, 2) array of positions")
        if not np.all(np.isfinite(self.track)):
            raise ScenarioError("track contains non-finite positions")
        ids = [a.anchor_id for a in self.anchors]
        if not ids or len(set(ids)) != len(ids):
            raise ScenarioError("anchor ids must be present and unique")
        if self.true_modes is not None:
            self.true_modes = np.asarray(self.true_modes, dtype=int)
            if self.true_modes.shape != (len(self.track),):
                raise ScenarioError("true_modes length must match the track")
            if self.true_modes.min() < 1:
                raise ScenarioError("true_modes are 1-based")
        for s, e in self.turn_windows:
            if not 0 <= s < e < len(self.track):
                raise ScenarioError(f"turn window {(s, e)} outside the track")
        if self.runs < 1:
            raise ScenarioError("runs must be >= 1")

    @property
    def num_steps(self) -> int:
        return len(self.track)

    def virtual_anchors(self, anchor: Anchor) -> list[VirtualAnchor]:
        return enumerate_vas(anchor, self.floorplan, self.simulation.max_order)

    def visible_vas(self, anchor: Anchor) -> list[VirtualAnchor]:
        """VAs visible from at least one track position (all VAs if visibility is off)."""
        vas = self.virtual_anchors(anchor)
        if not self.simulation.enforce_visibility:
            return vas
        return [va for va in vas if any(reflection_visible(p, va, self.floorplan) for p in self.track)]

    def true_feature_positions(self, anchor: Anchor) -> np.ndarray:
        vas = self.visible_vas(anchor)
        return np.array([va.position for va in vas], dtype=float).reshape(-1, 2)

    def with_filter(self, **changes) -> "Scenario":
        return replace(self, filter=replace(self.filter, **changes))


# ---------------------------------------------------------------------------
# default scenario

# compact "house-shaped" room: four rectangle walls, the top one replaced by two
# roof segments; PA 2 sits on the bottom wall, so it has no image across it
_ROOM_SCALE = 0.7
_ROOM = [((0, 0), (10, 0)), ((10, 0), (10, 6)), ((10, 6), (5, 9)), ((5, 9), (0, 6)), ((0, 6), (0, 0))]
_PA = {1: (3.0, 5.0), 2: (6.0, 0.0)}
_TRACK_START = (2.0, 1.0)


def build_track(
    start=_TRACK_START,
    v_straight: float = 0.04,
    v_peak: float = 0.12,
    legs: tuple[int, ...] = (50, 40, 39),
    turn_steps: int = 15,
    heading0: float = 0.0,
):
    """Straight legs joined by 90-degree left turns with a speed bump.

    Inside a turn the heading ramps linearly and the step length rises from
    ``v_straight`` to ``v_peak`` and back along a half sine. Returns
    ``(positions, turn_windows, modes)``; position ``n`` of a window lies in
    the turn for ``start < n <= end``.
    """
    pos = [np.asarray(start, dtype=float)]
    modes = [1]
    windows = []
    heading = heading0
    for i, leg in enumerate(legs):
        for _ in range(leg):
            pos.append(pos[-1] + v_straight * np.array([math.cos(heading), math.sin(heading)]))
            modes.append(1)
        if i == len(legs) - 1:
            break
        first = len(pos) - 1
        for t in range(turn_steps):
            frac = (t + 0.5) / turn_steps
            speed = v_straight + (v_peak - v_straight) * math.sin(math.pi * frac)
            h = heading + 0.5 * math.pi * frac
            pos.append(pos[-1] + speed * np.array([math.cos(h), math.sin(h)]))
            modes.append(2)
        heading += 0.5 * math.pi
        windows.append((first, len(pos) - 1))
    return np.array(pos), windows, np.array(modes, dtype=int)


def build_default_scenario() -> Scenario:
    walls = tuple(
        WallSegment(tuple(_ROOM_SCALE * c for c in a), tuple(_ROOM_SCALE * c for c in b)) for a, b in _ROOM
    )
    floorplan = Floorplan(walls)
    anchors = [Anchor(j, tuple(_ROOM_SCALE * c for c in p)) for j, p in _PA.items()]
    track, windows, modes = build_track()
    xs = [c for w in walls for c in (w.a.x, w.b.x)]
    ys = [c for w in walls for c in (w.a.y, w.b.y)]
    center = (0.5 * (min(xs) + max(xs)), 0.5 * (min(ys) + max(ys)))
    return Scenario(
        floorplan=floorplan,
        anchors=anchors,
        track=track,
        true_modes=modes,
        turn_windows=windows,
        birth=BirthModel(mu_n=0.05, center=center, half_width=15.0),
        name="default",
    )


# ---------------------------------------------------------------------------
# YAML round trip


def scenario_to_dict(sc: Scenario) -> dict:
    filt = asdict(sc.filter)
    filt["transition"] = [list(map(float, row)) for row in sc.filter.transition]
    filt["sigma_w"] = [float(s) for s in sc.filter.sigma_w]
    return {
        "schema": SCENARIO_SCHEMA,
        "name": sc.name,
        "runs": sc.runs,
        "base_seed": sc.base_seed,
        "floorplan": [[[w.a.x, w.a.y], [w.b.x, w.b.y]] for w in sc.floorplan.walls],
        "anchors": [{"id": a.anchor_id, "position": [a.position.x, a.position.y]} for a in sc.anchors],
        "track": [[float(x), float(y)] for x, y in sc.track],
        "true_modes": None if sc.true_modes is None else [int(q) for q in sc.true_modes],
        "turn_windows": [[int(s), int(e)] for s, e in sc.turn_windows],
        "noise": asdict(sc.noise),
        "false_alarm": asdict(sc.false_alarm),
        "birth": {**asdict(sc.birth), "center": list(sc.birth.center)},
        "amplitude": asdict(sc.amplitude),
        "simulation": asdict(sc.simulation),
        "filter": filt,
    }


def _section(cls, raw, key):
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ScenarioError(f"section '{key}' must be a mapping")
    known = set(cls.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ScenarioError(f"unknown keys in '{key}': {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid '{key}' section: {exc}") from exc


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a mapping")
    schema = data.get("schema", SCENARIO_SCHEMA)
    if schema != SCENARIO_SCHEMA:
        raise ScenarioError(f"unsupported scenario schema {schema!r}")
    for key in ("floorplan", "anchors", "track"):
        if key not in data:
            raise ScenarioError(f"missing required key '{key}'")
    try:
        floorplan = Floorplan(tuple(WallSegment(tuple(a), tuple(b)) for a, b in data["floorplan"]))
        anchors = [Anchor(int(a["id"]), tuple(a["position"])) for a in data["anchors"]]
    except (TypeError, ValueError, KeyError) as exc:
        raise ScenarioError(f"invalid geometry: {exc}") from exc
    birth_raw = dict(data.get("birth") or {})
    if "center" in birth_raw:
        birth_raw["center"] = tuple(birth_raw["center"])
    filt_raw = dict(data.get("filter") or {})
    if "transition" in filt_raw:
        filt_raw["transition"] = tuple(tuple(float(x) for x in row) for row in filt_raw["transition"])
    if "sigma_w" in filt_raw:
        filt_raw["sigma_w"] = tuple(float(x) for x in filt_raw["sigma_w"])
    return Scenario(
        floorplan=floorplan,
        anchors=anchors,
        track=np.asarray(data["track"], dtype=float),
        true_modes=data.get("true_modes"),
        turn_windows=[tuple(w) for w in data.get("turn_windows") or []],
        noise=_section(NoiseParams, data.get("noise"), "noise"),
        false_alarm=_section(FalseAlarmModel, data.get("false_alarm"), "false_alarm"),
        birth=_section(BirthModel, birth_raw, "birth"),
        amplitude=_section(AmplitudeModel, data.get("amplitude"), "amplitude"),
        simulation=_section(SimulationOptions, data.get("simulation"), "simulation"),
        filter=_section(FilterParams, filt_raw, "filter"),
        runs=int(data.get("runs", 10)),
        base_seed=int(data.get("base_seed", 0)),
        name=str(data.get("name", "custom")),
    )


def dump_scenario(sc: Scenario) -> str:
    header = (
        "# Multipath SLAM scenario. Lengths in meters, angles in radians.\n"
        "# The room and track geometry of the default scenario are a constructed\n"
        "# corner-style room: PA 1 has five first-order images, PA 2 four.\n"
    )
    return header + yaml.safe_dump(scenario_to_dict(sc), sort_keys=False, default_flow_style=None, width=100)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"scenario {path} is not valid YAML: {exc}") from exc
    return scenario_from_dict(data)


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(dump_scenario(sc))
