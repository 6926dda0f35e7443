"""Reading and writing games, reports and plot data.

Game files are JSON documents::

    {
      "players": 2,
      "action_sets": [[0, 1], [0, 1]],
      "utilities": [ [[1, 0], [0, 1]], [[1, 0], [0, 1]] ],
      "lipschitz": [1.0, 1.0]            # optional
    }

``utilities[i]`` is player ``i``'s table as nested arrays, indexed by the
players' action indices in player order (row-major). A potential file has the
same ``players`` and ``action_sets`` fields and a single ``potential`` table.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import GameError, ParseError
from .games import FiniteGame

GAME_FIELDS = {"players", "action_sets", "utilities", "lipschitz"}
POTENTIAL_FIELDS = {"players", "action_sets", "potential"}


def _line_of(text: str, key: str):
    needle = f'"{key}"'
    pos = text.find(needle)
    if pos < 0:
        return None
    return text.count("\n", 0, pos) + 1


def _load_json(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ParseError(f"cannot read file: {err.strerror}", path) from err
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError(err.msg, path, err.lineno) from err
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object", path, 1)
    return doc, text


def _check_fields(doc, text, path, allowed, required):
    for key in doc:
        if key not in allowed:
            raise ParseError(f"unknown field {key!r}", path, _line_of(text, key))
    for key in required:
        if key not in doc:
            raise ParseError(f"missing field {key!r}", path, 1)


def _action_sets(doc, text, path):
    sets = doc["action_sets"]
    if not isinstance(sets, list) or not all(isinstance(s, list) for s in sets):
        raise ParseError("action_sets must be a list of arrays", path, _line_of(text, "action_sets"))
    if doc["players"] != len(sets):
        raise ParseError(f"players is {doc['players']} but {len(sets)} action sets are given",
                         path, _line_of(text, "players"))
    return sets


def load_game(path) -> FiniteGame:
    doc, text = _load_json(path)
    _check_fields(doc, text, path, GAME_FIELDS, ("players", "action_sets", "utilities"))
    sets = _action_sets(doc, text, path)
    try:
        util = np.array(doc["utilities"], dtype=float)
        return FiniteGame(sets, util, doc.get("lipschitz"))
    except (ValueError, TypeError, GameError) as err:
        key = "lipschitz" if "Lipschitz" in str(err) else "utilities"
        raise ParseError(str(err), path, _line_of(text, key)) from err


def load_potential(path, game: FiniteGame = None) -> np.ndarray:
    doc, text = _load_json(path)
    _check_fields(doc, text, path, POTENTIAL_FIELDS, ("players", "action_sets", "potential"))
    sets = _action_sets(doc, text, path)
    try:
        table = np.array(doc["potential"], dtype=float)
    except (ValueError, TypeError) as err:
        raise ParseError(str(err), path, _line_of(text, "potential")) from err
    shape = tuple(len(s) for s in sets)
    if table.shape != shape:
        raise ParseError(f"potential has shape {table.shape}, expected {shape}",
                         path, _line_of(text, "potential"))
    if game is not None:
        if game.shape != shape or not all(
                np.array_equal(a, np.asarray(b, float)) for a, b in zip(game.action_sets, sets)):
            raise ParseError("potential action sets differ from the game's", path,
                             _line_of(text, "action_sets"))
    return table


def game_to_dict(game: FiniteGame) -> dict:
    out = {
        "players": game.n_players,
        "action_sets": [a.tolist() for a in game.action_sets],
        "utilities": game.utilities.tolist(),
    }
    if game.lipschitz is not None:
        out["lipschitz"] = list(game.lipschitz)
    return out


def save_game(game: FiniteGame, path):
    write_json(path, game_to_dict(game))


def potential_to_dict(game: FiniteGame, phi) -> dict:
    return {
        "players": game.n_players,
        "action_sets": [a.tolist() for a in game.action_sets],
        "potential": np.asarray(phi, dtype=float).tolist(),
    }


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    """Deterministic JSON; floats use the shortest round-tripping repr."""
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


def envelope(config: dict, payload) -> dict:
    """Wrap a report with the artifact version and the echoed config.

    ``timestamps.created`` comes from ``SOURCE_DATE_EPOCH`` when set and is
    null otherwise, so identical runs write identical bytes.
    """
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    return {
        "artifact_version": __version__,
        "config": config,
        "timestamps": {"created": int(epoch) if epoch and epoch.isdigit() else None},
        "payload": payload,
    }


def read_envelope(path) -> dict:
    doc, _ = _load_json(path)
    for key in ("artifact_version", "config", "timestamps", "payload"):
        if key not in doc:
            raise ParseError(f"missing field {key!r}", path)
    return doc


def circle_polyline(center, radius: float, segments: int = 256) -> np.ndarray:
    theta = np.linspace(0.0, 2.0 * np.pi, segments + 1)
    theta[-1] = 0.0
    c = np.asarray(center, dtype=float)
    return np.column_stack([c[0] + radius * np.cos(theta), c[1] + radius * np.sin(theta)])


def emit_plot_data(trajectories: dict, circle, views=None, out_dir=".") -> list:
    """Write one trajectory point list and one circle polyline per view.

    ``views`` maps a view name to the first step it keeps (default
    ``{"full": 0, "tail": 7}``). Trajectory files hold one block per
    trajectory (``# name`` header, rows ``t x_1 ... x_N``), blocks separated
    by a blank line.
    """
    if not trajectories:
        raise ValueError("need at least one trajectory")
    views = {"full": 0, "tail": 7} if views is None else views
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    center, radius = circle
    ring = circle_polyline(center, radius)
    written = []
    for view, start in views.items():
        blocks = []
        for name in sorted(trajectories):
            states = np.asarray(getattr(trajectories[name], "states", trajectories[name]))
            lines = [f"# {name}"]
            for t in range(start, len(states)):
                lines.append(" ".join([str(t)] + [format(float(v), ".17g") for v in states[t]]))
            blocks.append("\n".join(lines))
        tpath = out_dir / f"{view}_trajectories.txt"
        tpath.write_text("\n\n".join(blocks) + "\n")
        cpath = out_dir / f"{view}_circle.txt"
        cpath.write_text("".join(f"{x:.17g} {y:.17g}\n" for x, y in ring))
        written += [tpath, cpath]
    return written


def read_plot_points(path) -> dict:
    """Parse a trajectory point-list file back into ``{name: rows}``."""
    out, name = {}, None
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            name = line[2:]
            out[name] = []
        elif line.strip():
            out[name].append([float(v) for v in line.split()])
    return {k: np.array(v) for k, v in out.items()}


COMMANDS = ("simulate", "analyze-contraction", "invariant-sets", "cournot", "verify")
RULE_FIELDS = {"kind", "schedule", "better_selector"}
COURNOT_FIELDS = {"d", "c1", "c2", "a_bar", "mu", "starts", "mode", "max_steps",
                  "grid_resolution"}
TOLERANCE_FIELDS = {"fixed_point_tol", "patience"}


@dataclass
class RunConfig:
    """One CLI invocation. Unknown fields are rejected; ``seed`` defaults to 0."""

    command: str
    game_path: Optional[str] = None
    phi_path: Optional[str] = None
    rule: dict = field(default_factory=lambda: {"kind": "simultaneous_best"})
    x0: Optional[list] = None
    steps: int = 100
    seed: int = 0
    output_dir: str = "out"
    tolerances: dict = field(default_factory=dict)
    t0: int = 0
    eps: float = 0.0
    grid: int = 200
    margin: float = 0.1
    domain: str = "actions"
    delta1: float = 0.0
    suite: str = "all"
    cournot: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ParseError(f"unknown command {self.command!r}")
        for name, allowed in (("rule", RULE_FIELDS), ("cournot", COURNOT_FIELDS),
                              ("tolerances", TOLERANCE_FIELDS)):
            extra = set(getattr(self, name)) - allowed
            if extra:
                raise ParseError(f"unknown field {name}.{sorted(extra)[0]}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) \
                or not 0 <= self.seed < 2 ** 64:
            raise ParseError("seed must be an unsigned 64-bit integer")
        if self.command in ("simulate", "analyze-contraction", "invariant-sets") \
                and not self.game_path:
            raise ParseError(f"{self.command} needs game_path")
        if self.command == "invariant-sets" and not self.phi_path:
            raise ParseError("invariant-sets needs phi_path")
        if self.command in ("simulate", "invariant-sets") and self.x0 is None:
            raise ParseError(f"{self.command} needs x0")

    @classmethod
    def from_dict(cls, doc: dict, path=None, text: str = "") -> "RunConfig":
        names = {f.name for f in fields(cls)}
        for key in doc:
            if key not in names:
                raise ParseError(f"unknown field {key!r}", path, _line_of(text, key) if text else None)
        try:
            return cls(**doc)
        except ParseError as err:
            raise ParseError(err.detail, path, None) from err

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path) -> RunConfig:
    doc, text = _load_json(path)
    return RunConfig.from_dict(doc, path, text)
