"""Instance serialisation: a JSON document and a line-oriented text format.

JSON: ``{"universe": d, "red": [[ids...], ...], "blue": [[ids...], ...]}``.

Text: first line ``d n_red n_blue``, then one set per line (red sets first) as
space-separated ids; an empty line is an empty set.

Both readers require ids to be strictly increasing and inside the universe.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Union

from .core import BcpInstance, SparseSet
from .errors import ValidationError

PathLike = Union[str, Path]


def instance_to_dict(inst: BcpInstance) -> dict:
    return {"universe": inst.universe_size,
            "red": [s.to_list() for s in inst.red],
            "blue": [s.to_list() for s in inst.blue]}


def instance_from_dict(raw: dict) -> BcpInstance:
    if not isinstance(raw, dict) or not {"universe", "red", "blue"} <= raw.keys():
        raise ValidationError("instance JSON needs keys 'universe', 'red' and 'blue'")
    d = raw["universe"]
    if not isinstance(d, int) or isinstance(d, bool):
        raise ValidationError(f"universe must be an integer, got {d!r}")
    sets = {}
    for color in ("red", "blue"):
        rows = raw[color]
        if not isinstance(rows, list):
            raise ValidationError(f"{color} must be a list of id lists")
        out = []
        for idx, row in enumerate(rows):
            if not isinstance(row, list) or not all(
                    isinstance(v, int) and not isinstance(v, bool) for v in row):
                raise ValidationError(f"{color}[{idx}] must be a list of integers")
            try:
                out.append(SparseSet(row, d))
            except ValidationError as exc:
                raise ValidationError(f"{color}[{idx}]: {exc}") from exc
        sets[color] = tuple(out)
    return BcpInstance(sets["red"], sets["blue"], d)


def dumps_text(inst: BcpInstance) -> str:
    lines = [f"{inst.universe_size} {inst.n_red} {inst.n_blue}"]
    lines.extend(" ".join(map(str, s.to_list())) for s in inst.red + inst.blue)
    return "\n".join(lines) + "\n"


def loads_text(text: str) -> BcpInstance:
    lines = text.split("\n")
    try:
        d, n_red, n_blue = (int(t) for t in lines[0].split())
    except ValueError as exc:
        raise ValidationError("first line must be 'd n_red n_blue'") from exc
    body = lines[1:]
    if body and body[-1] == "":
        body = body[:-1]
    if len(body) != n_red + n_blue:
        raise ValidationError(f"expected {n_red + n_blue} set lines, found {len(body)}")
    sets: List[SparseSet] = []
    for lineno, line in enumerate(body, start=2):
        try:
            sets.append(SparseSet([int(t) for t in line.split()], d))
        except ValueError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from exc
    return BcpInstance(tuple(sets[:n_red]), tuple(sets[n_red:]), d)


def _is_text(path: Path, fmt: str | None) -> bool:
    if fmt is not None:
        if fmt not in ("json", "text"):
            raise ValidationError(f"unknown format {fmt!r}")
        return fmt == "text"
    return path.suffix.lower() in (".txt", ".sets")


def read_instance(path: PathLike, fmt: str | None = None) -> BcpInstance:
    """Read an instance; the format follows ``fmt`` or the file suffix (``.txt`` = text)."""
    path = Path(path)
    text = path.read_text()
    if _is_text(path, fmt):
        return loads_text(text)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    return instance_from_dict(raw)


def write_instance(inst: BcpInstance, path: PathLike, fmt: str | None = None) -> None:
    path = Path(path)
    if _is_text(path, fmt):
        path.write_text(dumps_text(inst))
    else:
        path.write_text(json.dumps(instance_to_dict(inst)))
