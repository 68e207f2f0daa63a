"""Deterministic prompt compilation: items + region groups -> target/layout/negative prompts."""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

from .errors import InvalidArgumentError

LOGGER = logging.getLogger(__name__)

DEFAULT_CONTAINERS = ("plate", "bowl", "tray")

MAX_REGIONS = 9

_ROW_NAMES = {2: ("upper", "lower"), 3: ("upper", "middle", "lower")}
_COL_NAMES = {2: ("left", "right"), 3: ("left", "center", "right")}


@dataclass(frozen=True)
class ItemSpec:
    """One item to place in the scene; container is its generic stand-in word."""

    label: str
    container: str = "plate"

    def __post_init__(self):
        if not self.label or not self.label.strip():
            raise InvalidArgumentError("item label must be non-empty")
        if "\n" in self.label:
            raise InvalidArgumentError(f"item label contains a newline: {self.label!r}")
        if not self.container or not self.container.strip():
            raise InvalidArgumentError("container word must be non-empty")


@dataclass(frozen=True)
class RegionAssignment:
    """Ordered partition of item indices into regions, one position phrase per region."""

    groups: tuple[tuple[int, ...], ...]
    positions: tuple[str, ...]

    def __post_init__(self):
        if len(self.groups) != len(self.positions):
            raise InvalidArgumentError(
                f"{len(self.groups)} groups but {len(self.positions)} positions"
            )
        seen: set[int] = set()
        for group in self.groups:
            if not group:
                raise InvalidArgumentError("empty region group")
            for idx in group:
                if idx in seen:
                    raise InvalidArgumentError(f"item index {idx} appears in two groups")
                seen.add(idx)
        if len(set(self.positions)) != len(self.positions):
            raise InvalidArgumentError("position phrases must be pairwise distinct")

    @property
    def n_regions(self) -> int:
        return len(self.groups)


@dataclass(frozen=True)
class PromptBundle:
    """Compiled prompt triple plus the region assignment that produced it."""

    target: str
    layout: str
    negative: str
    regions: RegionAssignment
    items: tuple[ItemSpec, ...] = field(default=())


def _grid_shape(n: int) -> tuple[int, int]:
    # Smallest rows x cols grid (sides 2 or 3) that fits n regions; 4 -> 2x2 per
    # the fixed vocabulary table.
    if n <= 4:
        return 2, 2
    if n <= 6:
        return 2, 3
    return 3, 3


def assign_positions(n_regions: int) -> list[str]:
    """Distinct position phrases for n regions.

    1 region needs no cue; 2 and 3 use the left/center/right row; 4..9 fill a
    row-major grid of upper/middle/lower x left/center/right phrases.
    """
    if not isinstance(n_regions, int) or isinstance(n_regions, bool):
        raise InvalidArgumentError(f"n_regions must be an integer, got {n_regions!r}")
    if n_regions < 1 or n_regions > MAX_REGIONS:
        raise InvalidArgumentError(
            f"n_regions must be in [1, {MAX_REGIONS}], got {n_regions}"
        )
    if n_regions == 1:
        return [""]
    if n_regions == 2:
        return ["on the left", "on the right"]
    if n_regions == 3:
        return ["on the left", "in the center", "on the right"]
    rows, cols = _grid_shape(n_regions)
    phrases = [
        f"on the {r} {c}" for r in _ROW_NAMES[rows] for c in _COL_NAMES[cols]
    ]
    return phrases[:n_regions]


def _join_clauses(parts: list[str]) -> str:
    # "x" / "x and y" / "x, y and z"
    if len(parts) == 1:
        return parts[0]
    return ", ".join(parts[:-1]) + " and " + parts[-1]


def _auto_groups(n_items: int) -> tuple[tuple[int, ...], ...]:
    return tuple((i,) for i in range(n_items))


def compile_prompts(
    items: list[ItemSpec] | tuple[ItemSpec, ...],
    groups: RegionAssignment | str = "auto",
) -> PromptBundle:
    """Compile items and their region grouping into the prompt triple.

    Pure function: the target prompt names the items with spatial cues, the
    layout prompt renders each region as "a <container> <position>", and the
    negative prompt is "Empty <container>" for the dominant container.  Items
    sharing a group share one clause, one container, and one position.
    """
    items = tuple(items)
    if not items:
        raise InvalidArgumentError("items must be non-empty")
    labels = [item.label for item in items]
    duplicates = [label for label, cnt in Counter(labels).items() if cnt > 1]
    if duplicates:
        LOGGER.warning("duplicate item labels: %s", ", ".join(sorted(duplicates)))

    if isinstance(groups, str):
        if groups != "auto":
            raise InvalidArgumentError(f"groups must be RegionAssignment or 'auto', got {groups!r}")
        assignment = RegionAssignment(
            groups=_auto_groups(len(items)),
            positions=tuple(assign_positions(len(items))),
        )
    else:
        assignment = groups
        indices = {i for group in assignment.groups for i in group}
        if indices != set(range(len(items))):
            raise InvalidArgumentError(
                f"groups must partition item indices 0..{len(items) - 1}, got {sorted(indices)}"
            )

    target_clauses = []
    layout_clauses = []
    for group, position in zip(assignment.groups, assignment.positions):
        group_labels = _join_clauses([items[i].label for i in group])
        container = items[group[0]].container  # group shares the first item's container
        target_clauses.append(f"{group_labels} {position}".strip())
        layout_clauses.append(f"a {container} {position}".strip())

    dominant = Counter(items[i].container for group in assignment.groups for i in group)
    negative_container = dominant.most_common(1)[0][0]

    return PromptBundle(
        target="A photo of " + _join_clauses(target_clauses),
        layout="A photo of " + _join_clauses(layout_clauses),
        negative=f"Empty {negative_container}",
        regions=assignment,
        items=items,
    )
