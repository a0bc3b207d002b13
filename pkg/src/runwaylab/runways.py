"""Indirect-path enumeration over the causal attention DAG.

Positions 0..n-1 with an edge j -> i whenever j < i form a complete
causal DAG. The *runway* between a source s and destination d is the set
of paths from s to d that take at least two hops — every way information
can reach d from s other than the direct edge. Counting these is what
grounds the multi-hop sensitivity analysis: each subset of the strictly
intermediate positions {s+1, ..., d-1} yields exactly one increasing
path, so there are 2^(d-s-1) - 1 of them once the empty subset (the
direct edge) is excluded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import InputError


@dataclass(frozen=True)
class RunwaySet:
    """All indirect (>= 2 edge) increasing paths from ``s`` to ``d``."""
    s: int
    d: int
    paths: tuple[tuple[int, ...], ...] = field(default=())

    def __post_init__(self):
        for p in self.paths:
            if len(p) < 3:
                raise InputError(f"runway path {p} has fewer than 2 edges")
            if p[0] != self.s or p[-1] != self.d:
                raise InputError(f"path {p} does not run {self.s} -> {self.d}")
            if any(a >= b for a, b in zip(p, p[1:])):
                raise InputError(f"path {p} is not strictly increasing")
        if len(set(self.paths)) != len(self.paths):
            raise InputError("duplicate paths in runway set")

    @property
    def count(self) -> int:
        return len(self.paths)


def closed_form_count(s: int, d: int) -> int:
    """Number of indirect s->d paths by the subset argument."""
    if d <= s + 1:
        return 0
    return 2 ** (d - s - 1) - 1


def enumerate_runway(s: int, d: int, n: int) -> RunwaySet:
    """Walk the causal DAG and collect every indirect path from s to d.

    The walk is a depth-first traversal over forward edges, independent
    of the closed-form count, so comparing ``count`` against
    ``closed_form_count`` is a real check rather than a tautology.
    """
    if not (0 <= s <= d < n):
        raise InputError(
            f"need 0 <= s <= d < n, got s={s}, d={d}, n={n}")
    paths: list[tuple[int, ...]] = []

    def walk(prefix: tuple[int, ...]) -> None:
        v = prefix[-1]
        if v == d:
            if len(prefix) >= 3:
                paths.append(prefix)
            return
        for nxt in range(v + 1, d + 1):
            walk(prefix + (nxt,))

    if s < d:
        walk((s,))
    return RunwaySet(s=s, d=d, paths=tuple(paths))
