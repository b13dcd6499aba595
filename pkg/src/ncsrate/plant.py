"""Two-by-two block plant ``[z; y] = [[G11, G12], [G21, G22]] [w; u]``."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .lti import RationalFilter, StateSpace, delay_augment, hstack, minreal, realize, vstack

__all__ = ["TwoByTwoPlant", "InvalidPlantError", "benchmark_plant"]


class InvalidPlantError(ValueError):
    pass


def _block(entry, rows: int | None = None, cols: int | None = None):
    """Normalize a scalar / list / nested-list block to a 2-D list of filters."""
    if isinstance(entry, (RationalFilter, dict)):
        entry = [[entry]]
    elif entry and isinstance(entry[0], (RationalFilter, dict)):
        # a flat list is a row for 1 x n blocks and a column for n x 1 blocks
        entry = [list(entry)] if rows == 1 else [[e] for e in entry]
    out = [[e if isinstance(e, RationalFilter) else RationalFilter.from_dict(e) for e in row] for row in entry]
    if len({len(r) for r in out}) != 1:
        raise InvalidPlantError("ragged transfer-function block")
    return out


@dataclass(frozen=True, eq=False)
class TwoByTwoPlant:
    """Generalized plant with disturbance ``w``, performance ``z``, scalar ``u``, ``y``.

    Blocks are nested lists of :class:`RationalFilter`: ``G11`` is
    ``n_z x n_w``, ``G12`` is ``n_z x 1``, ``G21`` is ``1 x n_w`` and ``G22``
    is ``1 x 1``.
    """

    G11: tuple
    G12: tuple
    G21: tuple
    G22: tuple

    def __init__(self, G11, G12, G21, G22):
        g21 = _block(G21, rows=1)
        g12 = _block(G12)
        g11 = _block(G11, rows=len(g12) if len(g12) == 1 else None)
        g22 = _block(G22, rows=1)
        for name, val in (("G11", g11), ("G12", g12), ("G21", g21), ("G22", g22)):
            object.__setattr__(self, name, tuple(tuple(r) for r in val))
        self._validate()

    @property
    def n_w(self) -> int:
        return len(self.G11[0])

    @property
    def n_z(self) -> int:
        return len(self.G11)

    def _validate(self) -> None:
        if len(self.G22) != 1 or len(self.G22[0]) != 1:
            raise InvalidPlantError("the u -> y path must be SISO")
        if len(self.G12) != self.n_z or len(self.G12[0]) != 1:
            raise InvalidPlantError("G12 must be n_z x 1")
        if len(self.G21) != 1 or len(self.G21[0]) != self.n_w:
            raise InvalidPlantError("G21 must be 1 x n_w")
        for name in ("G11", "G12", "G21", "G22"):
            for row in getattr(self, name):
                for f in row:
                    if not f.is_proper:
                        raise InvalidPlantError(f"{name} has an improper entry {f!r}")
        if not self.G22[0][0].is_strictly_proper:
            raise InvalidPlantError("G22 must be strictly proper")
        self._check_hidden_modes()

    def _check_hidden_modes(self) -> None:
        # Unstable modes of the joint minimal realization must be reachable
        # from u and visible in y, or no controller can stabilize the loop.
        s = self.realization
        if s.n_states == 0:
            return
        lam = np.linalg.eigvals(s.A)
        Bu = s.B[:, -1:]
        Cy = s.C[-1:, :]
        n = s.n_states
        for mu in lam[np.abs(lam) >= 1.0 - 1e-9]:
            M1 = np.hstack([s.A - mu * np.eye(n), Bu])
            M2 = np.vstack([s.A - mu * np.eye(n), Cy])
            if np.linalg.matrix_rank(M1, tol=1e-8) < n or np.linalg.matrix_rank(M2, tol=1e-8) < n:
                raise InvalidPlantError(f"unstable hidden mode at {mu:.6g} (not stabilizable/detectable through u -> y)")

    @cached_property
    def realization(self) -> StateSpace:
        """Joint minimal realization with inputs ``[w; u]`` and outputs ``[z; y]``."""
        rows = []
        for i in range(self.n_z):
            rows.append(hstack(*[realize(f) for f in self.G11[i]], realize(self.G12[i][0])))
        rows.append(hstack(*[realize(f) for f in self.G21[0]], realize(self.G22[0][0])))
        return minreal(vstack(*rows))

    def augmented(self, h: int) -> StateSpace:
        """``G_a``: the plant with the control input delayed by ``h`` samples."""
        return delay_augment(self.realization, h, inputs=[self.n_w])

    def block(self, name: str, h: int = 0) -> StateSpace:
        """Sub-system of the (delay-augmented) joint realization."""
        name = name.lstrip("G")
        s = self.augmented(h)
        nz, nw = self.n_z, self.n_w
        rows = {"1": slice(0, nz), "2": slice(nz, nz + 1)}[name[0]]
        cols = {"1": slice(0, nw), "2": slice(nw, nw + 1)}[name[1]]
        return s[rows, cols]

    def to_dict(self) -> dict:
        def enc(block):
            return [[f.to_dict() for f in row] for row in block]

        return {"G11": enc(self.G11), "G12": enc(self.G12), "G21": enc(self.G21), "G22": enc(self.G22)}

    @classmethod
    def from_dict(cls, d: dict) -> "TwoByTwoPlant":
        return cls(d["G11"], d["G12"], d["G21"], d["G22"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text_or_path) -> "TwoByTwoPlant":
        if isinstance(text_or_path, Path) or (isinstance(text_or_path, str) and not text_or_path.lstrip().startswith("{")):
            text_or_path = Path(text_or_path).read_text()
        return cls.from_dict(json.loads(text_or_path))


def benchmark_plant() -> TwoByTwoPlant:
    """``z = 0.165 / ((z - 2)(z - 0.5789)) (w + u)``, ``y = z``."""
    den = np.polymul([1.0, -2.0], [1.0, -0.5789])
    g = RationalFilter([0.165], den)
    return TwoByTwoPlant(g, g, g, g)
