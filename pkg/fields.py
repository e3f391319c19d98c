"""P1 fields over mesh regions"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from errors import DimensionMismatchError, RegionMismatchError
from mesh import TransmissionMesh
from models import PdeKind, Region


@dataclass(frozen=True)
class PdeTag:
    """Which homogeneous equation a field solves discretely"""

    kind: PdeKind
    k: complex = 0.0

    @classmethod
    def helmholtz(cls, k: complex) -> "PdeTag":
        return cls(PdeKind.HELMHOLTZ, complex(k))

    @classmethod
    def one_harmonic(cls) -> "PdeTag":
        return cls(PdeKind.ONE_HARMONIC, 1j)

    @property
    def k_squared(self) -> complex:
        """Coefficient in K - k^2 M; -1 for (-Delta + 1)"""
        if self.kind == PdeKind.ONE_HARMONIC:
            return -1.0
        return self.k * self.k


@dataclass(frozen=True, eq=False)
class Field:
    """Complex nodal values over the DOFs of one region"""

    mesh: TransmissionMesh
    region: Region
    values: np.ndarray
    pde: Optional[PdeTag] = None

    def __post_init__(self):
        object.__setattr__(self, "region", Region(self.region))
        values = np.asarray(self.values, dtype=complex)
        object.__setattr__(self, "values", values)
        expected = len(self.dofs)
        if values.shape != (expected,):
            raise DimensionMismatchError(
                f"{self.region.value} field needs {expected} values, got {values.shape}"
            )

    @property
    def dofs(self) -> np.ndarray:
        return self.mesh.region_nodes(self.region)

    def covers(self, region) -> bool:
        region = Region(region)
        return self.region == Region.BOTH or self.region == region

    def full(self) -> np.ndarray:
        """Values over all mesh nodes, zero outside the region"""
        out = np.zeros(self.mesh.n_nodes, dtype=complex)
        out[self.dofs] = self.values
        return out

    def at_nodes(self, node_ids) -> np.ndarray:
        node_ids = np.asarray(node_ids, dtype=np.int64)
        dofs = self.dofs
        position = np.searchsorted(dofs, node_ids)
        position = np.clip(position, 0, len(dofs) - 1)
        if not np.array_equal(dofs[position], node_ids):
            raise RegionMismatchError(f"requested nodes outside the {self.region.value} region")
        return self.values[position]

    def restrict(self, region) -> "Field":
        region = Region(region)
        if not self.covers(region):
            raise RegionMismatchError(f"cannot restrict a {self.region.value} field to {region.value}")
        return Field(self.mesh, region, self.full()[self.mesh.region_nodes(region)], self.pde)

    @classmethod
    def from_full(cls, mesh: TransmissionMesh, region, full_values, pde: Optional[PdeTag] = None) -> "Field":
        full_values = np.asarray(full_values)
        return cls(mesh, Region(region), full_values[mesh.region_nodes(region)], pde)

    @classmethod
    def from_function(
        cls, mesh: TransmissionMesh, region, function: Callable, pde: Optional[PdeTag] = None
    ) -> "Field":
        """Nodal interpolation of function(x, y)"""
        dofs = mesh.region_nodes(region)
        points = mesh.nodes[dofs]
        values = np.broadcast_to(function(points[:, 0], points[:, 1]), (len(dofs),))
        return cls(mesh, Region(region), np.array(values), pde)
