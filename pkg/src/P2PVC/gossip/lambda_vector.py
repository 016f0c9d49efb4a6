"""
Versioned multiplier vector exchanged between agents.

Every node owns the versions of its own entry; views held by other agents only ever move to higher versions.
"""
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from P2PVC.utilities.exceptions import NodeSetMismatch, UnknownNode, ValidationError


@dataclass(frozen=True)
class LambdaEntry:
    node_id: int
    lambda_max: float
    lambda_min: float
    version: int

    def __post_init__(self) -> None:
        if self.lambda_max < 0 or self.lambda_min < 0:
            raise ValidationError(f"node {self.node_id}: multipliers must be >= 0, "
                                  f"got ({self.lambda_max}, {self.lambda_min})")


@dataclass(frozen=True, eq=False)
class LambdaVector:
    """
    Immutable view over the monitored node set.

    Parameters:
    - nodes (Tuple[int, ...]): Monitored node ids, position i holds node ``nodes[i]``.
    - lambda_max (np.ndarray): Upper-limit multipliers per position.
    - lambda_min (np.ndarray): Lower-limit multipliers per position.
    - version (np.ndarray): Owner-issued version per position.
    """
    nodes: Tuple[int, ...]
    lambda_max: np.ndarray
    lambda_min: np.ndarray
    version: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.nodes)
        for values in (self.lambda_max, self.lambda_min, self.version):
            if values.shape != (n,):
                raise ValidationError(f"lambda arrays must have shape ({n},), got {values.shape}")
            values.flags.writeable = False

    @classmethod
    def zeros(cls, nodes: Sequence[int]) -> "LambdaVector":
        n = len(nodes)
        return cls(tuple(int(node) for node in nodes), np.zeros(n), np.zeros(n), np.zeros(n, dtype=np.int64))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LambdaVector):
            return NotImplemented
        return (self.nodes == other.nodes and np.array_equal(self.version, other.version)
                and np.array_equal(self.lambda_max, other.lambda_max)
                and np.array_equal(self.lambda_min, other.lambda_min))

    def __len__(self) -> int:
        return len(self.nodes)

    def position(self, node_id: int) -> int:
        try:
            return self.nodes.index(node_id)
        except ValueError:
            raise UnknownNode(f"node {node_id} is not monitored") from None

    def entry(self, node_id: int) -> LambdaEntry:
        i = self.position(node_id)
        return LambdaEntry(node_id, float(self.lambda_max[i]), float(self.lambda_min[i]), int(self.version[i]))

    @property
    def entries(self) -> Dict[int, LambdaEntry]:
        return {node_id: self.entry(node_id) for node_id in self.nodes}

    def with_entry(self, entry: LambdaEntry) -> "LambdaVector":
        """
        Copy with one entry replaced, used by the owner to publish a new local value.

        Parameters:
        - entry (LambdaEntry): New entry; its version must not be lower than the current one.

        Returns:
        - LambdaVector: Updated vector.
        """
        i = self.position(entry.node_id)
        if entry.version < self.version[i]:
            raise ValidationError(f"node {entry.node_id}: version {entry.version} < {self.version[i]}")
        lambda_max = self.lambda_max.copy()
        lambda_min = self.lambda_min.copy()
        version = self.version.copy()
        lambda_max[i] = entry.lambda_max
        lambda_min[i] = entry.lambda_min
        version[i] = entry.version
        return LambdaVector(self.nodes, lambda_max, lambda_min, version)


def fresher(local: LambdaVector, incoming: LambdaVector) -> np.ndarray:
    """
    Positions where ``incoming`` carries a higher version than ``local``.

    Parameters:
    - local (LambdaVector): Receiver's view.
    - incoming (LambdaVector): Received payload.

    Returns:
    - np.ndarray: Boolean mask over positions.
    """
    if local.nodes != incoming.nodes:
        raise NodeSetMismatch(f"cannot merge views over {len(local.nodes)} and {len(incoming.nodes)} nodes "
                              f"with different node sets")
    return incoming.version > local.version


def merge(local: LambdaVector, incoming: LambdaVector) -> LambdaVector:
    """
    Entry-wise higher-version-wins join; ties keep the local entry.

    Parameters:
    - local (LambdaVector): Receiver's view.
    - incoming (LambdaVector): Received payload.

    Returns:
    - LambdaVector: Joined view (``local`` itself when nothing is fresher).
    """
    mask = fresher(local, incoming)
    if not mask.any():
        return local
    return LambdaVector(local.nodes,
                        np.where(mask, incoming.lambda_max, local.lambda_max),
                        np.where(mask, incoming.lambda_min, local.lambda_min),
                        np.where(mask, incoming.version, local.version))
