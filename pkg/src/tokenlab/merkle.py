"""Key-sorted Merkle tree with inclusion and bracketing non-inclusion proofs.

Hashing and audit paths follow RFC 9162: leaves are ``H(0x00 || key || value)``,
interior nodes ``H(0x01 || left || right)``, and a level with an odd node
count promotes its last node unchanged.  The empty tree has a fixed root.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from tokenlab.crypto import digest

EMPTY_ROOT = digest(b"tokenlab/empty-epoch")


def leaf_hash(key: bytes, value: bytes) -> bytes:
    return digest(b"\x00" + key + value)


def node_hash(left: bytes, right: bytes) -> bytes:
    return digest(b"\x01" + left + right)


@dataclass(frozen=True)
class LeafProof:
    key: bytes
    value: bytes
    index: int
    tree_size: int
    path: Tuple[bytes, ...]

    def computes(self, root: bytes) -> bool:
        return verify_path(leaf_hash(self.key, self.value), self.index, self.tree_size, self.path, root)

    def to_json(self) -> dict:
        return {
            "key": self.key.hex(),
            "value": self.value.hex(),
            "index": self.index,
            "tree_size": self.tree_size,
            "path": [p.hex() for p in self.path],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "LeafProof":
        return cls(
            bytes.fromhex(obj["key"]),
            bytes.fromhex(obj["value"]),
            int(obj["index"]),
            int(obj["tree_size"]),
            tuple(bytes.fromhex(p) for p in obj["path"]),
        )


@dataclass(frozen=True)
class Absence:
    """Non-inclusion: the adjacent leaves that bracket the missing key."""

    left: Optional[LeafProof]
    right: Optional[LeafProof]


def verify_path(leaf: bytes, index: int, size: int, path: Sequence[bytes], root: bytes) -> bool:
    if not 0 <= index < size:
        return False
    fn, sn, r = index, size - 1, leaf
    for p in path:
        if sn == 0:
            return False
        if fn & 1 or fn == sn:
            r = node_hash(p, r)
            if not fn & 1:
                while not (fn & 1 or fn == 0):
                    fn >>= 1
                    sn >>= 1
        else:
            r = node_hash(r, p)
        fn >>= 1
        sn >>= 1
    return sn == 0 and r == root


def verify_absence(key: bytes, absence: Absence, root: bytes) -> bool:
    left, right = absence.left, absence.right
    if left is None and right is None:
        return root == EMPTY_ROOT
    if left is not None and not (left.key < key and left.computes(root)):
        return False
    if right is not None and not (key < right.key and right.computes(root)):
        return False
    if left is None:
        return right.index == 0
    if right is None:
        return left.index == left.tree_size - 1
    return left.tree_size == right.tree_size and right.index == left.index + 1


class SortedMerkleTree:
    """Immutable tree over a key -> value map, leaves ordered by key."""

    def __init__(self, leaves: Mapping[bytes, bytes]):
        self.items: List[Tuple[bytes, bytes]] = sorted(leaves.items())
        self._position: Dict[bytes, int] = {k: i for i, (k, _) in enumerate(self.items)}
        level = [leaf_hash(k, v) for k, v in self.items]
        self.levels: List[List[bytes]] = [level]
        while len(level) > 1:
            nxt = [node_hash(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
            if len(level) % 2:
                nxt.append(level[-1])
            self.levels.append(nxt)
            level = nxt

    def __len__(self) -> int:
        return len(self.items)

    @property
    def root(self) -> bytes:
        return self.levels[-1][0] if self.items else EMPTY_ROOT

    def path(self, index: int) -> Tuple[bytes, ...]:
        out = []
        for level in self.levels[:-1]:
            sibling = index ^ 1
            if sibling < len(level):
                out.append(level[sibling])
            index >>= 1
        return tuple(out)

    def leaf_proof(self, index: int) -> LeafProof:
        key, value = self.items[index]
        return LeafProof(key, value, index, len(self.items), self.path(index))

    def prove(self, key: bytes) -> Union[LeafProof, Absence]:
        """Inclusion proof if ``key`` is present, otherwise its bracketing leaves."""
        pos = self._position.get(key)
        if pos is not None:
            return self.leaf_proof(pos)
        # first index whose key exceeds the missing one
        lo, hi = 0, len(self.items)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.items[mid][0] < key:
                lo = mid + 1
            else:
                hi = mid
        left = self.leaf_proof(lo - 1) if lo > 0 else None
        right = self.leaf_proof(lo) if lo < len(self.items) else None
        return Absence(left, right)
