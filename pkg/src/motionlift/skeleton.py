"""Skeleton layout: joint tree plus left/right mirror pairs."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DataError


@dataclass(frozen=True)
class SkeletonDef:
    name: str
    parents: tuple[int, ...]  # parents[i] == i only for the root
    mirror_pairs: tuple[tuple[int, int], ...]  # (left, right) joint indices
    root: int = 0

    @property
    def num_joints(self) -> int:
        return len(self.parents)

    def validate(self) -> None:
        j = self.num_joints
        if not (0 <= self.root < j) or self.parents[self.root] != self.root:
            raise DataError(f"skeleton '{self.name}': root {self.root} is not self-parented")
        for i, p in enumerate(self.parents):
            if i == self.root:
                continue
            if not (0 <= p < j) or p == i:
                raise DataError(f"skeleton '{self.name}': joint {i} has invalid parent {p}")
            # walk to the root to reject cycles
            seen = {i}
            k = p
            while k != self.root:
                if k in seen:
                    raise DataError(f"skeleton '{self.name}': cycle through joint {i}")
                seen.add(k)
                k = self.parents[k]
        touched: set[int] = set()
        for l, r in self.mirror_pairs:
            if l == r or not (0 <= l < j and 0 <= r < j):
                raise DataError(f"skeleton '{self.name}': bad mirror pair ({l}, {r})")
            if l in touched or r in touched:
                raise DataError(f"skeleton '{self.name}': joint reused in mirror pairs")
            touched.update((l, r))

    def mirror_permutation(self) -> list[int]:
        """Joint permutation that swaps each left/right pair."""
        perm = list(range(self.num_joints))
        for l, r in self.mirror_pairs:
            perm[l], perm[r] = r, l
        return perm

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "parents": list(self.parents),
            "mirror_pairs": [list(p) for p in self.mirror_pairs],
            "root": self.root,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SkeletonDef":
        sk = cls(
            name=str(d["name"]),
            parents=tuple(int(p) for p in d["parents"]),
            mirror_pairs=tuple((int(a), int(b)) for a, b in d["mirror_pairs"]),
            root=int(d.get("root", 0)),
        )
        sk.validate()
        return sk


# 17-joint H36M-style layout. Joint order:
#  0 hip, 1 r_hip, 2 r_knee, 3 r_ankle, 4 l_hip, 5 l_knee, 6 l_ankle,
#  7 spine, 8 thorax, 9 neck, 10 head, 11 l_shoulder, 12 l_elbow,
# 13 l_wrist, 14 r_shoulder, 15 r_elbow, 16 r_wrist
def h36m17() -> SkeletonDef:
    sk = SkeletonDef(
        name="h36m17",
        parents=(0, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15),
        mirror_pairs=((4, 1), (5, 2), (6, 3), (11, 14), (12, 15), (13, 16)),
        root=0,
    )
    sk.validate()
    return sk
