"""Leave-person-out, leave-setup-out and leave-pair-out fold plans.

A (person, setup) pair is the atomic unit: all windows of a pair land on the
same side of every fold, so overlapping windows cannot leak.
"""

from __future__ import annotations

from dataclasses import dataclass

STRATEGIES = ("leave-person-out", "leave-setup-out", "leave-pair-out")

Pair = tuple[int, int]


class LeakageError(AssertionError):
    """A pair shows up on both sides of a fold."""


@dataclass(frozen=True)
class Fold:
    key: object  # held-out person id, setup id or pair
    train_pairs: frozenset
    val_pairs: frozenset

    def __post_init__(self):
        assert_no_leakage(self.train_pairs, self.val_pairs)


@dataclass(frozen=True)
class SplitPlan:
    strategy: str
    folds: tuple[Fold, ...]

    def check(self) -> None:
        for fold in self.folds:
            assert_no_leakage(fold.train_pairs, fold.val_pairs)

    def __len__(self) -> int:
        return len(self.folds)


def assert_no_leakage(train_pairs, val_pairs) -> None:
    shared = set(train_pairs) & set(val_pairs)
    if shared:
        raise LeakageError(f"pairs in both train and validation: {sorted(shared)}")


def _key(pair: Pair, strategy: str):
    if strategy == "leave-person-out":
        return pair[0]
    if strategy == "leave-setup-out":
        return pair[1]
    if strategy == "leave-pair-out":
        return pair
    raise ValueError(f"unknown strategy {strategy!r}; choose from {', '.join(STRATEGIES)}")


def make_splits(pairs, strategy: str) -> SplitPlan:
    """One fold per distinct held-out key, in sorted key order."""
    pairs = sorted({(int(p), int(s)) for p, s in pairs})
    keys = sorted({_key(pr, strategy) for pr in pairs})
    if len(keys) < 2:
        raise ValueError(f"{strategy} needs at least two distinct held-out values, got {len(keys)}")
    folds = []
    for k in keys:
        val = frozenset(pr for pr in pairs if _key(pr, strategy) == k)
        folds.append(Fold(k, frozenset(pairs) - val, val))
    plan = SplitPlan(strategy, tuple(folds))
    plan.check()
    return plan
