"""Running tally of discarded quantities (truncation tails, pruned modes,
Lie-series remainders) so every approximation made along a computation is
accounted for explicitly."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class ErrorLedger:
    entries: list[tuple[str, float]] = field(default_factory=list)

    def charge(self, tag: str, amount: float) -> None:
        if amount < 0:
            raise ValueError(f"ledger amounts are nonnegative, got {amount}")
        if amount:
            self.entries.append((tag, float(amount)))

    @property
    def total(self) -> float:
        return sum(a for _, a in self.entries)

    def by_tag(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for tag, a in self.entries:
            out[tag] = out.get(tag, 0.0) + a
        return out
