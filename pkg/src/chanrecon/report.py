"""Evaluation report: per-generator metric rows, perturbation sweep curves,
and the serializers (JSON for machines, aligned text tables for humans).

The text table mirrors the usual detector-comparison layout with one
"ACC/AUC" cell per generator; the channel table compares removal variants
with "AUC/AP" cells.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .errors import ArgumentError

AVERAGE_ROW = "Average"


@dataclass(frozen=True)
class EvalRow:
    channel: str
    generator: str
    split: str
    acc: float
    auc: float
    ap: float
    n_real: int
    n_fake: int

    def __post_init__(self):
        for name in ("acc", "auc", "ap"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ArgumentError(f"{name}={v} outside [0, 1]")
        if not self.split:
            raise ArgumentError("every row must name its evaluation split")


@dataclass(frozen=True)
class SweepPoint:
    channel: str
    perturbation: str
    level: float
    split: str
    auc: float
    ap: float
    n: int


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    sweep_curves: list[SweepPoint] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "sweep_curves": [asdict(p) for p in self.sweep_curves],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "EvalReport":
        return cls(
            rows=[EvalRow(**r) for r in payload.get("rows", [])],
            sweep_curves=[SweepPoint(**p) for p in payload.get("sweep_curves", [])],
            metadata=payload.get("metadata", {}),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "EvalReport":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def merge(self, other: "EvalReport") -> "EvalReport":
        return EvalReport(
            rows=self.rows + other.rows,
            sweep_curves=self.sweep_curves + other.sweep_curves,
            metadata={**self.metadata, **other.metadata},
        )

    # ---- human-readable renderings ----

    def render_text(self) -> str:
        """Aligned per-channel tables with ACC/AUC cells plus an AP column."""
        lines: list[str] = []
        channels = sorted({r.channel for r in self.rows})
        for channel in channels:
            rows = [r for r in self.rows if r.channel == channel]
            lines.append(f"channel {channel} (split: {rows[0].split})")
            header = f"  {'generator':<16} {'ACC/AUC':>13} {'AP':>7} {'n_real':>7} {'n_fake':>7}"
            lines.append(header)
            lines.append("  " + "-" * (len(header) - 2))
            for r in rows:
                cell = f"{100 * r.acc:.2f}/{100 * r.auc:.2f}"
                lines.append(
                    f"  {r.generator:<16} {cell:>13} {100 * r.ap:>6.2f} "
                    f"{r.n_real:>7} {r.n_fake:>7}"
                )
            lines.append("")
        if self.sweep_curves:
            lines.append("robustness sweep (AUC/AP per level)")
            lines.append(f"  {'perturbation':<14} {'level':>7} {'AUC/AP':>13} {'n':>6}")
            lines.append("  " + "-" * 44)
            for p in self.sweep_curves:
                cell = f"{100 * p.auc:.2f}/{100 * p.ap:.2f}"
                lines.append(f"  {p.perturbation:<14} {p.level:>7.3g} {cell:>13} {p.n:>6}")
            lines.append("")
        return "\n".join(lines)

    def render_channel_table(self) -> str:
        """Variant-comparison table: one AUC/AP column per removal channel."""
        channels = sorted({r.channel for r in self.rows})
        generators = []
        for r in self.rows:
            if r.generator not in generators:
                generators.append(r.generator)
        by_key = {(r.channel, r.generator): r for r in self.rows}
        header = f"  {'generator':<16}" + "".join(f" {ch + ' (AUC/AP)':>16}" for ch in channels)
        lines = ["channel-removal variant comparison", header,
                 "  " + "-" * (len(header) - 2)]
        for gen in generators:
            cells = []
            for ch in channels:
                r = by_key.get((ch, gen))
                cells.append(f"{100 * r.auc:.2f}/{100 * r.ap:.2f}" if r else "-")
            lines.append(f"  {gen:<16}" + "".join(f" {c:>16}" for c in cells))
        return "\n".join(lines) + "\n"
