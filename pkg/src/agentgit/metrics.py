"""Complexity curves and run-level cost reports."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import asdict, dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .canonical import canonical_serialize, parse
from .sweep import SweepResult, verify_formulas

CSV_HEADER = ("alpha", "n", "s_std", "s_rollback", "eta", "eta_over_n")
ALPHA_RANGE = range(2, 10)
N_MAX_LIMIT = 40


@dataclass(frozen=True)
class CurvePoint:
    alpha: int
    n: int
    s_std: int
    s_rollback: int
    eta: Fraction
    eta_over_n: Fraction


def curve_point(alpha: int, n: int) -> CurvePoint:
    """Closed forms for ``alpha`` options at each of ``n`` steps (exact integers)."""
    s_std = n * alpha**n
    # sum_{i=1..n} alpha^i
    s_rollback = alpha * (alpha**n - 1) // (alpha - 1) if alpha > 1 else n
    eta = Fraction(s_std, s_rollback)
    return CurvePoint(alpha, n, s_std, s_rollback, eta, eta / n)


def format_sig(value: Fraction, digits: int = 12) -> str:
    """Decimal rendering with exactly ``digits`` significant digits."""
    with localcontext() as ctx:
        ctx.prec = digits
        d = Decimal(value.numerator) / Decimal(value.denominator)
        if d == 0:
            return "0"
        return format(d.quantize(Decimal(1).scaleb(d.adjusted() - digits + 1)), "f")


def curve_points(alphas: Iterable[int], n_max: int) -> list[CurvePoint]:
    alphas = list(alphas)
    if not alphas:
        raise ValueError("at least one alpha is required")
    bad = [a for a in alphas if a not in ALPHA_RANGE]
    if bad:
        raise ValueError(f"alpha must be in 2..9, got {bad}")
    if not 1 <= n_max <= N_MAX_LIMIT:
        raise ValueError(f"n_max must be in 1..{N_MAX_LIMIT}, got {n_max}")
    return [curve_point(a, n) for a in alphas for n in range(1, n_max + 1)]


def emit_curves(alphas: Iterable[int], n_max: int) -> bytes:
    """CSV of ``alpha,n,s_std,s_rollback,eta,eta_over_n`` for every (alpha, n)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for p in curve_points(alphas, n_max):
        writer.writerow([p.alpha, p.n, p.s_std, p.s_rollback, format_sig(p.eta), format_sig(p.eta_over_n)])
    return buf.getvalue().encode("utf-8")


# -- run reports ----------------------------------------------------------------


class JournalError(ValueError):
    pass


_INT_FIELDS = ("tokens_in", "tokens_out", "wall_ms")


def read_journal(source: str | os.PathLike | Iterable[str]) -> list[dict[str, Any]]:
    """Parse journal lines; ``source`` is a path or an iterable of lines."""
    if isinstance(source, (str, os.PathLike)):
        name = str(source)
        lines: Iterable[str] = Path(source).read_text(encoding="utf-8").splitlines()
    else:
        name = "<journal>"
        lines = source
    records = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = parse(line)
        except ValueError as exc:
            raise JournalError(f"{name}:{lineno}: corrupt journal line ({exc})") from exc
        if not isinstance(rec, dict):
            raise JournalError(f"{name}:{lineno}: record is not an object")
        for key in ("run_id", "step", "option", "status"):
            if not isinstance(rec.get(key), str):
                raise JournalError(f"{name}:{lineno}: missing or invalid {key!r}")
        for key in _INT_FIELDS:
            value = rec.get(key)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise JournalError(f"{name}:{lineno}: {key} must be a non-negative integer, got {value!r}")
        records.append(rec)
    return records


@dataclass
class StrategyTotals:
    steps: int = 0
    failed_steps: int = 0
    tokens_in: int = 0
    tokens_out: int = 0
    wall_ms: int = 0

    @property
    def tokens(self) -> int:
        return self.tokens_in + self.tokens_out


@dataclass
class RunReport:
    totals: dict[str, StrategyTotals] = field(default_factory=dict)
    leaf_count: dict[str, int] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def _ratio(self, attr: str) -> Fraction | None:
        std, rb = self.totals.get("standard"), self.totals.get("rollback")
        if std is None or rb is None or getattr(std, attr) == 0:
            return None
        return Fraction(getattr(rb, attr), getattr(std, attr))

    @property
    def step_ratio(self) -> Fraction | None:
        """Rollback steps over standard steps."""
        return self._ratio("steps")

    @property
    def token_ratio(self) -> Fraction | None:
        """Rollback tokens over standard tokens."""
        return self._ratio("tokens")

    def to_json(self) -> dict[str, Any]:
        def frac(f: Fraction | None) -> str | None:
            return None if f is None else str(f)

        return {
            "totals": {k: asdict(v) for k, v in sorted(self.totals.items())},
            "leaf_count": self.leaf_count,
            "step_ratio": frac(self.step_ratio),
            "token_ratio": frac(self.token_ratio),
            "flags": self.flags,
        }

    def dumps(self) -> bytes:
        return canonical_serialize(self.to_json())


def build_run_report(
    journals: Mapping[str, Sequence[str | os.PathLike | Iterable[str]]],
    sweeps: Sequence[SweepResult] = (),
) -> RunReport:
    """Totals per strategy from journal records, cross-checked against sweep accounting."""
    report = RunReport()
    for strategy, sources in journals.items():
        totals = report.totals.setdefault(strategy, StrategyTotals())
        for source in sources:
            for rec in read_journal(source):
                totals.steps += 1
                totals.failed_steps += rec["status"] != "ok"
                totals.tokens_in += rec["tokens_in"]
                totals.tokens_out += rec["tokens_out"]
                totals.wall_ms += rec["wall_ms"]

    for sweep in sweeps:
        report.leaf_count[sweep.strategy] = len(sweep.ok_leaves)
        totals = report.totals.get(sweep.strategy)
        if totals is not None and (totals.steps, totals.tokens_in, totals.tokens_out) != (
            sweep.accounting.steps_executed,
            sweep.accounting.tokens_in,
            sweep.accounting.tokens_out,
        ):
            report.flags.append(f"journal: {sweep.strategy} journal totals differ from sweep accounting")
    if sweeps:
        xs = {tuple(s.x) for s in sweeps}
        if len(xs) != 1:
            report.flags.append("incomparable reports: sweeps cover different option vectors")
        else:
            report.flags.extend(verify_formulas(sweeps, list(xs.pop())).violations)
    return report
