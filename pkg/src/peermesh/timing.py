"""Monte Carlo timing model for one full synchronization round.

The membership is arranged as a hops array of `rows` x `columns`: `columns`
cluster chains, each needing `rows` member-to-member hops, so a row count of
n-1 corresponds to clusters of n members. Per-hop delays are independent
uniform draws on {1..10} virtual units (1 unit = 50 ms). One trial costs:

  cluster_phase       2 x max over chains of the summed forward hop delays
                      (the reverse pass retraces the forward path, so the
                      slowest chain's forward time is paid twice);
  leader_phase        the leader-ring traversal. Default accounting sums
                      columns-1 sampled hops ("table_consistent"); the
                      alternative "equation_literal" mode sums fresh draws
                      for the full round trip, 2*(columns-1) hops;
  redistribute_phase  max over chains of freshly drawn per-chain sums;
  total               the exact sum of the three.

All draws come from per-trial derived streams, so every statistic is
reproducible from (dims, trials, seed, mode) alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simcore import DEFAULT_SEED, RandomStream, units_to_ms

MODE_TABLE_CONSISTENT = "table_consistent"
MODE_EQUATION_LITERAL = "equation_literal"
MODES = (MODE_TABLE_CONSISTENT, MODE_EQUATION_LITERAL)

DEFAULT_TRIALS = 1000
SWEEP_TOTALS = (256, 512, 1024, 2048)

CSV_HEADER = "rows,columns,t_c,t_cl,t_c_prime,T_u"


@dataclass(frozen=True)
class HopsArrayDims:
    rows: int  # hops per cluster chain (cluster size minus one)
    columns: int  # number of cluster chains

    def __post_init__(self):
        if self.rows < 1 or self.columns < 1:
            raise ValueError(f"dims must be positive, got {self.rows}x{self.columns}")

    @property
    def total_hops(self) -> int:
        return self.rows * self.columns

    def __str__(self) -> str:
        return f"{self.rows}x{self.columns}"


@dataclass(frozen=True)
class UpdateTiming:
    """One trial's phase times; total is the exact sum of the components."""

    cluster_phase: int
    leader_phase: int
    redistribute_phase: int
    total: int

    def __post_init__(self):
        if self.total != self.cluster_phase + self.leader_phase + self.redistribute_phase:
            raise ValueError("total must equal the sum of the phase times")


def _check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}: want one of {MODES}")
    return mode


def _trial(dims: HopsArrayDims, stream: RandomStream, mode: str) -> tuple[UpdateTiming, np.ndarray]:
    """Run one trial; returns the timing and the forward per-chain sums."""
    forward = stream.hop_delays((dims.columns, dims.rows))
    forward_sums = forward.sum(axis=1)
    cluster_phase = 2 * int(forward_sums.max())

    ring_hops = dims.columns - 1
    if mode == MODE_EQUATION_LITERAL:
        ring_hops *= 2
    leader_phase = int(stream.hop_delays(ring_hops).sum()) if ring_hops else 0

    redist = stream.hop_delays((dims.columns, dims.rows))
    redistribute_phase = int(redist.sum(axis=1).max())

    timing = UpdateTiming(
        cluster_phase=cluster_phase,
        leader_phase=leader_phase,
        redistribute_phase=redistribute_phase,
        total=cluster_phase + leader_phase + redistribute_phase,
    )
    return timing, forward_sums


def simulate_once(
    dims: HopsArrayDims, stream: RandomStream, mode: str = MODE_TABLE_CONSISTENT
) -> UpdateTiming:
    """One round's phase times from a single stream.

    Draw order is fixed (forward matrix, ring vector, redistribute matrix),
    so equal streams give equal timings.
    """
    timing, _sums = _trial(dims, stream, _check_mode(mode))
    return timing


def trial_stream(seed: int, dims: HopsArrayDims, mode: str, index: int) -> RandomStream:
    """The derived stream used for trial `index` of a Monte Carlo run."""
    return RandomStream(seed, f"timing/{dims.rows}x{dims.columns}/{mode}/trial/{index}")


@dataclass(frozen=True)
class ComponentStats:
    mean: float
    std: float
    lo: float  # 0.5th percentile
    hi: float  # 99.5th percentile

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi


@dataclass(frozen=True)
class SweepRow:
    rows: int
    columns: int
    trials: int
    mode: str
    cluster_phase: ComponentStats
    leader_phase: ComponentStats
    redistribute_phase: ComponentStats
    total: ComponentStats
    mean_cluster_sum: float  # mean forward per-chain hop-delay sum

    @property
    def dims(self) -> HopsArrayDims:
        return HopsArrayDims(rows=self.rows, columns=self.columns)


def _stats(samples: np.ndarray) -> ComponentStats:
    return ComponentStats(
        mean=float(samples.mean()),
        std=float(samples.std()),
        lo=float(np.percentile(samples, 0.5)),
        hi=float(np.percentile(samples, 99.5)),
    )


def monte_carlo(
    dims: HopsArrayDims,
    trials: int = DEFAULT_TRIALS,
    seed: int = DEFAULT_SEED,
    mode: str = MODE_TABLE_CONSISTENT,
) -> SweepRow:
    """Independent trials over derived streams, summarized per component."""
    _check_mode(mode)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    comp = np.empty((4, trials), dtype=np.int64)
    sum_acc = 0.0
    for i in range(trials):
        timing, forward_sums = _trial(dims, trial_stream(seed, dims, mode, i), mode)
        comp[0, i] = timing.cluster_phase
        comp[1, i] = timing.leader_phase
        comp[2, i] = timing.redistribute_phase
        comp[3, i] = timing.total
        sum_acc += float(forward_sums.mean())
    return SweepRow(
        rows=dims.rows,
        columns=dims.columns,
        trials=trials,
        mode=mode,
        cluster_phase=_stats(comp[0]),
        leader_phase=_stats(comp[1]),
        redistribute_phase=_stats(comp[2]),
        total=_stats(comp[3]),
        mean_cluster_sum=sum_acc / trials,
    )


def default_factor_pairs(total_hops: int) -> tuple[HopsArrayDims, ...]:
    """Power-of-two factorizations of total_hops with both sides >= 4,
    ordered by descending row count."""
    if total_hops < 16:
        raise ValueError("total_hops must be >= 16")
    pairs = []
    rows = 4
    while rows <= total_hops // 4:
        if total_hops % rows == 0:
            columns = total_hops // rows
            if rows & (rows - 1) == 0 and columns & (columns - 1) == 0:
                pairs.append(HopsArrayDims(rows=rows, columns=columns))
        rows *= 2
    if not pairs:
        raise ValueError(f"{total_hops} has no power-of-two factorization with both sides >= 4")
    pairs.sort(key=lambda d: -d.rows)
    return tuple(pairs)


def sweep(
    total_hops: int,
    factor_pairs: tuple[HopsArrayDims, ...] | None = None,
    trials: int = DEFAULT_TRIALS,
    seed: int = DEFAULT_SEED,
    mode: str = MODE_TABLE_CONSISTENT,
) -> list[SweepRow]:
    """Monte Carlo rows for every factorization of total_hops."""
    pairs = default_factor_pairs(total_hops) if factor_pairs is None else tuple(factor_pairs)
    for dims in pairs:
        if dims.total_hops != total_hops:
            raise ValueError(f"{dims} does not factor {total_hops}")
    return [monte_carlo(dims, trials=trials, seed=seed, mode=mode) for dims in pairs]


@dataclass(frozen=True)
class OptimumResult:
    total_hops: int
    dims: HopsArrayDims
    ratio: float  # rows / columns
    row: SweepRow


def find_optimum(
    total_hops: int,
    trials: int = DEFAULT_TRIALS,
    seed: int = DEFAULT_SEED,
    mode: str = MODE_TABLE_CONSISTENT,
) -> OptimumResult:
    """Factorization minimizing the mean round total.

    total_hops must be a power of two >= 16 so that the candidate set (both
    sides >= 4, powers of two) is non-empty.
    """
    if total_hops < 16 or total_hops & (total_hops - 1) != 0:
        raise ValueError("total_hops must be a power of two >= 16")
    rows = sweep(total_hops, trials=trials, seed=seed, mode=mode)
    best = min(rows, key=lambda r: r.total.mean)
    dims = best.dims
    return OptimumResult(
        total_hops=total_hops,
        dims=dims,
        ratio=dims.rows / dims.columns,
        row=best,
    )


def optimum_curve(
    totals: tuple[int, ...] = SWEEP_TOTALS,
    trials: int = DEFAULT_TRIALS,
    seed: int = DEFAULT_SEED,
    mode: str = MODE_TABLE_CONSISTENT,
) -> list[tuple[int, float]]:
    """(total_hops, optimal mean round time in ms) series, one point per total."""
    out = []
    for total in totals:
        opt = find_optimum(total, trials=trials, seed=seed, mode=mode)
        out.append((total, float(units_to_ms(opt.row.total.mean))))
    return out
