"""Panel data model, staggered-adoption validation, and (g, t) cell enumeration.

Panels are balanced unit-by-period arrays.  The never-treated sentinel is
``numpy.inf`` in memory and ``Inf`` in CSV output (``0`` is also accepted on
input).  Once constructed a PanelData is immutable and safe to share
read-only across workers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import (
    DuplicateObservationError,
    NoAdmissibleCellsError,
    NoControlUnitsError,
    NonBinaryTreatmentError,
    UnbalancedPanelError,
)

NEVER = np.inf

NEVER_TREATED = "never_treated"
NOT_YET_TREATED = "not_yet_treated"


@dataclass(frozen=True)
class PanelData:
    unit_ids: np.ndarray          # (n,) opaque identifiers
    periods: np.ndarray           # (T,) ordered integers 1..T
    outcome: np.ndarray           # (n, T) float
    treatment: np.ndarray         # (n, T) int8 in {0, 1}
    group: np.ndarray             # (n,) float; first treatment period or inf
    z: np.ndarray                 # (n,) scalar covariate
    x_sub: np.ndarray             # (n, k) remaining covariates

    def __post_init__(self):
        for arr in (self.unit_ids, self.periods, self.outcome, self.treatment,
                    self.group, self.z, self.x_sub):
            arr.setflags(write=False)

    @property
    def n_units(self) -> int:
        return self.unit_ids.size

    @property
    def n_periods(self) -> int:
        return self.periods.size

    @property
    def never_mask(self) -> np.ndarray:
        return np.isinf(self.group)

    def covariates(self) -> np.ndarray:
        """X = (Z, X_sub), stacked as an (n, 1 + k) matrix."""
        return np.column_stack([self.z, self.x_sub])

    def period_index(self, t) -> int:
        idx = np.searchsorted(self.periods, t)
        if idx >= self.periods.size or self.periods[idx] != t:
            raise KeyError(f"period {t} not in panel")
        return int(idx)

    def to_frame(self, id_col="id", time_col="time", y_col="y", g_col="g",
                 z_col="z", x_cols=None) -> pd.DataFrame:
        """Long-format serialization; round-trips through load_panel."""
        n, T = self.n_units, self.n_periods
        k = self.x_sub.shape[1]
        if x_cols is None:
            x_cols = [f"x{j + 1}" for j in range(k)]
        g_out = np.where(np.isinf(self.group), np.inf, self.group)
        data = {
            id_col: np.repeat(self.unit_ids, T),
            time_col: np.tile(self.periods, n),
            y_col: self.outcome.ravel(),
            g_col: np.repeat(g_out, T),
            z_col: np.repeat(self.z, T),
        }
        for j, c in enumerate(x_cols):
            data[c] = np.repeat(self.x_sub[:, j], T)
        return pd.DataFrame(data)


@dataclass(frozen=True)
class GroupTimeCell:
    g: int
    t: int
    delta: int = 0
    control_mode: str = NEVER_TREATED

    @property
    def base_period(self) -> int:
        return self.g - self.delta - 1


@dataclass
class StaggeredReport:
    ok: bool
    violations: list = field(default_factory=list)  # (unit_id, period) pairs


def _derive_group(treatment: np.ndarray, periods: np.ndarray) -> np.ndarray:
    any_treated = treatment.any(axis=1)
    first = treatment.argmax(axis=1)
    return np.where(any_treated, periods[first], NEVER).astype(float)


def load_panel(rows, id_col="id", time_col="time", y_col="y", d_col=None,
               g_col=None, z_col="z", x_cols=(),
               drop_always_treated=False) -> PanelData:
    """Build a validated balanced panel from long-format records.

    Either ``d_col`` (binary treatment path) or ``g_col`` (first treatment
    period, with 0 or Inf meaning never treated) must be given.  When both
    are present the group column wins and a consistency warning is emitted
    on disagreement.
    """
    df = pd.DataFrame(rows)
    if d_col is None and g_col is None:
        raise ValueError("one of d_col or g_col is required")

    if df.duplicated([id_col, time_col]).any():
        dups = df[df.duplicated([id_col, time_col])][[id_col, time_col]]
        raise DuplicateObservationError(
            f"duplicate unit-period rows: {dups.values[:5].tolist()}")

    periods = np.sort(df[time_col].unique()).astype(int)
    units = df[id_col].unique()
    n, T = units.size, periods.size

    counts = df.groupby(id_col)[time_col].nunique()
    if (counts != T).any() or len(df) != n * T:
        missing = []
        pset = set(periods.tolist())
        for uid, grp in df.groupby(id_col):
            for t in sorted(pset - set(grp[time_col].tolist())):
                missing.append((uid, t))
        raise UnbalancedPanelError(missing or [("<extra rows>", None)])

    df = df.sort_values([id_col, time_col], kind="mergesort")
    # preserve first-appearance unit order for reproducibility
    order = pd.unique(df[id_col])
    df[id_col] = pd.Categorical(df[id_col], categories=order, ordered=True)
    df = df.sort_values([id_col, time_col], kind="mergesort")
    units = np.asarray(order)

    outcome = df[y_col].to_numpy(dtype=float).reshape(n, T)
    z = df[z_col].to_numpy(dtype=float).reshape(n, T)[:, 0]
    if x_cols:
        x_sub = np.column_stack(
            [df[c].to_numpy(dtype=float).reshape(n, T)[:, 0] for c in x_cols])
    else:
        x_sub = np.empty((n, 0))

    if d_col is not None:
        d_raw = df[d_col].to_numpy(dtype=float).reshape(n, T)
        if not np.isin(d_raw, (0.0, 1.0)).all():
            raise NonBinaryTreatmentError("treatment column must be 0/1")
        treatment = d_raw.astype(np.int8)
        derived_group = _derive_group(treatment, periods)
    else:
        treatment = None
        derived_group = None

    if g_col is not None:
        g_raw = df[g_col].to_numpy(dtype=float).reshape(n, T)[:, 0]
        group = np.where((g_raw == 0) | np.isinf(g_raw), NEVER, g_raw)
        if derived_group is not None and not np.array_equal(
                np.nan_to_num(group, posinf=-1),
                np.nan_to_num(derived_group, posinf=-1)):
            warnings.warn("group column disagrees with treatment paths; "
                          "group column wins", stacklevel=2)
        if treatment is None:
            treatment = (periods[None, :] >= group[:, None]).astype(np.int8)
    else:
        group = derived_group

    if drop_always_treated:
        keep = group != periods[0]
        units, outcome, treatment = units[keep], outcome[keep], treatment[keep]
        group, z, x_sub = group[keep], z[keep], x_sub[keep]

    return PanelData(unit_ids=units, periods=periods, outcome=outcome,
                     treatment=treatment, group=group, z=z, x_sub=x_sub)


def validate_staggered(panel: PanelData) -> StaggeredReport:
    """Check D_1 = 0 and monotone treatment paths; returns a report."""
    violations = []
    d = panel.treatment
    first_treated = d[:, 0] == 1
    for i in np.flatnonzero(first_treated):
        violations.append((panel.unit_ids[i], int(panel.periods[0])))
    reversal = (np.diff(d.astype(np.int8), axis=1) < 0)
    for i, j in zip(*np.nonzero(reversal)):
        violations.append((panel.unit_ids[i], int(panel.periods[j + 1])))
    return StaggeredReport(ok=not violations, violations=violations)


def observed_groups(panel: PanelData) -> np.ndarray:
    """Sorted distinct finite first-treatment periods."""
    g = panel.group
    return np.unique(g[np.isfinite(g)]).astype(int)


def eligible_groups(panel: PanelData) -> np.ndarray:
    """The treated groups over which cells are enumerated.

    The maximum observed finite group is excluded whenever at least two
    finite groups exist; a panel with a single treated cohort keeps it.
    """
    gs = observed_groups(panel)
    if gs.size >= 2:
        gs = gs[:-1]
    return gs


def _has_controls(panel: PanelData, cell: GroupTimeCell) -> bool:
    if cell.control_mode == NEVER_TREATED:
        return bool(panel.never_mask.any())
    s = cell.t + cell.delta
    idx = panel.period_index(s)
    untreated = panel.treatment[:, idx] == 0
    return bool((untreated & (panel.group != cell.g)).any())


def enumerate_cells(panel: PanelData, delta: int = 0,
                    mode: str = NEVER_TREATED) -> list[GroupTimeCell]:
    """All admissible (g, t) cells, ordered by (g, t)."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if mode not in (NEVER_TREATED, NOT_YET_TREATED):
        raise ValueError(f"unknown control mode: {mode!r}")
    T = int(panel.periods[-1])
    gs_all = observed_groups(panel)
    gbar = int(gs_all[-1]) if gs_all.size else None
    gs = [g for g in eligible_groups(panel) if g >= 2 + delta]

    if mode == NEVER_TREATED and not panel.never_mask.any():
        raise NoControlUnitsError("no never-treated units in the panel")

    cells = []
    for g in gs:
        for t in range(2, T - delta + 1):
            if t < g - delta:
                continue
            if mode == NOT_YET_TREATED and not t < gbar - delta:
                continue
            cell = GroupTimeCell(g=int(g), t=int(t), delta=delta, control_mode=mode)
            if cell.base_period < int(panel.periods[0]):
                continue
            if not (panel.group == g).any():
                continue
            if not _has_controls(panel, cell):
                continue
            cells.append(cell)
    if not cells:
        raise NoAdmissibleCellsError(
            f"no admissible (g, t) cells for delta={delta}, mode={mode}")
    return cells
