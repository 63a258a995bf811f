"""C-MAPSS file parsing and RUL label construction.

Data files hold 26 numeric columns per line (unit, cycle, three operational
settings, 21 sensors), either whitespace separated as distributed by NASA or
comma separated. RUL files hold one integer per line, one per test unit.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

AGENTS = ("FD001", "FD002", "FD003", "FD004")

# (train units, test units) per sub-dataset
EXPECTED_UNITS = {
    "FD001": (100, 100),
    "FD002": (260, 259),
    "FD003": (100, 100),
    "FD004": (248, 249),
}

SETTING_NAMES = ["OS1", "OS2", "OS3"]
SENSOR_NAMES = [f"SM{i}" for i in range(1, 22)]
BASE_FEATURES = SETTING_NAMES + SENSOR_NAMES
N_COLUMNS = 2 + len(BASE_FEATURES)


class ParseError(ValueError):
    """Malformed data or RUL file content. ``line`` is 1-based (0 if not line-specific)."""

    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class ColumnSchema:
    original_label: str
    new_label: str
    sensor_name: str
    units: str
    description: str


SENSOR_SCHEMA: List[ColumnSchema] = [
    ColumnSchema("SM1", "fan in temp", "T2", "R", "Total temp at fan inlet"),
    ColumnSchema("SM2", "lpc out temp", "T24", "R", "Total temp at LPC outlet"),
    ColumnSchema("SM3", "hpc out temp", "T30", "R", "Total temp at HPC outlet"),
    ColumnSchema("SM4", "lpt out temp", "T50", "R", "Total temp at LPT outlet"),
    ColumnSchema("SM5", "fan in press", "P2", "psia", "Pressure at fan inlet"),
    ColumnSchema("SM6", "bypass press", "P15", "psia", "Total pressure in bypass duct"),
    ColumnSchema("SM7", "hpc out press", "P30", "psia", "Total pressure at HPC outlet"),
    ColumnSchema("SM8", "fan speed", "Nf", "rpm", "Physical fan speed"),
    ColumnSchema("SM9", "core speed", "Nc", "rpm", "Physical core speed"),
    ColumnSchema("SM10", "epr", "epr", "N/A", "Engine pressure ratio (P50/P2)"),
    ColumnSchema("SM11", "hpc stat press", "Ps30", "psia", "Static pressure at HPC outlet"),
    ColumnSchema("SM12", "flow press ratio", "Phi", "pps/psi", "Ratio of fuel flow to Ps30"),
    ColumnSchema("SM13", "corr fan speed", "NRf", "rpm", "Corrected fan speed"),
    ColumnSchema("SM14", "corr core speed", "NRc", "rpm", "Corrected core speed"),
    ColumnSchema("SM15", "bypass ratio", "BPR", "N/A", "Bypass ratio"),
    ColumnSchema("SM16", "burner fuel ratio", "farB", "N/A", "Burner fuel-air ratio"),
    ColumnSchema("SM17", "bleed enthalpy", "htBleed", "N/A", "Bleed enthalpy"),
    ColumnSchema("SM18", "dmd fan speed", "Nf dmd", "rpm", "Demanded fan speed"),
    ColumnSchema("SM19", "dmd corr fan speed", "PCNfR dmd", "rpm", "Demanded corrected fan speed"),
    ColumnSchema("SM20", "hpt bleed", "WC31", "lbm/s", "HPT coolant bleed"),
    ColumnSchema("SM21", "lpt bleed", "WC32", "lbm/s", "LPT coolant bleed"),
]

FULL_SCHEMA: List[ColumnSchema] = [
    ColumnSchema("unit", "unit", "unit", "N/A", "Engine unit number"),
    ColumnSchema("cycle", "cycle", "cycle", "cycles", "Operational cycle"),
    ColumnSchema("OS1", "mach", "Mach", "N/A", "Operational setting 1"),
    ColumnSchema("OS2", "altitude", "Alt", "ft", "Operational setting 2"),
    ColumnSchema("OS3", "sea level temp", "TRA", "F", "Operational setting 3"),
] + SENSOR_SCHEMA


@dataclass
class TimeSeriesTable:
    """Engine data for one agent, stored column-wise.

    ``values`` starts with the 24 base columns (OS1-OS3, SM1-SM21) in file
    order; feature engineering may append more columns, named in
    ``feature_names``. ``rul`` is None until labeled.
    """

    agent: str
    unit: np.ndarray
    cycle: np.ndarray
    values: np.ndarray
    rul: Optional[np.ndarray] = None
    feature_names: List[str] = field(default_factory=lambda: list(BASE_FEATURES))

    def __post_init__(self):
        n = len(self.unit)
        if len(self.cycle) != n or self.values.shape[0] != n:
            raise ValueError("column lengths differ")
        if self.values.ndim != 2 or self.values.shape[1] != len(self.feature_names):
            raise ValueError(
                f"values has {self.values.shape[1]} columns but "
                f"{len(self.feature_names)} feature names"
            )
        if self.rul is not None and len(self.rul) != n:
            raise ValueError("rul length differs from row count")

    def __len__(self) -> int:
        return len(self.unit)

    @property
    def os(self) -> np.ndarray:
        return self.values[:, 0:3]

    @property
    def sm(self) -> np.ndarray:
        return self.values[:, 3:24]

    @property
    def labeled(self) -> bool:
        return self.rul is not None

    def unit_ids(self) -> List[int]:
        """Distinct unit ids in order of first appearance."""
        _, first = np.unique(self.unit, return_index=True)
        return [int(u) for u in self.unit[np.sort(first)]]

    def unit_slices(self) -> Dict[int, np.ndarray]:
        """Row indices per unit, units in file order."""
        out: Dict[int, np.ndarray] = {}
        for u in self.unit_ids():
            out[u] = np.flatnonzero(self.unit == u)
        return out

    def take(self, rows: np.ndarray) -> "TimeSeriesTable":
        rows = np.asarray(rows, dtype=np.int64)
        return replace(
            self,
            unit=self.unit[rows],
            cycle=self.cycle[rows],
            values=self.values[rows],
            rul=None if self.rul is None else self.rul[rows],
            feature_names=list(self.feature_names),
        )

    def select_units(self, units: Sequence[int]) -> "TimeSeriesTable":
        wanted = set(int(u) for u in units)
        return self.take(np.flatnonzero([u in wanted for u in self.unit]))

    def with_values(self, values: np.ndarray, feature_names: Optional[List[str]] = None):
        return replace(
            self,
            unit=self.unit.copy(),
            cycle=self.cycle.copy(),
            values=values,
            rul=None if self.rul is None else self.rul.copy(),
            feature_names=list(feature_names if feature_names is not None else self.feature_names),
        )

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.feature_names.index(name)]

    def validate(self) -> None:
        """Check per-unit cycle and label invariants; raises ValueError."""
        for u, rows in self.unit_slices().items():
            cyc = self.cycle[rows]
            if cyc[0] != 1 or np.any(np.diff(cyc) <= 0):
                raise ValueError(f"unit {u}: cycles must start at 1 and increase")
            if self.rul is not None:
                r = self.rul[rows]
                if np.any(r < 0) or np.any(np.diff(r) != -1):
                    raise ValueError(f"unit {u}: rul must fall by 1 per cycle")

    def equals(self, other: "TimeSeriesTable") -> bool:
        same_rul = (self.rul is None and other.rul is None) or (
            self.rul is not None and other.rul is not None and np.array_equal(self.rul, other.rul)
        )
        return (
            self.agent == other.agent
            and self.feature_names == other.feature_names
            and np.array_equal(self.unit, other.unit)
            and np.array_equal(self.cycle, other.cycle)
            and np.array_equal(self.values, other.values)
            and same_rul
        )


def _as_text(data: Union[bytes, str]) -> str:
    if isinstance(data, bytes):
        return data.decode("utf-8")
    return data


def detect_format(first_line: str) -> str:
    return "csv" if "," in first_line else "whitespace"


def _is_header(tokens: List[str]) -> bool:
    for t in tokens:
        try:
            float(t)
            return False
        except ValueError:
            pass
    return True


def _parse_int(token: str, line_no: int, what: str) -> int:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{what} field {token!r} is not numeric", line_no) from None
    if not value.is_integer():
        raise ParseError(f"{what} field {token!r} is not an integer", line_no)
    return int(value)


def parse_data_file(
    data: Union[bytes, str], fmt: Optional[str] = None, agent: str = ""
) -> TimeSeriesTable:
    """Parse 26-column C-MAPSS text into an unlabeled table.

    Args:
        data: raw file content.
        fmt: ``"whitespace"`` or ``"csv"``; auto-detected from the first
            non-blank line when None.
        agent: agent name recorded on the table.

    Raises:
        ParseError: wrong field count, non-numeric token, or empty input.
    """
    text = _as_text(data)
    lines = text.splitlines()
    units: List[int] = []
    cycles: List[int] = []
    rows: List[List[float]] = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if fmt is None:
            fmt = detect_format(line)
        if fmt == "csv":
            tokens = [t.strip() for t in line.split(",")]
            # tolerate a trailing separator
            if tokens and tokens[-1] == "":
                tokens = tokens[:-1]
        elif fmt == "whitespace":
            tokens = line.split()
        else:
            raise ValueError(f"unknown format {fmt!r}")
        if not rows and not units and _is_header(tokens):
            continue
        if len(tokens) != N_COLUMNS:
            raise ParseError(f"expected {N_COLUMNS} fields, got {len(tokens)}", line_no)
        units.append(_parse_int(tokens[0], line_no, "unit"))
        cycles.append(_parse_int(tokens[1], line_no, "cycle"))
        try:
            row = [float(t) for t in tokens[2:]]
        except ValueError as exc:
            raise ParseError(f"non-numeric token ({exc})", line_no) from None
        if not all(math.isfinite(v) for v in row):
            raise ParseError("non-finite value", line_no)
        rows.append(row)
        if units[-1] < 1 or cycles[-1] < 1:
            raise ParseError("unit and cycle must be positive", line_no)
    if not rows:
        raise ParseError("empty input")
    return TimeSeriesTable(
        agent=agent,
        unit=np.asarray(units, dtype=np.int64),
        cycle=np.asarray(cycles, dtype=np.int64),
        values=np.asarray(rows, dtype=np.float64),
    )


def parse_rul_file(data: Union[bytes, str]) -> List[int]:
    """Parse one nonnegative integer per line."""
    out = []
    for line_no, raw in enumerate(_as_text(data).splitlines(), start=1):
        line = raw.strip().rstrip(",")
        if not line:
            continue
        try:
            value = int(line)
        except ValueError:
            raise ParseError(f"{line!r} is not an integer", line_no) from None
        if value < 0:
            raise ParseError(f"negative RUL {value}", line_no)
        out.append(value)
    return out


def label_train_rul(table: TimeSeriesTable) -> TimeSeriesTable:
    """Run-to-failure labels: rul = last cycle of the unit minus cycle."""
    rul = np.empty(len(table), dtype=np.int64)
    for rows in table.unit_slices().values():
        rul[rows] = table.cycle[rows].max() - table.cycle[rows]
    out = table.with_values(table.values.copy())
    out.rul = rul
    return out


def label_test_rul(table: TimeSeriesTable, ruls: Sequence[int]) -> TimeSeriesTable:
    """Truncated-trajectory labels: the unit's RUL-file value plus cycles left to its last row."""
    slices = table.unit_slices()
    if len(ruls) != len(slices):
        raise ValueError(f"{len(ruls)} RUL values for {len(slices)} test units")
    rul = np.empty(len(table), dtype=np.int64)
    for r, rows in zip(ruls, slices.values()):
        rul[rows] = int(r) + (table.cycle[rows].max() - table.cycle[rows])
    out = table.with_values(table.values.copy())
    out.rul = rul
    return out


def table_to_csv(table: TimeSeriesTable) -> str:
    """Canonical csv: header row, then unit, cycle, features[, RUL]."""
    buf = io.StringIO()
    header = ["unit", "cycle"] + table.feature_names + (["RUL"] if table.labeled else [])
    buf.write(",".join(header) + "\n")
    for i in range(len(table)):
        fields = [str(int(table.unit[i])), str(int(table.cycle[i]))]
        fields += [repr(float(v)) for v in table.values[i]]
        if table.labeled:
            fields.append(str(int(table.rul[i])))
        buf.write(",".join(fields) + "\n")
    return buf.getvalue()


def table_from_csv(data: Union[bytes, str], agent: str = "") -> TimeSeriesTable:
    """Inverse of :func:`table_to_csv`."""
    lines = _as_text(data).splitlines()
    if not lines:
        raise ParseError("empty input")
    header = [h.strip() for h in lines[0].split(",")]
    if header[:2] != ["unit", "cycle"]:
        raise ParseError("header must start with unit,cycle", 1)
    labeled = header[-1] == "RUL"
    names = header[2:-1] if labeled else header[2:]
    units, cycles, rows, ruls = [], [], [], []
    for line_no, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        tokens = raw.split(",")
        if len(tokens) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(tokens)}", line_no)
        try:
            units.append(int(tokens[0]))
            cycles.append(int(tokens[1]))
            rows.append([float(t) for t in tokens[2 : 2 + len(names)]])
            if labeled:
                ruls.append(int(tokens[-1]))
        except ValueError as exc:
            raise ParseError(str(exc), line_no) from None
    if not rows:
        raise ParseError("no data rows")
    return TimeSeriesTable(
        agent=agent,
        unit=np.asarray(units, dtype=np.int64),
        cycle=np.asarray(cycles, dtype=np.int64),
        values=np.asarray(rows, dtype=np.float64).reshape(len(rows), len(names)),
        rul=np.asarray(ruls, dtype=np.int64) if labeled else None,
        feature_names=names,
    )


def find_agent_files(data_dir: Union[str, Path], agent: str) -> Dict[str, Path]:
    """Locate train/test/RUL files for an agent in NASA (.txt) or csv naming."""
    data_dir = Path(data_dir)
    found = {}
    for split, stem in (("train", "train"), ("test", "test"), ("rul", "RUL")):
        for ext in (".txt", ".csv"):
            path = data_dir / f"{stem}_{agent}{ext}"
            if path.exists():
                found[split] = path
                break
        else:
            raise FileNotFoundError(str(data_dir / f"{stem}_{agent}.txt"))
    return found


def load_agent(data_dir: Union[str, Path], agent: str):
    """Parse and label one agent's train and test splits.

    Returns:
        (train_table, test_table), both labeled.
    """
    paths = find_agent_files(data_dir, agent)
    train = parse_data_file(paths["train"].read_bytes(), agent=agent)
    test = parse_data_file(paths["test"].read_bytes(), agent=agent)
    ruls = parse_rul_file(paths["rul"].read_bytes())
    return label_train_rul(train), label_test_rul(test, ruls)
