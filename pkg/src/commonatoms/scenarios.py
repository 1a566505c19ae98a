"""Simulation scenario generators and dataset/truth file handling.

All generation is deterministic under a fixed seed.  Datasets travel as
delimiter-separated text with ``#``-prefixed comment headers that carry the
seed and generation settings; truth files hold unit-level and
observation-level ground-truth labels per observation row.
"""

from __future__ import annotations

import numpy as np

from .model import Dataset, ValidationError
from .rng import RngStream

_VARIANCE = 0.6  # component variance of the continuous scenarios

SCENARIO1_MEANS = np.array([0.0, 5.0, 10.0, 13.0, 16.0, 20.0])
SCENARIO2_MIXTURES = (
    ((0.75, 0.0, 0.6), (0.25, 3.0, 0.6)),
    ((0.25, 0.0, 0.6), (0.75, 3.0, 0.6)),
    ((0.33, 0.0, 0.6), (0.34, -2.0, 0.6), (0.33, 2.0, 0.6)),
    ((0.25, 0.0, 0.6), (0.25, -2.0, 0.6), (0.25, 2.0, 0.6),
     (0.25, 10.0, 1.0)),
)
# Component (mean, variance) -> shared observational label across mixtures.
SCENARIO2_COMPONENT_IDS = {(0.0, 0.6): 0, (3.0, 0.6): 1, (-2.0, 0.6): 2,
                           (2.0, 0.6): 3, (10.0, 1.0): 4}
SCENARIO3_SUPPORTS = (10, 50, 100)


def _sample_mixture_unit(gen, components, n):
    """Draw n values and their component ids from a finite normal mixture."""
    weights = np.array([w for w, _, _ in components])
    means = np.array([m for _, m, _ in components])
    sds = np.sqrt([v for _, _, v in components])
    comp = gen.choice(len(components), size=n, p=weights / weights.sum())
    return gen.normal(means[comp], sds[comp]), comp


def gen_scenario1(case, size, seed):
    """Six nested normal mixtures, two units each (J = 12).

    Mixture h mixes the first h component means with equal weights 1/h.
    Case A gives every unit ``size`` observations; case B gives the units of
    mixture h ``size * h`` observations.  Observation truth is the
    generating component.
    """
    if case not in ("A", "B"):
        raise ValidationError("scenario 1 case must be 'A' or 'B'")
    if size < 1:
        raise ValidationError("size must be positive")
    gen = RngStream(seed).generator
    units, oc_truth, dc_truth = [], [], []
    for h in range(1, 7):
        components = [(1.0 / h, SCENARIO1_MEANS[g], _VARIANCE)
                      for g in range(h)]
        n_j = size if case == "A" else size * h
        for _ in range(2):
            values, comp = _sample_mixture_unit(gen, components, n_j)
            units.append(values)
            oc_truth.append(comp)
            dc_truth.append(h - 1)
    data = Dataset(kind="continuous", units=tuple(units))
    return data, np.array(dc_truth), [np.asarray(t) for t in oc_truth]


def gen_scenario2(r, seed):
    """Four highly overlapping normal mixtures, r units each (J = 4r).

    The five distinct component normals define the observation truth; the
    component N(0, 0.6) shared by every mixture keeps a single label.
    """
    if r < 1:
        raise ValidationError("r must be >= 1")
    gen = RngStream(seed).generator
    units, oc_truth, dc_truth = [], [], []
    for mix_idx, components in enumerate(SCENARIO2_MIXTURES):
        ids = np.array([SCENARIO2_COMPONENT_IDS[(m, v)]
                        for _, m, v in components])
        for _ in range(r):
            values, comp = _sample_mixture_unit(gen, components, 40)
            units.append(values)
            oc_truth.append(ids[comp])
            dc_truth.append(mix_idx)
    data = Dataset(kind="continuous", units=tuple(units))
    return data, np.array(dc_truth), [np.asarray(t) for t in oc_truth]


def scenario3_class_of(values):
    """Ground-truth abundance class of count values.

    {0,1} is the low class; the remaining classes are the integer ranges
    [2,10], [11,50], [51,100].
    """
    values = np.asarray(values)
    classes = np.zeros(values.shape, dtype=int)
    classes[(values >= 2) & (values <= 10)] = 1
    classes[(values >= 11) & (values <= 50)] = 2
    classes[values >= 51] = 3
    return classes


def gen_scenario3(n3, seed):
    """Ten count units over three zero/one-inflated discrete mixtures.

    Each unit holds exactly 50 zeros, 50 ones, and n3 draws from a discrete
    uniform on {0..Q_g} with Q_g in {10, 50, 100}; units go to mixtures
    round-robin (4/3/3 split).  Observation truth is the value class of
    :func:`scenario3_class_of`.
    """
    if n3 < 1:
        raise ValidationError("n3 must be >= 1")
    gen = RngStream(seed).generator
    units, oc_truth, dc_truth = [], [], []
    for j in range(10):
        g = j % 3
        uniform_part = gen.integers(0, SCENARIO3_SUPPORTS[g] + 1, size=n3)
        values = np.concatenate([np.zeros(50, dtype=np.int64),
                                 np.ones(50, dtype=np.int64),
                                 uniform_part])
        units.append(values)
        oc_truth.append(scenario3_class_of(values))
        dc_truth.append(g)
    data = Dataset(kind="count", units=tuple(units))
    return data, np.array(dc_truth), [np.asarray(t) for t in oc_truth]


def generate(scenario, seed, case="A", size=75, r=2, n3=100):
    """Dispatch on the scenario id ('1', '1A', '1B', '2', '3')."""
    scenario = str(scenario)
    if scenario in ("1", "1A", "1B"):
        if len(scenario) == 2:
            case = scenario[1]
        return gen_scenario1(case, size, seed)
    if scenario == "2":
        return gen_scenario2(r, seed)
    if scenario == "3":
        return gen_scenario3(n3, seed)
    raise ValidationError(f"unknown scenario {scenario!r}")


# ---------------------------------------------------------------------------
# Text round trips


def _fmt_value(x, kind):
    return str(int(x)) if kind == "count" else repr(float(x))


def write_dataset(path, data, header=None):
    """Write a dataset as unit,index,value rows with a comment header."""
    lines = ["# cam-dataset v1", f"# kind: {data.kind}"]
    for key, value in (header or {}).items():
        lines.append(f"# {key}: {value}")
    if data.covariate is not None:
        lines.append("# covariate: " + ",".join(repr(float(x))
                                                for x in data.covariate))
    if data.scale is not None:
        lines.append("# scale: " + ",".join(repr(float(x))
                                            for x in data.scale))
    lines.append("unit,index,value")
    for j, unit in enumerate(data.units):
        for i, value in enumerate(unit):
            lines.append(f"{j},{i},{_fmt_value(value, data.kind)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_dataset(path):
    """Inverse of :func:`write_dataset`."""
    kind, covariate, scale = None, None, None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("kind:"):
                    kind = body.split(":", 1)[1].strip()
                elif body.startswith("covariate:"):
                    covariate = np.array(
                        [float(x) for x in body.split(":", 1)[1].split(",")])
                elif body.startswith("scale:"):
                    scale = np.array(
                        [float(x) for x in body.split(":", 1)[1].split(",")])
                continue
            if line.startswith("unit,"):
                continue
            rows.append(line.split(","))
    if kind is None:
        raise ValidationError(f"{path}: missing '# kind:' header")
    n_units = max(int(r[0]) for r in rows) + 1
    units = [[] for _ in range(n_units)]
    for j, _, value in rows:
        units[int(j)].append(int(value) if kind == "count" else float(value))
    return Dataset(kind=kind, units=tuple(np.asarray(u) for u in units),
                   covariate=covariate, scale=scale)


def write_truth(path, dc_labels, oc_labels, header=None):
    """Write unit,index,dc,oc rows (dc repeats within each unit)."""
    lines = ["# cam-truth v1"]
    for key, value in (header or {}).items():
        lines.append(f"# {key}: {value}")
    lines.append("unit,index,dc,oc")
    for j, ocs in enumerate(oc_labels):
        for i, oc in enumerate(ocs):
            lines.append(f"{j},{i},{int(dc_labels[j])},{int(oc)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_truth(path):
    """Inverse of :func:`write_truth`: (dc per unit, oc per unit)."""
    per_unit = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("unit,"):
                continue
            j, i, dc, oc = line.split(",")
            per_unit.setdefault(int(j), []).append((int(i), int(dc), int(oc)))
    n_units = max(per_unit) + 1
    dc_labels = np.zeros(n_units, dtype=int)
    oc_labels = []
    for j in range(n_units):
        rows = sorted(per_unit[j])
        dc_labels[j] = rows[0][1]
        oc_labels.append(np.array([r[2] for r in rows], dtype=int))
    return dc_labels, oc_labels


# ---------------------------------------------------------------------------
# Abundance tables


def load_abundance_table(path, delimiter=None):
    """Read a rectangular items-by-subjects count table.

    Rows are items (e.g. taxa), columns are subjects; an optional header row
    carries subject names and an optional leading column item names.  Rows
    of all zeros are retained.
    """
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh
                 if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValidationError(f"{path}: empty table")
    if delimiter is None:
        delimiter = "\t" if "\t" in lines[0] else ","
    cells = [ln.split(delimiter) for ln in lines]

    def numeric(cell):
        try:
            float(cell)
            return True
        except ValueError:
            return False

    unit_names = None
    probe = cells[0][1:] if len(cells[0]) > 1 else cells[0]
    if not all(numeric(c) for c in probe):
        unit_names = [c.strip() for c in cells[0]]
        cells = cells[1:]
        if not cells:
            raise ValidationError(f"{path}: header without data rows")
    item_names = None
    if any(not numeric(row[0]) for row in cells):
        item_names = [row[0].strip() for row in cells]
        cells = [row[1:] for row in cells]
        if unit_names is not None and len(unit_names) == len(cells[0]) + 1:
            unit_names = unit_names[1:]

    widths = {len(row) for row in cells}
    if len(widths) != 1:
        raise ValidationError(f"{path}: ragged rows (widths {sorted(widths)})")
    values = np.empty((len(cells), len(cells[0])), dtype=np.int64)
    for i, row in enumerate(cells):
        for j, cell in enumerate(row):
            x = float(cell)
            if x < 0:
                raise ValidationError(f"{path}: negative count at row {i}")
            if x != int(x):
                raise ValidationError(f"{path}: non-integer count at row {i}")
            values[i, j] = int(x)
    units = tuple(values[:, j] for j in range(values.shape[1]))
    return Dataset(kind="count", units=units,
                   item_names=tuple(item_names) if item_names else None,
                   unit_names=tuple(unit_names) if unit_names else None)
