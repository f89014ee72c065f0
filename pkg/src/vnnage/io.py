"""Cohort CSV ingestion/validation, model persistence, report export.

The canonical feature schema is the 68-region Desikan-Killiany cortical
parcellation, left hemisphere first, using the FreeSurfer aparc label
order.  Cohort CSVs carry subject metadata columns followed by one
column per region; loaders reorder permuted region columns and refuse
files with missing, extra, or non-numeric values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .vnn import LayerConfig, VnnModel

MODEL_FORMAT_VERSION = 1

# Desikan-Killiany cortical parcels in FreeSurfer aparc order.
DK_BASE_LABELS = (
    "bankssts",
    "caudalanteriorcingulate",
    "caudalmiddlefrontal",
    "cuneus",
    "entorhinal",
    "fusiform",
    "inferiorparietal",
    "inferiortemporal",
    "isthmuscingulate",
    "lateraloccipital",
    "lateralorbitofrontal",
    "lingual",
    "medialorbitofrontal",
    "middletemporal",
    "parahippocampal",
    "paracentral",
    "parsopercularis",
    "parsorbitalis",
    "parstriangularis",
    "pericalcarine",
    "postcentral",
    "posteriorcingulate",
    "precentral",
    "precuneus",
    "rostralanteriorcingulate",
    "rostralmiddlefrontal",
    "superiorfrontal",
    "superiorparietal",
    "superiortemporal",
    "supramarginal",
    "frontalpole",
    "temporalpole",
    "transversetemporal",
    "insula",
)

REGION_LABELS: tuple[str, ...] = tuple(
    f"{hemi}_{label}" for hemi in ("lh", "rh") for label in DK_BASE_LABELS
)

N_REGIONS = len(REGION_LABELS)

META_COLUMNS = ("subject_id", "age", "sex", "group")
SEX_VALUES = ("F", "M", "unknown")

HC_GROUP = "HC"


class SchemaError(ValueError):
    """A file does not match its expected schema."""


@dataclass
class Cohort:
    """Per-subject ages, labels and regional thickness features.

    features is (n, m) with columns in region_labels order; region
    labels default to the canonical Desikan-Killiany set.
    """

    subject_ids: list[str]
    ages: np.ndarray
    sexes: list[str]
    groups: list[str]
    features: np.ndarray
    region_labels: tuple[str, ...] = REGION_LABELS

    def __post_init__(self):
        self.ages = np.asarray(self.ages, dtype=float)
        self.features = np.asarray(self.features, dtype=float)
        n = len(self.subject_ids)
        if self.ages.shape != (n,) or len(self.sexes) != n or len(self.groups) != n:
            raise ValueError("per-subject fields must have equal length")
        if self.features.shape != (n, len(self.region_labels)):
            raise ValueError(
                f"features must be ({n}, {len(self.region_labels)}), "
                f"got {self.features.shape}"
            )
        if n and (not np.all(np.isfinite(self.ages)) or np.any(self.ages <= 0)):
            raise ValueError("ages must be finite and positive")
        if n and not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)

    def select(self, indices) -> "Cohort":
        idx = np.asarray(indices, dtype=int)
        return Cohort(
            subject_ids=[self.subject_ids[i] for i in idx],
            ages=self.ages[idx],
            sexes=[self.sexes[i] for i in idx],
            groups=[self.groups[i] for i in idx],
            features=self.features[idx],
            region_labels=self.region_labels,
        )

    def select_group(self, group: str) -> "Cohort":
        return self.select([i for i, g in enumerate(self.groups) if g == group])

    def exclude_group(self, group: str) -> "Cohort":
        return self.select([i for i, g in enumerate(self.groups) if g != group])


def load_cohort_csv(path) -> Cohort:
    """Load and validate a cohort CSV against the canonical schema.

    Region columns may appear in any order; they are permuted back to
    canonical order.  Any missing/extra column or unparsable cell is a
    SchemaError naming the offending row and column.
    """
    import csv

    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: file is empty") from None
        rows = list(reader)

    expected_meta = list(META_COLUMNS)
    if header[: len(expected_meta)] != expected_meta:
        raise SchemaError(
            f"{path}: header must start with {expected_meta}, got {header[:4]}"
        )
    region_cols = header[len(expected_meta) :]
    missing = [lab for lab in REGION_LABELS if lab not in region_cols]
    if missing:
        raise SchemaError(f"{path}: missing region columns {missing[:5]}")
    extra = [lab for lab in region_cols if lab not in REGION_LABELS]
    if extra:
        raise SchemaError(f"{path}: unexpected region columns {extra[:5]}")
    if len(region_cols) != N_REGIONS:
        raise SchemaError(f"{path}: duplicate region columns present")
    # Permutation taking file order back to canonical order.
    order = [region_cols.index(lab) for lab in REGION_LABELS]

    subject_ids, ages, sexes, groups, features = [], [], [], [], []
    n_cols = len(header)
    for row_num, row in enumerate(rows, start=2):
        if len(row) != n_cols:
            raise SchemaError(
                f"{path}: row {row_num} has {len(row)} fields, expected {n_cols}"
            )
        subject_id, age_raw, sex, group = row[:4]
        if not subject_id:
            raise SchemaError(f"{path}: row {row_num} has an empty subject_id")
        try:
            age = float(age_raw)
        except ValueError:
            raise SchemaError(
                f"{path}: row {row_num} column 'age': not numeric ({age_raw!r})"
            ) from None
        if sex not in SEX_VALUES:
            raise SchemaError(
                f"{path}: row {row_num} column 'sex': {sex!r} not in {SEX_VALUES}"
            )
        if not group:
            raise SchemaError(f"{path}: row {row_num} has an empty group")
        raw_features = row[4:]
        values = np.empty(N_REGIONS)
        for out_idx, src_idx in enumerate(order):
            cell = raw_features[src_idx]
            try:
                values[out_idx] = float(cell)
            except ValueError:
                raise SchemaError(
                    f"{path}: row {row_num} column {region_cols[src_idx]!r}: "
                    f"not numeric ({cell!r})"
                ) from None
        subject_ids.append(subject_id)
        ages.append(age)
        sexes.append(sex)
        groups.append(group)
        features.append(values)

    try:
        return Cohort(
            subject_ids=subject_ids,
            ages=np.asarray(ages, dtype=float),
            sexes=sexes,
            groups=groups,
            features=np.asarray(features, dtype=float).reshape(len(subject_ids), N_REGIONS),
        )
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def save_cohort_csv(cohort: Cohort, path) -> None:
    """Write a cohort in canonical column order.

    Floats are written with repr so load(save(x)) reproduces values
    bit-exactly.
    """
    import csv

    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(list(META_COLUMNS) + list(cohort.region_labels))
        for i in range(cohort.n_subjects):
            writer.writerow(
                [
                    cohort.subject_ids[i],
                    repr(float(cohort.ages[i])),
                    cohort.sexes[i],
                    cohort.groups[i],
                ]
                + [repr(float(v)) for v in cohort.features[i]]
            )


def save_model(model: VnnModel, path) -> None:
    """Persist a model as a self-describing JSON document."""
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "region_labels": list(model.region_labels),
        "layers": [
            {
                "f_in": cfg.f_in,
                "f_out": cfg.f_out,
                "num_taps": cfg.num_taps,
                "activation": cfg.activation,
            }
            for cfg in model.layers
        ],
        "taps": [block.tolist() for block in model.taps],
        "covariance": model.covariance.tolist(),
        "lambda_max": model.lambda_max,
        "parameter_count": model.n_parameters,
        "training": dict(model.metadata),
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_model(path) -> VnnModel:
    """Load a model document, checking version and dimensions."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    version = doc.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise SchemaError(
            f"{path}: unsupported model format version {version!r} "
            f"(expected {MODEL_FORMAT_VERSION})"
        )
    required = {"region_labels", "layers", "taps", "covariance", "lambda_max"}
    missing = required - set(doc)
    if missing:
        raise SchemaError(f"{path}: missing keys {sorted(missing)}")
    try:
        layers = tuple(
            LayerConfig(
                f_in=int(raw["f_in"]),
                f_out=int(raw["f_out"]),
                num_taps=int(raw["num_taps"]),
                activation=str(raw["activation"]),
            )
            for raw in doc["layers"]
        )
        taps = tuple(np.asarray(block, dtype=float) for block in doc["taps"])
        model = VnnModel(
            layers=layers,
            taps=taps,
            covariance=np.asarray(doc["covariance"], dtype=float),
            lambda_max=float(doc["lambda_max"]),
            region_labels=tuple(str(lab) for lab in doc["region_labels"]),
            metadata=dict(doc.get("training", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed model document ({exc})") from None
    return model


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def export_region_table_csv(table, path) -> None:
    """Region table as CSV for external surface-plotting tools.

    Columns: region_label, f_value, p_raw, p_adjusted, direction,
    significant.  Floats carry fixed 6-decimal formatting so re-exports
    are byte-identical.
    """
    lines = ["region_label,f_value,p_raw,p_adjusted,direction,significant"]
    for row in table.rows:
        lines.append(
            ",".join(
                [
                    row.region_label,
                    _fmt(row.f_value),
                    _fmt(row.p_raw),
                    _fmt(row.p_adjusted),
                    str(row.direction).lower(),
                    str(row.significant).lower(),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def export_eigen_table_csv(report, path) -> None:
    """Per-eigenvector statistics as CSV (index 0 = largest eigenvalue)."""
    lines = ["eigenvector,eigenvalue,f_value,p_raw,p_adjusted,significant"]
    for row in report.eigen_rows:
        lines.append(
            ",".join(
                [
                    str(row.index),
                    _fmt(row.eigenvalue),
                    _fmt(row.f_value),
                    _fmt(row.p_raw),
                    _fmt(row.p_adjusted),
                    str(row.significant).lower(),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def export_json(payload: dict, path) -> None:
    """Deterministically formatted JSON export."""
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n")
