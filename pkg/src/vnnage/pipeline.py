"""Brain-age-gap pipeline: bias-corrected delta-age, per-region group
characterization, and eigenvector-level explainability.

The flow mirrors how the model is deployed on a new dataset: swap the
model covariance for one estimated from that dataset's healthy
controls, forward everyone, learn the age-dependent prediction bias on
the healthy group, and report the corrected gap together with the
regional and spectral statistics that explain it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import stats
from .io import Cohort
from .linalg import EigenDecomposition, least_squares_line, sample_covariance, sym_eigendecompose
from .vnn import ForwardOutput, VnnModel, forward_batch, with_covariance

# Residual sign convention: "output_minus_estimate" makes an elevated
# regional output show up as an elevated residual (and, at group level,
# elevated delta-age).  The mirrored convention is accepted everywhere
# the residuals are formed.
RESIDUAL_CONVENTIONS = ("output_minus_estimate", "estimate_minus_output")
DEFAULT_RESIDUAL_CONVENTION = "output_minus_estimate"

DEFAULT_REGION_ALPHA = 0.05
DEFAULT_EIGEN_ALPHA = 1e-4


@dataclass(frozen=True)
class BiasCorrector:
    """Linear age trend of the raw prediction gap on healthy controls."""

    slope: float
    intercept: float


@dataclass
class SubjectRecord:
    subject_id: str
    role: str  # "hc" or "disease"
    group: str
    age: float
    raw_prediction: float
    brain_age: float
    delta_age: float
    regional_outputs: np.ndarray
    regional_residuals: np.ndarray

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "role": self.role,
            "group": self.group,
            "age": self.age,
            "raw_prediction": self.raw_prediction,
            "brain_age": self.brain_age,
            "delta_age": self.delta_age,
            "regional_outputs": self.regional_outputs.tolist(),
            "regional_residuals": self.regional_residuals.tolist(),
        }


@dataclass
class GroupStats:
    n: int
    mean: float
    std: float

    def to_dict(self) -> dict:
        return {"n": self.n, "mean": self.mean, "std": self.std}


@dataclass
class DeltaAgeReport:
    subjects: list[SubjectRecord]
    hc_stats: GroupStats
    disease_stats: GroupStats
    group_stats: dict[str, GroupStats]
    corrector: BiasCorrector
    residual_convention: str

    def to_dict(self) -> dict:
        return {
            "residual_convention": self.residual_convention,
            "bias_corrector": {
                "slope": self.corrector.slope,
                "intercept": self.corrector.intercept,
            },
            "hc_delta_age": self.hc_stats.to_dict(),
            "disease_delta_age": self.disease_stats.to_dict(),
            "group_delta_age": {k: v.to_dict() for k, v in self.group_stats.items()},
            "subjects": [s.to_dict() for s in self.subjects],
        }


@dataclass
class RegionRow:
    region_label: str
    f_value: float
    p_raw: float
    p_adjusted: float
    direction: bool  # disease mean > healthy mean
    significant: bool

    def to_dict(self) -> dict:
        return {
            "region_label": self.region_label,
            "f_value": self.f_value,
            "p_raw": self.p_raw,
            "p_adjusted": self.p_adjusted,
            "direction": self.direction,
            "significant": self.significant,
        }


@dataclass
class RegionTable:
    rows: list[RegionRow]
    alpha: float

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "rows": [r.to_dict() for r in self.rows]}

    def significant_labels(self) -> list[str]:
        return [r.region_label for r in self.rows if r.significant]


@dataclass
class EigenRow:
    index: int
    eigenvalue: float
    f_value: float
    p_raw: float
    p_adjusted: float
    significant: bool

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "eigenvalue": self.eigenvalue,
            "f_value": self.f_value,
            "p_raw": self.p_raw,
            "p_adjusted": self.p_adjusted,
            "significant": self.significant,
        }


@dataclass
class ProjectionRecord:
    subject_id: str
    role: str
    group: str
    projections: np.ndarray

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "role": self.role,
            "group": self.group,
            "projections": self.projections.tolist(),
        }


@dataclass
class ExplainabilityReport:
    """Residual/eigenvector inner products and their group statistics.

    Eigenvector index 0 pairs with the largest eigenvalue of the
    covariance the model was run with.
    """

    subjects: list[ProjectionRecord]
    eigen_rows: list[EigenRow]
    alpha: float

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "eigenvectors": [r.to_dict() for r in self.eigen_rows],
            "subjects": [s.to_dict() for s in self.subjects],
        }

    def flagged_indices(self) -> list[int]:
        return [r.index for r in self.eigen_rows if r.significant]


def fit_bias_corrector(hc_ages, hc_raw_predictions) -> BiasCorrector:
    """Regress the raw prediction gap on age over healthy controls.

    The fitted trend is what apply_bias_correction subtracts; by the
    normal equations the corrected gap has exactly zero mean on the
    cohort used for fitting.
    """
    ages = np.asarray(hc_ages, dtype=float)
    preds = np.asarray(hc_raw_predictions, dtype=float)
    gaps = preds - ages
    slope, intercept = least_squares_line(ages, gaps)
    return BiasCorrector(slope=slope, intercept=intercept)


def apply_bias_correction(
    corrector: BiasCorrector, age: float, raw_prediction: float
) -> tuple[float, float]:
    """Return (brain_age, delta_age) for one subject."""
    brain_age = raw_prediction - (corrector.slope * age + corrector.intercept)
    return brain_age, brain_age - age


def regional_residuals(
    forward: ForwardOutput, convention: str = DEFAULT_RESIDUAL_CONVENTION
) -> np.ndarray:
    """Per-region deviation between final-layer outputs and their mean.

    Under the default convention r_i = p_i - y_hat; either way the
    residuals sum to zero because the age estimate is the unweighted
    mean of the regional outputs.
    """
    if convention not in RESIDUAL_CONVENTIONS:
        raise ValueError(f"unknown residual convention {convention!r}")
    r = forward.regional_outputs - forward.age_estimate
    return r if convention == "output_minus_estimate" else -r


def _residual_matrix(regional: np.ndarray, predictions: np.ndarray, convention: str) -> np.ndarray:
    r = regional - predictions[:, None]
    return r if convention == "output_minus_estimate" else -r


def eigen_projection(residuals, eig: EigenDecomposition) -> np.ndarray:
    """Inner products of a residual vector with every eigenvector,
    ordered by descending eigenvalue."""
    r = np.asarray(residuals, dtype=float)
    if r.shape != (eig.size,):
        raise ValueError(f"residuals must have length {eig.size}")
    return eig.eigenvectors.T @ r


def anatomic_characterization(
    disease_outputs,
    hc_outputs,
    alpha: float = DEFAULT_REGION_ALPHA,
    region_labels=None,
) -> RegionTable:
    """Per-region two-group ANOVA over final-layer outputs.

    A region is significant only when the disease mean exceeds the
    healthy mean AND its Bonferroni-adjusted p-value clears alpha; the
    one-sided filter keeps the table aligned with elevated delta-age.
    """
    disease = np.asarray(disease_outputs, dtype=float)
    healthy = np.asarray(hc_outputs, dtype=float)
    if disease.ndim != 2 or healthy.ndim != 2 or disease.shape[1] != healthy.shape[1]:
        raise ValueError("group output matrices must share the region dimension")
    m = disease.shape[1]
    labels = list(region_labels) if region_labels is not None else [f"region_{i}" for i in range(m)]
    if len(labels) != m:
        raise ValueError("region_labels length must match the region dimension")
    rows = []
    for i in range(m):
        result = stats.anova_f_two_group(disease[:, i], healthy[:, i])
        adjusted = stats.bonferroni(result.p_raw, m)
        direction = bool(disease[:, i].mean() > healthy[:, i].mean())
        rows.append(
            RegionRow(
                region_label=labels[i],
                f_value=result.f_value,
                p_raw=result.p_raw,
                p_adjusted=adjusted,
                direction=direction,
                significant=direction and adjusted < alpha,
            )
        )
    return RegionTable(rows=rows, alpha=alpha)


def explainability_compare(
    disease_projections,
    hc_projections,
    alpha: float = DEFAULT_EIGEN_ALPHA,
    eigenvalues=None,
    subjects: list[ProjectionRecord] | None = None,
) -> ExplainabilityReport:
    """Per-eigenvector two-group ANOVA over residual projections.

    Flags eigenvectors with raw p <= alpha (Bonferroni-adjusted values
    are reported alongside for the reader).
    """
    disease = np.asarray(disease_projections, dtype=float)
    healthy = np.asarray(hc_projections, dtype=float)
    if disease.ndim != 2 or healthy.ndim != 2 or disease.shape[1] != healthy.shape[1]:
        raise ValueError("projection matrices must share the eigenvector dimension")
    m = disease.shape[1]
    lams = (
        np.asarray(eigenvalues, dtype=float)
        if eigenvalues is not None
        else np.full(m, np.nan)
    )
    if lams.shape != (m,):
        raise ValueError("eigenvalues length must match the eigenvector dimension")
    rows = []
    for j in range(m):
        result = stats.anova_f_two_group(disease[:, j], healthy[:, j])
        rows.append(
            EigenRow(
                index=j,
                eigenvalue=float(lams[j]),
                f_value=result.f_value,
                p_raw=result.p_raw,
                p_adjusted=stats.bonferroni(result.p_raw, m),
                significant=result.p_raw <= alpha,
            )
        )
    return ExplainabilityReport(subjects=subjects or [], eigen_rows=rows, alpha=alpha)


def assemble_delta_report(
    corrector: BiasCorrector,
    cohorts: list[tuple[Cohort, str, np.ndarray, np.ndarray]],
    convention: str = DEFAULT_RESIDUAL_CONVENTION,
) -> DeltaAgeReport:
    """Build per-subject delta-age records from forward results.

    cohorts holds (cohort, role, raw predictions, regional outputs)
    tuples; roles are "hc" and "disease".
    """
    if convention not in RESIDUAL_CONVENTIONS:
        raise ValueError(f"unknown residual convention {convention!r}")
    subjects: list[SubjectRecord] = []
    deltas_by_role: dict[str, list[float]] = {"hc": [], "disease": []}
    deltas_by_group: dict[str, list[float]] = {}
    for cohort, role, predictions, regional in cohorts:
        residuals = _residual_matrix(regional, predictions, convention)
        for i in range(cohort.n_subjects):
            brain_age, delta = apply_bias_correction(
                corrector, float(cohort.ages[i]), float(predictions[i])
            )
            subjects.append(
                SubjectRecord(
                    subject_id=cohort.subject_ids[i],
                    role=role,
                    group=cohort.groups[i],
                    age=float(cohort.ages[i]),
                    raw_prediction=float(predictions[i]),
                    brain_age=brain_age,
                    delta_age=delta,
                    regional_outputs=regional[i].copy(),
                    regional_residuals=residuals[i],
                )
            )
            deltas_by_role[role].append(delta)
            deltas_by_group.setdefault(cohort.groups[i], []).append(delta)

    def group_stats(values: list[float]) -> GroupStats:
        arr = np.asarray(values, dtype=float)
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        return GroupStats(n=arr.size, mean=float(arr.mean()), std=std)

    return DeltaAgeReport(
        subjects=subjects,
        hc_stats=group_stats(deltas_by_role["hc"]),
        disease_stats=group_stats(deltas_by_role["disease"]),
        group_stats={k: group_stats(v) for k, v in sorted(deltas_by_group.items())},
        corrector=corrector,
        residual_convention=convention,
    )


def run_pipeline(
    model: VnnModel,
    hc_cohort: Cohort,
    disease_cohort: Cohort,
    alpha: float = DEFAULT_REGION_ALPHA,
    eigen_alpha: float = DEFAULT_EIGEN_ALPHA,
    convention: str = DEFAULT_RESIDUAL_CONVENTION,
) -> tuple[DeltaAgeReport, RegionTable, ExplainabilityReport]:
    """Full delta-age analysis of a disease cohort against its healthy
    controls.

    Steps: rebind the model covariance to the healthy cohort, forward
    everyone, fit the bias corrector on the healthy group, compute
    delta-age and residuals for all subjects, then run the per-region
    and per-eigenvector group comparisons.  Deterministic throughout.
    """
    if hc_cohort.region_labels != disease_cohort.region_labels:
        raise ValueError("cohorts do not share a region schema")
    if model.region_labels != hc_cohort.region_labels:
        raise ValueError("model and cohort region schemas differ")
    if hc_cohort.n_subjects < 3:
        raise ValueError("need at least 3 healthy-control subjects")
    if disease_cohort.n_subjects < 2:
        raise ValueError("need at least 2 disease subjects")

    swapped = with_covariance(model, sample_covariance(hc_cohort.features))
    eig = sym_eigendecompose(swapped.covariance)

    hc_preds, hc_regional = forward_batch(swapped, hc_cohort.features)
    dis_preds, dis_regional = forward_batch(swapped, disease_cohort.features)

    corrector = fit_bias_corrector(hc_cohort.ages, hc_preds)
    delta_report = assemble_delta_report(
        corrector,
        [
            (hc_cohort, "hc", hc_preds, hc_regional),
            (disease_cohort, "disease", dis_preds, dis_regional),
        ],
        convention=convention,
    )

    region_table = anatomic_characterization(
        dis_regional, hc_regional, alpha=alpha, region_labels=hc_cohort.region_labels
    )

    hc_residuals = _residual_matrix(hc_regional, hc_preds, convention)
    dis_residuals = _residual_matrix(dis_regional, dis_preds, convention)
    hc_proj = hc_residuals @ eig.eigenvectors
    dis_proj = dis_residuals @ eig.eigenvectors
    projection_records = [
        ProjectionRecord(
            subject_id=hc_cohort.subject_ids[i],
            role="hc",
            group=hc_cohort.groups[i],
            projections=hc_proj[i],
        )
        for i in range(hc_cohort.n_subjects)
    ] + [
        ProjectionRecord(
            subject_id=disease_cohort.subject_ids[i],
            role="disease",
            group=disease_cohort.groups[i],
            projections=dis_proj[i],
        )
        for i in range(disease_cohort.n_subjects)
    ]
    explain_report = explainability_compare(
        dis_proj,
        hc_proj,
        alpha=eigen_alpha,
        eigenvalues=eig.eigenvalues,
        subjects=projection_records,
    )
    return delta_report, region_table, explain_report
