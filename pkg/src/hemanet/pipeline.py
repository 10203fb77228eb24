"""Two-stage clinical flow: binary diagnosis, subtype classification on
positives only, and report emission.

Per-record failures are isolated into error entries so one bad row never
kills a batch.  The classification network is never evaluated for a
record diagnosed healthy.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .metrics import (
    DIAGNOSIS_LABELS,
    FOURWAY_LABELS,
    SUBTYPE_LABELS,
    ConfusionMatrix,
)
from .models import NarxModel, decode_subtype, encode_targets
from .preprocess import encode_batch
from .records import AnemiaLabel, CbcRecord, check_record
from .serialize import ModelBundle

REPORT_FORMATS = ("text", "json", "csv")


@dataclass
class DiagnosisResult:
    verdict: int
    raw: float
    threshold: float


@dataclass
class PatientReport:
    patient_id: object
    verdict: int | None = None
    subtype: AnemiaLabel | None = None
    raw_diagnosis: float | None = None
    raw_classify: list[float] | None = None
    models: str = ""
    timestamp: str | None = None
    error: str | None = None


def diagnose(diag: ModelBundle, record: CbcRecord, threshold: float = 0.5) -> DiagnosisResult:
    """Binary anemic/healthy call; raw output at or above threshold is positive."""
    if diag.output_encoding != "binary1":
        raise ValueError("diagnosis requires a binary1 model")
    check_record(record)
    raw = float(diag.predict(record)[0])
    return DiagnosisResult(verdict=1 if raw >= threshold else 0, raw=raw, threshold=threshold)


def classify(clf: ModelBundle, record: CbcRecord, diagnosis: DiagnosisResult):
    """Subtype call for a diagnosed-positive record; returns (label, raw outputs)."""
    if diagnosis.verdict != 1:
        raise ValueError("classify called on a healthy verdict (pipeline contract violation)")
    if clf.output_encoding not in ("onehot3", "banded1"):
        raise ValueError("classification requires an onehot3 or banded1 model")
    raw = clf.predict(record)
    return decode_subtype(raw, clf.output_encoding), raw


def run_pipeline(
    diag: ModelBundle,
    clf: ModelBundle,
    records,
    threshold: float = 0.5,
    ids=None,
    deterministic: bool = False,
) -> list[PatientReport]:
    """Diagnose every record, classify positives, and report in input order."""
    _reject_stream_bundles(diag, clf)
    ids = list(ids) if ids is not None else list(range(len(records)))
    if len(ids) != len(records):
        raise ValueError("ids must align with records")
    stamp = None if deterministic else _now()
    models = f"{diag.identity}|{clf.identity}"
    reports = []
    for pid, record in zip(ids, records):
        report = PatientReport(patient_id=pid, models=models, timestamp=stamp)
        try:
            result = diagnose(diag, record, threshold)
            report.verdict = result.verdict
            report.raw_diagnosis = result.raw
            if result.verdict == 1:
                subtype, raw = classify(clf, record, result)
                report.subtype = subtype
                report.raw_classify = [float(v) for v in raw]
        except ValueError as exc:
            report.error = str(exc)
        reports.append(report)
    return reports


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _reject_stream_bundles(*bundles: ModelBundle) -> None:
    for bundle in bundles:
        if isinstance(bundle.net, NarxModel) and bundle.net.mode == "stream":
            raise ValueError(
                "stream-mode NARX models need a labeled history and cannot "
                "serve per-record predictions"
            )


def emit_reports(
    reports: list[PatientReport],
    fmt: str = "text",
    model_files=(),
    threshold: float = 0.5,
    created: str | None = None,
) -> str:
    """Render patient reports as text, JSON, or CSV."""
    if fmt not in REPORT_FORMATS:
        raise ValueError(f"unknown report format {fmt!r}")
    if fmt == "text":
        lines = ["# anemia screening report"]
        if model_files:
            lines.append(f"# models: {' '.join(str(m) for m in model_files)}")
        lines.append(f"# threshold: {threshold:g}")
        if created:
            lines.append(f"# created: {created}")
        for r in reports:
            lines.append(_text_line(r))
        return "\n".join(lines) + "\n"
    if fmt == "json":
        doc = {
            "meta": {
                "model_files": [str(m) for m in model_files],
                "threshold": threshold,
                **({"created": created} if created else {}),
            },
            "patients": [_patient_doc(r) for r in reports],
        }
        return json.dumps(doc, indent=1) + "\n"
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["id", "verdict", "subtype", "raw_diagnosis"])
    for r in reports:
        writer.writerow([
            r.patient_id,
            "" if r.verdict is None else r.verdict,
            r.subtype.value if r.subtype is not None else "",
            "" if r.raw_diagnosis is None else repr(r.raw_diagnosis),
        ])
    return out.getvalue()


def _text_line(r: PatientReport) -> str:
    if r.error is not None:
        return f"#{r.patient_id}: ERROR ({r.error})"
    if r.verdict == 0:
        return f"#{r.patient_id}: NON-ANEMIC (p={r.raw_diagnosis:.2f})"
    return f"#{r.patient_id}: {r.subtype.value.upper()} (p={r.raw_diagnosis:.2f})"


def _patient_doc(r: PatientReport) -> dict:
    if r.error is not None:
        return {"id": r.patient_id, "error": r.error}
    doc = {"id": r.patient_id, "verdict": r.verdict, "raw": {"diagnosis": r.raw_diagnosis}}
    if r.verdict == 1:
        doc["subtype"] = r.subtype.value
        doc["raw"]["classify"] = r.raw_classify
    return doc


def _bundle_outputs(bundle: ModelBundle, records, targets=None) -> np.ndarray:
    """Raw network outputs for already-validated records, honoring NARX modes."""
    X = bundle.normalizer.apply(encode_batch(records, bundle.feature_spec))
    net = bundle.net
    if isinstance(net, NarxModel):
        if net.mode == "stream":
            if targets is None:
                raise ValueError("stream-mode NARX evaluation needs labeled data")
            outputs, _ = net.predict_stream(X, targets)
            return outputs
        return net.predict_record_batch(X)
    return net.predict_batch(X)


def evaluate_diagnosis(diag: ModelBundle, labeled, threshold: float = 0.5) -> ConfusionMatrix:
    """2x2 confusion matrix of the binary stage over labeled records."""
    if diag.output_encoding != "binary1":
        raise ValueError("diagnosis evaluation requires a binary1 model")
    targets = encode_targets([item.label for item in labeled], "binary1")
    outputs = _bundle_outputs(diag, labeled, targets)
    truths = [DIAGNOSIS_LABELS[int(item.label.is_anemic)] for item in labeled]
    preds = [DIAGNOSIS_LABELS[int(out[0] >= threshold)] for out in outputs]
    return ConfusionMatrix.from_pairs(truths, preds, DIAGNOSIS_LABELS)


def evaluate_classification(clf: ModelBundle, labeled) -> ConfusionMatrix:
    """3x3 confusion matrix of the subtype stage over the anemic records."""
    if clf.output_encoding not in ("onehot3", "banded1"):
        raise ValueError("classification evaluation requires an onehot3 or banded1 model")
    anemic = [item for item in labeled if item.label.is_anemic]
    targets = encode_targets([item.label for item in anemic], clf.output_encoding)
    outputs = _bundle_outputs(clf, anemic, targets)
    truths = [item.label.value for item in anemic]
    preds = [decode_subtype(out, clf.output_encoding).value for out in outputs]
    return ConfusionMatrix.from_pairs(truths, preds, SUBTYPE_LABELS)


def evaluate_pipeline(
    diag: ModelBundle,
    clf: ModelBundle,
    labeled,
    threshold: float = 0.5,
) -> ConfusionMatrix:
    """4x4 confusion matrix of the gated two-stage flow."""
    _reject_stream_bundles(diag, clf)
    reports = run_pipeline(
        diag, clf, [item.record for item in labeled], threshold, deterministic=True
    )
    truths, preds = [], []
    for item, report in zip(labeled, reports):
        if report.error is not None:
            raise ValueError(f"record {report.patient_id} failed validation: {report.error}")
        truths.append(item.label.value)
        if report.verdict == 0:
            preds.append(AnemiaLabel.NON_ANEMIC.value)
        else:
            preds.append(report.subtype.value)
    return ConfusionMatrix.from_pairs(truths, preds, FOURWAY_LABELS)
