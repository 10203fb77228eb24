"""CSV persistence for labeled and unlabeled CBC panels.

Schema: ``age,gender,rbc,hgb,hct,mcv,mch,mchc,wbc,label`` with a required
header; unlabeled prediction files simply omit the label column.  Floats
are written with 6 significant digits, so one save/load round trip fixes
the precision and every later round trip is exact.
"""
from __future__ import annotations

import csv

from .records import AnemiaLabel, CbcRecord, Gender, LabeledRecord

COLUMNS = ("age", "gender", "rbc", "hgb", "hct", "mcv", "mch", "mchc", "wbc")
LABEL_COLUMN = "label"

_FLOAT_FIELDS = ("rbc", "hgb", "hct", "mcv", "mch", "mchc", "wbc")


class CsvFormatError(ValueError):
    """Malformed CSV input: missing columns, bad cells, unknown tokens."""


def _fmt(value: float) -> str:
    return format(value, ".6g")


def save_csv(records: list[LabeledRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COLUMNS + (LABEL_COLUMN,))
        for item in records:
            writer.writerow(_record_row(item.record) + [item.label.value])


def save_unlabeled_csv(records: list[CbcRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COLUMNS)
        for record in records:
            writer.writerow(_record_row(record))


def _record_row(record: CbcRecord) -> list[str]:
    row = [str(record.age), record.gender.value]
    row += [_fmt(getattr(record, name)) for name in _FLOAT_FIELDS]
    return row


def load_csv(path) -> list[LabeledRecord]:
    """Load a labeled dataset; every row must carry a recognizable label."""
    rows, fieldnames = _read_rows(path)
    _require_columns(path, fieldnames, COLUMNS + (LABEL_COLUMN,))
    out = []
    for i, row in enumerate(rows, start=1):
        record = _parse_record(path, i, row)
        token = (row[LABEL_COLUMN] or "").strip().lower()
        try:
            label = AnemiaLabel(token)
        except ValueError:
            raise CsvFormatError(
                f"{path}: row {i}, column 'label': unknown label {row[LABEL_COLUMN]!r}"
            ) from None
        out.append(LabeledRecord(record, label))
    return out


def load_unlabeled_csv(path) -> list[CbcRecord]:
    rows, fieldnames = _read_rows(path)
    _require_columns(path, fieldnames, COLUMNS)
    return [_parse_record(path, i, row) for i, row in enumerate(rows, start=1)]


def _read_rows(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        fieldnames = reader.fieldnames
    if fieldnames is None:
        raise CsvFormatError(f"{path}: empty file, expected a header row")
    return rows, tuple(fieldnames)


def _require_columns(path, fieldnames, expected):
    missing = [c for c in expected if c not in fieldnames]
    if missing:
        raise CsvFormatError(f"{path}: missing column(s): {', '.join(missing)}")


def _parse_record(path, row_num, row) -> CbcRecord:
    def bad(column, value):
        return CsvFormatError(
            f"{path}: row {row_num}, column '{column}': cannot parse {value!r}"
        )

    raw_age = row["age"]
    try:
        age = int(raw_age)
    except (TypeError, ValueError):
        raise bad("age", raw_age) from None

    token = (row["gender"] or "").strip().lower()
    try:
        gender = Gender(token)
    except ValueError:
        raise bad("gender", row["gender"]) from None

    values = {}
    for name in _FLOAT_FIELDS:
        try:
            values[name] = float(row[name])
        except (TypeError, ValueError):
            raise bad(name, row[name]) from None
    return CbcRecord(age=age, gender=gender, **values)
