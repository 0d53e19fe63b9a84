"""Report serialisation: JSON, CSV and a plain-text table.

Row fields always appear in ``ROW_FIELDS`` order and every format carries
the schema version.
"""

import csv
import io
import json
from dataclasses import asdict

from ..errors import ValidationError
from .runner import ROW_FIELDS, SCHEMA_VERSION, BenchReport, BenchRow

FORMATS = ("json", "csv", "table")


def _row_dict(row: BenchRow):
    d = asdict(row)
    return {k: d[k] for k in ROW_FIELDS}


def emit_report(report: BenchReport, fmt="json", *, raw=False) -> bytes:
    """Serialise ``report``.

    Args:
        report: The report to write.
        fmt: ``"json"``, ``"csv"`` or ``"table"``.
        raw: JSON only; also embed per-repetition transcripts so reports
            from separate party processes can be merged later.
    """
    if fmt == "json":
        doc = {"schema_version": SCHEMA_VERSION, "spec": report.spec, "party": report.party,
               "failed": report.failed, "error": report.error, "totals": report.totals,
               "rows": [_row_dict(r) for r in report.rows]}
        if raw:
            doc["raw"] = report.raw
        return (json.dumps(doc, indent=2) + "\n").encode()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("schema_version",) + ROW_FIELDS)
        for r in report.rows:
            d = _row_dict(r)
            w.writerow([SCHEMA_VERSION] + ["" if d[k] is None else d[k] for k in ROW_FIELDS])
        return buf.getvalue().encode()
    if fmt == "table":
        return _table(report).encode()
    raise ValidationError(f"unknown format {fmt!r}; choose from {FORMATS}")


def _cell(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _table(report):
    cells = [list(ROW_FIELDS)] + [[_cell(v) for v in _row_dict(r).values()] for r in report.rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(ROW_FIELDS))]
    lines = [f"schema_version: {SCHEMA_VERSION}"]
    if report.spec:
        lines.append(f"suite: {report.spec['suite']}  profile: {report.spec['profile']}")
    for i, row in enumerate(cells):
        lines.append("  ".join(c.rjust(w) for c, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    if report.totals:
        lines.append("totals: " + ", ".join(f"{k}={_cell(v)}" for k, v in report.totals.items()))
    if report.failed:
        lines.append(f"FAILED: {report.error}")
    return "\n".join(lines) + "\n"


def load_report(data) -> BenchReport:
    """Inverse of the JSON form of :func:`emit_report`."""
    doc = json.loads(data)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValidationError(f"unsupported schema version {doc.get('schema_version')!r}")
    rows = [BenchRow(**{k: r[k] for k in ROW_FIELDS}) for r in doc.get("rows", [])]
    return BenchReport(spec=doc.get("spec", {}), rows=rows, totals=doc.get("totals", {}),
                       party=doc.get("party", "all"), failed=doc.get("failed", False),
                       error=doc.get("error"), raw=doc.get("raw", []))
