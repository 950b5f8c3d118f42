import shutil
import subprocess
from pathlib import Path
from typing import List, Optional, Sequence

from infra.observability import emit
from modules.evaluation.report import MetricReport

_STYLE = """
body { font-family: -apple-system, "Segoe UI", Helvetica, Arial, sans-serif; color: #1f2933; margin: 32px; }
h1 { font-size: 22px; margin-bottom: 4px; }
h2 { font-size: 17px; margin-top: 28px; border-bottom: 1px solid #d9e2ec; padding-bottom: 4px; }
.meta { color: #52606d; font-size: 12px; margin-bottom: 8px; }
table { border-collapse: collapse; width: 100%; font-size: 12px; margin-top: 6px; }
th, td { border: 1px solid #d9e2ec; padding: 4px 6px; text-align: right; }
th { background: #f0f4f8; }
td.scope, td.metric { text-align: left; }
tr.worst td { font-weight: 600; }
.better { color: #1f7a3a; }
.worse { color: #b42318; }
"""

def _esc(s: str) -> str:
    """HTML-escape minimal characters for safe rendering."""
    return (str(s or "")).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")

def _fmt(v: Optional[float], digits: int = 4) -> str:
    return "n/a" if v is None else f"{v:.{digits}f}"

def _interval(lo: Optional[float], hi: Optional[float]) -> str:
    if lo is None or hi is None:
        return "n/a"
    return f"[{_fmt(lo)}, {_fmt(hi)}]"

def _relative_cell(metric: str, point: Optional[float], lo: Optional[float], hi: Optional[float]) -> str:
    """Relative difference with its CI; colored when the CI excludes zero."""
    text = f"{_fmt(point)} {_interval(lo, hi)}"
    if lo is None or hi is None or (lo <= 0.0 <= hi):
        return f"<td>{_esc(text)}</td>"
    # AUC is higher-is-better, loss and ACE lower-is-better
    improved = lo > 0.0 if metric == "auc" else hi < 0.0
    return f'<td class="{"better" if improved else "worse"}">{_esc(text)}</td>'

def _report_section(report: MetricReport) -> str:
    rows = []
    for r in report.rows:
        cls = ' class="worst"' if r.scope == "worst_case" else ""
        rows.append(
            f"<tr{cls}><td class=\"metric\">{_esc(r.metric)}</td><td class=\"scope\">{_esc(r.scope)}</td>"
            f"<td>{_fmt(r.point)}</td><td>{_interval(r.lower, r.upper)}</td>"
            f"{_relative_cell(r.metric, r.relative_point, r.relative_lower, r.relative_upper)}"
            f"<td>{r.n_missing}</td></tr>"
        )
    boot = report.bootstrap or {}
    meta = (f"config {_esc(report.config_id)} &middot; baseline {_esc(report.baseline or 'none')} &middot; "
            f"{boot.get('replicates', '?')} replicates, alpha {boot.get('alpha', '?')}, seed {boot.get('seed', '?')}")
    return (
        f"<h2>{_esc(report.family)} / {_esc(report.criterion)}</h2>"
        f"<div class=\"meta\">{meta}</div>"
        "<table><thead><tr><th>metric</th><th>scope</th><th>point</th><th>CI</th>"
        "<th>relative to baseline</th><th>missing</th></tr></thead>"
        f"<tbody>{''.join(rows)}</tbody></table>"
    )

def build_html(reports: Sequence[MetricReport], title: str = "Subpopulation shift evaluation") -> str:
    sections = "".join(_report_section(r) for r in reports)
    return (
        "<!DOCTYPE html><html><head><meta charset=\"utf-8\">"
        f"<title>{_esc(title)}</title><style>{_STYLE}</style></head><body>"
        f"<h1>{_esc(title)}</h1>"
        f"<div class=\"meta\">{len(reports)} selected methods; test-set point estimates are means over five fold-models, "
        "intervals are stratified percentile bootstrap.</div>"
        f"{sections}</body></html>"
    )

def render_html(reports: Sequence[MetricReport], out_dir: str) -> str:
    """Write <out_dir>/report.html and return its path."""
    out_html = Path(out_dir) / "report.html"
    out_html.parent.mkdir(parents=True, exist_ok=True)
    out_html.write_text(build_html(reports), encoding="utf-8")
    emit({"kind": "report_written", "path": str(out_html), "reports": len(reports)})
    return str(out_html)

def render_pdf(reports: Sequence[MetricReport], html_path: str) -> str:
    """Convert an already written report.html to report.pdf beside it.

    WeasyPrint first, then wkhtmltopdf, then a plain text summary PDF.
    """
    out_pdf = Path(html_path).with_name("report.pdf")
    try:
        from weasyprint import HTML
        HTML(filename=html_path).write_pdf(str(out_pdf))
        return str(out_pdf)
    except Exception:
        pass
    wk = shutil.which("wkhtmltopdf")
    if wk:
        try:
            subprocess.run([wk, html_path, str(out_pdf)], check=True, timeout=300)
            return str(out_pdf)
        except Exception:
            pass
    out_pdf.write_bytes(_simple_text_pdf(_summary_lines(reports, html_path)))
    return str(out_pdf)

def _summary_lines(reports: Sequence[MetricReport], html_path: str) -> str:
    lines: List[str] = ["Subpopulation shift evaluation", f"Full tables: {html_path}"]
    for r in reports:
        worst = {row.metric: row for row in r.rows if row.scope == "worst_case"}
        parts = [f"{m}={_fmt(worst[m].point)}" for m in ("auc", "loss", "ace") if m in worst]
        lines.append(f"{r.family}/{r.criterion}: worst case " + " ".join(parts))
    return "\n".join(lines)

def _simple_text_pdf(text: str) -> bytes:
    """Create a minimal PDF with embedded text for ultimate fallback."""
    # unbalanced parens would end the PDF string literal
    lines = [ln.replace("(", "[").replace(")", "]") for ln in text.splitlines()]
    y = 750
    content_stream = "BT /F1 12 Tf 72 770 Td (" + (lines[0] if lines else "") + ") Tj ET\n"
    for i, ln in enumerate(lines[1:]):
        content_stream += f"BT /F1 10 Tf 72 {y-14*(i+1)} Td (" + ln + ") Tj ET\n"
    b = content_stream.encode("latin-1", errors="ignore")
    objs = []
    objs.append(b"1 0 obj<< /Type /Catalog /Pages 2 0 R >>endobj\n")
    objs.append(b"2 0 obj<< /Type /Pages /Kids [3 0 R] /Count 1 >>endobj\n")
    objs.append(b"3 0 obj<< /Type /Page /Parent 2 0 R /MediaBox [0 0 612 792] /Resources << /Font << /F1 4 0 R >> >> /Contents 5 0 R >>endobj\n")
    objs.append(b"4 0 obj<< /Type /Font /Subtype /Type1 /BaseFont /Helvetica >>endobj\n")
    objs.append(b"5 0 obj<< /Length " + str(len(b)).encode() + b" >>stream\n" + b + b"endstream endobj\n")
    pdf = b"%PDF-1.4\n"
    offs = []
    for o in objs:
        offs.append(len(pdf))
        pdf += o
    xref_pos = len(pdf)
    pdf += b"xref\n0 6\n0000000000 65535 f \n"
    for off in offs:
        pdf += f"{off:010d} 00000 n \n".encode()
    pdf += b"trailer<< /Size 6 /Root 1 0 R >>\nstartxref\n" + str(xref_pos).encode() + b"\n%%EOF\n"
    return pdf
