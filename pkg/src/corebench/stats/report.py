"""Table-style rendering of mixed-model fits, as text and JSON."""
from __future__ import annotations

import json

from .lmm import LmmFit

HEADER = ("Source", "Coefficient", "Std. Error", "z-value", "p-value", "95% CI")


def fmt_p(p: float) -> str:
    return "<0.001" if p < 0.001 else f"{p:.3f}"


def report_rows(fit: LmmFit) -> list[dict]:
    """One dict per table row; every cell already formatted as text."""
    rows = []
    for j, term in enumerate(fit.terms):
        lo, hi = fit.ci95[j]
        rows.append({
            "source": term,
            "coefficient": f"{fit.beta[j]:.3f}",
            "std_error": f"{fit.se[j]:.3f}",
            "z_value": f"{fit.z[j]:.3f}",
            "p_value": fmt_p(float(fit.p[j])),
            "ci95": f"[{lo:.3f}, {hi:.3f}]",
        })
    rows.append({
        "source": "Group Var",
        "coefficient": f"{fit.sigma2_u:.3f}",
        "std_error": "-" if fit.sigma2_u_se is None else f"{fit.sigma2_u_se:.3f}",
        "z_value": "-",
        "p_value": "-",
        "ci95": "",
    })
    return rows


def lmm_report(fit: LmmFit) -> str:
    rows = report_rows(fit)
    cells = [HEADER] + [(r["source"], r["coefficient"], r["std_error"], r["z_value"],
                         r["p_value"], r["ci95"]) for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(HEADER))]
    lines = []
    for k, c in enumerate(cells):
        line = "  ".join(c[i].ljust(widths[i]) if i == 0 else c[i].rjust(widths[i]) for i in range(len(c)))
        lines.append(line.rstrip())
        if k == 0:
            lines.append("-" * len(lines[0]))
    lines.append("")
    lines.append(f"Residual variance: {fit.sigma2_e:.3f}   lambda: {fit.lam:.6g}   "
                 f"REML log-likelihood: {fit.reml_loglik:.3f}")
    lines.append(f"Observations: {fit.n_obs}   Groups: {fit.n_groups}"
                 + ("   (group variance at the zero boundary)" if fit.boundary else ""))
    return "\n".join(lines)


def lmm_report_json(fit: LmmFit) -> str:
    payload = {"table": report_rows(fit), "fit": fit.to_dict()}
    return json.dumps(payload, indent=2)


def parse_text_rows(text: str) -> list[dict]:
    """Recover the formatted cells from ``lmm_report`` output (used to check parity with JSON)."""
    out = []
    for line in text.splitlines()[2:]:
        if not line.strip():
            break
        if line.startswith("Group Var"):
            parts = line[len("Group Var"):].split()
            out.append({"source": "Group Var", "coefficient": parts[0], "std_error": parts[1],
                        "z_value": parts[2], "p_value": parts[3], "ci95": ""})
            continue
        head, _, ci = line.partition("[")
        parts = head.split()
        out.append({"source": parts[0], "coefficient": parts[1], "std_error": parts[2],
                    "z_value": parts[3], "p_value": parts[4], "ci95": "[" + ci.strip()})
    return out
