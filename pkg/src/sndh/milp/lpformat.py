"""CPLEX-style LP text dump, for cross-checking models in external tools."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .model import LinearProgram


def _terms(coefs: list[tuple[float, str]]) -> str:
    if not coefs:
        return "0"
    out = []
    for k, (val, name) in enumerate(coefs):
        sign = "-" if val < 0 else "+"
        mag = abs(val)
        text = f"{mag:.17g} {name}"
        out.append((f"- {text}" if sign == "-" else text) if k == 0 else f"{sign} {text}")
    return " ".join(out)


def to_lp_text(lp: LinearProgram) -> str:
    names = lp.var_names or [f"x{j}" for j in range(lp.num_vars)]
    lines = ["\\ generated by sndh", "Minimize"]
    obj = [(float(c), names[j]) for j, c in enumerate(lp.costs) if c != 0.0]
    offset = f" + {lp.objective_offset:.17g} __offset" if lp.objective_offset else ""
    lines.append(f" obj: {_terms(obj)}{offset}")
    lines.append("Subject To")
    A = lp.matrix().tocsr()
    for i in range(lp.num_rows):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        row = [(float(v), names[j]) for j, v in zip(A.indices[lo:hi], A.data[lo:hi])]
        lines.append(f" c{i}: {_terms(row)} {lp.row_sense[i]} {lp.rhs[i]:.17g}")
    lines.append("Bounds")
    for j in range(lp.num_vars):
        if lp.is_binary[j]:
            continue
        up = lp.var_upper[j]
        up_text = "+inf" if not np.isfinite(up) else f"{up:.17g}"
        lines.append(f" {lp.var_lower[j]:.17g} <= {names[j]} <= {up_text}")
    if lp.objective_offset:
        lines.append(" __offset = 1")
    bins = [names[j] for j in np.flatnonzero(lp.is_binary)]
    if bins:
        lines.append("Binaries")
        lines.extend(f" {name}" for name in bins)
    lines.append("End")
    return "\n".join(lines) + "\n"


def write_lp(lp: LinearProgram, path: str | Path) -> None:
    Path(path).write_text(to_lp_text(lp))
