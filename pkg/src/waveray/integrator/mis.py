"""Multiple importance sampling weights (balance heuristic)."""
from __future__ import annotations

import numpy as np


def mis_weight(pdf_a: float, pdf_b: float, delta_a: bool = False) -> float:
    """Balance-heuristic weight of strategy ``a``. A delta strategy cannot be
    matched by the other one and keeps weight 1."""
    if delta_a:
        return 1.0
    if pdf_a < 0 or pdf_b < 0:
        raise ValueError("pdfs must be non-negative")
    if pdf_a == 0 and pdf_b == 0:
        raise ValueError("both pdfs are zero")
    if np.isinf(pdf_a):
        return 1.0
    return pdf_a / (pdf_a + pdf_b)


def balance(pdf_a, pdf_b):
    """Vectorised balance heuristic; rows with both pdfs zero get weight 0."""
    pdf_a = np.asarray(pdf_a, float)
    s = pdf_a + np.asarray(pdf_b, float)
    return np.where(s > 0, pdf_a / np.where(s > 0, s, 1.0), 0.0)
