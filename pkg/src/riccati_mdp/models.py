"""Reference models used by the CLI study command and throughout the tests."""

from __future__ import annotations

import math

from .linalg import SystemModel


def scalar_study_model() -> SystemModel:
    """Scalar chain with A = sqrt(2), C = Q = R = 1, started at P0 = 1.

    Closed forms: the open-loop update is X -> 2X + 1, the measurement update
    is X -> (3X + 1) / (X + 1), and the fixed point is 1 + sqrt(2).  This is
    the model behind the reproducible rare-event study.
    """
    return SystemModel(A=[[math.sqrt(2.0)]], C=[[1.0]], Q=[[1.0]], R=[[1.0]],
                       P0=[[1.0]])


def planar_model() -> SystemModel:
    """Two-state model with one unstable mode, observable through one output."""
    return SystemModel(
        A=[[1.2, 0.5], [0.0, 0.8]],
        C=[[1.0, 0.0]],
        Q=[[1.0, 0.0], [0.0, 1.0]],
        R=[[1.0]],
        P0=[[1.0, 0.0], [0.0, 1.0]],
    )
