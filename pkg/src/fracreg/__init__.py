"""Fractional calculus, modal fractional ODE solvers and spectral assembly for
time-fractional diffusion, with numerical audits of regularity estimates."""

from __future__ import annotations

__version__ = "0.1.0"
