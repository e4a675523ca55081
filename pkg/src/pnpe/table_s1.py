"""Published optimal settings per detection efficiency.

The ``t_b`` column is an amplitude coefficient of Bob's splitter: the power
transmittance used by the models is ``t_b ** 2`` (see :attr:`TableRow.transmittance`).
"""

from __future__ import annotations

from dataclasses import dataclass

from .analytic import MeasurementSettings, SourceParams

__all__ = ["TableRow", "ROWS", "row_for_eta", "nearest_rows"]


@dataclass(frozen=True)
class TableRow:
    eta_D: float
    t_b: float
    g: float
    alpha1: float
    alpha2: float
    beta1: float
    beta2: float
    S: float

    @property
    def transmittance(self) -> float:
        return self.t_b**2

    def source(self, **kw) -> SourceParams:
        return SourceParams(g=self.g, t_b=self.transmittance, **kw)

    def settings(self) -> MeasurementSettings:
        return MeasurementSettings(self.alpha1, self.alpha2, self.beta1, self.beta2)


ROWS: tuple[TableRow, ...] = (
    TableRow(0.65, 0.999, 0.090, 0.000, -0.013, 0.000, 0.013, 2.000000),
    TableRow(0.67, 0.945, 0.048, 0.001, -0.128, -0.001, 0.128, 2.000002),
    TableRow(0.68, 0.905, 0.132, 0.010, -0.241, -0.010, 0.241, 2.000133),
    TableRow(0.70, 0.823, 0.226, 0.035, -0.364, -0.035, 0.364, 2.002067),
    TableRow(0.75, 0.614, 0.279, 0.097, -0.501, -0.097, 0.501, 2.027202),
    TableRow(0.80, 0.181, 0.094, 0.139, -0.554, -0.139, 0.554, 2.088839),
    TableRow(0.85, 0.435, 0.320, 0.162, -0.574, -0.162, 0.574, 2.186472),
    TableRow(0.90, 0.414, 0.364, 0.172, -0.579, -0.172, 0.579, 2.318223),
    TableRow(0.95, 0.296, 0.284, 0.172, -0.573, -0.172, 0.573, 2.483976),
    TableRow(1.00, 0.280, 0.300, 0.165, -0.560, -0.165, 0.560, 2.685871),
)


def row_for_eta(eta_D: float, tol: float = 1e-9) -> TableRow:
    for row in ROWS:
        if abs(row.eta_D - eta_D) <= tol:
            return row
    raise KeyError(f"no tabulated row at eta_D = {eta_D}")


def nearest_rows(eta_D: float, k: int = 3) -> list[TableRow]:
    """The ``k`` rows closest in detection efficiency (ties broken by table order)."""
    return sorted(ROWS, key=lambda r: abs(r.eta_D - eta_D))[:k]
