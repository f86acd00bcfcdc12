import numpy as np
import pytest

from offcut.constraints import ConstraintRow, ConstraintSystem
from offcut.design import AffineExpr, ConstrainedPlankDesign, ParametricDesign, PlankSpec


def expr(const=0.0, **terms):
    """AffineExpr helper: expr(10, **{"0": 1.0}) = 10 + X[0]."""
    return AffineExpr(const, tuple((int(k), v) for k, v in terms.items()))


@pytest.fixture
def single_plank():
    """One free rectangular plank; X = (cx, cy, cz, lx, ly)."""
    return ConstrainedPlankDesign([PlankSpec(lx=100.0, ly=50.0)])


@pytest.fixture
def symmetric_table():
    """Two legs driven by one shared length parameter plus a free depth.

    X = (leg_len, depth); both legs are leg_len x depth.
    """
    leg = {
        "cx": expr(0.0),
        "cy": expr(0.0),
        "cz": expr(0.0),
        "lx": expr(0.0, **{"0": 1.0}),
        "ly": expr(0.0, **{"1": 1.0}),
    }
    leg2 = dict(leg)
    leg2["cx"] = expr(200.0)
    return ParametricDesign(
        parameter_names=["leg_len", "depth"],
        initial_values=[120.0, 40.0],
        part_exprs=[leg, leg2],
        length_params={0: 10.0, 1: 10.0},
    )


@pytest.fixture
def independent_pair():
    """Two planks with fully independent parameters."""
    return ConstrainedPlankDesign(
        [
            PlankSpec(center=(0, 0, 0), lx=80, ly=40),
            PlankSpec(center=(200, 0, 0), lx=60, ly=30),
        ]
    )


@pytest.fixture
def equal_length_system():
    """l1 = l2 over X = (c1, l1, c2, l2); lengths at indices 1 and 3."""
    return ConstraintSystem(
        nvars=4,
        rows=[ConstraintRow(((1, 1.0), (3, -1.0)), 0.0, "equal-length")],
        length_vars={1, 3},
        min_lengths={1: 10.0, 3: 10.0},
    )


def dense_lstsq_oracle(A, b):
    """Independent least-squares oracle via the pseudo-inverse."""
    return np.linalg.pinv(A) @ b
