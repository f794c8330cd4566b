"""Single-layer rewrite of a linear layered reservoir.

With linear units the whole stack obeys one global recurrence
``x(t) = V x(t-1) + V_in u(t)`` on the concatenated state. The layered
wiring makes ``V`` lower block triangular:

    V[i, j] = 0                                          i < j
    V[i, i] = (1-a) I + a What_i
    V[i, j] = (a W_i ... a W_{j+1}) ((1-a) I + a What_j)  i > j

and the input column is ``V_in[1] = a W_in``,
``V_in[i] = (a W_i ... a W_2) a W_in`` for ``i > 1``. Products are ordered
with the highest layer index leftmost, the unique order consistent with
unrolling the layer updates within one time step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import UnsupportedConfigurationError
from .reservoir import (DeepReservoir, StateTrajectory, _as_input_matrix,
                        _readonly, effective_matrix, run)


@dataclass(frozen=True)
class FlatSystem:
    """Equivalent single-layer system: state matrix, input matrix, block dims."""

    v: np.ndarray
    v_in: np.ndarray
    block_dims: tuple[int, int, int]  # (num_layers, units_per_layer, input_dim)


@dataclass(frozen=True)
class EquivalenceReport:
    """Outcome of a layered-vs-flat trajectory comparison."""

    max_abs_diff: float
    passed: bool
    abs_tol: float
    per_step_diffs: np.ndarray

    @property
    def num_steps(self) -> int:
        return len(self.per_step_diffs)


def flatten(res: DeepReservoir) -> FlatSystem:
    """Assemble the equivalent flat system of a linear reservoir."""
    p = res.params
    if p.activation != "linear":
        raise UnsupportedConfigurationError(
            "the layered-to-flat rewrite only exists for linear activation"
        )
    n_l, n_r, a = p.num_layers, p.units_per_layer, p.leak_rate
    dim = n_l * n_r

    def blk(i):  # 1-based layer index -> row/col slice
        return slice((i - 1) * n_r, i * n_r)

    v = np.zeros((dim, dim))
    for j in range(1, n_l + 1):
        acc = effective_matrix(res.recurrent_weights[j - 1], a)
        v[blk(j), blk(j)] = acc
        for i in range(j + 1, n_l + 1):
            acc = (a * res.inter_layer_weights[i - 2]) @ acc
            v[blk(i), blk(j)] = acc

    v_in = np.zeros((dim, p.input_dim))
    col = a * res.input_weights
    v_in[blk(1)] = col
    for i in range(2, n_l + 1):
        col = (a * res.inter_layer_weights[i - 2]) @ col
        v_in[blk(i)] = col

    return FlatSystem(v=_readonly(v), v_in=_readonly(v_in), block_dims=(n_l, n_r, p.input_dim))


def run_flat(flat: FlatSystem, inputs) -> StateTrajectory:
    """Iterate the flat recurrence from the zero vector.

    The trajectory uses the same layer-partitioned layout as the layered
    runner, so entries are index-aligned for comparison.
    """
    n_l, n_r, n_u = flat.block_dims
    u = _as_input_matrix(inputs, n_u)
    x = np.zeros(n_l * n_r)
    out = np.empty((u.shape[0], n_l * n_r))
    for t in range(u.shape[0]):
        x = flat.v @ x + flat.v_in @ u[t]
        out[t] = x
    return StateTrajectory(states=_readonly(out.reshape(u.shape[0], n_l, n_r)))


def verify_equivalence(res: DeepReservoir, inputs, abs_tol: float) -> EquivalenceReport:
    """Run the layered and the flat system on the same inputs and compare.

    Passes iff the max over time and coordinates of the absolute difference
    stays within ``abs_tol``.
    """
    if not abs_tol > 0.0:
        raise ValueError("abs_tol must be positive")
    layered = run(res, inputs).concatenated
    flat = run_flat(flatten(res), inputs).concatenated
    diffs = np.max(np.abs(layered - flat), axis=1)
    max_diff = float(diffs.max())
    return EquivalenceReport(
        max_abs_diff=max_diff,
        passed=bool(max_diff <= abs_tol),
        abs_tol=float(abs_tol),
        per_step_diffs=_readonly(diffs),
    )
