"""Construction and simulation of layered (deep) echo state reservoirs.

A deep reservoir is a stack of fixed recurrent layers. At every time step the
first layer reads the external input; each higher layer reads the freshly
updated state of the layer below it. With leak rate ``a``, input matrix
``W_in``, inter-layer matrices ``W_i`` and recurrent matrices ``What_i`` the
update is

    x_1(t) = (1-a) x_1(t-1) + a f(W_in u(t)   + What_1 x_1(t-1))
    x_i(t) = (1-a) x_i(t-1) + a f(W_i x_{i-1}(t) + What_i x_i(t-1))    i > 1

with ``f`` the identity (linear units) or tanh (saturating units), and a zero
initial state everywhere.

Stability is imposed at construction time: every layer's effective matrix
``(1-a) I + a What_i`` is rescaled to have spectral radius exactly equal to
the configured target. Weight generation is fully deterministic in the seed,
with one RNG substream per matrix so that adding layers never perturbs the
matrices of earlier layers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .exceptions import DegenerateConfigurationError, UnscalableMatrixError

ACTIVATIONS = ("linear", "saturating")

# Substream tags: one family of SeedSequence spawn keys per matrix role.
_STREAM_INPUT = 0
_STREAM_INTER = 1
_STREAM_RECURRENT = 2

# Effective matrices with spectral radius below this cannot be rescaled.
MIN_SCALABLE_RADIUS = 1e-12
# Redraw budget per layer before giving up on an unscalable draw.
MAX_DRAW_ATTEMPTS = 10


@dataclass(frozen=True)
class HyperParams:
    """Reservoir hyperparameters, shared by all layers.

    ``leak_rate`` and ``spectral_radius_target`` are common to every layer;
    ``input_scale`` bounds the entries of the input and inter-layer matrices.
    """

    num_layers: int
    units_per_layer: int
    input_dim: int = 1
    input_scale: float = 1.0
    leak_rate: float = 1.0
    spectral_radius_target: float = 0.9
    activation: str = "linear"
    seed: int = 0

    def __post_init__(self):
        if self.num_layers < 1 or self.units_per_layer < 1 or self.input_dim < 1:
            raise ValueError("num_layers, units_per_layer and input_dim must be >= 1")
        if not 0.0 <= self.leak_rate <= 1.0:
            raise ValueError(f"leak_rate must lie in [0, 1], got {self.leak_rate}")
        if not self.spectral_radius_target > 0.0:
            raise ValueError("spectral_radius_target must be positive")
        if not self.input_scale >= 0.0:
            raise ValueError("input_scale must be nonnegative")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    @property
    def total_units(self) -> int:
        return self.num_layers * self.units_per_layer


@dataclass(frozen=True)
class DeepReservoir:
    """Fixed weights of a layered reservoir. Immutable after construction.

    ``inter_layer_weights[k]`` feeds layer ``k + 2`` from layer ``k + 1``
    (1-based layer numbering); ``recurrent_weights[k]`` is the recurrent
    matrix of layer ``k + 1``. All arrays are read-only views.
    """

    input_weights: np.ndarray
    inter_layer_weights: tuple[np.ndarray, ...]
    recurrent_weights: tuple[np.ndarray, ...]
    params: HyperParams


@dataclass(frozen=True)
class StateTrajectory:
    """Time-major record of layered states over a run.

    ``states`` has shape ``(steps, num_layers, units_per_layer)``; entry
    ``t`` holds the state after consuming input ``t``. ``concatenated``
    flattens the layer axis with layer 1 first, layer N_L last.
    """

    states: np.ndarray

    @property
    def num_steps(self) -> int:
        return self.states.shape[0]

    @property
    def concatenated(self) -> np.ndarray:
        t, n_layers, n_units = self.states.shape
        return self.states.reshape(t, n_layers * n_units)


def zero_state(params: HyperParams) -> np.ndarray:
    """Initial layered state: all zeros, shape (num_layers, units_per_layer)."""
    return np.zeros((params.num_layers, params.units_per_layer))


def effective_matrix(recurrent: np.ndarray, leak_rate: float) -> np.ndarray:
    """The matrix (1-a) I + a What driving a layer's autonomous dynamics."""
    n = recurrent.shape[0]
    return (1.0 - leak_rate) * np.eye(n) + leak_rate * recurrent


def spectral_radius(m: np.ndarray, rel_tol: float = 1e-10) -> float:
    """Largest eigenvalue magnitude of a square real matrix.

    Computed with a dense QR eigenvalue solver, which resolves complex
    conjugate dominant pairs and delivers accuracy near machine precision,
    well inside any reasonable ``rel_tol``. LAPACK's internal iteration cap
    applies; non-convergence surfaces as ``numpy.linalg.LinAlgError``.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError("matrix entries must be finite")
    if not rel_tol > 0.0:
        raise ValueError("rel_tol must be positive")
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def _substream(seed: int, spawn_key: tuple[int, ...]) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=spawn_key))


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@lru_cache(maxsize=256)
def _input_raw(seed: int, n_units: int, n_inputs: int) -> np.ndarray:
    """Unit-scale input weight draw, substream (0,)."""
    g = _substream(seed, (_STREAM_INPUT,))
    return _readonly(g.uniform(-1.0, 1.0, (n_units, n_inputs)))


@lru_cache(maxsize=256)
def _inter_raw(seed: int, layer: int, n_units: int) -> np.ndarray:
    """Unit-scale inter-layer weight draw for 1-based layer, substream (1, layer)."""
    g = _substream(seed, (_STREAM_INTER, layer))
    return _readonly(g.uniform(-1.0, 1.0, (n_units, n_units)))


@lru_cache(maxsize=256)
def _recurrent_base(seed: int, layer: int, n_units: int, attempt: int):
    """Recurrent base for a layer: unit-spectral-radius matrix plus eigenvalues.

    Draws uniform on [-1, 1] from substream (2, layer, attempt) and divides by
    the draw's spectral radius, so the base always has spectral radius 1 and
    the leak term keeps its intended weight in the effective matrix. Returns
    ``None`` when the raw draw itself is unscalable (radius ~ 0).

    Eigenvalues are cached alongside the matrix: the effective spectral
    radius for any leak rate follows from them without another dense solve.
    """
    g = _substream(seed, (_STREAM_RECURRENT, layer, attempt))
    raw = g.uniform(-1.0, 1.0, (n_units, n_units))
    eigvals = np.linalg.eigvals(raw)
    rho_raw = float(np.max(np.abs(eigvals)))
    if rho_raw < MIN_SCALABLE_RADIUS:
        return None
    base = raw / rho_raw
    return _readonly(base), _readonly(eigvals / rho_raw)


def _scaled_recurrent(seed: int, layer: int, n_units: int, leak_rate: float,
                      rho_target: float) -> np.ndarray:
    """Recurrent matrix whose effective matrix has spectral radius rho_target.

    Rescaling acts on the effective matrix: with M = (1-a) I + a base,
    the result is What = (M * rho_target / rho(M) - (1-a) I) / a. The
    spectral radius of M is evaluated from the cached base eigenvalues.
    """
    a = leak_rate
    for attempt in range(MAX_DRAW_ATTEMPTS):
        cached = _recurrent_base(seed, layer, n_units, attempt)
        if cached is None:
            continue
        base, base_eigvals = cached
        rho_eff = float(np.max(np.abs((1.0 - a) + a * base_eigvals)))
        if rho_eff < MIN_SCALABLE_RADIUS:
            continue
        eye = np.eye(n_units)
        m = (1.0 - a) * eye + a * base
        m_scaled = m * (rho_target / rho_eff)
        return (m_scaled - (1.0 - a) * eye) / a
    raise UnscalableMatrixError(
        f"layer {layer}: effective matrix spectral radius below "
        f"{MIN_SCALABLE_RADIUS} for {MAX_DRAW_ATTEMPTS} consecutive draws "
        f"(seed={seed}, leak_rate={leak_rate})"
    )


def init_reservoir(params: HyperParams) -> DeepReservoir:
    """Build a reservoir from hyperparameters. Deterministic in the seed.

    Input and inter-layer weights are i.i.d. uniform on
    [-input_scale, input_scale] (a unit-scale draw multiplied by the scale,
    so the substreams are scale-independent). Recurrent weights are drawn,
    normalized, and rescaled so that every layer's effective matrix has
    spectral radius exactly ``spectral_radius_target``. No bias terms.
    """
    if params.leak_rate == 0.0:
        raise DegenerateConfigurationError(
            "leak_rate = 0 makes the effective matrix the identity; "
            "spectral-radius rescaling is degenerate"
        )
    seed = int(params.seed)
    n = params.units_per_layer
    w_in = params.input_scale * _input_raw(seed, n, params.input_dim)
    inter = tuple(
        params.input_scale * _inter_raw(seed, layer, n)
        for layer in range(2, params.num_layers + 1)
    )
    recurrent = tuple(
        _scaled_recurrent(seed, layer, n, params.leak_rate,
                          params.spectral_radius_target)
        for layer in range(1, params.num_layers + 1)
    )
    return DeepReservoir(
        input_weights=_readonly(w_in),
        inter_layer_weights=tuple(_readonly(w) for w in inter),
        recurrent_weights=tuple(_readonly(w) for w in recurrent),
        params=params,
    )


def _apply_activation(pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "linear":
        return pre
    return np.tanh(pre)


def step(res: DeepReservoir, state: np.ndarray, input_vector: np.ndarray) -> np.ndarray:
    """Advance the layered state by one input.

    Layer 1 is driven by the external input; each layer ``i > 1`` is driven
    by the already-updated state of layer ``i - 1`` at the same time step.
    """
    p = res.params
    state = np.asarray(state, dtype=float)
    u = np.asarray(input_vector, dtype=float).reshape(-1)
    if state.shape != (p.num_layers, p.units_per_layer):
        raise ValueError(
            f"state must have shape {(p.num_layers, p.units_per_layer)}, got {state.shape}"
        )
    if u.shape != (p.input_dim,):
        raise ValueError(f"input must have {p.input_dim} components, got {u.shape}")
    a = p.leak_rate
    new = np.empty_like(state)
    pre = res.input_weights @ u + res.recurrent_weights[0] @ state[0]
    new[0] = (1.0 - a) * state[0] + a * _apply_activation(pre, p.activation)
    for i in range(1, p.num_layers):
        pre = res.inter_layer_weights[i - 1] @ new[i - 1] + res.recurrent_weights[i] @ state[i]
        new[i] = (1.0 - a) * state[i] + a * _apply_activation(pre, p.activation)
    return new


def _as_input_matrix(inputs, input_dim: int) -> np.ndarray:
    u = np.asarray(inputs, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if u.ndim != 2 or u.shape[1] != input_dim:
        raise ValueError(f"inputs must have shape (steps, {input_dim}), got {u.shape}")
    if u.shape[0] == 0:
        raise ValueError("input sequence must be nonempty")
    return u


def run(res: DeepReservoir, inputs) -> StateTrajectory:
    """Drive the reservoir from the zero state through an input sequence.

    ``inputs`` is ``(steps, input_dim)`` (a plain 1-D sequence is accepted
    for one-dimensional input). Step ``t`` of the trajectory is the state
    after consuming input ``t``.
    """
    p = res.params
    u = _as_input_matrix(inputs, p.input_dim)
    out = np.empty((u.shape[0], p.num_layers, p.units_per_layer))
    state = zero_state(p)
    for t in range(u.shape[0]):
        state = step(res, state, u[t])
        out[t] = state
    return StateTrajectory(states=_readonly(out))


def run_batch(reservoirs: Sequence[DeepReservoir], inputs) -> list[StateTrajectory]:
    """Run several same-shaped reservoirs over one input sequence.

    Stacks the per-layer weight matrices so each time step costs a handful
    of batched matrix products instead of one pass per reservoir. Results
    match per-reservoir ``run`` up to floating-point associativity.
    """
    if not reservoirs:
        return []
    p0 = reservoirs[0].params
    for r in reservoirs[1:]:
        q = r.params
        if (q.num_layers, q.units_per_layer, q.input_dim, q.activation) != (
                p0.num_layers, p0.units_per_layer, p0.input_dim, p0.activation):
            raise ValueError("all reservoirs in a batch must share shape and activation")
    u = _as_input_matrix(inputs, p0.input_dim)
    n_g, n_l, n_r = len(reservoirs), p0.num_layers, p0.units_per_layer
    w_in = np.stack([r.input_weights for r in reservoirs])            # (G, N_R, N_U)
    rec = [np.stack([r.recurrent_weights[i] for r in reservoirs]) for i in range(n_l)]
    inter = [np.stack([r.inter_layer_weights[i] for r in reservoirs]) for i in range(n_l - 1)]
    leak = np.array([r.params.leak_rate for r in reservoirs])[:, None]  # (G, 1)
    act = p0.activation

    out = np.empty((n_g, u.shape[0], n_l, n_r))
    states = [np.zeros((n_g, n_r)) for _ in range(n_l)]
    for t in range(u.shape[0]):
        drive = w_in @ u[t]                                           # (G, N_R)
        new_prev = None
        for i in range(n_l):
            pre = np.matmul(rec[i], states[i][:, :, None])[:, :, 0]
            pre += drive if i == 0 else np.matmul(inter[i - 1], new_prev[:, :, None])[:, :, 0]
            new_prev = (1.0 - leak) * states[i] + leak * _apply_activation(pre, act)
            states[i] = new_prev
            out[:, t, i, :] = new_prev
    return [StateTrajectory(states=_readonly(out[g])) for g in range(n_g)]


def dump_reservoir(res: DeepReservoir, path) -> None:
    """Debug dump of all weight matrices to an .npz archive (row-major).

    Layout is not a stable serialization format across versions.
    """
    arrays = {"input_weights": res.input_weights}
    for i, w in enumerate(res.inter_layer_weights):
        arrays[f"inter_layer_{i + 2}"] = w
    for i, w in enumerate(res.recurrent_weights):
        arrays[f"recurrent_{i + 1}"] = w
    p = res.params
    arrays["params"] = np.array([
        p.num_layers, p.units_per_layer, p.input_dim, p.input_scale,
        p.leak_rate, p.spectral_radius_target, float(ACTIVATIONS.index(p.activation)),
    ])
    arrays["seed"] = np.array(p.seed, dtype=np.uint64)
    np.savez(path, **arrays)
