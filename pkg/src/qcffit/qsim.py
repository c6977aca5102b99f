"""Dense state-vector simulator for the entangling ansatz behind the quantum regressors.

Circuit layout: a fixed angle-embedding block (one RY(feature_j) per qubit on
|0...0>), followed by L trainable layers.  Each layer applies a three-angle
rotation per qubit,

    Rot(a0, a1, a2) = RZ(a2) RY(a1) RZ(a0)    (a0 acts first),

then a ring of CNOTs with control q and target (q + r) mod n applied in qubit
order, where r is the entanglement range.  Readout is the exact Pauli-Z
expectation per qubit; no shot sampling anywhere.

Conventions fixed for the dense-matrix oracles: amplitudes are stored
little-endian, i.e. basis index i has qubit q in bit ((i >> q) & 1), so qubit 0
is the least significant bit.  All gradients use the exact parameter-shift rule
with shifts of +-pi/2, valid for every rotation angle including the embedding.

Batched entry points evolve many parameter sets at once; they are the same
arithmetic per element as the single-circuit path and exist purely so training
can push all shifted circuits of one gradient through numpy together.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ShapeError

SHIFT = np.pi / 2.0


@dataclass
class CircuitParams:
    """Trainable rotation angles for an n-qubit, L-layer entangling circuit."""

    thetas: np.ndarray            # shape (L, n, 3), radians
    entangle_range: int = 1

    def __post_init__(self):
        self.thetas = np.asarray(self.thetas, dtype=float)
        if self.thetas.ndim != 3 or self.thetas.shape[2] != 3:
            raise ShapeError(f"thetas must have shape (L, n, 3), got {self.thetas.shape}")
        n = self.n_qubits
        if n >= 2 and not 1 <= self.entangle_range <= n - 1:
            raise ShapeError(
                f"entangle_range must lie in [1, {n - 1}] for {n} qubits, "
                f"got {self.entangle_range}"
            )

    @property
    def n_layers(self) -> int:
        return self.thetas.shape[0]

    @property
    def n_qubits(self) -> int:
        return self.thetas.shape[1]

    @property
    def n_angles(self) -> int:
        return self.thetas.size

    def copy(self) -> "CircuitParams":
        return CircuitParams(self.thetas.copy(), self.entangle_range)


@lru_cache(maxsize=64)
def _cnot_ring_gather(n: int, r: int):
    """Gather indices implementing the sequential CNOT ring on basis states."""
    dim = 1 << n
    perm = np.empty(dim, dtype=np.intp)
    for idx in range(dim):
        b = idx
        for q in range(n):
            if (b >> q) & 1:
                b ^= 1 << ((q + r) % n)
        perm[idx] = b
    inv = np.empty(dim, dtype=np.intp)
    inv[perm] = np.arange(dim, dtype=np.intp)
    inv.setflags(write=False)
    return inv


@lru_cache(maxsize=32)
def _z_signs(n: int):
    """Sign table S with S[q, i] = +1 if bit q of i is 0 else -1."""
    idx = np.arange(1 << n)
    signs = 1.0 - 2.0 * ((idx[None, :] >> np.arange(n)[:, None]) & 1)
    signs.setflags(write=False)
    return signs


def _rot_matrices(angles: np.ndarray) -> np.ndarray:
    """ZYZ rotation matrices for angles (..., 3), first angle applied first.

    Phases are assembled from real trig (exp(i x) = cos x + i sin x); complex
    exp is several times slower and this sits on the training hot path.
    """
    a0, a1, a2 = angles[..., 0], angles[..., 1], angles[..., 2]
    half_sum, half_dif = 0.5 * (a0 + a2), 0.5 * (a0 - a2)
    c, s = np.cos(0.5 * a1), np.sin(0.5 * a1)
    cs_, ss_ = np.cos(half_sum), np.sin(half_sum)
    cd_, sd_ = np.cos(half_dif), np.sin(half_dif)
    out = np.empty(angles.shape[:-1] + (2, 2), dtype=complex)
    out[..., 0, 0] = (cs_ - 1j * ss_) * c
    out[..., 0, 1] = -(cd_ + 1j * sd_) * s
    out[..., 1, 0] = (cd_ - 1j * sd_) * s
    out[..., 1, 1] = (cs_ + 1j * ss_) * c
    return out


def _ry_matrices(angles: np.ndarray) -> np.ndarray:
    c, s = np.cos(angles / 2.0), np.sin(angles / 2.0)
    out = np.empty(angles.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def _apply_1q_batch(states: np.ndarray, mats: np.ndarray, qubit: int, n: int) -> np.ndarray:
    """Apply per-batch 2x2 matrices to one qubit of states (B, 2^n)."""
    b = states.shape[0]
    slow = 1 << (n - 1 - qubit)
    fast = 1 << qubit
    if fast == 1:
        # qubit in the last axis: right-multiply by the transposed gate
        x = states.reshape(b, slow, 2)
        out = np.matmul(x, mats.transpose(0, 2, 1))
    else:
        x = states.reshape(b, slow, 2, fast)
        out = np.matmul(mats[:, None], x)
    return out.reshape(b, 1 << n)


def angle_embed(features) -> np.ndarray:
    """Product state prepared by one RY(feature_q) per qubit on |0...0>."""
    return angle_embed_batch(np.asarray(features, dtype=float)[None, :])[0]


def angle_embed_batch(features: np.ndarray) -> np.ndarray:
    """Batched embedding; features shape (B, n) -> states (B, 2^n)."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2:
        raise ShapeError(f"features batch must be 2-d, got shape {features.shape}")
    if not np.all(np.isfinite(features)):
        raise ShapeError("features must be finite")
    b, n = features.shape
    # RY(x)|0> = (cos x/2, sin x/2); each new qubit joins on the slow axis so
    # qubit 0, added first, stays in the fastest (least significant) bit.
    state = np.ones((b, 1), dtype=complex)
    for q in range(n):
        single = np.stack(
            [np.cos(features[:, q] / 2.0), np.sin(features[:, q] / 2.0)], axis=1
        ).astype(complex)
        state = np.einsum("bi,bj->bij", single, state).reshape(b, -1)
    return state


def apply_sel_layer(state: np.ndarray, layer_thetas: np.ndarray, entangle_range: int) -> np.ndarray:
    """One entangling layer: per-qubit ZYZ rotations then the CNOT ring."""
    state = np.asarray(state, dtype=complex)
    layer_thetas = np.asarray(layer_thetas, dtype=float)
    n = _qubit_count(state.shape[-1])
    if layer_thetas.shape != (n, 3):
        raise ShapeError(f"layer_thetas must have shape ({n}, 3), got {layer_thetas.shape}")
    return _apply_sel_layer_batch(state[None, :], layer_thetas[None, :, :], entangle_range)[0]


def _apply_sel_layer_batch(states: np.ndarray, layer_thetas: np.ndarray,
                           entangle_range: int) -> np.ndarray:
    return _apply_layer_mats(states, _rot_matrices(layer_thetas), entangle_range)


def _kron_batched(hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
    """Batched Kronecker product; hi occupies the slower (higher) qubit bits."""
    b, dh = hi.shape[0], hi.shape[1]
    dl = lo.shape[1]
    return np.einsum("bij,bkl->bikjl", hi, lo).reshape(b, dh * dl, dh * dl)


def _apply_chunk(states: np.ndarray, mat: np.ndarray, q: int, size: int, n: int) -> np.ndarray:
    """Apply a 2^size x 2^size per-batch matrix to qubits [q, q+size)."""
    b = states.shape[0]
    d = 1 << size
    fast = 1 << q
    slow = 1 << (n - q - size)
    if fast == 1:
        x = states.reshape(b, slow, d)
        out = np.matmul(x, mat.transpose(0, 2, 1))
    else:
        x = states.reshape(b, slow, d, fast)
        out = np.matmul(mat[:, None], x)
    return out.reshape(b, 1 << n)


def _apply_layer_mats(states: np.ndarray, mats: np.ndarray, entangle_range: int) -> np.ndarray:
    """Rotation matrices mats (B, n, 2, 2) followed by the CNOT ring.

    Adjacent qubits are fused into chunks of up to three so most of the work
    runs as one batched matmul per chunk instead of one per qubit.
    """
    b, dim = states.shape
    n = _qubit_count(dim)
    q = 0
    while q < n:
        size = min(3, n - q)
        chunk = np.ascontiguousarray(mats[:, q])
        for j in range(q + 1, q + size):
            chunk = _kron_batched(mats[:, j], chunk)
        states = _apply_chunk(states, chunk, q, size, n)
        q += size
    if n >= 2:
        states = states.take(_cnot_ring_gather(n, entangle_range), axis=1)
    return states


def _qubit_count(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if 1 << n != dim:
        raise ShapeError(f"state length {dim} is not a power of two")
    return n


def z_expectations(state: np.ndarray) -> np.ndarray:
    """Exact Pauli-Z expectation per qubit; each value lies in [-1, 1]."""
    state = np.asarray(state, dtype=complex)
    n = _qubit_count(state.shape[-1])
    probs = state.real ** 2 + state.imag ** 2
    return probs @ _z_signs(n).T


def run_circuit(features, params: CircuitParams) -> np.ndarray:
    """Embed, apply all layers, read out the n Pauli-Z expectations."""
    features = np.asarray(features, dtype=float)
    if features.shape != (params.n_qubits,):
        raise ShapeError(
            f"expected {params.n_qubits} features, got shape {features.shape}"
        )
    z = run_circuit_batch(features[None, :], params.thetas[None], params.entangle_range)
    return z[0]


def run_circuit_batch(features: np.ndarray, thetas: np.ndarray, entangle_range: int) -> np.ndarray:
    """Evolve B circuits at once.

    features : (B, n) or (n,) shared across the batch
    thetas   : (B, L, n, 3)
    returns  : (B, n) Pauli-Z expectations
    """
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim != 4:
        raise ShapeError(f"thetas batch must be 4-d, got shape {thetas.shape}")
    b, n_layers, n, _ = thetas.shape
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = np.broadcast_to(features, (b, features.shape[0]))
    if features.shape != (b, n):
        raise ShapeError(f"features shape {features.shape} incompatible with thetas {thetas.shape}")
    states = angle_embed_batch(features)
    mats = _rot_matrices(thetas)  # (B, L, n, 2, 2) built in one pass
    for layer in range(n_layers):
        states = _apply_layer_mats(states, mats[:, layer], entangle_range)
    probs = states.real ** 2 + states.imag ** 2
    return probs @ _z_signs(n).T


def parameter_shift_grad(features, params: CircuitParams, k: int) -> np.ndarray:
    """Exact gradient of every z_j with respect to rotation angle k.

    k indexes the flattened (layer, qubit, axis) angle array; returns
    0.5 * [z(theta_k + pi/2) - z(theta_k - pi/2)] as an (n,) vector.
    """
    if not 0 <= k < params.n_angles:
        raise IndexError(f"angle index {k} out of range [0, {params.n_angles})")
    flat = params.thetas.reshape(-1)
    batch = np.tile(flat, (2, 1))
    batch[0, k] += SHIFT
    batch[1, k] -= SHIFT
    z = run_circuit_batch(
        np.asarray(features, dtype=float),
        batch.reshape(2, *params.thetas.shape),
        params.entangle_range,
    )
    return 0.5 * (z[0] - z[1])


def parameter_shift_jacobian(features, params: CircuitParams) -> np.ndarray:
    """Jacobian dz_j/dtheta_k, shape (P, n), from 2P shifted circuit runs."""
    p = params.n_angles
    if p == 0:
        return np.zeros((0, params.n_qubits))
    flat = params.thetas.reshape(-1)
    batch = np.tile(flat, (2 * p, 1))
    rows = np.arange(p)
    batch[2 * rows, rows] += SHIFT
    batch[2 * rows + 1, rows] -= SHIFT
    z = run_circuit_batch(
        np.asarray(features, dtype=float),
        batch.reshape(2 * p, *params.thetas.shape),
        params.entangle_range,
    )
    return 0.5 * (z[0::2] - z[1::2])


def embedding_shift_jacobian(features, params: CircuitParams) -> np.ndarray:
    """Jacobian dz_j/dfeature_i, shape (n, n); embedding RYs obey the shift rule."""
    features = np.asarray(features, dtype=float)
    n = params.n_qubits
    batch = np.tile(features, (2 * n, 1))
    rows = np.arange(n)
    batch[2 * rows, rows] += SHIFT
    batch[2 * rows + 1, rows] -= SHIFT
    thetas = np.broadcast_to(params.thetas, (2 * n, *params.thetas.shape))
    z = run_circuit_batch(batch, thetas, params.entangle_range)
    return 0.5 * (z[0::2] - z[1::2])


def circuit_gradients(features, params: CircuitParams):
    """(z, dz/dtheta (P, n), dz/dfeatures (n, n)) from one batched evolution."""
    features = np.asarray(features, dtype=float)
    n, p = params.n_qubits, params.n_angles
    flat = params.thetas.reshape(-1)
    b = 1 + 2 * p + 2 * n
    theta_batch = np.tile(flat, (b, 1))
    feat_batch = np.tile(features, (b, 1))
    rows = np.arange(p)
    theta_batch[1 + 2 * rows, rows] += SHIFT
    theta_batch[2 + 2 * rows, rows] -= SHIFT
    frows = np.arange(n)
    feat_batch[1 + 2 * p + 2 * frows, frows] += SHIFT
    feat_batch[2 + 2 * p + 2 * frows, frows] -= SHIFT
    z = run_circuit_batch(feat_batch, theta_batch.reshape(b, *params.thetas.shape),
                          params.entangle_range)
    z0 = z[0]
    jac_theta = 0.5 * (z[1:1 + 2 * p:2] - z[2:2 + 2 * p:2])
    tail = z[1 + 2 * p:]
    jac_feat = 0.5 * (tail[0::2] - tail[1::2])
    return z0, jac_theta, jac_feat
