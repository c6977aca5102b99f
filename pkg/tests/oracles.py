"""Shared dense-matrix oracle: every gate as a full 2^n x 2^n Kronecker matrix."""

import numpy as np


def rz(a):
    return np.array([[np.exp(-0.5j * a), 0], [0, np.exp(0.5j * a)]])


def ry(a):
    return np.array([[np.cos(a / 2), -np.sin(a / 2)], [np.sin(a / 2), np.cos(a / 2)]])


def rot(a0, a1, a2):
    return rz(a2) @ ry(a1) @ rz(a0)


def full_1q(gate, qubit, n):
    mats = [np.eye(2)] * n
    mats[n - 1 - qubit] = gate  # little-endian: qubit 0 is the fastest bit
    full = mats[0]
    for m in mats[1:]:
        full = np.kron(full, m)
    return full


def full_cnot(control, target, n):
    dim = 1 << n
    full = np.zeros((dim, dim))
    for col in range(dim):
        row = col ^ (1 << target) if (col >> control) & 1 else col
        full[row, col] = 1.0
    return full


def circuit_unitary(thetas, entangle_range, n):
    dim = 1 << n
    u = np.eye(dim, dtype=complex)
    for layer in thetas:
        for q in range(n):
            u = full_1q(rot(*layer[q]), q, n) @ u
        if n >= 2:
            for q in range(n):
                u = full_cnot(q, (q + entangle_range) % n, n) @ u
    return u


def circuit_z(features, thetas, entangle_range):
    n = len(features)
    state = np.zeros(1 << n, dtype=complex)
    state[0] = 1.0
    for q in range(n):
        state = full_1q(ry(features[q]), q, n) @ state
    state = circuit_unitary(thetas, entangle_range, n) @ state
    out = np.empty(n)
    for q in range(n):
        zq = full_1q(np.diag([1.0, -1.0]), q, n)
        out[q] = np.real(np.conj(state) @ (zq @ state))
    return out
