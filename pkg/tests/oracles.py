"""Independent reference implementations used by several test modules."""

import math

import numpy as np


def riccati_lqr(A, B, Q, R, Qf, x0, T):
    """Finite-horizon discrete LQR for cost sum x'Qx + u'Ru + x_T'Qf x_T."""
    P = Qf
    gains = []
    for _ in range(T):
        K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        P = Q + A.T @ P @ (A - B @ K)
        gains.append(K)
    gains.reverse()
    X, U = [np.asarray(x0, float)], []
    for K in gains:
        U.append(-K @ X[-1])
        X.append(A @ X[-1] + B @ U[-1])
    return np.array(X), np.array(U)


def double_integrator(dt=0.1):
    A = np.array([[1.0, dt], [0.0, 1.0]])
    B = np.array([[0.5 * dt * dt], [dt]])
    return A, B, np.diag([1.0, 0.1]), np.array([[0.01]]), np.diag([10.0, 1.0])


def elementwise_rotation(roll, pitch, yaw):
    """R_W(yaw) R_V(pitch) R_U(roll) multiplied out by hand."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


def de_boor(t, ctrl, degree, knots):
    """de Boor's algorithm, evaluated independently of the basis functions."""
    ctrl = np.asarray(ctrl, float)
    n = len(ctrl)
    if t >= knots[n]:
        k = n - 1
    else:
        k = int(np.searchsorted(knots, t, side="right")) - 1
    d = [ctrl[j + k - degree].copy() for j in range(degree + 1)]
    for r in range(1, degree + 1):
        for j in range(degree, r - 1, -1):
            i = j + k - degree
            denom = knots[i + degree + 1 - r] - knots[i]
            a = 0.0 if denom == 0 else (t - knots[i]) / denom
            d[j] = (1.0 - a) * d[j - 1] + a * d[j]
    return d[degree]
