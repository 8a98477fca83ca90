"""Hot loops of the network: batch forward pass, loss + gradient, and the
full-batch gradient-descent driver.

Every kernel exists twice: an explicit-loop version compiled with numba and a
vectorised numpy version. ``forward``, ``loss_grad`` and ``train`` dispatch to
whichever backend ``parkdur._accel`` selected. The two backends agree to
rounding error but not bit-for-bit (different summation order).
"""

import math

import numpy as np

from ._accel import JIT_OPTS, NUMBA, njit

SOFTMAX = 0
SIGMOID = 1

LOG_EPS = math.log(1e-12)

STATUS_MAX_ITER = 0
STATUS_CONVERGED = 1
STATUS_NONFINITE = 2


# --------------------------------------------------------------------------
# explicit-loop kernels (numba)
# --------------------------------------------------------------------------

def _loop_sigmoid(t):
    if t >= 0.0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


def _loop_forward(X, W1, b1, W2, b2, mode):
    n, d = X.shape
    h = W1.shape[0]
    c = W2.shape[0]
    P = np.empty((n, c))
    H = np.empty(h)
    a = np.empty(c)
    for i in range(n):
        for j in range(h):
            s = b1[j]
            for k in range(d):
                s += W1[j, k] * X[i, k]
            H[j] = _sigmoid(s)
        for m in range(c):
            s = b2[m]
            for j in range(h):
                s += W2[m, j] * H[j]
            a[m] = s
        if mode == SOFTMAX:
            mx = a[0]
            for m in range(1, c):
                if a[m] > mx:
                    mx = a[m]
            tot = 0.0
            for m in range(c):
                a[m] = math.exp(a[m] - mx)
                tot += a[m]
            for m in range(c):
                P[i, m] = a[m] / tot
        else:
            tot = 0.0
            for m in range(c):
                a[m] = _sigmoid(a[m])
                tot += a[m]
            for m in range(c):
                P[i, m] = a[m] / tot
    return P


def _loop_loss_grad(X, y, W1, b1, W2, b2, decay, mode, gW1, gb1, gW2, gb2):
    n, d = X.shape
    h = W1.shape[0]
    c = W2.shape[0]
    gW1[:, :] = 0.0
    gb1[:] = 0.0
    gW2[:, :] = 0.0
    gb2[:] = 0.0
    H = np.empty(h)
    a = np.empty(c)
    da = np.empty(c)
    loss = 0.0
    for i in range(n):
        for j in range(h):
            s = b1[j]
            for k in range(d):
                s += W1[j, k] * X[i, k]
            H[j] = _sigmoid(s)
        for m in range(c):
            s = b2[m]
            for j in range(h):
                s += W2[m, j] * H[j]
            a[m] = s
        yi = y[i]
        if mode == SOFTMAX:
            mx = a[0]
            for m in range(1, c):
                if a[m] > mx:
                    mx = a[m]
            tot = 0.0
            for m in range(c):
                tot += math.exp(a[m] - mx)
            lse = mx + math.log(tot)
            logp = a[yi] - lse
            if logp < LOG_EPS:
                logp = LOG_EPS
            loss -= logp
            for m in range(c):
                da[m] = math.exp(a[m] - lse)
            da[yi] -= 1.0
        else:
            for m in range(c):
                s = _sigmoid(a[m])
                r = s - (1.0 if m == yi else 0.0)
                loss += r * r
                da[m] = 2.0 * r * s * (1.0 - s)
        for m in range(c):
            gb2[m] += da[m]
            for j in range(h):
                gW2[m, j] += da[m] * H[j]
        for j in range(h):
            s = 0.0
            for m in range(c):
                s += da[m] * W2[m, j]
            s *= H[j] * (1.0 - H[j])
            gb1[j] += s
            for k in range(d):
                gW1[j, k] += s * X[i, k]
    inv = 1.0 / n
    loss *= inv
    pen = 0.0
    for j in range(h):
        gb1[j] *= inv
        for k in range(d):
            w = W1[j, k]
            pen += w * w
            gW1[j, k] = gW1[j, k] * inv + 2.0 * decay * w
    for m in range(c):
        gb2[m] *= inv
        for j in range(h):
            w = W2[m, j]
            pen += w * w
            gW2[m, j] = gW2[m, j] * inv + 2.0 * decay * w
    return loss + decay * pen


def _loop_max_abs(gW1, gb1, gW2, gb2):
    g = 0.0
    for v in gW1.ravel():
        if abs(v) > g:
            g = abs(v)
    for v in gb1:
        if abs(v) > g:
            g = abs(v)
    for v in gW2.ravel():
        if abs(v) > g:
            g = abs(v)
    for v in gb2:
        if abs(v) > g:
            g = abs(v)
    return g


def _loop_train(X, y, W1, b1, W2, b2, decay, lr, max_iter, tol, mode):
    W1 = W1.copy()
    b1 = b1.copy()
    W2 = W2.copy()
    b2 = b2.copy()
    gW1 = np.empty_like(W1)
    gb1 = np.empty_like(b1)
    gW2 = np.empty_like(W2)
    gb2 = np.empty_like(b2)
    init_loss = 0.0
    loss = 0.0
    status = STATUS_MAX_ITER
    it = 0
    while True:
        loss = _loss_grad(X, y, W1, b1, W2, b2, decay, mode, gW1, gb1, gW2, gb2)
        if it == 0:
            init_loss = loss
        if not math.isfinite(loss):
            status = STATUS_NONFINITE
            break
        if _max_abs(gW1, gb1, gW2, gb2) < tol:
            status = STATUS_CONVERGED
            break
        if it == max_iter:
            break
        W1 -= lr * gW1
        b1 -= lr * gb1
        W2 -= lr * gW2
        b2 -= lr * gb2
        it += 1
    return W1, b1, W2, b2, it, status, init_loss, loss


if NUMBA:
    _sigmoid = njit(**JIT_OPTS)(_loop_sigmoid)
    _loss_grad = njit(**JIT_OPTS)(_loop_loss_grad)
    _max_abs = njit(**JIT_OPTS)(_loop_max_abs)
    nb_forward = njit(**JIT_OPTS)(_loop_forward)
    nb_train = njit(**JIT_OPTS)(_loop_train)
else:
    _sigmoid = _loop_sigmoid
    _loss_grad = _loop_loss_grad
    _max_abs = _loop_max_abs
    nb_forward = None
    nb_train = None


# --------------------------------------------------------------------------
# vectorised kernels (numpy)
# --------------------------------------------------------------------------

def sigmoid(t):
    """Logistic function, overflow-free for any finite input."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def np_forward(X, W1, b1, W2, b2, mode):
    H = sigmoid(X @ W1.T + b1)
    A = H @ W2.T + b2
    if mode == SOFTMAX:
        A = A - A.max(axis=1, keepdims=True)
        E = np.exp(A)
    else:
        E = sigmoid(A)
    return E / E.sum(axis=1, keepdims=True)


def np_loss_grad(X, y, W1, b1, W2, b2, decay, mode):
    n = X.shape[0]
    rows = np.arange(n)
    H = sigmoid(X @ W1.T + b1)
    A = H @ W2.T + b2
    if mode == SOFTMAX:
        mx = A.max(axis=1, keepdims=True)
        lse = mx + np.log(np.exp(A - mx).sum(axis=1, keepdims=True))
        logP = A - lse
        loss = -np.maximum(logP[rows, y], LOG_EPS).sum() / n
        D = np.exp(logP)
        D[rows, y] -= 1.0
    else:
        S = sigmoid(A)
        R = S.copy()
        R[rows, y] -= 1.0
        loss = (R * R).sum() / n
        D = 2.0 * R * S * (1.0 - S)
    D /= n
    gW2 = D.T @ H + 2.0 * decay * W2
    gb2 = D.sum(axis=0)
    DH = (D @ W2) * H * (1.0 - H)
    gW1 = DH.T @ X + 2.0 * decay * W1
    gb1 = DH.sum(axis=0)
    loss += decay * ((W1 * W1).sum() + (W2 * W2).sum())
    return loss, gW1, gb1, gW2, gb2


def np_train(X, y, W1, b1, W2, b2, decay, lr, max_iter, tol, mode):
    W1, b1, W2, b2 = W1.copy(), b1.copy(), W2.copy(), b2.copy()
    init_loss = 0.0
    status = STATUS_MAX_ITER
    it = 0
    while True:
        loss, gW1, gb1, gW2, gb2 = np_loss_grad(X, y, W1, b1, W2, b2, decay, mode)
        if it == 0:
            init_loss = loss
        if not math.isfinite(loss):
            status = STATUS_NONFINITE
            break
        gmax = max(np.abs(gW1).max(), np.abs(gb1).max(),
                   np.abs(gW2).max(), np.abs(gb2).max())
        if gmax < tol:
            status = STATUS_CONVERGED
            break
        if it == max_iter:
            break
        W1 -= lr * gW1
        b1 -= lr * gb1
        W2 -= lr * gW2
        b2 -= lr * gb2
        it += 1
    return W1, b1, W2, b2, it, status, init_loss, loss


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

def _prep(X, y=None):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if y is None:
        return X
    return X, np.ascontiguousarray(y, dtype=np.int64)


def forward(X, W1, b1, W2, b2, mode=SOFTMAX):
    """Row-normalised output probabilities, shape (n, d_out)."""
    X = _prep(X)
    if NUMBA:
        return nb_forward(X, W1, b1, W2, b2, mode)
    return np_forward(X, W1, b1, W2, b2, mode)


def loss_grad(X, y, W1, b1, W2, b2, decay, mode=SOFTMAX):
    """Penalised loss and its gradient ``(loss, gW1, gb1, gW2, gb2)``."""
    X, y = _prep(X, y)
    if NUMBA:
        gW1, gb1 = np.empty_like(W1), np.empty_like(b1)
        gW2, gb2 = np.empty_like(W2), np.empty_like(b2)
        loss = _loss_grad(X, y, W1, b1, W2, b2, float(decay), mode, gW1, gb1, gW2, gb2)
        return loss, gW1, gb1, gW2, gb2
    return np_loss_grad(X, y, W1, b1, W2, b2, float(decay), mode)


def train(X, y, W1, b1, W2, b2, decay, lr, max_iter, tol, mode=SOFTMAX):
    """Full-batch gradient descent.

    Returns ``(W1, b1, W2, b2, n_updates, status, initial_loss, final_loss)``;
    the input arrays are not modified.
    """
    X, y = _prep(X, y)
    args = (X, y, W1, b1, W2, b2, float(decay), float(lr), int(max_iter), float(tol), mode)
    if NUMBA:
        return nb_train(*args)
    return np_train(*args)
