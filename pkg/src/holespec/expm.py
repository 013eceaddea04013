"""
Batched matrix exponential for stacks of small generators.

Scaling-and-squaring with a degree-13 Pade approximant (Higham 2005).
The scaling exponent is picked per matrix so that each result depends only
on its own input, which keeps chunked/threaded evaluation bit-identical.
"""

import numpy as np

_THETA13 = 5.371920351148152
_B13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
)


def expm_batch(A):
    """exp(A) for ``A`` of shape (..., n, n)."""
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError(f"expected a stack of square matrices, got shape {A.shape}")
    batch_shape = A.shape[:-2]
    n = A.shape[-1]
    A = A.reshape((-1, n, n))
    if not np.all(np.isfinite(A)):
        raise FloatingPointError("matrix exponential input is not finite")

    norm1 = np.abs(A).sum(axis=1).max(axis=1)
    s = np.zeros(A.shape[0], dtype=int)
    big = norm1 > _THETA13
    s[big] = np.ceil(np.log2(norm1[big] / _THETA13)).astype(int)
    As = A / (2.0 ** s)[:, None, None]

    b = _B13
    ident = np.broadcast_to(np.eye(n), As.shape)
    A2 = As @ As
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = As @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
              + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    R = np.linalg.solve(V - U, V + U)

    for step in range(int(s.max(initial=0))):
        todo = s > step
        R[todo] = R[todo] @ R[todo]

    if not np.all(np.isfinite(R)):
        raise FloatingPointError("matrix exponential overflowed")
    return R.reshape(batch_shape + (n, n))
