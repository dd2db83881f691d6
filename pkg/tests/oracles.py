"""Independent reference computations shared by the tests."""
import numpy as np


def flattened_min_eig(tensor):
    """Smallest eigenvalue of a minor-symmetric 4-tensor on symmetric matrices.

    Works on the plain (d*d, d*d) reshape instead of a Voigt basis: the
    antisymmetric eigenvectors (eigenvalue 0) are discarded by inspecting
    each eigenvector.
    """
    T = np.asarray(tensor)
    d = T.shape[-1]
    batch = T.shape[:-4]
    M = T.reshape(batch + (d * d, d * d))
    w, V = np.linalg.eigh(0.5 * (M + np.swapaxes(M, -1, -2)))
    Vm = V.reshape(batch + (d, d, d * d))
    antisym = np.linalg.norm(Vm - np.swapaxes(Vm, -3, -2), axis=(-3, -2))
    w = np.where(antisym < 0.5, w, np.inf)
    return w.min(axis=-1)


def loglog_slope(x, y):
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    xm, ym = x.mean(), y.mean()
    return float(((x - xm) * (y - ym)).sum() / ((x - xm) ** 2).sum())
