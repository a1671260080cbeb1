"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def sqe_gram(points, q, jitter):
    points = np.ascontiguousarray(points, dtype=float)
    q = np.ascontiguousarray(q, dtype=float)
    if q.shape[0] != points.shape[1]:
        raise ValueError(
            f"points have dimension {points.shape[1]} but q has length {q.shape[0]}"
        )
    diff = points[:, None, :] - points[None, :, :]
    out = np.exp(-np.einsum("ijl,l->ij", diff * diff, q))
    out[np.diag_indices_from(out)] = 1.0 + jitter
    return out


def gaussian_kde_eval(samples, grid, bandwidth, chunk=2048):
    samples = np.asarray(samples, dtype=float)
    grid = np.asarray(grid, dtype=float)
    out = np.zeros(grid.shape[0])
    for start in range(0, samples.shape[0], chunk):
        z = (grid[:, None] - samples[None, start:start + chunk]) / bandwidth
        out += np.exp(-0.5 * z * z).sum(axis=1)
    return out / (samples.shape[0] * bandwidth * np.sqrt(2.0 * np.pi))
