"""Materialize encoder/decoder linear maps and compute deviation statistics.

E and D are built from weight matrices only: biases and activations are
excluded, residual blocks contribute their full linear part (W2.W1 + I).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConstructionError, DegenerateRowError, DimensionError
from .layers import (BiasLayer, Conv, ConvTransposed, InstanceNorm, InvLeakyReLU,
                     InvResBlock, LeakyReLU, Linear, Network, ResBlock, Stack,
                     Tanh, TiedConv, TiedLinear)


@dataclass
class DeviationStats:
    mse_total: float
    mse_diag: float
    mse_offdiag: float
    ratio_offdiag_over_diag: float

    def as_rows(self):
        return [("mse_total", self.mse_total),
                ("mse_diag", self.mse_diag),
                ("mse_offdiag", self.mse_offdiag),
                ("ratio_offdiag_over_diag", self.ratio_offdiag_over_diag)]


@dataclass
class RowStats:
    cosine_mean: float
    cosine_std: float
    norm_mean: float
    norm_std: float
    cosine_histogram: np.ndarray  # 100 bin counts over [-1, 1]


HIST_BINS = 100


def toeplitz_of_conv(kernel: np.ndarray, stride: int, pad: int, in_shape) -> np.ndarray:
    """Matrix T with conv2d(x) == T @ vec(x), built by column probing.

    vec() is the row-major flattening of (C, H, W).
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    c, h, w = in_shape
    n_in = c * h * w
    kt = T.Tensor(kernel)
    cols = []
    # probe basis vectors in chunks to bound peak memory
    for start in range(0, n_in, 512):
        stop = min(start + 512, n_in)
        basis = np.zeros((stop - start, n_in))
        basis[np.arange(stop - start), np.arange(start, stop)] = 1.0
        out = T.conv2d(T.Tensor(basis.reshape(-1, c, h, w)), kt, stride, pad).data
        cols.append(out.reshape(stop - start, -1))
    return np.concatenate(cols).T.copy()


def toeplitz_of_conv_direct(kernel: np.ndarray, stride: int, pad: int, in_shape) -> np.ndarray:
    """Index-arithmetic constructor of the same Toeplitz matrix; must agree
    with the probing construction."""
    kernel = np.asarray(kernel, dtype=np.float64)
    co, ci, k, _ = kernel.shape
    c, h, w = in_shape
    if ci != c:
        raise DimensionError(f"kernel {kernel.shape} vs input shape {in_shape}")
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    mat = np.zeros((co * ho * wo, c * h * w))
    for o in range(co):
        for oy in range(ho):
            for ox in range(wo):
                row = (o * ho + oy) * wo + ox
                for ic in range(ci):
                    for ky in range(k):
                        iy = oy * stride + ky - pad
                        if not 0 <= iy < h:
                            continue
                        for kx in range(k):
                            ix = ox * stride + kx - pad
                            if not 0 <= ix < w:
                                continue
                            mat[row, (ic * h + iy) * w + ix] = kernel[o, ic, ky, kx]
    return mat


_SKIPPED = (BiasLayer, InvLeakyReLU, LeakyReLU, Tanh, InstanceNorm)


def _layer_matrix(layer, in_shape):
    """Encoder-role matrix of one layer plus its output shape; None when the
    layer has no linear part (bias, activation, normalization)."""
    if isinstance(layer, _SKIPPED):
        return None, in_shape
    if isinstance(layer, (TiedLinear, Linear)):
        mat = np.asarray(layer.W.data, dtype=np.float64)
        return mat, (mat.shape[0],)
    if isinstance(layer, (TiedConv, Conv)):
        mat = toeplitz_of_conv(layer.kernel.data, layer.stride, layer.pad, in_shape)
        k = layer.kernel.shape[-1]
        ho = (in_shape[1] + 2 * layer.pad - k) // layer.stride + 1
        wo = (in_shape[2] + 2 * layer.pad - k) // layer.stride + 1
        return mat, (layer.kernel.shape[0], ho, wo)
    if isinstance(layer, ConvTransposed):
        hw = layer.out_hw
        if hw is None:
            k = layer.kernel.shape[-1]
            hw = tuple((n - 1) * layer.stride - 2 * layer.pad + k for n in in_shape[1:])
        fwd_in = (layer.kernel.shape[1],) + tuple(hw)
        mat = toeplitz_of_conv(layer.kernel.data, layer.stride, layer.pad, fwd_in).T
        return np.ascontiguousarray(mat), fwd_in
    if isinstance(layer, (InvResBlock, ResBlock)):
        t1 = toeplitz_of_conv(layer.W1.data, 1, layer.pad1, in_shape)
        t2 = toeplitz_of_conv(layer.W2.data, 1, layer.pad2, in_shape)
        return t2.T @ t1 + np.eye(t1.shape[1]), in_shape
    raise ConstructionError(f"cannot linearize layer {type(layer).__name__}")


def materialize_stack(stack: Stack, in_shape) -> np.ndarray:
    """Product of the per-layer matrices in application order."""
    in_shape = tuple(np.atleast_1d(in_shape))
    prod = None
    shape = in_shape
    for layer in stack.layers:
        mat, shape = _layer_matrix(layer, shape)
        if mat is None:
            continue
        prod = mat if prod is None else mat @ prod
    if prod is None:
        prod = np.eye(int(np.prod(in_shape)))
    return prod


def materialize_encoder(net: Network, input_shape) -> np.ndarray:
    return materialize_stack(net.encoder, input_shape)


def materialize_decoder(net: Network, input_shape) -> np.ndarray:
    """Materialize the decoder's linear part.

    input_shape is the ENCODER's input shape. For a tied decoder every layer
    matrix is the exact transpose of its encoder counterpart, so the product
    is computed through the transpose identity (A1^T...Am^T = (Am...A1)^T);
    this keeps the tying bit-exact, which independent gemm calls do not.
    """
    if net.tied:
        return materialize_stack(net.encoder, input_shape).T.copy()
    shape = tuple(np.atleast_1d(input_shape))
    for layer in net.encoder.layers:
        _, shape = _layer_matrix(layer, shape)
    return materialize_stack(net.decoder, shape)


def identity_deviation(E: np.ndarray, D: np.ndarray) -> DeviationStats:
    """Statistics of DE - I (and the diagonal/off-diagonal split of DE)."""
    if D.shape[1] != E.shape[0] or D.shape[0] != E.shape[1]:
        raise DimensionError(f"D{D.shape} E{E.shape} do not compose to a square map")
    de = D @ E
    n = de.shape[0]
    dev = de - np.eye(n)
    diag_de = np.diag(de)
    off_mask = ~np.eye(n, dtype=bool)
    mse_total = float(np.mean(dev ** 2))
    mse_diag = float(np.mean(np.diag(dev) ** 2))
    mse_offdiag = float(np.mean(dev[off_mask] ** 2)) if n > 1 else 0.0
    mse_diag_de = float(np.mean(diag_de ** 2))
    ratio = mse_offdiag / mse_diag_de if mse_diag_de > 0 else 0.0
    return DeviationStats(mse_total, mse_diag, mse_offdiag, ratio)


def row_cosine_stats(E: np.ndarray, bins: int = HIST_BINS):
    """Mean/std/histogram of cosine similarity over all distinct row pairs."""
    if E.shape[0] < 2:
        raise DimensionError("need at least 2 rows for pairwise cosines")
    norms = np.linalg.norm(E, axis=1)
    zero = np.nonzero(norms == 0)[0]
    if zero.size:
        raise DegenerateRowError(zero.tolist())
    unit = E / norms[:, None]
    gram = unit @ unit.T
    iu = np.triu_indices(E.shape[0], k=1)
    cos = np.clip(gram[iu], -1.0, 1.0)
    hist, _ = np.histogram(cos, bins=bins, range=(-1.0, 1.0))
    return float(cos.mean()), float(cos.std()), hist


def row_norm_stats(E: np.ndarray):
    """Mean/std of the l2 norms of the rows of E."""
    norms = np.linalg.norm(E, axis=1)
    return float(norms.mean()), float(norms.std())


def row_stats(E: np.ndarray) -> RowStats:
    cmean, cstd, hist = row_cosine_stats(E)
    nmean, nstd = row_norm_stats(E)
    return RowStats(cmean, cstd, nmean, nstd, hist)


# -- exports -------------------------------------------------------------------


def export_heatmap(matrix: np.ndarray, path) -> None:
    """Write a min-max normalized binary PGM (P5, maxval 255) heatmap."""
    m = np.asarray(matrix, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise ValueError("heatmap requires finite entries")
    lo, hi = m.min(), m.max()
    pixels = np.zeros_like(m) if hi == lo else (m - lo) / (hi - lo) * 255.0
    pixels = np.round(pixels).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{m.shape[1]} {m.shape[0]}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def export_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def export_matrix_csv(matrix: np.ndarray, path) -> None:
    matrix = np.atleast_2d(matrix)
    header = [f"c{j}" for j in range(matrix.shape[1])]
    export_csv(path, header, [[repr(float(v)) for v in row] for row in matrix])


def export_stats_csv(stats: DeviationStats, path) -> None:
    export_csv(path, ["stat", "value"], stats.as_rows())


def export_histogram_csv(hist: np.ndarray, path, lo: float = -1.0, hi: float = 1.0) -> None:
    edges = np.linspace(lo, hi, len(hist) + 1)
    rows = [(edges[i], edges[i + 1], int(hist[i])) for i in range(len(hist))]
    export_csv(path, ["bin_left", "bin_right", "count"], rows)


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)  # header
        return np.array([[float(v) for v in row] for row in reader])
