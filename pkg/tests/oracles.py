"""Slow, loop-based reference implementations the vectorised code is checked against."""

import numpy as np


def bilinear(channel_map: np.ndarray, x: float, y: float) -> np.ndarray:
    """Bilinear value of a ``[H, W, D]`` map at ``(x, y)`` with border clamping."""
    height, width = channel_map.shape[:2]
    x = min(max(x, 0.0), width - 1.0)
    y = min(max(y, 0.0), height - 1.0)
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    x1, y1 = min(x0 + 1, width - 1), min(y0 + 1, height - 1)
    fx, fy = x - x0, y - y0
    return (
        channel_map[y0, x0] * (1 - fx) * (1 - fy)
        + channel_map[y0, x1] * fx * (1 - fy)
        + channel_map[y1, x0] * (1 - fx) * fy
        + channel_map[y1, x1] * fx * fy
    )


def deformable_attention(weights, offsets, values, reference, proj_weight=None, proj_bias=None):
    """Nested loops over queries, heads, frames and points."""
    queries, heads, frames, points = weights.shape
    _, _, _, channels = values.shape
    depth = channels // heads
    out = np.zeros((queries, channels))
    for q in range(queries):
        for m in range(heads):
            group = slice(m * depth, (m + 1) * depth)
            for t in range(frames):
                for k in range(points):
                    x = reference[q, 0] + offsets[q, m, t, k, 0]
                    y = reference[q, 1] + offsets[q, m, t, k, 1]
                    out[q, group] += weights[q, m, t, k] * bilinear(values[t, :, :, group], x, y)
    if proj_weight is None:
        return out
    return out @ proj_weight.T + proj_bias


def conv2d(x, w, b, stride=1, padding=0):
    n, cin, height, width = x.shape
    cout, _, kh, kw = w.shape
    padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    rows = (height + 2 * padding - kh) // stride + 1
    cols = (width + 2 * padding - kw) // stride + 1
    out = np.zeros((n, cout, rows, cols))
    for i in range(n):
        for o in range(cout):
            for r in range(rows):
                for c in range(cols):
                    patch = padded[i, :, r * stride : r * stride + kh, c * stride : c * stride + kw]
                    out[i, o, r, c] = (patch * w[o]).sum() + b[o]
    return out


def mse(a, b):
    total = 0.0
    flat_a, flat_b = a.reshape(len(a), -1), b.reshape(len(b), -1)
    for row in range(flat_a.shape[0]):
        for col in range(flat_a.shape[1]):
            total += (flat_a[row, col] - flat_b[row, col]) ** 2
    return total / a.size


def ssim(a, b, size=11, sigma=1.5):
    """Window-by-window SSIM with the full 2-D Gaussian."""
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    window = np.outer(g, g)
    window /= window.sum()
    c1, c2 = 0.01**2, 0.03**2
    scores = []
    for ch in range(a.shape[0]):
        for r in range(a.shape[1] - size + 1):
            for c in range(a.shape[2] - size + 1):
                pa = a[ch, r : r + size, c : c + size]
                pb = b[ch, r : r + size, c : c + size]
                mu_a, mu_b = (window * pa).sum(), (window * pb).sum()
                var_a = (window * pa * pa).sum() - mu_a**2
                var_b = (window * pb * pb).sum() - mu_b**2
                cov = (window * pa * pb).sum() - mu_a * mu_b
                scores.append(
                    ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
                )
    return float(np.mean(scores))
