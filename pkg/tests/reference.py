"""Independent brute-force oracles used by the test suite.

Everything here is written as plainly as possible (explicit loops, no
shared code with the package) so test expectations are computed by a
second, independent route.
"""
import numpy as np
from scipy.stats import norm


def frame_energy_timedomain(frame_windowed):
    """Windowed-frame energy by direct summation."""
    total = 0.0
    for v in frame_windowed:
        total += float(v) * float(v)
    return total


def frame_energy_fullfft(frame_windowed, fft_size):
    """Spectral energy of one frame via the full (two-sided) DFT and Parseval."""
    spec = np.fft.fft(frame_windowed, n=fft_size)
    total = 0.0
    for v in spec:
        total += abs(v) ** 2
    return total / fft_size


def mel_apply_loops(mag, weights):
    """Triple-loop mel projection: out[f, m] = sum_k weights[m, k] * mag[f, k]."""
    n_frames, n_bins = mag.shape
    n_mels = weights.shape[0]
    out = np.zeros((n_frames, n_mels))
    for f in range(n_frames):
        for m in range(n_mels):
            acc = 0.0
            for k in range(n_bins):
                acc += weights[m, k] * mag[f, k]
            out[f, m] = acc
    return out


def cosine_seq_similarity_loops(a, b, tau):
    """Per-frame cosine similarity averaged over frames, scaled by 1/tau."""
    n = a.shape[0]
    total = 0.0
    for i in range(n):
        na = np.sqrt(float(np.dot(a[i], a[i])))
        nb = np.sqrt(float(np.dot(b[i], b[i])))
        total += float(np.dot(a[i], b[i])) / (tau * max(na, 1e-12) * max(nb, 1e-12))
    return total / n


def partition_loops(anchor_idx, members, tau):
    """H(z): sum of exp similarities to every member minus the self term."""
    z = members[anchor_idx]
    total = 0.0
    for m, other in enumerate(members):
        total += np.exp(cosine_seq_similarity_loops(z, other, tau))
    total -= np.exp(cosine_seq_similarity_loops(z, z, tau))
    return total


def contrastive_loss_loops(bona, spoof, tau):
    """Direct evaluation of the two-class contrastive feature loss."""
    members = list(bona) + list(spoof)
    labels = [1] * len(bona) + [0] * len(spoof)
    loss = 0.0
    for k, zk in enumerate(members):
        positives = [m for m in range(len(members)) if labels[m] == labels[k] and m != k]
        if not positives:
            continue
        h = partition_loops(k, members, tau)
        for p in positives:
            f_kp = cosine_seq_similarity_loops(zk, members[p], tau)
            loss += -np.log(np.exp(f_kp) / h) / len(positives)
    return loss


def eer_bruteforce(bona_scores, spoof_scores):
    """Exhaustive-threshold EER with linear interpolation at the crossing.

    Operating points: FRR(t) = P(bona < t), FAR(t) = P(spoof >= t) at every
    unique score, plus virtual endpoints (FRR 0, FAR 1) and (FRR 1, FAR 0).
    The EER is read at the first sign change of FRR - FAR, linearly
    interpolated between the bracketing points; an exact zero takes the
    lower threshold's operating point.
    """
    bona = list(bona_scores)
    spoof = list(spoof_scores)
    thresholds = sorted(set(bona) | set(spoof))
    points = [(0.0, 1.0)]
    for t in thresholds:
        frr = sum(1 for s in bona if s < t) / len(bona)
        far = sum(1 for s in spoof if s >= t) / len(spoof)
        points.append((frr, far))
    points.append((1.0, 0.0))
    for i in range(len(points)):
        frr, far = points[i]
        if frr - far == 0.0:
            return frr
        if frr - far > 0.0:
            pf, pa = points[i - 1]
            d1 = pf - pa
            d2 = frr - far
            alpha = -d1 / (d2 - d1)
            return pf + alpha * (frr - pf)
    return 0.5


def f0_autocorrelation_oracle(x, sample_rate, fmin=60.0, fmax=450.0):
    """Plain autocorrelation-peak F0 estimate with parabolic refinement."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    lag_lo = int(sample_rate / fmax)
    lag_hi = min(int(sample_rate / fmin), len(x) - 2)
    vals = {}
    best_val = -np.inf
    for lag in range(lag_lo, lag_hi + 1):
        v = float(np.dot(x[:-lag], x[lag:])) / (len(x) - lag)
        vals[lag] = v
        best_val = max(best_val, v)
    best_lag = min(lag for lag, v in vals.items() if v >= 0.95 * best_val)
    def ac(lag):
        return float(np.dot(x[:-lag], x[lag:]))
    lag = float(best_lag)
    if lag_lo < best_lag < lag_hi:
        y0, y1, y2 = ac(best_lag - 1), ac(best_lag), ac(best_lag + 1)
        denom = y0 - 2 * y1 + y2
        if abs(denom) > 1e-12:
            lag = best_lag + 0.5 * (y0 - y2) / denom
    return sample_rate / lag


def two_proportion_p_value(eer1, n1, eer2, n2):
    """Two-sided two-proportion z-test via scipy's normal CDF."""
    c1 = round(eer1 * n1)
    c2 = round(eer2 * n2)
    pooled = (c1 + c2) / (n1 + n2)
    if pooled <= 0.0 or pooled >= 1.0:
        return 1.0 if eer1 == eer2 else 0.0
    z = (eer1 - eer2) / np.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))
    return float(2.0 * (1.0 - norm.cdf(abs(z))))


def scalar_adam_oracle(x0, grad_fn, steps, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Plain-float Adam on a scalar; returns the iterate trajectory."""
    x = float(x0)
    m = 0.0
    v = 0.0
    traj = [x]
    for t in range(1, steps + 1):
        g = grad_fn(x)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        x = x - lr * m_hat / (v_hat**0.5 + eps)
        traj.append(x)
    return traj


def holm_bonferroni_manual(p_values, alpha):
    """Sequential step-down rejection, spelled out."""
    m = len(p_values)
    order = sorted(range(m), key=lambda i: p_values[i])
    reject = [False] * m
    for rank, idx in enumerate(order):
        threshold = alpha / (m - rank)
        if p_values[idx] <= threshold:
            reject[idx] = True
        else:
            break
    return reject
