"""Independent brute-force references for the metric tests.

Nothing here imports the package's metric code: segment search is a linear
scan in plain Python, alignment uses Horn's quaternion method rather than an
SVD, and the sequence averages are explicit loops.
"""
import math

import numpy as np


def path_lengths(poses):
    out = [0.0]
    for a, b in zip(poses[:-1], poses[1:]):
        out.append(out[-1] + math.dist(a[:3, 3], b[:3, 3]))
    return out


def brute_segment_errors(gt, est, lengths):
    """List of (first, last, length, t_err, r_err_deg_per_unit)."""
    gt = [np.asarray(p, dtype=float) for p in gt]
    est = [np.asarray(p, dtype=float) for p in est]
    dist = path_lengths(gt)
    out = []
    for first in range(len(gt)):
        for length in lengths:
            last = None
            for j in range(first, len(gt)):
                if dist[j] >= dist[first] + length:
                    last = j
                    break
            if last is None:
                continue
            d_gt = np.linalg.solve(gt[first], gt[last])
            d_est = np.linalg.solve(est[first], est[last])
            err = np.linalg.solve(d_est, d_gt)
            t = math.sqrt(sum(err[i, 3] ** 2 for i in range(3)))
            # axis-angle: |skew part| = 2 sin(angle), trace - 1 = 2 cos(angle)
            s = math.hypot(err[2, 1] - err[1, 2], err[0, 2] - err[2, 0], err[1, 0] - err[0, 1])
            angle = math.atan2(s, err[0, 0] + err[1, 1] + err[2, 2] - 1.0)
            out.append((first, last, length, t / length, math.degrees(angle) / length))
    return out


def horn_alignment(source, target):
    """Rotation and translation aligning source onto target (Horn 1987)."""
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    ms, mt = source.mean(axis=0), target.mean(axis=0)
    s = (source - ms).T @ (target - mt)
    sxx, sxy, sxz = s[0]
    syx, syy, syz = s[1]
    szx, szy, szz = s[2]
    n = np.array([
        [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
        [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
        [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
        [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
    ])
    w, v = np.linalg.eigh(n)
    q0, qx, qy, qz = v[:, np.argmax(w)]
    r = np.array([
        [q0 * q0 + qx * qx - qy * qy - qz * qz, 2 * (qx * qy - q0 * qz), 2 * (qx * qz + q0 * qy)],
        [2 * (qy * qx + q0 * qz), q0 * q0 - qx * qx + qy * qy - qz * qz, 2 * (qy * qz - q0 * qx)],
        [2 * (qz * qx - q0 * qy), 2 * (qz * qy + q0 * qx), q0 * q0 - qx * qx - qy * qy + qz * qz],
    ])
    return r, mt - r @ ms


def horn_ate(gt_positions, est_positions):
    r, t = horn_alignment(est_positions, gt_positions)
    total = 0.0
    for e, g in zip(est_positions, gt_positions):
        d = r @ e + t - g
        total += float(d @ d)
    return math.sqrt(total / len(gt_positions))


def naive_rmse(per_sequence):
    t_seq, r_seq = [], []
    for seq in per_sequence:
        if not seq:
            continue
        t_seq.append(math.sqrt(sum(e[3] ** 2 for e in seq) / len(seq)))
        r_seq.append(math.sqrt(sum(e[4] ** 2 for e in seq) / len(seq)))
    return sum(t_seq) / len(t_seq), sum(r_seq) / len(r_seq)


def naive_rpe(per_sequence):
    pooled = [e for seq in per_sequence for e in seq]
    return (sum(abs(e[3]) for e in pooled) / len(pooled),
            sum(abs(e[4]) for e in pooled) / len(pooled))


def random_trajectory(rng, n, step=1.0, turn=0.05):
    """Camera-to-world poses of a wandering path with roughly ``step`` per frame."""
    poses = [np.eye(4)]
    for _ in range(n - 1):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(0, turn)
        k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
        rot = np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * k @ k
        step_t = np.array([0.0, 0.0, step]) + rng.normal(scale=0.1 * step, size=3)
        rel = np.eye(4)
        rel[:3, :3] = rot
        rel[:3, 3] = step_t
        poses.append(poses[-1] @ rel)
    return np.stack(poses)


def perturb_trajectory(rng, poses, sigma_t=0.02, sigma_r=0.002):
    """Drifting estimate: each relative motion gets a small random error."""
    out = [poses[0].copy()]
    for a, b in zip(poses[:-1], poses[1:]):
        rel = np.linalg.solve(a, b)
        angle = rng.normal(scale=sigma_r, size=3)
        kx = np.array([[0, -angle[2], angle[1]], [angle[2], 0, -angle[0]], [-angle[1], angle[0], 0]])
        noise = np.eye(4)
        u, _, vt = np.linalg.svd(np.eye(3) + kx)
        noise[:3, :3] = u @ vt
        noise[:3, 3] = rng.normal(scale=sigma_t, size=3)
        out.append(out[-1] @ rel @ noise)
    return np.stack(out)
