"""Monte-Carlo reference values frozen into the test suite.

Independent of the package's own solvers: rigid fits use scipy's
``Rotation.align_vectors``, distance statistics use plain numpy. Run with

    python scripts/montecarlo_oracles.py

and copy the printed numbers into tests/oracles.py if the noise model changes.
"""

import math

import numpy as np
from scipy.spatial.transform import Rotation

PRISMS = np.array([(0.45, 0.0, 0.55), (-0.35, 0.40, 0.85), (-0.35, -0.40, 1.15)])
ANTENNAS = PRISMS + np.array([0.0, 0.0, 0.12])
PAIRS = ((0, 1), (0, 2), (1, 2))


def fit(src, dst):
    cs, cd = src.mean(0), dst.mean(0)
    rot, _ = Rotation.align_vectors(dst - cd, src - cs)
    R = rot.as_matrix()
    return R, cd - R @ cs


def pair_errors(calib, noisy):
    """noisy: (m, 3, 3) -> (m, 3) signed inter-distance errors."""
    ref = np.array([np.linalg.norm(calib[i] - calib[j]) for i, j in PAIRS])
    meas = np.stack([np.linalg.norm(noisy[:, i] - noisy[:, j], axis=1) for i, j in PAIRS], axis=1)
    return meas - ref


def gcp_calibration(rng, n=10, sigma=0.002, trials=1000):
    theta = 2 * math.pi * np.arange(n) / n
    gcp = np.column_stack([20 * np.cos(theta), 20 * np.sin(theta), 0.5 + 0.3 * np.sin(3 * theta)])
    R_true = Rotation.from_euler("z", 17, degrees=True).as_matrix()
    t_true = np.array([3.0, -2.0, 0.1])
    # frame b = frame a rotated and offset: p_a = R p_b + t
    pb = (gcp - t_true) @ R_true
    errs, rmses = [], []
    for _ in range(trials):
        a = gcp + rng.normal(0, sigma, gcp.shape)
        b = pb + rng.normal(0, sigma, gcp.shape)
        R, t = fit(b, a)
        errs.append(np.linalg.norm(t - t_true))
        rmses.append(np.sqrt(np.mean(np.sum((b @ R.T + t - a) ** 2, axis=1))))
    return np.median(errs), np.quantile(rmses, [0.005, 0.995])


def pose_noise(rng, sigma=0.003, trials=2000):
    R_true = Rotation.from_euler("z", 45, degrees=True).as_matrix()
    t_true = np.array([1.0, 1.0, 0.0])
    clean = PRISMS @ R_true.T + t_true
    terr, res = [], []
    for _ in range(trials):
        meas = clean + rng.normal(0, sigma, clean.shape)
        R, t = fit(PRISMS, meas)
        terr.append(np.linalg.norm(t - t_true))
        res.append(np.sqrt(np.mean(np.sum((PRISMS @ R.T + t - meas) ** 2, axis=1))))
    return np.median(terr), np.quantile(terr, 0.99), np.median(res), np.quantile(res, 0.99)


def distance_medians(rng, m=1_000_000):
    rts = PRISMS + rng.normal(0, 0.003, (m, 3, 3))
    sig = np.array([0.010, 0.010, 0.020])
    gnss = ANTENNAS + rng.normal(0, 1, (m, 3, 3)) * sig
    e_rts = pair_errors(PRISMS, rts)
    e_gnss = pair_errors(ANTENNAS, gnss)
    rts_b = PRISMS + rng.normal(0, 0.003, (m, 3, 3))
    gnss_b = ANTENNAS + rng.normal(0, 1, (m, 3, 3)) * sig
    d_rts = e_rts - pair_errors(PRISMS, rts_b)
    d_gnss = e_gnss - pair_errors(ANTENNAS, gnss_b)
    return tuple(float(np.median(np.abs(x))) for x in (e_rts, e_gnss, d_rts, d_gnss))


def main():
    rng = np.random.default_rng(20240601)
    med_t, rmse_band = gcp_calibration(rng)
    print(f"GCP 10-pt 2 mm: translation error median = {med_t:.6e} m")
    _, rmse12 = gcp_calibration(rng, n=12, sigma=0.002)
    print(f"GCP 12-pt 2 mm: rmse 99% band = [{rmse12[0]:.6e}, {rmse12[1]:.6e}] m")
    print("pose 3 mm: translation median / p99, residual median / p99 = "
          + ", ".join(f"{v:.6e}" for v in pose_noise(rng)))
    names = ("RTS inter-distance", "GNSS inter-distance", "RTS inter-experiment", "GNSS inter-experiment")
    for name, v in zip(names, distance_medians(rng)):
        print(f"{name} median |e| = {v:.6e} m")
    print(f"half-normal median (analytic) = {math.sqrt(2) * 0.4769362762044699:.6f}")


if __name__ == "__main__":
    main()
