"""Pure-Python/numpy implementations of the simulation hot kernels.

These define the reference behaviour; ``_ckernels.pyx`` must match them
record for record.
"""

import numpy as np

# uniform columns drawn per decay
COL_SPACING = 0
COL_POSITRON = 1
COL_POSITION = 2
COL_CHANNEL = 3
COL_DECAY_DIR = 4
COL_ANN1 = 5
COL_ANN2 = 6
COL_ANN3 = 7
COL_DELAY = 8
COL_QM = 9
N_COLS = 10

KIND_DECAY = 0
KIND_SINGLET = 1
KIND_TRIPLET = 2

TRIPLET_SIN = 0.8660254037844386  # sin(120 deg)


def trace_decays(U, s, spread, L, R, f1, qm_fwhm, delay_mean, c_light,
                 positron_branch=0.9):
    """Find photons that reach a detector face.

    Returns ``(decay_index, detector, kind, offset_ps)`` arrays ordered by
    decay index then photon slot. ``detector`` is 0 for start, 1 for stop;
    ``offset_ps`` is emission delay plus axial flight time.
    """
    U = np.asarray(U, dtype=np.float64)
    n = U.shape[0]
    sp = s + spread * (U[:, COL_POSITION] - 0.5)
    dstop = L - sp
    cos_start = sp / np.sqrt(sp * sp + R * R)
    cos_stop = dstop / np.sqrt(dstop * dstop + R * R)
    positron = U[:, COL_POSITRON] < positron_branch
    singlet = U[:, COL_CHANNEL] < f1

    mu = np.empty((n, 4))
    mu[:, 0] = 2.0 * U[:, COL_DECAY_DIR] - 1.0
    mu[:, 1] = 2.0 * U[:, COL_ANN1] - 1.0
    # triplet: coplanar at 120 degrees, plane orientation uniform
    swing = TRIPLET_SIN * np.sqrt(1.0 - mu[:, 1] * mu[:, 1]) * np.cos(2.0 * np.pi * U[:, COL_ANN2])
    mu[:, 2] = np.where(singlet, -mu[:, 1], -0.5 * mu[:, 1] - swing)
    mu[:, 3] = -0.5 * mu[:, 1] + swing

    exists = np.empty((n, 4), dtype=bool)
    exists[:, 0] = True
    exists[:, 1] = positron
    exists[:, 2] = positron
    exists[:, 3] = positron & ~singlet

    hit_start = exists & (mu < -cos_start[:, None])
    hit_stop = exists & (mu > cos_stop[:, None])
    hit = hit_start | hit_stop

    if delay_mean > 0:
        t_ann = -delay_mean * np.log1p(-U[:, COL_DELAY])
    else:
        t_ann = np.zeros(n)
    emit = np.empty((n, 4))
    emit[:, 0] = 0.0
    emit[:, 1:] = t_ann[:, None]
    if qm_fwhm > 0:
        qm = 0.5 * qm_fwhm * np.tan(np.pi * (U[:, COL_QM] - 0.5))
        toward_stop = singlet[:, None] & (mu[:, 1:3] > 0)
        emit[:, 1:3] += np.where(toward_stop, qm[:, None], 0.0)

    flight = np.where(hit_stop, dstop[:, None], sp[:, None]) / c_light
    rows, slots = np.nonzero(hit)
    kind = np.where(slots == 0, KIND_DECAY,
                    np.where(singlet[rows], KIND_SINGLET, KIND_TRIPLET))
    return (
        rows.astype(np.int64),
        hit_stop[rows, slots].astype(np.int8),
        kind.astype(np.int8),
        (emit + flight)[rows, slots],
    )


def pair_triggers(times, is_stop, window):
    """Pair time-ordered start/stop triggers.

    A start arms the converter unless one is already armed and still inside
    its window; the next stop within ``window`` of the armed start closes
    the pair. Returns index arrays ``(start_idx, stop_idx)``.
    """
    starts, stops = [], []
    armed = -1
    t_armed = 0.0
    for k in range(len(times)):
        t = times[k]
        if is_stop[k]:
            if armed >= 0:
                if t - t_armed <= window:
                    starts.append(armed)
                    stops.append(k)
                armed = -1
        else:
            if armed >= 0 and t - t_armed <= window:
                continue
            armed = k
            t_armed = t
    return np.asarray(starts, dtype=np.int64), np.asarray(stops, dtype=np.int64)
