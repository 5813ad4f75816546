"""Run artifacts: trajectory CSV, latent snapshots, summary, SVG plots.

File formats (frozen by golden-file tests):

- Trajectory CSV: one row per executed step, columns in this order:
  ``k,t,eta,gamma,raw_<fam>...,std_<fam>...,w_<fam>...,r_tot,norm_f,
  norm_g_reward,norm_g_kl`` with families in the trajectory's declared order.
  Floats are written with shortest round-trip ``repr``.
- Snapshots: little-endian binary. 8-byte magic ``RLSNAP01``, uint32 latent
  dim, uint32 stride, uint64 count, then count*dim float64 values.
- Summary: JSON document with the final output, run status and the full
  effective config echo.

All files are written atomically (temp + rename).
"""

import json
import os
import struct
import tempfile

import numpy as np

SNAPSHOT_MAGIC = b"RLSNAP01"


def _atomic_write(path, payload, mode="w"):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x):
    return repr(float(x))


def trajectory_csv_text(traj):
    fams = traj.families
    header = (["k", "t", "eta", "gamma"]
              + [f"raw_{f}" for f in fams] + [f"std_{f}" for f in fams]
              + [f"w_{f}" for f in fams]
              + ["r_tot", "norm_f", "norm_g_reward", "norm_g_kl"])
    lines = [",".join(header)]
    for i in range(traj.n_steps):
        row = [str(int(traj.k[i])), _fmt(traj.t[i]), _fmt(traj.eta[i]),
               _fmt(traj.gamma[i])]
        row += [_fmt(v) for v in traj.raw[i]]
        row += [_fmt(v) for v in traj.std[i]]
        row += [_fmt(v) for v in traj.weights[i]]
        row += [_fmt(traj.r_tot[i]), _fmt(traj.norm_f[i]),
                _fmt(traj.norm_g_reward[i]), _fmt(traj.norm_g_kl[i])]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def write_trajectory_csv(traj, path):
    _atomic_write(path, trajectory_csv_text(traj))


def write_snapshots(traj, path):
    snaps = traj.snapshots
    header = SNAPSHOT_MAGIC + struct.pack(
        "<IIQ", traj.latent_dim, max(traj.snapshot_stride, 0), snaps.shape[0])
    payload = header + snaps.astype("<f8").tobytes()
    _atomic_write(path, payload, mode="wb")


def read_snapshots(path):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: bad snapshot magic {magic!r}")
        dim, stride, count = struct.unpack("<IIQ", fh.read(16))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != dim * count:
        raise ValueError(f"{path}: truncated snapshot file")
    return data.reshape(count, dim), stride


def write_summary(path, image, traj, effective_config, extra=None):
    doc = {
        "final_image": [float(v) for v in image],
        "final_latent": [float(v) for v in getattr(traj, "final_latent", [])],
        "steps_executed": int(traj.n_steps),
        "diverged": bool(traj.diverged),
        "families": list(traj.families),
        "config": effective_config,
    }
    if extra:
        doc.update(extra)
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_plots(traj, out_dir):
    """Static SVG line charts: standardized rewards, weights, step size."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(out_dir, exist_ok=True)
    steps = np.arange(traj.n_steps)
    panels = [
        ("rewards.svg", traj.std, "standardized reward"),
        ("weights.svg", traj.weights, "policy weight"),
    ]
    for fname, mat, ylabel in panels:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for j, fam in enumerate(traj.families):
            ax.plot(steps, mat[:, j], label=fam)
        ax.set_xlabel("step")
        ax.set_ylabel(ylabel)
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, fname))
        plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(steps, traj.eta, label="eta")
    ax.plot(steps, traj.gamma, label="gamma")
    ax.set_xlabel("step")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "stepsize.svg"))
    plt.close(fig)
