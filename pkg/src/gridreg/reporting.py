"""Run outputs: sample tables as CSV and run summaries as JSON.

Numbers are written with 17 significant digits so parsing the file back
reproduces every double exactly; two runs of the same scenario produce
byte-identical files.
"""

import json

import numpy as np

FLOAT_FORMAT = "%.17g"


def trajectory_columns(n, m):
    """Header of trajectory.csv for n areas and m lines, in file order."""
    cols = ["t"]
    cols += [f"omega_{i}" for i in range(1, n + 1)]
    cols += [f"V_{i}" for i in range(1, n + 1)]
    cols += [f"eta_{k}" for k in range(1, m + 1)]
    cols += [f"u_{i}" for i in range(1, n + 1)]
    cols += [f"Pl_{i}" for i in range(1, n + 1)]
    cols += [f"theta1_{i}" for i in range(1, n + 1)]
    cols += ["cost", "W1", "W2", "U", "Theta", "Z"]
    return cols


MONITOR_COLUMNS = (
    "t",
    "Z",
    "dZdt_analytic",
    "dZdt_central_diff",
    "damping_term",
    "voltage_grad_term",
    "consensus_term",
    "segment",
)


def _trajectory_matrix(traj):
    n = traj.omega.shape[1]
    m = traj.eta.shape[1]
    S = traj.t.shape[0]
    theta1 = traj.theta1 if traj.theta1.shape[1] == n else np.zeros((S, n))
    scalars = np.column_stack(
        [traj.cost, traj.W1, traj.W2, traj.U, traj.Theta, traj.Z]
    )
    return np.hstack(
        [
            traj.t[:, None],
            traj.omega,
            traj.V,
            traj.eta,
            traj.u,
            traj.Pl,
            theta1,
            scalars,
        ]
    )


def _write_table(path, header, data):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(FLOAT_FORMAT % v for v in row) + "\n")


def write_trajectory_csv(traj, path):
    """Write the recorded samples of a trajectory in the fixed column order."""
    n = traj.omega.shape[1]
    m = traj.eta.shape[1]
    _write_table(path, trajectory_columns(n, m), _trajectory_matrix(traj))


def central_diff_per_segment(t, z, segment):
    """Finite-difference dZ/dt, never differencing across an event boundary."""
    out = np.zeros_like(z)
    for s in np.unique(segment):
        idx = np.flatnonzero(segment == s)
        if idx.size >= 2:
            out[idx] = np.gradient(z[idx], t[idx])
    return out


def write_monitors_csv(traj, path):
    """Write the energy-decay monitor table for a trajectory."""
    diff = central_diff_per_segment(traj.t, traj.Z, traj.segment)
    data = np.column_stack(
        [
            traj.t,
            traj.Z,
            traj.dZ_analytic,
            diff,
            traj.damping_term,
            traj.voltage_grad_term,
            traj.consensus_term,
            traj.segment.astype(float),
        ]
    )
    _write_table(path, list(MONITOR_COLUMNS), data)


def read_trajectory_csv(path):
    """Read a trajectory table back as (header list, float matrix)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size and data.shape[1] != len(header):
        raise ValueError(f"{path}: row width does not match header")
    return header, data


def build_summary(traj):
    """Run summary as a JSON-ready dictionary."""
    ref = traj.references[-1]
    k = traj.n_samples - 1
    omega_dev = float(np.max(np.abs(traj.omega[k] - ref.equilibrium.omega_sync)))
    summary = {
        "scenario": traj.scenario.name,
        "backend": traj.backend,
        "status": traj.status,
        "samples": traj.n_samples,
        "final_time": traj.final_time,
        "final_omega_inf": omega_dev,
        "final_cost": float(traj.cost[k]),
        "convergence_time": traj.convergence_time,
        "notes": list(traj.notes),
    }
    if ref.dispatch is not None:
        summary["dispatch_cost"] = float(ref.dispatch.cost)
        summary["final_injection_gap_inf"] = float(
            np.max(np.abs(traj.u[k] - ref.exo.feedforward_at(traj.t[k], traj.scenario.cost)))
        )
    if traj.abort_time is not None:
        summary["abort_time"] = traj.abort_time
    return summary


def write_summary_json(traj, path):
    """Write the run summary next to the sample tables."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(build_summary(traj), fh, indent=2, sort_keys=True)
        fh.write("\n")
