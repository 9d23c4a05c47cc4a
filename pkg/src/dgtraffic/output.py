"""Writing run results to disk: CSV tables, plot-ready data files, figures.

Files produced in the output directory:

    snapshots.csv        time,road,x,rho       (only if snapshots were requested)
    mass.csv             time,total_mass,boundary_in,boundary_out
    junction_diag.csv    time,junction,series,value
    road<id>_t<time>.dat two space-separated columns x rho, one per snapshot and road
    *.png                figures, unless disabled or no snapshots were taken

Density is sampled at both endpoints of every element plus 5 equally spaced
interior points, so element interfaces appear twice (left and right trace).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
import numpy as np

from .dg import DGField, Mesh
from .simulation import ResultBundle

SNAPSHOT_HEADER = ("time", "road", "x", "rho")
MASS_HEADER = ("time", "total_mass", "boundary_in", "boundary_out")
JUNCTION_HEADER = ("time", "junction", "series", "value")

# reference positions: endpoints plus 5 interior points
SAMPLE_XI = np.linspace(-1.0, 1.0, 7)


class OutputError(OSError):
    pass


@dataclass
class OutputPlan:
    directory: Path
    figures: bool = True
    # time series are thinned to at most this many rows per series (first and last kept)
    max_series_rows: int = 2000


@dataclass
class SnapshotRecord:
    time: float
    road: int
    x: np.ndarray
    rho: np.ndarray
    means: np.ndarray

    @classmethod
    def from_field(cls, time: float, road: int, field: DGField, mesh: Mesh) -> "SnapshotRecord":
        rho = field.coefficients @ _legendre_at(field.degree, SAMPLE_XI)  # (n_elements, 7)
        x = mesh.centers[:, None] + 0.5 * mesh.widths[:, None] * SAMPLE_XI[None, :]
        return cls(time, road, x.ravel(), rho.ravel(), field.means.copy())


def _legendre_at(p: int, xi: np.ndarray) -> np.ndarray:
    """(p + 1, len(xi)) table of P_k(xi)."""
    return np.polynomial.legendre.legvander(xi, p).T


def sample_stride(n_rows: int, max_rows: int) -> np.ndarray:
    """Indices 0..n_rows-1 thinned to about max_rows, always keeping the last."""
    if n_rows <= 0:
        return np.zeros(0, dtype=int)
    stride = max(1, math.ceil(n_rows / max(1, max_rows)))
    idx = np.arange(0, n_rows, stride)
    if idx[-1] != n_rows - 1:
        idx = np.append(idx, n_rows - 1)
    return idx


def snapshot_records(bundle: ResultBundle) -> list[SnapshotRecord]:
    out, seen = [], set()
    for snap in bundle.snapshots:
        if snap.step in seen:
            continue
        seen.add(snap.step)
        for rid, fld in snap.fields.items():
            out.append(SnapshotRecord.from_field(snap.time, rid, fld, bundle.meshes[rid]))
    return out


def _open(path: Path):
    try:
        return open(path, "w", newline="", encoding="utf-8")
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e.strerror}") from None


def _fmt(x: float) -> str:
    return repr(float(x))


def write_snapshots_csv(records: list[SnapshotRecord], path: Path):
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(SNAPSHOT_HEADER)
        for r in records:
            t = _fmt(r.time)
            w.writerows((t, r.road, _fmt(x), _fmt(v)) for x, v in zip(r.x, r.rho))


def write_mass_csv(bundle: ResultBundle, path: Path, max_rows: int = 2000):
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(MASS_HEADER)
        for k in sample_stride(len(bundle.times), max_rows):
            w.writerow((_fmt(bundle.times[k]), _fmt(bundle.total_mass[k]),
                        _fmt(bundle.inflow[k]), _fmt(bundle.outflow[k])))


def junction_series(bundle: ResultBundle) -> dict[int, dict[str, np.ndarray]]:
    """Per junction: H_in:<road>, H_out:<road> and E:<road> series over steps."""
    out = {}
    for j in bundle.network.junctions:
        rec = bundle.junctions[j.id]
        series = {}
        for col, rid in enumerate(j.incoming):
            series[f"H_in:{rid}"] = rec.incoming[:, col]
        for col, rid in enumerate(j.outgoing):
            series[f"H_out:{rid}"] = rec.outgoing[:, col]
        for col, rid in enumerate(j.outgoing):
            series[f"E:{rid}"] = rec.error[:, col]
        out[j.id] = series
    return out


def write_junction_csv(bundle: ResultBundle, path: Path, max_rows: int = 2000):
    tau = bundle.cfg.tau
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(JUNCTION_HEADER)
        idx = sample_stride(bundle.steps_done, max_rows)
        for jid, series in junction_series(bundle).items():
            for k in idx:
                t = _fmt(k * tau)
                for name, values in series.items():
                    w.writerow((t, jid, name, _fmt(values[k])))


def dat_name(road: int, time: float) -> str:
    return f"road{road}_t{time:.6f}.dat"


def write_dat_files(records: list[SnapshotRecord], directory: Path) -> list[Path]:
    paths = []
    for r in records:
        path = directory / dat_name(r.road, r.time)
        try:
            np.savetxt(path, np.column_stack([r.x, r.rho]), fmt="%.12g",
                       header=f"road {r.road} t = {r.time:g}\nx rho")
        except OSError as e:
            raise OutputError(f"cannot write {path}: {e.strerror}") from None
        paths.append(path)
    return paths


def render_figures(bundle: ResultBundle, records: list[SnapshotRecord], directory: Path) -> list[Path]:
    """PNG figures: density per road over the snapshots, mass, junction fluxes."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    by_road: dict[int, list[SnapshotRecord]] = {}
    for r in records:
        by_road.setdefault(r.road, []).append(r)
    for rid, recs in sorted(by_road.items()):
        fig, ax = plt.subplots(figsize=(7, 3.5))
        cmap = plt.get_cmap("viridis")
        for i, r in enumerate(recs):
            ax.plot(r.x, r.rho, lw=1.0, color=cmap(i / max(1, len(recs) - 1)), label=f"t = {r.time:g}")
        road = bundle.network.road(rid)
        ax.set_xlim(road.a, road.b)
        ax.set_xlabel("x")
        ax.set_ylabel("density")
        ax.set_title(f"road {rid}")
        if len(recs) <= 12:
            ax.legend(fontsize=7, ncol=2)
        paths.append(_save(fig, directory / f"density_road{rid}.png"))

    k = sample_stride(len(bundle.times), 5000)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(bundle.times[k], bundle.total_mass[k], label="total mass")
    ax.plot(bundle.times[k], bundle.total_mass[0] + bundle.inflow[k] - bundle.outflow[k], "--",
            label="initial + in - out")
    ax.set_xlabel("t")
    ax.legend()
    paths.append(_save(fig, directory / "mass.png"))

    series = junction_series(bundle)
    if series:
        fig, axes = plt.subplots(len(series), 1, figsize=(7, 2.5 * len(series)), squeeze=False)
        k = sample_stride(bundle.steps_done, 5000)
        t = k * bundle.cfg.tau
        for ax, (jid, ser) in zip(axes[:, 0], series.items()):
            for name, values in ser.items():
                if not name.startswith("E:"):
                    ax.plot(t, values[k], lw=0.8, label=name)
            ax.set_title(f"junction {jid}")
            ax.legend(fontsize=7)
        axes[-1, 0].set_xlabel("t")
        paths.append(_save(fig, directory / "junction_fluxes.png"))
    return paths


def _save(fig, path: Path) -> Path:
    import matplotlib.pyplot as plt
    try:
        fig.tight_layout()
        fig.savefig(path, dpi=110)
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e.strerror}") from None
    finally:
        plt.close(fig)
    return path


def write_outputs(bundle: ResultBundle, plan: OutputPlan | str | Path) -> list[Path]:
    """Write all tables, data files and figures; returns the paths written."""
    if not isinstance(plan, OutputPlan):
        plan = OutputPlan(Path(plan))
    directory = Path(plan.directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"cannot create output directory {directory}: {e.strerror}") from None

    written = []
    records = snapshot_records(bundle)
    if records:
        write_snapshots_csv(records, directory / "snapshots.csv")
        written.append(directory / "snapshots.csv")
        written += write_dat_files(records, directory)
    write_mass_csv(bundle, directory / "mass.csv", plan.max_series_rows)
    write_junction_csv(bundle, directory / "junction_diag.csv", plan.max_series_rows)
    written += [directory / "mass.csv", directory / "junction_diag.csv"]
    # without snapshots only the two time-series tables are produced
    if plan.figures and records:
        written += render_figures(bundle, records, directory)
    return written


def read_csv(path: Path | str) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
