"""Method evaluation over datasets, report files and heatmap emission."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field

import numpy as np

from .dataset import TRUTH_PER_SOURCE, ArrayDataset, unfeaturize
from .dcnn import Model, load_model, predict
from .ebdsp import default_subspace_dim, eb_music_spectrum, eb_mvdr_spectrum
from .errors import DomainError, GeometryError, HoaDoaError
from .metrics import SUCCESS_THRESHOLD, MetricsReport, compute_metrics, format_value, match_doas
from .sps import SpsGrid, normalize_map, peak_angles

METHODS = ("dcnn", "eb-mvdr", "eb-music")
T60_EDGES = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


@dataclass
class RecordLog:
    index: int
    t60: float
    n_truth: int
    n_pred: int
    n_matched: int
    direct_matched: bool
    mean_error: float | None


@dataclass
class EvalResult:
    method: str
    report: MetricsReport
    direct: MetricsReport
    records: list[RecordLog] = field(default_factory=list)
    by_t60: list[tuple[tuple[float, float], MetricsReport]] | None = None


def beamformer_sps(method: str, feature, n_sources: int = 1, order: int | None = None) -> SpsGrid:
    """Normalised classical SPS rebuilt from a stored feature.

    Both spectra are invariant to covariance scale, so the trace lost in
    feature normalisation does not matter. MUSIC uses the default
    subspace dimension for ``n_sources`` sources.
    """
    R = unfeaturize(feature)
    if method == "eb-mvdr":
        P = eb_mvdr_spectrum(R)
    elif method == "eb-music":
        N = order if order is not None else int(round(np.sqrt(R.shape[0]))) - 1
        P = eb_music_spectrum(R, n_signals=default_subspace_dim(n_sources, N))
    else:
        raise DomainError(f"not a beamformer method: {method!r}")
    return normalize_map(SpsGrid(P, "beamformer"))


def _t60_buckets(t60, edges):
    idx = np.searchsorted(edges, t60, side="right") - 1
    # the top edge closes the last bucket
    idx = np.where(np.isclose(t60, edges[-1]), len(edges) - 2, idx)
    return idx


def run_eval(
    method: str,
    data,
    model=None,
    *,
    threshold: float = 0.5,
    success: float = SUCCESS_THRESHOLD,
    by_t60: bool = False,
    t60_edges=T60_EDGES,
) -> EvalResult:
    """Score one method on every record of a dataset.

    ``data`` is a dataset path or an :class:`ArrayDataset`; ``model`` a
    :class:`Model` or a model file path (``dcnn`` only). Each record's SPS
    goes through peak extraction at ``threshold`` and greedy matching
    against the stored truth. The ``direct`` report scores only the first
    truth of every record (the direct path of the first source).
    """
    if method not in METHODS:
        raise DomainError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if not isinstance(data, ArrayDataset):
        data = ArrayDataset.load(data)
    if method == "dcnn":
        if model is None:
            raise DomainError("method dcnn needs a model")
        if not isinstance(model, Model):
            model = load_model(model)
        if data.features.shape[1] != model.config.n_features:
            raise GeometryError(
                f"dataset features have length {data.features.shape[1]}, model expects {model.config.n_features}"
            )
        maps = predict(model, data.features)
    else:
        maps = None

    matches, direct, logs = [], [], []
    for i in range(len(data)):
        truth = np.asarray(data.truths[i]).reshape(-1, 2)
        if maps is not None:
            sps = maps[i]
        else:
            n_src = max(1, len(truth) // TRUTH_PER_SOURCE)
            sps = beamformer_sps(method, data.features[i], n_src)
        peaks = peak_angles(sps, threshold)
        m = match_doas(peaks, truth, success)
        d = match_doas(peaks, truth[:1], success)
        matches.append(m)
        direct.append(d)
        errs = m.errors
        logs.append(
            RecordLog(
                index=i,
                t60=float(data.t60[i]) if data.t60 is not None else float("nan"),
                n_truth=m.n_truth,
                n_pred=m.n_pred,
                n_matched=len(errs),
                direct_matched=bool(d.pairs),
                mean_error=float(np.mean(errs)) if errs else None,
            )
        )

    result = EvalResult(method, compute_metrics(matches), compute_metrics(direct), logs)
    if by_t60:
        if data.t60 is None:
            raise DomainError("dataset carries no T60 values")
        edges = np.asarray(t60_edges, float)
        bucket = _t60_buckets(np.asarray(data.t60, float), edges)
        result.by_t60 = [
            ((float(edges[b]), float(edges[b + 1])), compute_metrics(m for m, k in zip(matches, bucket) if k == b))
            for b in range(len(edges) - 1)
        ]
    return result


# -- reports -----------------------------------------------------------------

_COLUMNS = ("R_rec", "R_acc", "E_mean", "E_var", "matched", "truths", "predictions", "records")


def _row(name: str, rep: MetricsReport) -> str:
    d = rep.as_dict()
    return f"{name:<16}" + "".join(f"{format_value(d[c]):>12}" for c in _COLUMNS)


def format_report(result: EvalResult) -> str:
    """Human-readable metrics table."""
    lines = [f"method: {result.method}", f"{'subset':<16}" + "".join(f"{c:>12}" for c in _COLUMNS)]
    lines.append(_row("all", result.report))
    lines.append(_row("direct", result.direct))
    for (lo, hi), rep in result.by_t60 or ():
        lines.append(_row(f"T60 {lo:.2f}-{hi:.2f}", rep))
    return "\n".join(lines) + "\n"


def report_items(result: EvalResult) -> list[tuple[str, str]]:
    """Flat ``key=value`` pairs, stable ordering."""
    items = [("method", result.method)]
    for prefix, rep in (("all", result.report), ("direct", result.direct)):
        items += [(f"{prefix}.{k}", format_value(v)) for k, v in rep.as_dict().items()]
    for (lo, hi), rep in result.by_t60 or ():
        items += [(f"t60_{lo:.2f}_{hi:.2f}.{k}", format_value(v)) for k, v in rep.as_dict().items()]
    return items


def format_record_log(result: EvalResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "t60", "truths", "predictions", "matched", "direct_matched", "mean_error"])
    for r in result.records:
        w.writerow([r.index, f"{r.t60:.4f}", r.n_truth, r.n_pred, r.n_matched, int(r.direct_matched), format_value(r.mean_error)])
    return buf.getvalue()


def write_report(result: EvalResult, path) -> tuple[str, str, str]:
    """Write the table to ``path``, key/values to ``path.kv`` and the
    per-record log to ``path.records.csv``; returns the three paths."""
    path = os.fspath(path)
    kv, rec = path + ".kv", path + ".records.csv"
    try:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(format_report(result))
        with open(kv, "w", encoding="ascii") as fh:
            fh.writelines(f"{k}={v}\n" for k, v in report_items(result))
        with open(rec, "w", encoding="ascii") as fh:
            fh.write(format_record_log(result))
    except OSError as exc:
        raise HoaDoaError(f"cannot write report {path}: {exc}") from exc
    return path, kv, rec


# -- heatmaps ----------------------------------------------------------------


def _heat_values(sps) -> np.ndarray:
    if isinstance(sps, SpsGrid) and sps.kind != "beamformer":
        return sps.values
    return normalize_map(sps).values


def emit_heatmap(sps, path, fmt: str = "csv", truth=None) -> None:
    """Write an SPS as CSV (raw values, one grid row per line) or binary
    8-bit PGM (``round(255 * v)``, beamformer maps min-max normalised first).

    ``truth`` (a DoaSet or ``(k, 2)`` az/el array) goes to a companion
    ``<path>.truth.csv``.
    """
    path = os.fspath(path)
    try:
        if fmt == "csv":
            v = sps.values if isinstance(sps, SpsGrid) else np.asarray(sps, float)
            np.savetxt(path, v, delimiter=",", fmt="%.9g")
        elif fmt == "pgm":
            v = _heat_values(sps)
            pix = np.round(255.0 * np.clip(v, 0.0, 1.0)).astype(np.uint8)
            with open(path, "wb") as fh:
                fh.write(f"P5\n{pix.shape[1]} {pix.shape[0]}\n255\n".encode("ascii"))
                fh.write(pix.tobytes())
        else:
            raise DomainError(f"unknown heatmap format {fmt!r} (csv or pgm)")
        if truth is not None:
            t = truth.angles() if hasattr(truth, "angles") else np.asarray(truth, float).reshape(-1, 2)
            np.savetxt(path + ".truth.csv", t, delimiter=",", fmt="%.6f", header="azimuth,elevation", comments="")
    except OSError as exc:
        raise HoaDoaError(f"cannot write heatmap {path}: {exc}") from exc


def read_pgm(path) -> np.ndarray:
    """Parse a binary P5 image written by :func:`emit_heatmap`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    parts = raw.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise DomainError(f"{path} is not a binary PGM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], np.uint8, count=w * h).reshape(h, w)
