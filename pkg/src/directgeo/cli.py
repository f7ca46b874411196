"""``directgeo`` command line."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from directgeo import formats
from directgeo.backend import BackendError, get_backend
from directgeo.bench import compare_backends, make_workload, scan_batch_sizes
from directgeo.config import ConfigError, load_config
from directgeo.geoloc import direct_geolocate
from directgeo.scene import EcefStateVector, Snapshot, iter_snapshots
from directgeo.waveform import compute_spectrogram, estimate_psd

log = logging.getLogger("directgeo")

MANIFEST = "snapshots.json"


def _capture_name(snap: int, rx: int) -> str:
    return f"snap{snap:03d}_rx{rx}.dgiq"


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"noise": cfg.noise.model_copy(update={"seed": args.seed})})
    sc = cfg.scenario()
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for n, snap in enumerate(iter_snapshots(sc)):
        files = []
        for r, cap in enumerate(snap.captures):
            formats.write_iq(cap, out / _capture_name(n, r))
            files.append(_capture_name(n, r))
        entries.append({
            "epoch_s": snap.epoch_s,
            "captures": files,
            "positions_m": [s.position.tolist() for s in snap.states],
            "velocities_m_per_s": [s.velocity.tolist() for s in snap.states],
        })
        log.info("snapshot %d written", n)
    manifest = {"receivers": sc.receiver_names, "sample_rate_hz": sc.sample_rate_hz,
                "center_freq_hz": sc.center_freq_hz, "n_samples": sc.n_samples,
                "noise_seed": sc.noise_seed, "snapshots": entries}
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(entries)} snapshots x {len(sc.receivers)} receivers to {out}")
    return 0


def load_snapshots(capture_dir) -> list[Snapshot]:
    capture_dir = Path(capture_dir)
    manifest = json.loads((capture_dir / MANIFEST).read_text(encoding="utf-8"))
    snaps = []
    for e in manifest["snapshots"]:
        states = [EcefStateVector(np.array(p), np.array(v))
                  for p, v in zip(e["positions_m"], e["velocities_m_per_s"])]
        caps = [formats.read_iq(capture_dir / f) for f in e["captures"]]
        snaps.append(Snapshot(e["epoch_s"], states, caps))
    return snaps


def cmd_geolocate(args) -> int:
    cfg = load_config(args.config)
    if cfg.grid is None:
        raise ConfigError(f"{args.config}: geolocate needs a grid section")
    grid = cfg.grid.build()
    backend = get_backend(args.backend or cfg.compute.backend, workers=args.workers or cfg.compute.workers,
                          batch_size=args.batch_size or cfg.compute.batch_size,
                          memory_budget_bytes=cfg.compute.memory_budget_bytes)
    k_sigma = args.k_sigma if args.k_sigma is not None else cfg.detection.k_sigma
    snaps = load_snapshots(args.capture_dir)
    res = direct_geolocate(grid, snaps, backend, k_sigma=k_sigma,
                           exclusion_radius_cells=cfg.detection.exclusion_radius_cells,
                           normalize=None if cfg.detection.normalize == "none" else "median",
                           batch_size=backend.batch_size,
                           memory_budget_bytes=cfg.compute.memory_budget_bytes)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    fmts = ["csv", "binary"] if args.grid_format == "both" else [args.grid_format]
    named = [(f"snap{n:03d}", g) for n, g in enumerate(res.snapshot_grids)]
    named.append(("accumulated", res.accumulated))
    for name, g in named:
        for f in fmts:
            formats.write_grid(g, out / f"{name}_grid.{'csv' if f == 'csv' else 'dggr'}", f)
        formats.render_heatmap(g, out / f"{name}.pgm")
    formats.write_detections(res.detections, out / "detections.csv")
    print(f"{len(res.detections)} detection(s) above mean + {k_sigma:g} sigma")
    for d in res.detections:
        print(f"  lat {d.location.lat_deg:.4f} lon {d.location.lon_deg:.4f} "
              f"score {d.score:.6g} ({d.score_zsigma:.2f} sigma)")
    return 0


def _bench_workload(cfg, count: int):
    b = cfg.bench
    w = make_workload(count, b.n_samples, b.sample_rate_hz, seed=b.seed)
    w.label = f"random {count} candidates x {b.n_samples} samples"
    return w


def cmd_bench(args) -> int:
    cfg = load_config(args.config)
    b = cfg.bench
    if args.mode == "scan":
        backend = get_backend(args.backend or cfg.compute.backend, workers=args.workers or cfg.compute.workers,
                              memory_budget_bytes=cfg.compute.memory_budget_bytes)
        rep = scan_batch_sizes(_bench_workload(cfg, max(b.candidate_counts)), backend,
                               b.coarse_sizes, b.fine_window, b.scan_repetitions)
        summary = f"optimum batch size {rep.argmin_batch_size} over {len(rep.rows)} sizes"
    else:
        par = get_backend("parallel", workers=args.workers or cfg.compute.workers,
                          batch_size=args.batch_size or cfg.compute.batch_size,
                          memory_budget_bytes=cfg.compute.memory_budget_bytes)
        rep = compare_backends(_bench_workload(cfg, max(b.candidate_counts)), b.candidate_counts,
                               b.compare_repetitions, parallel=par)
        summary = "; ".join(f"{r.n_candidates}: x{r.speedup:.2f} (err {r.max_rel_error:.1e})"
                            for r in rep.rows)
        summary += "" if rep.valid else "  [INVALID: equivalence check failed]"
    text = rep.model_dump_json(indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    print(summary, file=sys.stderr)
    return 0 if args.mode == "scan" or rep.valid else 1


def _curve_image(y: np.ndarray, height: int = 256) -> np.ndarray:
    """Raster a curve: one column per point, row 0 at the top."""
    lo, hi = float(y.min()), float(y.max())
    rows = np.zeros(y.size, int) if hi == lo else np.round((hi - y) / (hi - lo) * (height - 1)).astype(int)
    img = np.zeros((height, y.size))
    img[rows, np.arange(y.size)] = 1.0
    return img


def cmd_plot(args) -> int:
    cap = formats.read_iq(args.iq_file)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.kind == "psd":
        f, p = estimate_psd(cap, segment_len=args.segment_len)
        db = 10 * np.log10(np.maximum(p, np.finfo(float).tiny))
        np.savetxt(out.with_suffix(".csv"), np.column_stack([f, db]), delimiter=",",
                   header="freq_hz,psd_db_per_hz", comments="", fmt="%.17g")
        formats.write_pgm(_curve_image(db), out.with_suffix(".pgm"))
    else:
        f, t, mag = compute_spectrogram(cap, window_len=args.segment_len)
        db = 20 * np.log10(np.maximum(mag, np.finfo(float).tiny))
        # frequency increases upwards
        formats.write_pgm(db[::-1], out.with_suffix(".pgm"))
    print(f"wrote {out.with_suffix('.pgm')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="directgeo", description="Direct geolocation of RF emitters "
                                "from two or more moving receivers.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate captures from a scenario config")
    s.add_argument("config")
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.add_argument("--seed", type=int, help="override the noise seed")
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("geolocate", help="grid search over simulated or recorded captures")
    g.add_argument("config")
    g.add_argument("capture_dir")
    g.add_argument("-o", "--output", required=True, help="output directory")
    g.add_argument("--backend", choices=["serial", "parallel"])
    g.add_argument("--batch-size", type=int)
    g.add_argument("--workers", type=int)
    g.add_argument("--k-sigma", type=float)
    g.add_argument("--grid-format", choices=["csv", "binary", "both"], default="both")
    g.set_defaults(func=cmd_geolocate)

    b = sub.add_parser("bench", help="batch-size scan or backend speedup")
    b.add_argument("mode", choices=["scan", "compare"])
    b.add_argument("config")
    b.add_argument("-o", "--output", help="report JSON path (stdout if omitted)")
    b.add_argument("--backend", choices=["serial", "parallel"])
    b.add_argument("--batch-size", type=int)
    b.add_argument("--workers", type=int)
    b.set_defaults(func=cmd_bench)

    q = sub.add_parser("plot", help="PSD or spectrogram of a DGIQ file")
    q.add_argument("kind", choices=["psd", "spectrogram"])
    q.add_argument("iq_file")
    q.add_argument("-o", "--output", required=True, help="output path stem")
    q.add_argument("--segment-len", type=int, default=256)
    q.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, formats.FormatError, BackendError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
