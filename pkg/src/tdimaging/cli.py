"""Command line entry point.

    tdimaging validate --scenario S.yaml [--out DIR]
    tdimaging image    --scenario S.yaml --out DIR [--seed N] [--threads N]
    tdimaging mc-noise --scenario S.yaml --out DIR
    tdimaging speckle  --scenario S.yaml --out DIR

Exit codes: 0 ok, 1 a check failed, 2 the scenario could not be parsed,
3 an input or output file could not be read or written.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import os
import platform
import sys
import time
import warnings
from dataclasses import replace

import numpy as np
import yaml

from . import __version__, _accel
from .errors import DegenerateMapError, InvalidArgument
from .forward import inject_measurement_noise, synthesize_filtered_data
from .greens import hk_residual, im_dyadic_green, dyadic_green
from .imaging import peak_metrics, td_multi
from .scenario import ScenarioError, load
from .scene import direction_identity_check, direction_matrix_check
from .stability import (MCConfig, compare_modes, mc_noise_covariance, mc_snr,
                        speckle_covariance, speckle_prediction, td_cov_prediction,
                        td_noise_samples)

EXIT_OK, EXIT_CHECK, EXIT_PARSE, EXIT_IO = 0, 1, 2, 3

HK_RADII = (10.0, 20.0, 40.0)       # wavelengths
HK_TOL = 0.05                       # residual / ||(eps0/k) Im G||
RECIPROCITY_TOL = 1e-13
SCALAR_DIR_TOL = 0.05
MATRIX_DIR_TOL = 0.03               # times eps0 k / (4 pi)
COV_Z = 3.0                         # MC standard errors
SNR_TOL = 0.15
SPECKLE_TOL = 0.20


class CheckFailed(Exception):
    pass


# ---------------------------------------------------------------------------
# output helpers

class Writer:
    """Writes outputs under out_dir, each with a provenance header line."""

    def __init__(self, out_dir, sc):
        self.out_dir = out_dir
        self.header = f"scenario_sha256={sc.sha256} seed={sc.seed}"
        self.files = []
        os.makedirs(out_dir, exist_ok=True)

    def _write(self, name, text):
        path = os.path.join(self.out_dir, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.files.append(name)
        return path

    def csv(self, name, columns, rows):
        lines = [f"# {self.header}", ",".join(columns)]
        for row in rows:
            lines.append(",".join(_fmt(v) for v in row))
        return self._write(name, "\n".join(lines) + "\n")

    def record(self, name, data):
        body = yaml.safe_dump(_plain(data), sort_keys=False, default_flow_style=None)
        return self._write(name, f"# {self.header}\n{body}")

    def pgm(self, name, values):
        v = np.asarray(values, dtype=float)
        lo, hi = float(v.min()), float(v.max())
        scaled = np.zeros(v.shape, dtype=int) if hi == lo else np.rint(255 * (v - lo) / (hi - lo)).astype(int)
        h, w = scaled.shape
        rows = "\n".join(" ".join(str(x) for x in r) for r in scaled)
        self._write(name, f"P2\n# {self.header}\n{w} {h}\n255\n{rows}\n")
        self.record(name + ".yaml", {"min": lo, "max": hi, "scaling": "linear min-max to 0..255"})

    def manifest(self, name, sc, command, seconds):
        files = {}
        for f in self.files:
            with open(os.path.join(self.out_dir, f), "rb") as fh:
                files[f] = hashlib.sha256(fh.read()).hexdigest()
        self.record(name, {
            "command": command,
            "scenario": sc.path,
            "scenario_sha256": sc.sha256,
            "seed": sc.seed,
            "versions": {"tdimaging": __version__, "numpy": np.__version__,
                         "numba": _numba_version(), "python": platform.python_version()},
            "numba_enabled": _accel.HAVE_NUMBA,
            "seconds": round(seconds, 3),
            "files": files,
        })


def _numba_version():
    try:
        import numba
        return numba.__version__
    except ImportError:
        return None


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _plain(x):
    # numpy scalars and arrays to builtin types for yaml
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


# ---------------------------------------------------------------------------
# commands

def _reference_points(sc):
    """Inclusion centre and two partners at k|z - z'| = 1 and 2."""
    k = sc.scene.kappa
    zD = sc.scene.inclusion.center
    e = np.array([1.0, 2.0, 2.0]) / 3.0
    return zD, ((zD, zD), (zD, zD + e / k), (zD, zD + 2.0 * e / k))


def cmd_validate(sc, out):
    ctx = sc.scene.ctx
    lam = sc.wavelength
    k = ctx.kappa
    checks = []
    tables = []

    # reciprocity of G and Im G
    rng = np.random.default_rng(sc.seed)
    x = rng.uniform(-lam, lam, (50, 3))
    y = rng.uniform(-lam, lam, (50, 3))
    G1, G2 = dyadic_green(ctx, x, y), dyadic_green(ctx, y, x)
    rec = float(np.max(np.abs(G1 - np.swapaxes(G2, -1, -2))) / np.max(np.abs(G1)))
    I1, I2 = im_dyadic_green(ctx, x, y), im_dyadic_green(ctx, y, x)
    rec_im = float(np.max(np.abs(I1 - np.swapaxes(I2, -1, -2))) / np.max(np.abs(I1)))
    checks.append(("reciprocity_G", rec, RECIPROCITY_TOL))
    checks.append(("reciprocity_ImG", rec_im, RECIPROCITY_TOL))

    # direction identities with the scenario's incidence set
    scalar_err, matrix_err = 0.0, 0.0
    for kd in np.linspace(0.0, 6.0, 13):
        d = kd / k * np.array([0.36, 0.48, 0.8])
        scalar_err = max(scalar_err, direction_identity_check(sc.scene.incidences, k, d)[2])
        for cross in (False, True):
            matrix_err = max(matrix_err, direction_matrix_check(sc.scene.incidences, ctx, d, cross)[2])
    checks.append(("direction_scalar", scalar_err, SCALAR_DIR_TOL))
    checks.append(("direction_matrix", matrix_err, MATRIX_DIR_TOL * ctx.eps0 * k / (4 * np.pi)))

    # HK residuals
    if sc.scene.boundary_radius < 2 * lam:
        warnings.warn("boundary radius below 2 wavelengths: Helmholtz-Kirchhoff checks skipped")
    else:
        xh = np.array([0.2, -0.1, 0.3]) * lam
        yh = xh + np.array([0.3, 0.2, -0.1]) * lam
        scale = np.sqrt(np.sum((ctx.eps0 / k * im_dyadic_green(ctx, xh, yh)) ** 2))
        for variant in ("plain", "tangential", "curl"):
            for r in HK_RADII:
                _, res = hk_residual(ctx, variant, r * lam, xh, yh)
                ref = scale * (k ** 2 if variant == "curl" else 1.0)
                tables.append((variant, r, res, res / ref))
                checks.append((f"hk_{variant}_r{r:g}", res / ref, HK_TOL))

    rows = [(name, val, tol, "PASS" if val < tol else "FAIL") for name, val, tol in checks]
    for row in rows:
        print(f"{row[3]} {row[0]} value={row[1]:.3e} threshold={row[2]:.3e}")
    failed = any(r[3] == "FAIL" for r in rows)
    if not out:
        if failed:
            raise CheckFailed("validation checks failed")
        return None
    w = Writer(out, sc)
    w.csv("validate.csv", ("check", "value", "threshold", "status"), rows)
    if tables:
        w.csv("hk_residuals.csv", ("variant", "radius_wavelengths", "residual", "relative"), tables)
    w.check_failed = failed
    return w


def cmd_image(sc, out):
    scene = sc.scene
    lam = sc.wavelength
    data = synthesize_filtered_data(scene)
    if sc.measurement is not None and sc.measurement.sigma > 0:
        data = inject_measurement_noise(data, sc.measurement)
    pts = sc.grid.points()
    m = td_multi(data, sc.grid, scene.trial, pts)
    w = Writer(out, sc)
    w.csv("map.csv", ("x", "y", "z", "value"),
          ((p[0] / lam, p[1] / lam, p[2] / lam, v) for p, v in zip(pts, m.flat)))
    summary = {"units": "lengths in wavelengths", "grid_spacing": sc.grid.spacing / lam,
               "true_center": scene.inclusion.center / lam}
    try:
        pm = peak_metrics(m, scene.inclusion.center)
        summary.update({
            "peak_location": pm["argmax"] / lam,
            "peak_value": pm["peak_value"],
            "localization_error": pm["localization_error"] / lam,
            "localization_error_cells": pm["localization_error"] / sc.grid.spacing,
            "fwhm": {a: v / lam for a, v in pm["fwhm"].items()},
            "sidelobe_ratio": pm["sidelobe_ratio"],
            "degenerate": False,
        })
    except DegenerateMapError as exc:
        warnings.warn(f"degenerate map: {exc}")
        summary.update({"degenerate": True, "reason": str(exc)})
    w.record("summary.yaml", summary)
    plane = sc.grid.plane_axes
    if len(plane) == 2:
        img = np.squeeze(m.values)
        # rows go down the second in-plane axis, flipped so it increases upwards
        w.pgm("heatmap.pgm", img.T[::-1])
    return w


def cmd_mc_noise(sc, out):
    if sc.measurement is None or sc.n_trials is None:
        raise InvalidArgument("mc-noise needs noise.measurement and mc.n_trials")
    cfg = MCConfig(sc.n_trials, _reference_points(sc)[1], sc.seed)
    scene = sc.scene
    lam = sc.wavelength
    spec = sc.measurement
    half = mc_noise_covariance(scene, replace(spec, filter_mode="half"), cfg)
    runs = {"half": half}
    if spec.filter_mode != "half":
        runs[spec.filter_mode] = mc_noise_covariance(scene, spec, cfg)
    else:
        runs["farfield"] = mc_noise_covariance(scene, replace(spec, filter_mode="farfield"), cfg)
    w = Writer(out, sc)
    rows = []
    worst = 0.0
    for mode, res in runs.items():
        for p, r in enumerate(res):
            zs = np.abs(r.empirical - r.prediction) / np.where(r.stderr > 0, r.stderr, np.inf)
            if mode == "half":
                worst = max(worst, float(zs.max()))
            for i in range(3):
                for j in range(3):
                    rows.append((mode, p, *(r.z / lam), *(r.z2 / lam), i, j,
                                 r.empirical[i, j].real, r.empirical[i, j].imag,
                                 r.prediction[i, j], r.stderr[i, j], zs[i, j]))
    w.csv("covariance.csv",
          ("mode", "pair", "zx", "zy", "zz", "z2x", "z2y", "z2z", "i", "j",
           "empirical_re", "empirical_im", "predicted", "stderr", "zscore"), rows)
    cmp_rows = []
    for p, zs in enumerate(compare_modes(runs["farfield"], runs["half"])):
        cmp_rows.append(("farfield-vs-half", p, float(zs.max()),
                         "PASS" if zs.max() <= COV_Z else "FAIL"))
    w.csv("mode_comparison.csv", ("comparison", "pair", "max_paired_zscore", "status"), cmp_rows)

    snr_spec = replace(spec, filter_mode="half")
    if snr_spec.sigma == 0:
        snr = {"skipped": "sigma is zero"}
        snr_ok = True
    else:
        snr_cfg = MCConfig(sc.snr_trials, (), sc.seed)
        snr = mc_snr(scene, snr_spec, snr_cfg, sc.snr_incidences)
        snr_ok = (abs(snr["ratio_4n"] / 2.0 - 1) <= SNR_TOL and abs(snr["ratio_2rho"] / 8.0 - 1) <= SNR_TOL
                  and abs(snr["ratio_2sigma"] / 0.5 - 1) <= SNR_TOL)
        base = replace(scene, incidences=type(scene.incidences).fibonacci(sc.snr_incidences))
        samples = td_noise_samples(base, replace(snr_spec, seed=sc.seed), sc.snr_trials)
        zD = scene.inclusion.center
        kind = "permeable" if base.trial.a_mu != 0 else "dielectric"
        snr["map_variance_empirical"] = float(np.var(samples, ddof=1))
        snr["map_variance_predicted"] = float(td_cov_prediction(kind, zD, zD, base, sc.snr_incidences,
                                                                snr_spec.sigma))
        snr["scaling_status"] = "PASS" if snr_ok else "FAIL"
    w.record("snr.yaml", snr)
    status = "PASS" if worst <= COV_Z else "FAIL"
    w.record("summary.yaml", {"half_mode_max_zscore": worst, "covariance_status": status,
                              "farfield_comparison": [r[3] for r in cmp_rows],
                              "snr_status": snr.get("scaling_status", "SKIPPED")})
    print(f"{status} half-mode covariance max z = {worst:.2f}")
    for r in cmp_rows:
        print(f"{r[3]} farfield vs half pair {r[1]} max z = {r[2]:.2f}")
    if "scaling_status" in snr:
        print(f"{snr['scaling_status']} SNR ratios 4n={snr['ratio_4n']:.3f} 2rho={snr['ratio_2rho']:.3f}"
              f" 2sigma={snr['ratio_2sigma']:.3f}")
    w.check_failed = status == "FAIL" or not snr_ok
    return w


def cmd_speckle(sc, out):
    if sc.medium is None:
        raise InvalidArgument("speckle needs a noise.medium block")
    spec = sc.medium
    if spec.n_realizations < 2:
        raise InvalidArgument("speckle needs at least 2 realizations")
    scene = sc.scene
    zD = scene.inclusion.center
    res = speckle_covariance(spec.kind, zD, zD, scene, spec)
    # sigma^2 scaling of the prediction, straight from the code path
    double = replace(spec, field=replace(spec.field, sigma=2.0 * spec.field.sigma))
    p2, _ = speckle_prediction(double, scene, zD)
    ratio = res.empirical / res.prediction if res.prediction else float("nan")
    ok = abs(ratio - 1.0) <= SPECKLE_TOL
    w = Writer(out, sc)
    w.csv("speckle.csv", ("kind", "prediction", "empirical", "stderr", "ratio", "n_realizations"),
          [(spec.kind, res.prediction, res.empirical, res.stderr, ratio, res.n_realizations)])
    w.record("summary.yaml", {"kind": spec.kind, "ratio": ratio, "status": "PASS" if ok else "FAIL",
                              "prediction_sigma_doubling_ratio": p2 / res.prediction if res.prediction else None})
    print(f"{'PASS' if ok else 'FAIL'} speckle variance ratio {ratio:.3f}")
    w.check_failed = not ok
    return w


COMMANDS = {"validate": cmd_validate, "image": cmd_image, "mc-noise": cmd_mc_noise,
            "speckle": cmd_speckle}


def build_parser():
    p = argparse.ArgumentParser(prog="tdimaging", description="Topological derivative imaging lab")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--scenario", required=True, help="scenario YAML file")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
    p.add_argument("--threads", type=int, default=None, help="numba worker threads")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads is not None:
        _accel.set_threads(args.threads)
    try:
        sc = load(args.scenario, seed=args.seed)
    except OSError as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_IO
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    if args.command != "validate" and args.out is None:
        print("error: --out is required", file=sys.stderr)
        return EXIT_PARSE
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        w = COMMANDS[args.command](sc, args.out)
        if getattr(w, "check_failed", False):
            code = EXIT_CHECK
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if w is not None:
        try:
            w.manifest("run.yaml", sc, args.command, time.perf_counter() - t0)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
    return code


if __name__ == "__main__":
    sys.exit(main())
