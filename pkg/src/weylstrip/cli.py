"""Scenario runner: config-driven sweeps with machine-readable reports.

Modes: weyl (half-line estimates), evolve (direct vs linear-fractional
evolution consistency), quarterplane (initial Weyl function from boundary
data), recover (corner jet + Taylor synthesis), verify (equation /
zero-curvature / factorization residuals).

Configs are a single JSON document; complex numbers are always two-element
[re, im] arrays, matrices are nested row-major lists of such pairs.  Reports
are deterministic given the config (apart from the generated_at stamp).
Exit codes: 0 success, 2 schema violation, 3 numerical failure (the failing
stage is named on stderr).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .dirac import PotentialProfile, Signature, TimeTrace, propagate_R
from .errors import (SingularDenominatorError, SpectralDomainError,
                     WeylstripError)
from .evolution import evolve_weyl, quarterplane_weyl
from .recovery import corner_jet, ingest_boundary, load_boundary_csv, taylor_reconstruct
from .verify import dnls_residual, factorization_residual, plane_wave, zero_curvature_residual
from .weyl import weyl_estimate

log = logging.getLogger("weylstrip")

MODES = ("weyl", "evolve", "quarterplane", "recover", "verify")


class ConfigError(Exception):
    """Configuration does not validate against the schema (exit code 2)."""


class ScenarioError(Exception):
    """Numerical failure inside a named stage (exit code 3)."""

    def __init__(self, stage, message):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage


def _parse_complex(obj, where) -> complex:
    if (not isinstance(obj, (list, tuple)) or len(obj) != 2
            or not all(isinstance(v, (int, float)) for v in obj)):
        raise ConfigError(f"{where}: complex values must be [re, im] pairs, got {obj!r}")
    return complex(obj[0], obj[1])


def _parse_cmatrix(obj, where) -> np.ndarray:
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected nested lists of [re, im] pairs")
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ConfigError(f"{where}: matrix must be rows x cols x [re, im]")
    return arr[..., 0] + 1j * arr[..., 1]


def _encode_cmatrix(arr) -> list:
    arr = np.atleast_2d(np.asarray(arr, dtype=complex))
    return [[[float(v.real), float(v.imag)] for v in row] for row in arr]


@dataclass
class ScenarioConfig:
    mode: str
    sig: Signature
    potential: Optional[dict]
    boundary: Optional[dict]
    z_list: List[complex]
    x_max: float
    t_max: float
    steps: int
    ode_tol: float
    accept_tol: float
    recover: dict
    verify: dict
    out_path: Optional[str]
    out_format: str
    raw: dict = field(repr=False, default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, mode: Optional[str] = None) -> "ScenarioConfig":
        if not isinstance(d, dict):
            raise ConfigError("config root must be a JSON object")
        cfg_mode = d.get("mode", mode)
        if mode is not None and d.get("mode") not in (None, mode):
            raise ConfigError(f"config mode {d['mode']!r} conflicts with CLI mode {mode!r}")
        if cfg_mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {cfg_mode!r}")
        sig_d = d.get("signature", {"m1": 1, "m2": 1})
        try:
            sig = Signature(int(sig_d["m1"]), int(sig_d["m2"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"signature: {exc}")
        z_list = [_parse_complex(z, f"z_list[{i}]") for i, z in enumerate(d.get("z_list", []))]
        for i, z in enumerate(z_list):
            if z.imag < 0 or (z.imag == 0 and cfg_mode != "verify"):
                raise ConfigError(
                    f"z_list[{i}]: Im(z) must be > 0 (= 0 allowed only in verify mode)")
        grids = d.get("grids", {})
        tols = d.get("tolerances", {})
        out = d.get("output", {})
        fmt = out.get("format", "json")
        if fmt not in ("json", "csv"):
            raise ConfigError(f"output.format must be json or csv, got {fmt!r}")
        for name, val in (("x_max", grids.get("x_max", 10.0)),
                          ("t_max", grids.get("t_max", 1.0)),
                          ("ode_tol", tols.get("ode_tol", 1e-8)),
                          ("accept_tol", tols.get("accept_tol", 1e-6))):
            if not isinstance(val, (int, float)) or val <= 0:
                raise ConfigError(f"{name} must be a positive number, got {val!r}")
        steps = grids.get("steps", 4)
        if not isinstance(steps, int) or steps < 1:
            raise ConfigError(f"grids.steps must be a positive integer, got {steps!r}")
        cfg = cls(
            mode=cfg_mode, sig=sig,
            potential=d.get("potential"), boundary=d.get("boundary"),
            z_list=z_list,
            x_max=float(grids.get("x_max", 10.0)),
            t_max=float(grids.get("t_max", 1.0)),
            steps=steps,
            ode_tol=float(tols.get("ode_tol", 1e-8)),
            accept_tol=float(tols.get("accept_tol", 1e-6)),
            recover=d.get("recover", {}),
            verify=d.get("verify", {}),
            out_path=out.get("path"),
            out_format=fmt,
            raw=d,
        )
        cfg._validate_mode_inputs()
        return cfg

    def _validate_mode_inputs(self):
        if self.mode in ("weyl", "evolve", "verify"):
            if not isinstance(self.potential, dict) or "kind" not in self.potential:
                raise ConfigError(f"mode {self.mode} requires a potential spec with a kind")
            _check_kind(self.potential["kind"],
                        ("zero", "constant", "plane_wave", "sampled"), "potential.kind")
            if self.mode in ("evolve", "verify") and \
                    self.potential["kind"] not in ("zero", "plane_wave"):
                raise ConfigError(
                    f"mode {self.mode} needs an exact solution field: potential.kind "
                    "must be zero or plane_wave")
        if self.mode in ("quarterplane", "recover"):
            if not isinstance(self.boundary, dict) or "kind" not in self.boundary:
                raise ConfigError(f"mode {self.mode} requires a boundary spec with a kind")
            _check_kind(self.boundary["kind"], ("zero", "plane_wave", "csv"), "boundary.kind")
        if self.mode == "recover":
            k = self.recover.get("K", 8)
            deg = self.recover.get("degree", k + 10)
            if not isinstance(k, int) or k < 2:
                raise ConfigError("recover.K must be an integer >= 2")
            if not isinstance(deg, int) or deg < k + 4:
                raise ConfigError("recover.degree must be an integer >= K + 4")


def _check_kind(kind, allowed, where):
    if kind not in allowed:
        raise ConfigError(f"{where} must be one of {allowed}, got {kind!r}")


def _build_profile(cfg: ScenarioConfig) -> PotentialProfile:
    spec = cfg.potential
    kind = spec["kind"]
    if kind == "zero":
        return PotentialProfile.zero(cfg.sig)
    if kind == "constant":
        v0 = _parse_cmatrix(spec.get("v0"), "potential.v0")
        if v0.shape != (cfg.sig.m1, cfg.sig.m2):
            raise ConfigError("potential.v0 does not match the signature")
        return PotentialProfile.constant(v0, cfg.sig)
    if kind == "plane_wave":
        q = _parse_cmatrix(spec.get("q"), "potential.q")
        if q.shape != (cfg.sig.m1, cfg.sig.m2):
            raise ConfigError("potential.q does not match the signature")
        try:
            return PotentialProfile.plane_wave(q, float(spec.get("k", 0.0)), sig=cfg.sig)
        except ValueError as exc:
            raise ConfigError(f"potential: {exc}")
    x = np.asarray(spec.get("x", []), dtype=float)
    samples = _parse_cmatrix(spec.get("samples"), "potential.samples") \
        if spec.get("samples") is not None else None
    if samples is None or x.size != (samples.shape[0] if samples.ndim == 3 else -1):
        raise ConfigError("sampled potential needs matching x and samples arrays")
    try:
        return PotentialProfile.sampled(x, samples, cfg.sig)
    except ValueError as exc:
        raise ConfigError(f"potential: {exc}")


def _build_field(cfg: ScenarioConfig):
    spec = cfg.potential
    if spec["kind"] == "zero":
        return plane_wave(np.zeros((cfg.sig.m1, cfg.sig.m2)), 0.0)
    q = _parse_cmatrix(spec.get("q"), "potential.q")
    try:
        return plane_wave(q, float(spec.get("k", 0.0)))
    except ValueError as exc:
        raise ConfigError(f"potential: {exc}")


def _build_trace(cfg: ScenarioConfig):
    spec = cfg.boundary
    kind = spec["kind"]
    if kind == "zero":
        return TimeTrace.zero(cfg.sig)
    if kind == "plane_wave":
        q = _parse_cmatrix(spec.get("q"), "boundary.q")
        fieldev = plane_wave(q, float(spec.get("k", 0.0)))
        return fieldev.trace_at(0.0)
    path = spec.get("path")
    if not path:
        raise ConfigError("boundary.kind csv requires a path")
    degree = spec.get("degree", 40)
    try:
        t, v0, v1 = load_boundary_csv(path, cfg.sig)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"boundary csv: {exc}")
    return ingest_boundary((t, v0), (t, v1), float(t[-1]), degree)


def _opnorm(a) -> float:
    return float(np.linalg.norm(np.atleast_2d(a), 2))


# -- per-z workers (top level so process pools can pickle them) ---------------

def _weyl_one(args):
    raw, z_pair = args
    cfg = ScenarioConfig.from_dict(raw)
    profile = _build_profile(cfg)
    z = complex(*z_pair)
    est = weyl_estimate(profile, z, cfg.x_max, cfg.ode_tol)
    return {"z": list(z_pair), "coord": cfg.x_max, "phi": _encode_cmatrix(est.phi),
            "uncertainty": est.uncertainty, "sigma_max": _opnorm(est.phi),
            "flags": []}


def _evolve_one(args):
    raw, z_pair = args
    cfg = ScenarioConfig.from_dict(raw)
    fieldev = _build_field(cfg)
    z = complex(*z_pair)
    t_grid = np.linspace(0.0, cfg.t_max, cfg.steps + 1)
    phi0 = weyl_estimate(fieldev.profile_at(0.0), z, cfg.x_max, cfg.ode_tol)
    R = propagate_R(fieldev.trace_at(0.0), z, (0.0, cfg.t_max), cfg.ode_tol,
                    grid=t_grid)
    records = []
    for i, t in enumerate(t_grid[1:], start=1):
        rec = {"z": list(z_pair), "coord": float(t), "flags": []}
        try:
            evo = evolve_weyl(phi0.phi, R.values[i], cfg.sig, t=t, z=z)
        except SingularDenominatorError:
            rec["phi"] = _encode_cmatrix(np.zeros((cfg.sig.m2, cfg.sig.m1)))
            rec["uncertainty"] = float("nan")
            rec["flags"].append("exceptional-point")
            records.append(rec)
            continue
        direct = weyl_estimate(fieldev.profile_at(float(t)), z, cfg.x_max, cfg.ode_tol)
        rec["phi"] = _encode_cmatrix(evo.phi_t)
        rec["uncertainty"] = _opnorm(evo.phi_t - direct.phi)
        rec["denominator_condition"] = evo.denominator_condition
        rec["direct_phi"] = _encode_cmatrix(direct.phi)
        records.append(rec)
    return records


def _qp_one(args):
    raw, z_pair = args
    cfg = ScenarioConfig.from_dict(raw)
    trace = _build_trace(cfg)
    z = complex(*z_pair)
    rec = {"z": list(z_pair), "flags": []}
    try:
        qp = quarterplane_weyl(trace, z, cfg.t_max, cfg.accept_tol,
                               ode_tol=cfg.ode_tol)
    except SpectralDomainError:
        rec.update({"coord": 0.0, "phi": _encode_cmatrix(np.zeros((cfg.sig.m2, cfg.sig.m1))),
                    "uncertainty": float("nan")})
        rec["flags"].append("outside-limit-domain")
        return rec
    rec.update({"coord": qp.t_used, "phi": _encode_cmatrix(qp.phi0),
                "uncertainty": qp.residual, "r22_min_sv": qp.r22_min_sv})
    rec["flags"].append("converged" if qp.converged else "not-converged")
    return rec


def _verify_one(args):
    raw, z_pair = args
    cfg = ScenarioConfig.from_dict(raw)
    fieldev = _build_field(cfg)
    z = complex(*z_pair)
    vf = cfg.verify
    h_x = float(vf.get("h_x", 0.01))
    h_t = float(vf.get("h_t", 0.01))
    x_eval = float(vf.get("x", min(1.0, cfg.x_max)))
    t_eval = float(vf.get("t", min(0.5, cfg.t_max)))
    zc = zero_curvature_residual(fieldev, z, h_x, h_t,
                                 x_span=(0.0, cfg.x_max), t_span=(0.0, cfg.t_max))
    fact = factorization_residual(fieldev, z, x_eval, t_eval, cfg.ode_tol)
    return {"z": list(z_pair), "coord": x_eval,
            "phi": _encode_cmatrix(np.zeros((cfg.sig.m2, cfg.sig.m1))),
            "uncertainty": zc, "factorization_residual": fact, "flags": []}


def _map_over_z(fn, raw, z_list, workers: int):
    payloads = [(raw, [z.real, z.imag]) for z in z_list]
    if workers <= 1:
        return [fn(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, payloads))


def run_scenario(config, workers: int = 1) -> dict:
    """Dispatch a validated config to its mode pipeline.

    Deterministic given the config; per-z results keep z_list order no matter
    the worker count.
    """
    if isinstance(config, dict):
        config = ScenarioConfig.from_dict(config)
    cfg = config
    raw = cfg.raw
    report = {"mode": cfg.mode, "config": raw,
              "generated_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())}
    try:
        if cfg.mode == "weyl":
            records = _map_over_z(_weyl_one, raw, cfg.z_list, workers)
            report["records"] = records
            report["summary"] = {
                "max_uncertainty": max((r["uncertainty"] for r in records), default=0.0),
                "max_sigma": max((r["sigma_max"] for r in records), default=0.0)}
        elif cfg.mode == "evolve":
            nested = _map_over_z(_evolve_one, raw, cfg.z_list, workers)
            records = [r for group in nested for r in group]
            report["records"] = records
            devs = [r["uncertainty"] for r in records if not np.isnan(r["uncertainty"])]
            report["summary"] = {
                "max_deviation": max(devs, default=0.0),
                "exceptional_points": sum("exceptional-point" in r["flags"] for r in records)}
        elif cfg.mode == "quarterplane":
            records = _map_over_z(_qp_one, raw, cfg.z_list, workers)
            report["records"] = records
            report["summary"] = {
                "n_converged": sum("converged" in r["flags"] for r in records),
                "min_r22_sv": min((r.get("r22_min_sv", float("inf")) for r in records),
                                  default=float("inf"))}
        elif cfg.mode == "recover":
            report.update(_run_recover(cfg))
        else:
            records = _map_over_z(_verify_one, raw, cfg.z_list, workers)
            fieldev = _build_field(cfg)
            vf = cfg.verify
            dnls = dnls_residual(fieldev, float(vf.get("h_x", 0.01)),
                                 float(vf.get("h_t", 0.01)),
                                 x_span=(0.0, cfg.x_max), t_span=(0.0, cfg.t_max))
            report["records"] = records
            report["summary"] = {
                "dnls_residual": dnls,
                "max_zero_curvature": max((r["uncertainty"] for r in records), default=0.0),
                "max_factorization": max((r["factorization_residual"] for r in records),
                                         default=0.0)}
    except ConfigError:
        raise
    except WeylstripError as exc:
        raise ScenarioError(cfg.mode, str(exc)) from exc
    except ValueError as exc:
        raise ScenarioError(cfg.mode, str(exc)) from exc
    return report


def _run_recover(cfg: ScenarioConfig) -> dict:
    rec_cfg = cfg.recover
    K = rec_cfg.get("K", 8)
    degree = rec_cfg.get("degree", max(K + 10, 24))
    T = float(rec_cfg.get("T", cfg.t_max))
    spec = dict(cfg.boundary)
    if spec["kind"] == "plane_wave":
        q = _parse_cmatrix(spec.get("q"), "boundary.q")
        fieldev = plane_wave(q, float(spec.get("k", 0.0)))
        trace = ingest_boundary(lambda t: fieldev.v(0.0, t),
                                lambda t: fieldev.v_x(0.0, t), T, degree)
    elif spec["kind"] == "zero":
        zmat = np.zeros((cfg.sig.m1, cfg.sig.m2))
        trace = ingest_boundary(zmat, zmat, T, degree)
    else:
        trace = _build_trace(cfg)
        if trace.degree < K + 4:
            raise ConfigError("boundary csv degree too small for recover.K")
    jet = corner_jet(trace, K)
    K_use = rec_cfg.get("K_use", K)
    x_hi = float(rec_cfg.get("x_max", 0.5))
    n_x = int(rec_cfg.get("x_points", 9))
    xg = np.linspace(0.0, x_hi, n_x)
    vals, last = taylor_reconstruct(jet, xg, K_use)
    records = []
    for i, x in enumerate(xg):
        records.append({"z": [0.0, 0.0], "coord": float(x),
                        "phi": _encode_cmatrix(vals[i]),
                        "uncertainty": float(last[i]), "flags": []})
    return {"records": records,
            "summary": {"recursion_residual": jet.recursion_residual(),
                        "jet0": [_encode_cmatrix(j) for j in jet.jet0]}}


# -- report emission ----------------------------------------------------------

def emit_report(report: dict, path, fmt: str = "json") -> str:
    """Write the report; json carries the full structure, csv one row per
    record with 17-significant-digit numbers."""
    path = str(path)
    if fmt == "json":
        with open(path, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    records = report.get("records", [])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        if records:
            phi = records[0]["phi"]
            rows, cols = len(phi), len(phi[0])
        else:
            rows = cols = 0
        header = ["z_re", "z_im", "coord"]
        for i in range(rows):
            for j in range(cols):
                header += [f"phi_{i}_{j}_re", f"phi_{i}_{j}_im"]
        header += ["uncertainty", "flags"]
        wr.writerow(header)
        for rec in records:
            row = [f"{rec['z'][0]:.17g}", f"{rec['z'][1]:.17g}", f"{rec['coord']:.17g}"]
            for i in range(rows):
                for j in range(cols):
                    row += [f"{rec['phi'][i][j][0]:.17g}", f"{rec['phi'][i][j][1]:.17g}"]
            row += [f"{rec['uncertainty']:.17g}", ";".join(rec.get("flags", []))]
            wr.writerow(row)
    return path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="weylstrip",
        description="Weyl-function pipeline for Dirac systems on the half-line")
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True, help="path to the JSON scenario config")
    parser.add_argument("--out", help="output path (overrides config output.path)")
    parser.add_argument("--format", choices=("json", "csv"), dest="fmt",
                        help="output format (overrides config output.format)")
    parser.add_argument("--workers", type=int, default=1,
                        help="parallel workers over z values")
    args = parser.parse_args(argv)

    level = os.environ.get("WEYLSTRIP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))

    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = ScenarioConfig.from_dict(raw, mode=args.mode)
        report = run_scenario(cfg, workers=max(1, args.workers))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ScenarioError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3

    out_path = args.out or cfg.out_path
    fmt = args.fmt or cfg.out_format
    if out_path:
        try:
            emit_report(report, out_path, fmt)
        except OSError as exc:
            print(f"numerical failure: stage emit-report: {exc}", file=sys.stderr)
            return 3
        log.info("report written to %s", out_path)
    else:
        json.dump(report, sys.stdout, indent=2, sort_keys=True)
        print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
