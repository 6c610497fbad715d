"""Command-line front end: config resolution, dispatch, artifacts, manifest.

Configuration is flat key=value; values come from defaults, then an
optional config file, then command-line flags (flags win). Every run
writes a manifest echoing the resolved configuration plus artifact
checksums, and any run can be repeated byte-identically from its manifest.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import time
from typing import Dict, List, Optional

import numpy as np

from . import __version__, catalog, priors, stationary
from .models import QUADRATIC
from .experiments import (ExperimentReport, VarianceSweepConfig,
                          covariance_lag, rate_sweep, variance_sweep)
from .kernels import Bandwidths, build_kernel, estimate_point
from .simulate import SimulationConfig, simulate

REQUIRED = object()

_COMMON = {
    "out": (str, None, "output directory (default $DHLAB_OUT or ./runs)"),
    "seed": (int, 0, "root seed"),
    "jobs": (int, os.cpu_count() or 1,
             "replication-level worker threads (results independent of it)"),
}

SCHEMAS: Dict[str, Dict[str, tuple]] = {
    "simulate": {
        "model": (str, "paper-sim", "catalog model name"),
        "T": (float, 10.0, "horizon"),
        "dt": (float, 1e-3, "time step"),
        "burn_in": (float, 50.0, "discarded lead-in time"),
        "init": (str, "0,0", "x,y start or 'stationary'"),
        "eta": (float, 0.5, "gaussian-eta damping"),
        "sigma": (float, 1.0, "gaussian-eta noise scale"),
    },
    "estimate": {
        "model": (str, "paper-sim", "catalog model name"),
        "T": (float, 200.0, "horizon"),
        "dt": (float, 1e-3, "time step"),
        "burn_in": (float, 50.0, "discarded lead-in time"),
        "point": (str, REQUIRED, "x0,y0 target point(s); ';'-separated"),
        "h1": (float, 0.1, "x bandwidth"),
        "h2": (float, 0.1, "y bandwidth"),
        "L": (int, 1, "kernel moment order"),
        "eta": (float, 0.5, "gaussian-eta damping"),
        "sigma": (float, 1.0, "gaussian-eta noise scale"),
    },
    "variance-sweep": {
        "model": (str, REQUIRED, "catalog model name"),
        "T": (float, REQUIRED, "horizon"),
        "reps": (int, REQUIRED, "replications"),
        "point": (str, REQUIRED, "x0,y0 target point"),
        "dt": (float, 1e-3, "time step"),
        "burn_in": (float, 50.0, "discarded lead-in time"),
        "h1_grid": (str, "log:-3:-1:5", "h1 grid"),
        "h2_grid": (str, "log:-2.4:-1:4", "h2 grid"),
        "L": (int, 1, "kernel moment order"),
        "eta": (float, 0.5, "gaussian-eta damping"),
        "sigma": (float, 1.0, "gaussian-eta noise scale"),
    },
    "rate-sweep": {
        "model": (str, "paper-sim", "catalog model name"),
        "point": (str, REQUIRED, "x0,y0 target point"),
        "k1": (float, 1.0, "x smoothness"),
        "k2": (float, 1.0, "y smoothness"),
        "T_grid": (str, "50,100,200,400", "horizons"),
        "reps": (int, 300, "replications per horizon"),
        "dt": (float, 1e-3, "time step"),
        "L": (int, 1, "kernel moment order"),
        "burn_in": (float, 50.0, "discarded lead-in time"),
    },
    "covariance-lag": {
        "model": (str, "paper-sim", "catalog model name"),
        "point": (str, "0,1.5", "x0,y0 target point"),
        "h1": (float, 0.3, "x bandwidth"),
        "h2": (float, 0.3, "y bandwidth"),
        "T": (float, 100.0, "horizon"),
        "reps": (int, 20, "replications"),
        "lags": (str, "0:10:0.5", "lag grid"),
        "dt": (float, 1e-3, "time step"),
        "L": (int, 1, "kernel moment order"),
    },
    "inverse-beta": {
        "density": (str, REQUIRED, "catalog density name"),
        "eta": (float, 0.5, "gaussian-eta damping"),
        "sigma": (float, 1.0, "noise scale entering the inverse map"),
        "grid": (str, "-3:3:0.5", "x and y grid"),
    },
    "prior-build": {
        "variant": (str, REQUIRED, "y0_nonzero or y0_zero"),
        "k1": (float, 1.0, "x smoothness"),
        "k2": (float, 1.0, "y smoothness"),
        "T": (float, 1e5, "calibration horizon"),
        "eps": (float, 0.1, "amplitude slack"),
        "eta": (float, 0.5, "base damping"),
        "sigma": (float, 1.0, "noise scale"),
        "x0": (float, 0.0, "target position"),
        "y0": (float, 1.5, "target velocity (offset variant)"),
        "boost": (float, 1.0, "amplitude divisor boost"),
    },
    "prior-verify": {
        "variant": (str, "y0_nonzero", "y0_nonzero or y0_zero"),
        "h2_ladder": (str, "0.2,0.1,0.05", "slow widths"),
        "k2": (float, 1.0, "y smoothness"),
        "eps": (float, 0.1, "amplitude slack"),
        "eta": (float, 0.5, "base damping"),
        "sigma": (float, 1.0, "noise scale"),
    },
    "girsanov-check": {
        "variant": (str, "y0_nonzero", "y0_nonzero or y0_zero"),
        "T": (float, 20.0, "path horizon"),
        "T_cal": (float, 1e4, "prior calibration horizon"),
        "reps": (int, 500, "replications"),
        "k1": (float, 1.0, "x smoothness"),
        "k2": (float, 1.0, "y smoothness"),
        "eps": (float, 0.1, "amplitude slack"),
        "eta": (float, 0.5, "base damping"),
        "sigma": (float, 1.0, "noise scale"),
        "dt": (float, 1e-3, "time step"),
    },
}


class ConfigError(ValueError):
    def __init__(self, message: str, context: Optional[dict] = None):
        super().__init__(message)
        self.context = context or {}


def _parse_value(key: str, raw, typ):
    if isinstance(raw, typ):
        return raw
    try:
        if typ is bool:
            return str(raw).lower() in ("1", "true", "yes")
        return typ(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"cannot parse {key}={raw!r} as {typ.__name__}",
                          {"key": key, "value": str(raw)})


def parse_point(s: str):
    parts = [float(p) for p in str(s).split(",")]
    if len(parts) != 2:
        raise ConfigError(f"point must be 'x,y', got {s!r}", {"value": s})
    return tuple(parts)


def parse_grid(s: str) -> np.ndarray:
    """Grids: 'log:a:b:n' (10^linspace), 'lo:hi:step' (inclusive), or csv."""
    s = str(s)
    if s.startswith("log:"):
        a, b, n = s[4:].split(":")
        return np.power(10.0, np.linspace(float(a), float(b), int(n)))
    if s.count(":") == 2:
        lo, hi, step = (float(p) for p in s.split(":"))
        n = int(round((hi - lo) / step))
        return lo + step * np.arange(n + 1)
    return np.array([float(p) for p in s.split(",")])


def load_config_file(path: str) -> Dict[str, str]:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"malformed line {lineno} in {path}: {line!r}",
                                  {"file": path, "line": lineno})
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def resolve_params(command: str, sources: List[Dict[str, str]]) -> Dict:
    """Layer config sources over schema defaults; reject unknown keys and
    report every missing required key at once."""
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}",
                          {"available": sorted(SCHEMAS)})
    schema = dict(SCHEMAS[command])
    schema.update(_COMMON)

    merged: Dict[str, str] = {}
    unknown = []
    for src in sources:
        for k, v in src.items():
            if k not in schema:
                unknown.append(k)
            merged[k] = v
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(set(unknown))}",
                          {"keys": sorted(set(unknown)),
                           "allowed": sorted(schema)})

    params: Dict = {}
    missing = []
    for key, (typ, default, _help) in schema.items():
        if key in merged:
            params[key] = _parse_value(key, merged[key], typ)
        elif default is REQUIRED:
            missing.append(key)
        else:
            params[key] = default
    if missing:
        raise ConfigError(f"missing required keys: {sorted(missing)}",
                          {"keys": sorted(missing)})
    return params


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _model_params(params) -> dict:
    if params.get("model") == "gaussian-eta":
        return {"eta": params["eta"], "sigma": params["sigma"]}
    return {}


def _basename(command: str, params: Dict) -> str:
    bits = [command.replace("-", "_")]
    if "model" in params:
        bits.append(str(params["model"]))
    if "T" in params:
        bits.append(f"T{params['T']:g}")
    bits.append(f"s{params['seed']}")
    return "_".join(bits)


def _run_simulate(params, outdir, base) -> List[str]:
    model = catalog.get_model(params["model"], **_model_params(params))
    init = params["init"]
    if init == "stationary":
        if model.stationary is None or model.stationary.sampler is None:
            raise ConfigError("model has no stationary sampler",
                              {"model": params["model"]})
        init = model.stationary
    else:
        init = parse_point(init)
    cfg = SimulationConfig(model=model, T=params["T"], dt=params["dt"],
                           burn_in=params["burn_in"], init=init,
                           seed=params["seed"])
    path = simulate(cfg)
    out_csv = os.path.join(outdir, base + "_path.csv")
    out_npz = os.path.join(outdir, base + "_path.npz")
    path.to_csv(out_csv)
    path.to_npz(out_npz)
    return [out_csv, out_npz]


def _run_estimate(params, outdir, base) -> List[str]:
    model = catalog.get_model(params["model"], **_model_params(params))
    cfg = SimulationConfig(model=model, T=params["T"], dt=params["dt"],
                           burn_in=params["burn_in"], seed=params["seed"])
    path = simulate(cfg)
    kernel = build_kernel(params["L"])
    bw = Bandwidths(h1=params["h1"], h2=params["h2"])
    rows = []
    for chunk in str(params["point"]).split(";"):
        x0, y0 = parse_point(chunk)
        est = estimate_point(path, x0, y0, bw, kernel)
        rows.append((x0, y0, bw.h1, bw.h2, est.T, est.value, est.n_samples))
    rep = ExperimentReport(
        kind="estimate",
        columns=["x0", "y0", "h1", "h2", "T", "value", "n_samples"],
        rows=rows, metadata={k: str(v) for k, v in params.items()})
    return rep.write(outdir, base)


def _run_variance_sweep(params, outdir, base) -> List[str]:
    cfg = VarianceSweepConfig(
        model_name=params["model"], point=parse_point(params["point"]),
        T=params["T"], n_rep=params["reps"],
        h1_grid=parse_grid(params["h1_grid"]),
        h2_grid=parse_grid(params["h2_grid"]),
        dt=params["dt"], seed_base=params["seed"],
        kernel_order=params["L"], burn_in=params["burn_in"],
        model_params=_model_params(params))
    return variance_sweep(cfg, n_jobs=params["jobs"]).write(outdir, base)


def _run_rate_sweep(params, outdir, base) -> List[str]:
    point = parse_point(params["point"])
    rep = rate_sweep(
        k1=params["k1"], k2=params["k2"], point=point,
        y0_is_zero=(point[1] == 0.0),
        T_grid=parse_grid(params["T_grid"]).tolist(),
        n_rep=params["reps"], seed_base=params["seed"],
        model_name=params["model"], dt=params["dt"],
        kernel_order=params["L"], burn_in=params["burn_in"],
        n_jobs=params["jobs"])
    return rep.write(outdir, base)


def _run_covariance_lag(params, outdir, base) -> List[str]:
    rep = covariance_lag(
        model_name=params["model"], point=parse_point(params["point"]),
        bw=Bandwidths(h1=params["h1"], h2=params["h2"]),
        kernel=build_kernel(params["L"]), T=params["T"],
        n_rep=params["reps"], lag_grid=parse_grid(params["lags"]).tolist(),
        seed_base=params["seed"], dt=params["dt"], n_jobs=params["jobs"])
    return rep.write(outdir, base)


def _run_inverse_beta(params, outdir, base) -> List[str]:
    if params["density"] == "gaussian-eta":
        density = catalog.get_density(params["density"], eta=params["eta"])
    else:
        density = catalog.get_density(params["density"])
    grid = parse_grid(params["grid"])
    rows = []
    for x in grid:
        for y in grid:
            b = stationary.beta_from_density(density, QUADRATIC,
                                             params["sigma"], float(x),
                                             float(y))
            rows.append((float(x), float(y), b))
    rep = ExperimentReport(kind="inverse-beta", columns=["x", "y", "beta"],
                           rows=rows,
                           metadata={k: str(v) for k, v in params.items()})
    return rep.write(outdir, base)


def _run_prior_build(params, outdir, base) -> List[str]:
    spec = priors.calibrate_prior(
        k1=params["k1"], k2=params["k2"], T=params["T"],
        variant=params["variant"], eps=params["eps"], eta=params["eta"],
        sigma=params["sigma"], x0=params["x0"],
        y0=(params["y0"] if params["variant"] == priors.VARIANT_OFFSET
            else None),
        amplitude_boost=params["boost"])
    priors.build_prior(spec)
    info = {"variant": spec.variant, "h1": spec.h1, "h2": spec.h2,
            "m_amp": spec.m_amp, "eta": spec.eta, "sigma": spec.sigma,
            "x0": spec.x0, "y0": spec.y0, "margins": spec.margins,
            "bump_certificate": spec.bump.moment_certificate,
            "bump_sup_norm": spec.bump.sup_norm}
    json_path = os.path.join(outdir, base + "_prior.json")
    with open(json_path, "w") as fh:
        json.dump(info, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")

    fld = priors.PerturbationField(spec)
    xlo, xhi, ylo, yhi = spec.rect
    xs = np.linspace(xlo, xhi, 21)
    ys = np.linspace(ylo, yhi, 21)
    rows = [(float(x), float(y), float(fld.delta(x, y)))
            for x in xs for y in ys]
    rep = ExperimentReport(kind="prior-delta-field",
                           columns=["x", "y", "delta"], rows=rows,
                           metadata=info)
    return [json_path] + rep.write(outdir, base + "_delta")


def _run_prior_verify(params, outdir, base) -> List[str]:
    ladder = [priors.prior_from_widths(params["variant"], float(h2),
                                       k2=params["k2"], eps=params["eps"],
                                       eta=params["eta"],
                                       sigma=params["sigma"])
              for h2 in parse_grid(params["h2_ladder"])]
    report = priors.verify_perturbation_bounds(ladder)
    out = os.path.join(outdir, base + "_lemma.json")
    with open(out, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    return [out]


def _run_girsanov_check(params, outdir, base) -> List[str]:
    spec = priors.calibrate_prior(
        k1=params["k1"], k2=params["k2"], T=params["T_cal"],
        variant=params["variant"], eps=params["eps"], eta=params["eta"],
        sigma=params["sigma"])
    res = priors.girsanov_ensemble(spec, T=params["T"], n_rep=params["reps"],
                                   seed_base=params["seed"], dt=params["dt"],
                                   n_jobs=params["jobs"])
    mean_i = float(np.mean(res["i_t"]))
    stats = {"mean_i_t": mean_i, "expected_i_t": res["expected_i_t"],
             "i_t_ratio": mean_i / res["expected_i_t"],
             "var_m_mart": float(np.var(res["m_mart"], ddof=1)),
             "isometry_target": 2.0 * mean_i,
             "mean_log_ratio": float(np.mean(res["log_ratio"]))}
    out = os.path.join(outdir, base + "_girsanov.json")
    with open(out, "w") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    rep = ExperimentReport(
        kind="girsanov-check", columns=["rep", "log_ratio", "i_t", "m_mart"],
        rows=[(i, float(res["log_ratio"][i]), float(res["i_t"][i]),
               float(res["m_mart"][i])) for i in range(params["reps"])],
        metadata=stats)
    return [out] + rep.write(outdir, base)


_RUNNERS = {
    "simulate": _run_simulate,
    "estimate": _run_estimate,
    "variance-sweep": _run_variance_sweep,
    "rate-sweep": _run_rate_sweep,
    "covariance-lag": _run_covariance_lag,
    "inverse-beta": _run_inverse_beta,
    "prior-build": _run_prior_build,
    "prior-verify": _run_prior_verify,
    "girsanov-check": _run_girsanov_check,
}


def _split_flags(argv: List[str]) -> Dict[str, str]:
    flags = {}
    i = 0
    while i < len(argv):
        tok = argv[i]
        if not tok.startswith("--"):
            raise ConfigError(f"expected --key, got {tok!r}", {"token": tok})
        key = tok[2:].replace("-", "_")
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            if i + 1 >= len(argv):
                raise ConfigError(f"flag --{key} needs a value", {"key": key})
            val = argv[i + 1]
            i += 1
        flags[key] = val
        i += 1
    return flags


def run(command: str, params: Dict) -> int:
    """Dispatch one resolved command; write artifacts and manifest."""
    outdir = params.get("out") or os.environ.get("DHLAB_OUT") or "./runs"
    os.makedirs(outdir, exist_ok=True)
    base = _basename(command, params)
    t0 = time.monotonic()
    artifacts = _RUNNERS[command](params, outdir, base)
    wall = time.monotonic() - t0

    manifest = {
        "command": command,
        "params": {k: v for k, v in params.items() if k != "out"},
        "version": __version__,
        "wall_time_s": wall,
        "artifacts": {os.path.basename(p): _sha256(p) for p in artifacts},
    }
    manifest_path = os.path.join(outdir, base + "_manifest.json")
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(artifacts)} artifact(s) + manifest under {outdir}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if not argv:
            raise ConfigError("usage: dhlab <command> [--key value ...] | "
                              "dhlab --from-manifest <file>",
                              {"commands": sorted(SCHEMAS)})
        if argv[0] == "--from-manifest":
            if len(argv) < 2:
                raise ConfigError("--from-manifest needs a file", {})
            with open(argv[1]) as fh:
                manifest = json.load(fh)
            command = manifest["command"]
            sources = [dict(manifest["params"])]
            sources.append(_split_flags(argv[2:]))
        else:
            command = argv[0]
            flags = _split_flags(argv[1:])
            sources = []
            if "config" in flags:
                sources.append(load_config_file(flags.pop("config")))
            sources.append(flags)
        params = resolve_params(command, [
            {k: v for k, v in src.items()} for src in sources])
        return run(command, params)
    except ConfigError as exc:
        _emit_error("config-error", str(exc), exc.context)
        return 2
    except (KeyError, ValueError, RuntimeError) as exc:
        _emit_error("runtime-error", str(exc), {"type": type(exc).__name__})
        return 3


def _emit_error(code: str, message: str, context: dict) -> None:
    print(json.dumps({"code": code, "message": message, "context": context},
                     sort_keys=True, default=str), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
