"""Command-line experiment runner.

Every subcommand reads an optional JSON config (merged over its defaults),
writes ``<command>.csv`` and ``<command>.json`` into ``--out`` and exits with

* 0 when every check passed,
* 1 when a check failed,
* 2 for an invalid configuration,
* 3 when a precondition of a computation is violated.

Reports embed the SHA-256 of the canonical config, the seed and the versions
of the package and its numerical dependencies; no timestamps are written, so
identical inputs produce identical files.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np

from .embedding import EmbedField, GammaMap, PullbackField, as_layers, embed
from .geometry import Strip, StripUnion, Tree
from .outer import (ExponentTuple, OuterSpec, field_point_cloud, greedy_cover, inequality_sampler,
                    localized_norm, outer_lp)
from .signal import ParameterError, ResolutionError, SampledSignal, set_fft_workers
from .sizes import Quadrature, SizeSpec, default_family
from .transform import (AliasingError, SupportSeparationError, TruncationRegion, c_beta,
                        direct_bht, wp_representation)
from .wavepacket import make_mother_packet

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_PRECONDITION = 0, 1, 2, 3

_THREADS = 1

_BETAS = [2.0**-k for k in range(9)]

DEFAULTS = {
    "multiplier": {"r": 2.0**-5, "betas": _BETAS, "per_octave": 4096, "points_per_r": 256},
    "reconstruct": {
        "r": 2.0**-5, "beta": 0.125, "n": 1024, "spacing": 0.125,
        "f1_modes": [8, 24, 40, -16, 56, -72], "f2_modes": [-24, 16, 48, -40, 88, 32],
        "eta_range": [-50.0, 50.0], "t_ranges": [[0.5, 4.0], [0.1, 20.0], [0.01, 200.0]],
        "window": 0.5, "tol": 1e-2, "per_octave": 256, "eta_per_r": 64,
    },
    "sweep-beta": {
        "betas": _BETAS, "triples": [[2.0, 2.0, 1.0], [4.0, 4.0, 2.0], [3.0, 6.0, 2.0]],
        "pairs": 10, "n": 256, "spacing": 0.25, "band": 0.5, "modes": 6, "factor": 3.0,
    },
    "norms": {
        "n": 256, "spacing": 0.25, "band": 1.0, "modes": 5, "r": 0.25,
        "size": {"kind": "lebesgue", "u": 2.0, "v": "inf"}, "p": 2.0,
        "outer": {"band": [-1.0, 1.0], "scales": [1.0, 2.0, 4.0], "x_range": [-4.0, 4.0],
                  "xi_range": [-1.0, 1.0]},
        "strips": [[-1.0, 1.5], [1.0, 1.0]], "q": 4.0, "r_local": 2.0,
    },
    "cover": {
        "n": 256, "spacing": 0.25, "band": 2.0, "modes": 6, "r": 0.25, "lambda": 0.1,
        "tree_band": [-4.5, 4.5], "inner_band": [-0.1, 0.1], "side": "+",
        "eta_range": [-4.0, 4.0], "y_range": [-16.0, 16.0], "t_range": [0.03, 0.5],
        "points": [64, 96, 12], "scales": [0.125, 0.25, 0.5], "xi_step": 0.25,
    },
    "check": {
        "kinds": ["rn_domination"], "trials": 5, "r": 0.25, "n": 256, "spacing": 0.25,
        "band": 1.0, "modes": 4, "tree_band": [-4.5, 4.5], "betas": _BETAS, "factor": 3.0,
    },
}


class ConfigError(ValueError):
    """Invalid configuration."""


# ---------------------------------------------------------------------------
# helpers


def _versions():
    out = {}
    for name in ("artifact", "numpy", "scipy", "sympy"):
        try:
            out[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            out[name] = "unknown"
    return out


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"not serializable: {type(x)}")


def _merge(command, user):
    cfg = json.loads(json.dumps(DEFAULTS[command]))
    for k, v in (user or {}).items():
        if k not in cfg:
            raise ConfigError(f"unknown key {k!r} for {command}")
        if isinstance(cfg[k], dict) and isinstance(v, dict):
            cfg[k].update(v)
        else:
            cfg[k] = v
    return cfg


def _num(x):
    return np.inf if x in ("inf", "Infinity") else float(x)


def _random_signal(rng, n, spacing, band, modes) -> SampledSignal:
    L = n * spacing
    kmax = int(np.floor(band * L))
    if kmax < 1 or modes < 1:
        return SampledSignal(np.zeros(n, complex), spacing)
    ks = rng.choice(np.arange(-kmax, kmax + 1), size=min(modes, 2 * kmax + 1), replace=False)
    c = rng.normal(size=ks.size) + 1j * rng.normal(size=ks.size)
    return SampledSignal.from_spectrum(np.sort(ks) / L, c[np.argsort(ks)], n, spacing)


def _parallel_map(fn, items):
    """Order-preserving map over independent experiments."""
    items = list(items)
    if _THREADS <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=_THREADS) as pool:
        return list(pool.map(fn, items))


def _write(out: Path, command, header, rows, report):
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    (out / f"{command}.csv").write_text(buf.getvalue())
    (out / f"{command}.json").write_text(json.dumps(report, sort_keys=True, indent=2, default=_jsonable) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_multiplier(cfg, rng):
    r = float(cfg["r"])
    phi = make_mother_packet(r)
    rows, ok = [], True
    lo, hi = r**2 / 8, 8 * r**2
    consts = _parallel_map(lambda b: c_beta(phi, float(b), per_octave=int(cfg["per_octave"]),
                                            points_per_r=int(cfg["points_per_r"])), cfg["betas"])
    for beta, C in zip(cfg["betas"], consts):
        ok &= lo < C < hi
        rows.append((float(beta), C, lo, hi))
    return ["beta", "C_beta", "lower_bound", "upper_bound"], rows, {"pass": bool(ok)}


def cmd_reconstruct(cfg, rng):
    n, dx, beta = int(cfg["n"]), float(cfg["spacing"]), float(cfg["beta"])
    L = n * dx
    phi = make_mother_packet(float(cfg["r"]))

    def sig(modes):
        modes = np.asarray(modes, float)
        if modes.size == 0:
            return SampledSignal(np.zeros(n, complex), dx)
        c = rng.normal(size=modes.size) + 1j * rng.normal(size=modes.size)
        return SampledSignal.from_spectrum(modes / L, c, n, dx)

    f1, f2 = sig(cfg["f1_modes"]), sig(cfg["f2_modes"])
    target = direct_bht(f1, f2, beta).samples / (np.pi * 1j)
    C = c_beta(phi, beta)
    x = f1.x
    mid = 0.5 * (x[0] + x[-1])
    win = np.abs(x - mid) <= 0.5 * float(cfg["window"]) * L
    scale = np.linalg.norm(target[win])
    rows, errs = [], []
    for k, tr in enumerate(cfg["t_ranges"]):
        region = TruncationRegion(tuple(cfg["eta_range"]), tuple(tr))
        out, tail = wp_representation(f1, f2, beta, phi, region, per_octave=int(cfg["per_octave"]),
                                      eta_per_r=int(cfg["eta_per_r"]), const=C)
        diff = np.linalg.norm(out.samples[win] - target[win])
        err = diff / scale if scale > 0 else diff
        errs.append(err)
        rows.append((k, err, tail))
    errs = np.array(errs)
    decreasing = bool(np.all(np.diff(errs) < 0) or np.all(errs == 0))
    ok = decreasing and errs[-1] < float(cfg["tol"])
    return (["region_index", "rel_L2_error", "tail_estimate"], rows,
            {"pass": ok, "decreasing": decreasing, "C_beta": C})


def bht_lp_ratio(f1, f2, beta, p1, p2):
    """``||BHT_beta[f1, f2]||_p / (||f1||_p1 ||f2||_p2)`` with ``1/p = 1/p1 + 1/p2``."""
    p = 1.0 / (1.0 / p1 + 1.0 / p2)
    den = f1.lp_norm(p1) * f2.lp_norm(p2)
    return direct_bht(f1, f2, beta).lp_norm(p) / den if den > 0 else 0.0


def cmd_sweep_beta(cfg, rng):
    rows, verdicts = [], []
    betas = [float(b) for b in cfg["betas"]]
    for ti, (p1, p2, p) in enumerate(cfg["triples"]):
        if not np.isclose(1 / p, 1 / p1 + 1 / p2):
            raise ConfigError(f"triple {ti}: need 1/p = 1/p1 + 1/p2")
        for pair in range(int(cfg["pairs"])):
            f1 = _random_signal(rng, int(cfg["n"]), float(cfg["spacing"]), float(cfg["band"]), int(cfg["modes"]))
            f2 = _random_signal(rng, int(cfg["n"]), float(cfg["spacing"]), float(cfg["band"]), int(cfg["modes"]))
            ratios = _parallel_map(lambda b: bht_lp_ratio(f1, f2, b, p1, p2), betas)
            for b, q in zip(betas, ratios):
                rows.append((ti, p1, p2, p, pair, b, q))
            ref = ratios[0]
            ok = bool(max(ratios) <= float(cfg["factor"]) * ref) if ref > 0 else bool(max(ratios) == 0)
            verdicts.append({"triple": ti, "pair": pair, "max_over_ref": max(ratios) / ref if ref else 0.0,
                             "max_over_min": max(ratios) / min(ratios) if min(ratios) > 0 else 0.0,
                             "pass": ok})
    ok = all(v["pass"] for v in verdicts)
    return (["triple", "p1", "p2", "p", "pair", "beta", "ratio"], rows, {"pass": ok, "verdicts": verdicts})


def _field_from_cfg(cfg, rng):
    f = _random_signal(rng, int(cfg["n"]), float(cfg["spacing"]), float(cfg["band"]), int(cfg["modes"]))
    return f, embed(f, None, make_mother_packet(float(cfg["r"])))


def cmd_norms(cfg, rng):
    _, F = _field_from_cfg(cfg, rng)
    s = cfg["size"]
    size = SizeSpec(kind=s["kind"], u=_num(s["u"]), v=_num(s["v"]))
    o = cfg["outer"]
    spec = OuterSpec(band=tuple(o["band"]), scales=tuple(o["scales"]), x_range=tuple(o["x_range"]),
                     xi_range=tuple(o["xi_range"]))
    p = _num(cfg["p"])
    strong, prof = outer_lp(F, size, spec, p, return_profile=True)
    weak = outer_lp(F, size, spec, p, weak=True)
    V = StripUnion([Strip(float(x), float(sc)) for x, sc in cfg["strips"]]) if cfg["strips"] else None
    local = {}
    if V is not None:
        ex = ExponentTuple(q=_num(cfg["q"]), r=_num(cfg["r_local"]))
        local["fLq_mu1"] = localized_norm(F, size, "fLq_mu1", ex, V, spec)
        local["fLq_muinf"] = localized_norm(F, size, "fLq_muinf", ex, V, spec)
        local["X_qr"] = localized_norm(F, size, "X_qr", ex, V, spec)
    rows = [(lam, mu, res) for lam, mu, res in prof]
    return (["lambda", "measure", "residual"], rows,
            {"pass": True, "strong": strong, "weak": weak, "local": local})


def cmd_cover(cfg, rng):
    _, F = _field_from_cfg(cfg, rng)
    cloud = field_point_cloud(F, tuple(cfg["eta_range"]), tuple(cfg["y_range"]), tuple(cfg["t_range"]),
                              tuple(int(v) for v in cfg["points"]))
    band = tuple(cfg["tree_band"])
    spec = OuterSpec(band=band, scales=tuple(cfg["scales"]), x_range=tuple(cfg["y_range"]),
                     xi_range=(cfg["eta_range"][0] - 1, cfg["eta_range"][1] + 1), xi_step=float(cfg["xi_step"]))
    res = greedy_cover(cloud, float(cfg["lambda"]), band, tuple(cfg["inner_band"]), cfg["side"], spec)
    pc = res.postconditions()
    rows = [(T.xi, T.x, T.s, m) for T, m in zip(res.selected, res.masses)]
    rep = json.loads(res.to_json())
    rep["pass"] = bool(pc["residual_ok"] and pc["disjoint"] and pc["mass_ok"])
    return ["xi", "x", "s", "mass"], rows, rep


def cmd_check(cfg, rng):
    r = float(cfg["r"])
    phi = make_mother_packet(r)
    band = tuple(cfg["tree_band"])
    spec = SizeSpec(packet_params=(r, 4), quad=Quadrature(64, 12, 4, 2.0**-6))
    rows, reports = [], {}
    ok = True
    for kind in cfg["kinds"]:
        cases = []
        for trial in range(int(cfg["trials"])):
            fs = [_random_signal(rng, int(cfg["n"]), float(cfg["spacing"]), float(cfg["band"]), int(cfg["modes"]))
                  for _ in range(3)]
            if kind == "rn_domination":
                T = Tree(float(rng.uniform(-0.5, 0.5)), float(rng.uniform(-4, 4)), float(2.0 ** rng.integers(0, 3)), band)
                cases.append({"factors": [embed(f, None, phi) for f in fs], "tree": T, "param": trial})
            elif kind in ("single_tree", "uniform_embedding"):
                for beta in cfg["betas"]:
                    beta = float(beta)
                    if kind == "single_tree":
                        E = [embed(f, None, phi) for f in fs]
                        facs = [E[0], PullbackField(E[1], GammaMap.bht(2, beta)),
                                PullbackField(E[2], GammaMap.bht(3, beta))]
                        cases.append({"factors": facs, "tree": Tree(0.0, 0.0, 1.0, band), "beta": beta})
                    else:
                        cases.append({"f": fs[0], "family": phi, "beta": beta, "p": 2.0})
            else:
                raise ConfigError(f"unsupported check kind {kind!r}")
        rep = inequality_sampler(kind, cases, spec=spec, factor=float(cfg["factor"]))
        reports[kind] = json.loads(rep.to_json())
        for prm, q in zip(rep.params, rep.ratios):
            rows.append((kind, prm, q))
        if kind == "rn_domination":
            ok &= rep.max <= (band[1] - band[0]) / 2 * (1 + 1e-9)
        else:
            ok &= rep.uniform
    return ["kind", "param", "ratio"], rows, {"pass": bool(ok), "reports": reports}


COMMANDS = {
    "multiplier": cmd_multiplier,
    "reconstruct": cmd_reconstruct,
    "sweep-beta": cmd_sweep_beta,
    "norms": cmd_norms,
    "cover": cmd_cover,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tfkit", description="Time-frequency toolkit experiments.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", type=Path, help="JSON file merged over the command defaults")
    ap.add_argument("--out", type=Path, default=Path("tfkit-out"), help="output directory")
    ap.add_argument("--seed", type=int, default=0, help="seed of the random inputs (u64)")
    ap.add_argument("--threads", type=int, default=1, help="FFT worker threads")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        user = json.loads(args.config.read_text()) if args.config else {}
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        cfg = _merge(args.command, user)
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if args.threads < 1:
            raise ConfigError("threads must be positive")
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    global _THREADS
    _THREADS = args.threads
    set_fft_workers(args.threads)
    rng = np.random.default_rng(args.seed)
    try:
        header, rows, result = COMMANDS[args.command](cfg, rng)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SupportSeparationError, AliasingError, ResolutionError) as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except ParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = {
        "command": args.command,
        "config": cfg,
        "config_hash": hashlib.sha256(_canonical({"command": args.command, "config": cfg,
                                                  "seed": args.seed}).encode()).hexdigest(),
        "seed": args.seed,
        "versions": _versions(),
        "result": result,
    }
    _write(args.out, args.command, header, rows, report)
    status = EXIT_PASS if result.get("pass", True) else EXIT_FAIL
    print(f"{args.command}: {'pass' if status == EXIT_PASS else 'FAIL'} -> {args.out}")
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
