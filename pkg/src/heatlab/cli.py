"""Configuration-driven experiment runner.

One process, one TOML config, deterministic outputs: CSV for grids and
tables, JSON for verdict reports.  Every JSON report embeds the resolved
configuration, the library version, and the quadrature tolerances; sample
CSVs carry the config hash in a header comment so reruns are verifiable
byte for byte.

Exit codes: 0 success, 2 config validation failure, 3 truncation-cap
exceedance, 4 inconclusive quadrature inside a required verdict.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .classical import (
    LinearClassicalModel,
    harmonic_law,
    harmonic_model_from_modes,
    harmonic_uniform_check,
    linear_exp_moment,
    linear_gaussian_law,
)
from .fockttm import (
    DimensionCapError,
    FiniteModel,
    TTMSpectralEngine,
    jarzynski_defect,
    law_moments,
    moment_growth_scan,
    tl_convergence_impurity,
    tl_convergence_vanhove,
    trend_slope,
    vanhove_discrete_char,
    vanhove_truncated_model,
)
from .formfactor import form_factor_from_config
from .numerics import QuadratureRule
from .oneparticle import (
    BoseEinstein,
    FermiDirac,
    build_one_particle,
    gauss_bath,
    inverse_sqrt_rescaling_check,
    oscillation_infimum,
    power_weighted_orbit_scan,
    propagator_difference_defect,
)
from .stats import tail_report
from .vanhove import (
    DivergentMassError,
    IntensityMeasure,
    PoissonLKLaw,
    char_fn,
    cumulant,
    detailed_balance_defect,
    equivalence_scan_exp,
    equivalence_scan_moments,
    sample,
)

MODELS = ("vanhove", "classical-linear", "classical-harmonic",
          "fermion-impurity", "boson-oscillator", "ttm-generic")


class ConfigError(ValueError):
    """Config failed validation; the message names the offending field."""


@dataclass
class ExperimentConfig:
    model: str
    seed: int = 0
    threads: int = 1
    out: str = "out"
    raw: dict = field(default_factory=dict)

    def block(self, name: str, default=None):
        return self.raw.get(name, {} if default is None else default)

    def get(self, key, default=None, required=False):
        if key in self.raw:
            return self.raw[key]
        if required:
            raise ConfigError(f"missing required field {key!r}")
        return default

    def quadrature_rule(self) -> QuadratureRule:
        tol = self.raw.get("tolerances", {})
        try:
            return QuadratureRule(
                abs_tol=float(tol.get("abs_tol", 1e-10)),
                rel_tol=float(tol.get("rel_tol", 1e-8)),
                max_subdivisions=int(tol.get("max_subdivisions", 4096)),
                tail_cutoffs=tuple(tol.get("tail_cutoffs", (10.0, 1e2, 1e3, 1e4))),
            )
        except ValueError as exc:
            raise ConfigError(f"tolerances: {exc}") from None

    def resolved(self) -> dict:
        # the output path and thread count steer where/how, not what:
        # they stay out of the experiment identity
        out = {k: v for k, v in self.raw.items() if k not in ("out", "threads")}
        out.update({"model": self.model, "seed": self.seed})
        rule = self.quadrature_rule()
        out["tolerances"] = {
            "abs_tol": rule.abs_tol, "rel_tol": rule.rel_tol,
            "max_subdivisions": rule.max_subdivisions,
            "tail_cutoffs": list(rule.tail_cutoffs),
        }
        out["version"] = __version__
        return out

    def hash(self) -> str:
        canon = json.dumps(self.resolved(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def load_config(path, overrides=None, default_model=None) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from None
    overrides = overrides or {}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    model = raw.get("model", default_model)
    if model not in MODELS:
        raise ConfigError(f"model: expected one of {MODELS}, got {model!r}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed: must be an integer")
    threads = int(raw.get("threads", 1))
    if threads < 1:
        raise ConfigError("threads: must be >= 1")
    return ExperimentConfig(model=model, seed=seed, threads=threads,
                            out=str(raw.get("out", "out")), raw=raw)


def _grid(cfg: ExperimentConfig, key: str, required=True) -> list[float]:
    vals = cfg.get(key, required=required, default=[])
    if required and (not isinstance(vals, list) or len(vals) == 0):
        raise ConfigError(f"{key}: must be a nonempty list")
    try:
        return [float(v) for v in vals]
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: entries must be numbers") from None


def _form_factor(cfg: ExperimentConfig):
    block = cfg.block("formfactor")
    if not block:
        raise ConfigError("formfactor: missing block")
    try:
        return form_factor_from_config(block)
    except ValueError as exc:
        raise ConfigError(f"formfactor: {exc}") from None


def _write_csv(path: Path, header: list[str], rows, config_hash: str):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (np.floating,)):
        return repr(float(v))
    return v


def _write_json(path: Path, payload: dict, cfg: ExperimentConfig):
    payload = dict(payload)
    payload["config"] = cfg.resolved()
    payload["config_hash"] = cfg.hash()
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


class InconclusiveVerdictError(RuntimeError):
    pass


def _require_conclusive(report):
    if report.inconclusive:
        raise InconclusiveVerdictError(
            "required verdict is inconclusive; refine the quadrature rule")


# ---------------------------------------------------------------------------
# runners


def _run_vanhove(cfg: ExperimentConfig, outdir: Path) -> dict:
    f = _form_factor(cfg)
    beta = float(cfg.get("beta", required=True))
    t_grid = _grid(cfg, "t_grid")
    alpha_grid = _grid(cfg, "alpha_grid")
    n = int(cfg.get("n", 1))
    gamma = float(cfg.get("gamma", 1.0))
    window = cfg.get("window", [5.0, 8.0])
    if not (isinstance(window, list) and len(window) == 2 and window[0] < window[1]):
        raise ConfigError("window: must be [t1, t2] with t1 < t2")
    n_samples = int(cfg.get("n_samples", 0))
    rule = cfg.quadrature_rule()
    h = cfg.hash()

    char_rows = []
    cumulant_rows = []
    balance = {}

    def per_time(t):
        law = PoissonLKLaw(IntensityMeasure(f, beta, t, rule))
        rows = [(t, a, *_reim(char_fn(law, a))) for a in alpha_grid]
        cums = []
        for m_order in range(1, 2 * n + 3):
            v = cumulant(law, m_order)
            cums.append((t, m_order,
                         repr(float(np.real(v.value))) if v.is_convergent else "",
                         v.status))
        defect = detailed_balance_defect(law)
        return rows, cums, defect

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        for t, (rows, cums, defect) in zip(t_grid, pool.map(per_time, t_grid)):
            char_rows.extend(rows)
            cumulant_rows.extend(cums)
            balance[t] = defect

    _write_csv(outdir / "charfn.csv", ["t", "alpha", "re_E", "im_E"], char_rows, h)
    _write_csv(outdir / "cumulants.csv", ["t", "m", "kappa_m", "status"],
               cumulant_rows, h)

    mom_report = equivalence_scan_moments(f, beta, n, t_grid, tuple(window), rule)
    exp_report = equivalence_scan_exp(f, beta, gamma, t_grid, tuple(window), rule)
    _require_conclusive(mom_report)
    _require_conclusive(exp_report)

    if n_samples:
        t_sample = t_grid[-1]
        law = PoissonLKLaw(IntensityMeasure(f, beta, t_sample, rule))
        draws = sample(law, n_samples, np.random.default_rng(cfg.seed))
        _write_csv(outdir / "samples.csv", ["delta_q"],
                   [(float(v),) for v in draws], h)

    return {
        "model": "vanhove",
        "detailed_balance_defect": {repr(t): d for t, d in balance.items()},
        "moment_scan": mom_report.to_dict(),
        "exp_scan": exp_report.to_dict(),
    }


def _reim(z: complex):
    return float(np.real(z)), float(np.imag(z))


def _run_classical_linear(cfg: ExperimentConfig, outdir: Path) -> dict:
    block = cfg.block("classical")
    modes = block.get("modes")
    if not modes:
        raise ConfigError("classical.modes: must list [frequency, c_pi, c_phi] rows")
    try:
        model = LinearClassicalModel(tuple(tuple(m) for m in modes),
                                     block.get("covariance", 1.0))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"classical: {exc}") from None
    gamma = float(cfg.get("gamma", 1.0))
    t_grid = _grid(cfg, "t_grid")
    rows = []
    for t in t_grid:
        law = linear_gaussian_law(model, t)
        rows.append((t, law.mean, law.variance, linear_exp_moment(model, gamma, t)))
    _write_csv(outdir / "classical_linear.csv",
               ["t", "mean", "variance", "exp_moment"], rows, cfg.hash())
    return {"model": "classical-linear", "gamma": gamma,
            "coupling_norm_sq": model.coupling_norm_sq()}


def _run_classical_harmonic(cfg: ExperimentConfig, outdir: Path) -> dict:
    block = cfg.block("classical")
    freqs = block.get("frequencies")
    v = block.get("v")
    if not freqs or v is None:
        raise ConfigError("classical: needs frequencies and v for the harmonic model")
    try:
        model = harmonic_model_from_modes(freqs, np.asarray(v, dtype=float),
                                          block.get("covariance", 1.0))
    except ValueError as exc:
        raise ConfigError(f"classical: {exc}") from None
    gamma = float(cfg.get("gamma", 0.1))
    t_grid = _grid(cfg, "t_grid")
    rows = []
    for t in t_grid:
        law = harmonic_law(model, t)
        mean, second = law.moments(2)
        try:
            mgf = law.mgf(gamma)
        except ValueError:
            mgf = math.inf
        rows.append((t, mean, second - mean ** 2, mgf))
    _write_csv(outdir / "classical_harmonic.csv",
               ["t", "mean", "variance", "mgf"], rows, cfg.hash())
    chk = harmonic_uniform_check(model, gamma, t_grid)
    return {"model": "classical-harmonic", "gamma": gamma,
            "uniform_check": {
                "grid_max": chk.grid_max,
                "certified_bound": chk.certified_bound,
                "uniform_bound": chk.uniform_bound,
                "gamma_critical_uniform": chk.gamma_critical_uniform,
                "flow_norm_defect": chk.flow_norm_defect,
            }}


def _random_finite_model(rng, dim, beta, coupling):
    eps = np.sort(rng.uniform(0.0, 3.0, dim))
    h0 = np.diag(eps).astype(complex)
    v = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    v = coupling * (v + v.conj().T) / 2
    w = np.exp(-beta * eps)
    w /= w.sum()
    return FiniteModel(h0, v, w)


def _run_ttm_generic(cfg: ExperimentConfig, outdir: Path) -> dict:
    dim = int(cfg.get("dim", 8))
    if dim < 2 or dim > 64:
        raise ConfigError("dim: generic two-time models support 2..64")
    beta = float(cfg.get("beta", 1.0))
    coupling = float(cfg.get("coupling", 0.5))
    t_grid = _grid(cfg, "t_grid")
    rng = np.random.default_rng(cfg.seed)
    model = _random_finite_model(rng, dim, beta, coupling)
    engine = TTMSpectralEngine(model)
    atom_rows = []
    defects = []
    for t in t_grid:
        law = engine.distribution(t)
        for dq, p in law.atoms:
            atom_rows.append((t, dq, p))
        defects.append((t, jarzynski_defect(law, beta),
                        law_moments(law, [1])[0]))
    _write_csv(outdir / "atoms.csv", ["t", "delta_q", "p"], atom_rows, cfg.hash())
    _write_csv(outdir / "identities.csv",
               ["t", "jarzynski_defect", "mean_heat"], defects, cfg.hash())
    return {"model": "ttm-generic", "dim": dim, "beta": beta,
            "max_jarzynski_defect": max(d for _, d, _ in defects)}


def _run_impurity(cfg: ExperimentConfig, outdir: Path, statistics: str) -> dict:
    f = _form_factor(cfg)
    beta = float(cfg.get("beta", 1.0))
    n = int(cfg.get("n", 1))
    d_list = [int(d) for d in cfg.get("d_list", [4, 6, 8])]
    t_grid = _grid(cfg, "t_grid")
    kwargs = dict(
        eps_o=float(cfg.get("eps_o", 1.0)),
        e_per_mode=float(cfg.get("e_per_mode", 1.0)),
    )
    if statistics == "boson":
        kwargs["total_cap"] = int(cfg.get("n_max", 6))
        kwargs["ir_floor"] = float(cfg.get("delta", 1e-3))
    rows = moment_growth_scan(f, statistics, n, d_list, beta, t_grid, **kwargs)
    _write_csv(outdir / "moment_growth.csv", ["D", "dim", "max_moment", "argmax_t"],
               [(r["D"], r["dim"], r["max_moment"], r["argmax_t"]) for r in rows],
               cfg.hash())
    series_rows = [(r["D"], t, v) for r in rows for (t, v) in r["series"]]
    _write_csv(outdir / "moment_series.csv", ["D", "t", "moment"], series_rows,
               cfg.hash())
    last_run = rows[-1]
    ts = [t for t, _ in last_run["series"]]
    running = np.maximum.accumulate([v for _, v in last_run["series"]])
    payload = {
        "model": f"{statistics}-impurity",
        "order": 2 * n + 2,
        "growth": [{k: r[k] for k in ("D", "dim", "max_moment")} for r in rows],
        "running_max_slope": trend_slope(ts, running, 0.5 * max(ts)),
    }
    if len(rows) >= 2:
        prev, last = rows[-2]["max_moment"], rows[-1]["max_moment"]
        payload["final_relative_change"] = abs(last - prev) / max(abs(prev), 1e-300)
    return payload


def _run_vanhove_truncated(cfg: ExperimentConfig, outdir: Path) -> dict:
    f = _form_factor(cfg)
    beta = float(cfg.get("beta", 1.0))
    t_grid = _grid(cfg, "t_grid")
    alphas = _grid(cfg, "alpha_grid")
    size = int(cfg.get("d", 4))
    cap = int(cfg.get("n_max", 8))
    delta = float(cfg.get("delta", 1e-3))
    window = cfg.get("window")
    if not (isinstance(window, list) and len(window) == 2 and 0 <= window[0] < window[1]):
        raise ConfigError("window: must be [e_lo, e_hi] with 0 <= e_lo < e_hi")
    window = (float(window[0]), float(window[1]))
    model, spec, _ = vanhove_truncated_model(f, beta, size, cap, delta, window)
    engine = TTMSpectralEngine(model)
    rows = []
    disc_dev = 0.0
    for t in t_grid:
        grid = engine.char_grid(t, alphas)
        disc = vanhove_discrete_char(f, beta, size, delta, window, t, alphas)
        disc_dev = max(disc_dev, float(np.abs(grid - disc).max()))
        rows.extend((t, a, float(z.real), float(z.imag))
                    for a, z in zip(alphas, grid))
    _write_csv(outdir / "charfn_truncated.csv", ["t", "alpha", "re_E", "im_E"],
               rows, cfg.hash())
    return {"model": "vanhove-truncated", "dim": spec.dimension,
            "d": size, "n_max": cap, "delta": delta,
            "max_deviation_from_discrete_jump_law": disc_dev}


def _run_tl_convergence(cfg: ExperimentConfig, outdir: Path) -> dict:
    beta = float(cfg.get("beta", 1.0))
    alphas = _grid(cfg, "alpha_grid")
    d_list = [int(d) for d in cfg.get("d_list", [2, 4, 6])]
    t = float(cfg.get("t", 1.0))
    mode = cfg.model if cfg.model in ("fermion-impurity", "boson-oscillator") else "vanhove"
    if mode == "vanhove":
        f = _form_factor(cfg)
        cap_list = [int(c) for c in cfg.get("n_max_list", [4, 6, 8])]
        delta = float(cfg.get("delta", 1e-3))
        lo_scale = float(cfg.get("window_lo_scale", 1.2))
        hi_base = float(cfg.get("window_hi_base", 2.0))
        hi_slope = float(cfg.get("window_hi_slope", 0.6))
        rows = tl_convergence_vanhove(
            f, beta, t, alphas, d_list, cap_list, delta,
            lambda d: (lo_scale / d, hi_base + hi_slope * d))
        header = ["D", "cap", "dim", "sup_err", "sup_err_vs_discrete"]
        table = [(r["D"], r["cap"], r["dim"], r["sup_err"],
                  r["sup_err_vs_discrete"]) for r in rows]
    else:
        f = _form_factor(cfg)
        stats = "fermion" if mode == "fermion-impurity" else "boson"
        rows = tl_convergence_impurity(
            f, stats, beta, t, alphas, d_list,
            eps_o=float(cfg.get("eps_o", 1.0)),
            e_per_mode=float(cfg.get("e_per_mode", 1.0)),
            total_cap=int(cfg.get("n_max", 6)),
            ir_floor=float(cfg.get("delta", 1e-3)))
        header = ["D", "dim", "sup_err"]
        table = [(r["D"], r["dim"], r["sup_err"]) for r in rows]
    _write_csv(outdir / "tl_convergence.csv", header, table, cfg.hash())
    return {"model": "tl-convergence", "reference": mode, "rows": rows}


def _run_tails(cfg: ExperimentConfig, outdir: Path) -> dict:
    src = cfg.get("samples_csv", required=True)
    draws = []
    with open(src) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line == "delta_q":
                continue
            draws.append(float(line))
    if len(draws) < 100:
        raise ConfigError("samples_csv: need at least 100 samples")
    rep = tail_report(
        np.asarray(draws),
        int(cfg.get("k", max(10, len(draws) // 100))),
        [int(m) for m in cfg.get("orders", [1, 2, 4])],
        n=int(cfg.get("n", 1)),
        gamma=cfg.get("gamma"),
    )
    return {"model": "tails", "report": rep.to_dict()}


def _run_lemmas(cfg: ExperimentConfig, outdir: Path) -> dict:
    f = _form_factor(cfg)
    size = int(cfg.get("bath_size", 6))
    e_max = float(cfg.get("e_max", 8.0))
    eps_o = float(cfg.get("eps_o", 1.0))
    beta = float(cfg.get("beta", 1.0))
    n = int(cfg.get("n", 2))
    t_grid = np.asarray(_grid(cfg, "t_grid"))
    window = cfg.get("window", [0.0, 2 * math.pi])
    e_grid = np.linspace(0.0, float(cfg.get("e_grid_max", 20 * e_max)), 400)
    rng = np.random.default_rng(cfg.seed)

    imp = gauss_bath(f, size, e_max, eps_o=eps_o)
    triple = build_one_particle(imp)
    defect = propagator_difference_defect(triple, n, t_grid)
    phi = rng.standard_normal(triple.dim) + 1j * rng.standard_normal(triple.dim)
    orbit_max, growing = power_weighted_orbit_scan(triple, phi, float(n), t_grid)
    psi = np.ones(triple.dim, dtype=complex) / math.sqrt(triple.dim)
    occupation = FermiDirac(beta) if cfg.get("statistics", "fermion") == "fermion" \
        else BoseEinstein(beta)
    infimum, values, plateau = oscillation_infimum(
        triple, occupation, psi, tuple(window), e_grid)
    spectrum, expected, sup = inverse_sqrt_rescaling_check(triple, t_grid=t_grid)
    report = {
        "model": "lemmas",
        "propagator_defect": {"value": defect, "holds": defect <= 0.0},
        "orbit_scan": {"max": orbit_max, "still_growing": growing},
        "oscillation_infimum": {
            "infimum": infimum,
            "positive": infimum > 0.0,
            "plateau": plateau,
            "tail_relative_error": abs(values[-1] - plateau) / plateau,
        },
        "rescaled_spectrum": {
            "max_deviation": float(np.abs(spectrum - expected).max()),
            "weighted_orbit_sup": sup,
        },
    }
    return report


def _dispatch_classical(cfg: ExperimentConfig, outdir: Path) -> dict:
    if cfg.model == "classical-harmonic":
        return _run_classical_harmonic(cfg, outdir)
    return _run_classical_linear(cfg, outdir)


COMMANDS = {
    "vanhove": (_run_vanhove, ("vanhove",), "vanhove"),
    "classical": (_dispatch_classical,
                  ("classical-linear", "classical-harmonic"), "classical-linear"),
    "ttm": (_run_ttm_generic, ("ttm-generic",), "ttm-generic"),
    "fermion-impurity": (lambda cfg, out: _run_impurity(cfg, out, "fermion"),
                         ("fermion-impurity",), "fermion-impurity"),
    "boson-oscillator": (lambda cfg, out: _run_impurity(cfg, out, "boson"),
                         ("boson-oscillator",), "boson-oscillator"),
    "vanhove-truncated": (_run_vanhove_truncated, ("vanhove",), "vanhove"),
    "tl-convergence": (_run_tl_convergence,
                       ("vanhove", "fermion-impurity", "boson-oscillator"),
                       "vanhove"),
    "tails": (_run_tails, MODELS, "vanhove"),
    "lemmas": (_run_lemmas, MODELS, "fermion-impurity"),
}


def run(cfg: ExperimentConfig, command: str) -> int:
    """Execute the configured experiment; returns the process exit code."""
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    runner = COMMANDS[command][0]
    try:
        payload = runner(cfg, outdir)
    except DimensionCapError as exc:
        print(f"truncation cap exceeded: {exc}", file=sys.stderr)
        return 3
    except InconclusiveVerdictError as exc:
        print(f"inconclusive quadrature: {exc}", file=sys.stderr)
        return 4
    except DivergentMassError as exc:
        print(f"config error: samples requested but {exc}", file=sys.stderr)
        return 2
    _write_json(outdir / "report.json", payload, cfg)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="heatlab",
        description="heat-variation statistics of quasi-free gases under "
                    "two-time energy measurement")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="TOML config path")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--out", default=None)
    args = parser.parse_args(argv)

    overrides = {"seed": args.seed, "threads": args.threads, "out": args.out}
    _, allowed, fallback = COMMANDS[args.command]
    try:
        cfg = load_config(args.config, overrides, default_model=fallback)
        if cfg.model not in allowed:
            raise ConfigError(
                f"model {cfg.model!r} does not belong to command "
                f"{args.command!r} (expected one of {allowed})")
        _validate_common(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(cfg, args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def _validate_common(cfg: ExperimentConfig):
    for key in ("t_grid", "alpha_grid"):
        if key in cfg.raw:
            vals = cfg.raw[key]
            if not isinstance(vals, list) or len(vals) == 0:
                raise ConfigError(f"{key}: must be a nonempty list")


if __name__ == "__main__":
    sys.exit(main())
