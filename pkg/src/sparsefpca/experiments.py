"""Reproducible Monte Carlo experiments built on the estimation library.

Every experiment is driven by an :class:`ExperimentConfig` (JSON-friendly),
derives one seed per replicate from the master seed, runs replicates either
serially or in worker processes, and reduces the results in replicate
order, so reports do not depend on scheduling.
"""

from __future__ import annotations

import copy
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import stats
from threadpoolctl import threadpool_limits

from . import __version__
from .exceptions import ConfigError, DataTooSparseError, ExperimentAborted, SpectralError
from .grid import Grid
from .io import dumps, write_fit_artifacts, write_json, write_panel_csv, write_rows_csv
from .kernels import KernelSpec
from .model import (
    SCORE_LAWS,
    BetaMixtureDensity,
    DesignSpec,
    TrajectoryModel,
    UniformDensity,
    constant_function,
    cosine_eigenfunction,
    linear_function,
    simulate_panel,
    sine_eigenfunction,
    sine_mean,
    true_covariance,
)
from .oracles import (
    asymptotic_constants,
    pair_total,
    predicted_sq_error,
    quadruple_moments,
    sigma_matrix,
)
from .pipeline import fit_fpca
from .presmooth import (
    DEFAULT_MIN_SPREAD,
    check_presmoothing_constraints,
    full_curve_oracle,
    m_rule,
    presmooth_panel,
    sample_covariance,
)
from .smoothers import bandwidth_schedule
from .spectral import align_sign, eigendecompose_surface, l2_distance
from .tabulated import CurveEstimate

KINDS = ("simulate", "fit", "rate-study", "design-demo", "transition-study", "oracle")
RECOVERABLE = (DataTooSparseError, SpectralError)


# --------------------------------------------------------------------------
# model and design specs
# --------------------------------------------------------------------------

ACCEPTANCE_MODEL = {
    "eigenvalues": [1.0, 0.25],
    "basis": "sine",
    "noise_sd": 0.25,
    "score_law": "gaussian",
    "mean": {"kind": "constant", "value": 0.0},
    "density": {"kind": "uniform"},
    "interval": [0.0, 1.0],
    "tag": "rank2-sine",
}


def _function_from_spec(spec, interval):
    kind = spec.get("kind")
    if kind == "sine":
        return sine_eigenfunction(int(spec["k"]), interval)
    if kind == "cosine":
        return cosine_eigenfunction(int(spec["k"]), interval)
    raise ConfigError(f"unknown eigenfunction kind {kind!r}")


def _mean_from_spec(spec):
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return constant_function(spec.get("value", 0.0))
    if kind == "linear":
        return linear_function(spec.get("intercept", 0.0), spec.get("slope", 0.0))
    if kind == "sine":
        return sine_mean(spec.get("amplitude", 1.0), spec.get("frequency", 1.0), spec.get("offset", 0.0))
    raise ConfigError(f"unknown mean kind {kind!r}")


def _density_from_spec(spec, interval):
    kind = spec.get("kind", "uniform")
    if kind == "uniform":
        return UniformDensity(tuple(interval))
    if kind == "beta_mixture":
        return BetaMixtureDensity(spec.get("a", 2.0), spec.get("b", 2.0), spec.get("weight", 0.5), tuple(interval))
    raise ConfigError(f"unknown density kind {kind!r}")


def build_model(spec):
    """TrajectoryModel from a JSON-style dict (see ``ACCEPTANCE_MODEL``).

    Eigenfunctions come from ``"eigenfunctions"`` (a list of
    ``{"kind": "sine"|"cosine", "k": int}``) or from ``"basis"``, which takes
    the first r members of the sine (k = 1, 2, ...) or cosine (k = 0, 1, ...)
    family.
    """
    try:
        interval = tuple(float(x) for x in spec.get("interval", (0.0, 1.0)))
        theta = [float(x) for x in spec.get("eigenvalues", [])]
        if "eigenfunctions" in spec:
            funcs = [_function_from_spec(f, interval) for f in spec["eigenfunctions"]]
        else:
            basis = spec.get("basis", "sine")
            start = {"sine": 1, "cosine": 0}.get(basis)
            if start is None:
                raise ConfigError(f"unknown basis {basis!r}")
            funcs = [_function_from_spec({"kind": basis, "k": start + i}, interval) for i in range(len(theta))]
        law = spec.get("score_law", "gaussian")
        if law not in SCORE_LAWS:
            raise ConfigError(f"unknown score law {law!r}; expected one of {sorted(SCORE_LAWS)}")
        return TrajectoryModel(
            eigenvalues=theta,
            eigenfunctions=funcs,
            mean=_mean_from_spec(spec.get("mean", {})),
            noise_sd=float(spec.get("noise_sd", 0.0)),
            score_law=SCORE_LAWS[law],
            density=_density_from_spec(spec.get("density", {}), interval),
            interval=interval,
            tag=str(spec.get("tag", "model")),
        )
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid model specification: {exc}") from exc


def build_design(spec):
    try:
        kw = {k: spec[k] for k in ("m", "m_range", "m_power") if k in spec}
        for k in ("m_range", "m_power"):
            if k in kw:
                kw[k] = tuple(kw[k])
        return DesignSpec(kind=spec.get("kind", "random"), **kw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid design specification: {exc}") from exc


@lru_cache(maxsize=64)
def _cached_model(spec_json):
    return build_model(json.loads(spec_json))


def _model(spec):
    return _cached_model(json.dumps(spec, sort_keys=True))


def alias_spec(base, eigenvalue, frequency, tag=None):
    """Model spec with an extra component proportional to sin(2 pi frequency t)."""
    spec = copy.deepcopy(base)
    r = len(spec["eigenvalues"])
    if "eigenfunctions" in spec:
        funcs = list(spec["eigenfunctions"])
    else:
        basis = spec.get("basis", "sine")
        start = {"sine": 1, "cosine": 0}[basis]
        funcs = [{"kind": basis, "k": start + i} for i in range(r)]
    pairs = list(zip(spec["eigenvalues"], funcs)) + [(float(eigenvalue), {"kind": "sine", "k": 2 * int(frequency)})]
    pairs.sort(key=lambda p: -p[0])
    spec["eigenvalues"] = [p[0] for p in pairs]
    spec["eigenfunctions"] = [p[1] for p in pairs]
    spec.pop("basis", None)
    spec["tag"] = tag or f"{base.get('tag', 'model')}+alias{frequency}"
    return spec


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

DEFAULT_OPTIONS = {
    "rate-study": {
        "slope_tolerance": 0.15,
        "eigenfunction_slope_target": -0.4,
        "eigenvalue_slope_target": -0.5,
        "variance_ratio_band": [0.4, 2.5],
        "mise_ratio_band": [0.5, 2.0],
        "failure_budget": 0.05,
        "mc_draws": 1_000_000,
        "oracle_seed": 0,
        "c1_variant": "proof",
        "pair_convention": "ordered",
    },
    "design-demo": {
        "alias": {"eigenvalue": 2.0, "frequency": 3},
        "meta_replicates": 20,
        "alpha": 0.05,
        "required_fraction": 0.8,
        "bandwidths": {"regular": {"c_mu": 1.0, "c_phi": 1.0}, "random": {"c_mu": 1.0, "c_phi": 0.2}},
    },
    "transition-study": {
        "m_exponents": [0.125, 0.25, 0.35],
        "h_constant": 1.0,
        "h_exponent": 0.3,
        "min_spread": DEFAULT_MIN_SPREAD,
        "ratio_threshold": 0.5,
        "failure_budget": 0.05,
    },
    "simulate": {"n": 200},
    "fit": {},
    "oracle": {"mc_draws": 1_000_000, "oracle_seed": 0, "c1_variant": "proof"},
}

DEFAULT_LADDERS = {
    "rate-study": [100, 200, 400, 800],
    "design-demo": [200, 800],
    "transition-study": [200, 400, 800],
    "simulate": [200],
    "fit": [200],
    "oracle": [800],
}

DEFAULT_REPLICATES = {"rate-study": 100, "design-demo": 10, "transition-study": 50}


@dataclass
class ExperimentConfig:
    """Everything an experiment needs; serializes to and from JSON.

    ``options`` holds kind-specific settings (tolerances, m-rules, alias
    component, ...), merged over per-kind defaults.
    """

    kind: str = "rate-study"
    model: dict = field(default_factory=lambda: copy.deepcopy(ACCEPTANCE_MODEL))
    design: dict = field(default_factory=lambda: {"kind": "random", "m": 3})
    n_ladder: list = None
    replicates: int = None
    seed: int = 20240601
    c_mu: float = 1.0
    c_phi: float = 1.0
    regime: str = "both"
    grid_size: int = 101
    j0: int = 3
    kernel: str = "epanechnikov"
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.n_ladder is None:
            self.n_ladder = list(DEFAULT_LADDERS[self.kind])
        if self.replicates is None:
            self.replicates = DEFAULT_REPLICATES.get(self.kind, 1)
        merged = copy.deepcopy(DEFAULT_OPTIONS[self.kind])
        merged.update(self.options or {})
        self.options = merged
        self.n_ladder = [int(n) for n in self.n_ladder]

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path):
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(d)

    def to_dict(self):
        return asdict(self)

    def validate(self):
        """Raise :class:`ConfigError` on any inconsistency; returns self."""
        ladder = self.n_ladder
        if not ladder or any(n < 2 for n in ladder):
            raise ConfigError("every sample size in n_ladder must be at least 2")
        if any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ConfigError("n_ladder must be strictly increasing")
        if self.kind == "rate-study":
            if len(ladder) < 3:
                raise ConfigError("a rate study needs at least 3 rungs in n_ladder for a slope fit")
            if self.replicates < 20:
                raise ConfigError("a rate study needs at least 20 replicates")
            if self.regime not in ("eigenfunction", "eigenvalue", "both"):
                raise ConfigError("regime must be 'eigenfunction', 'eigenvalue' or 'both'")
        if self.replicates < 1:
            raise ConfigError("replicates must be positive")
        if self.c_mu <= 0 or self.c_phi <= 0:
            raise ConfigError("bandwidth constants must be positive")
        if self.grid_size < 3:
            raise ConfigError("grid_size must be at least 3")
        if self.j0 < 1:
            raise ConfigError("j0 must be at least 1")
        try:
            KernelSpec(self.kernel)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        model = _model(self.model)
        build_design(self.design)
        if self.kind == "design-demo":
            self._validate_design_demo(model)
        if self.kind == "transition-study":
            o = self.options
            for n in ladder:
                for a in o["m_exponents"]:
                    check_presmoothing_constraints(n, m_rule(n, a), o["h_exponent"], o["h_constant"], strict=True)
        return self

    def _validate_design_demo(self, model):
        design = build_design(self.design)
        if design.m is None:
            raise ConfigError("the design demo needs a fixed m")
        m = design.m
        alias = self.options["alias"]
        freq = alias["frequency"]
        if float(freq) != int(freq) or int(freq) < 1:
            raise ConfigError("alias frequency must be a positive integer")
        a, b = model.interval
        pts = a + (b - a) * np.arange(1, m + 1) / m
        extra = sine_eigenfunction(2 * int(freq), model.interval)(pts)
        if np.max(np.abs(extra)) > 1e-9:
            raise ConfigError(
                f"alias component sin(2 pi {freq} t) is nonzero at a regular design point j/{m} "
                f"(max |value| {np.max(np.abs(extra)):.3g})"
            )
        model_b = _model(alias_spec(self.model, alias["eigenvalue"], int(freq)))
        if model_b.eigenvalues[0] == model.eigenvalues[0]:
            raise ConfigError("alias component must change the leading eigenvalue")
        for kind in ("regular", "random"):
            if kind not in self.options["bandwidths"]:
                raise ConfigError(f"design demo needs bandwidth constants for the {kind} design")

    @property
    def kernel_spec(self):
        return KernelSpec(self.kernel)

    def grid(self, interval):
        return Grid.uniform(tuple(interval), self.grid_size)


# --------------------------------------------------------------------------
# seeds and parallel execution
# --------------------------------------------------------------------------


def derive_seed(seed, *keys):
    """Deterministic 63-bit seed for the replicate addressed by ``keys``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _guarded(func, payload):
    with threadpool_limits(limits=1):
        return func(payload)


def _call(args):
    func, payload = args
    return _guarded(func, payload)


def run_tasks(func, payloads, threads=1):
    """Map ``func`` over ``payloads`` preserving order; ``threads > 1`` uses worker processes."""
    payloads = list(payloads)
    if threads <= 1 or len(payloads) <= 1:
        return [_guarded(func, p) for p in payloads]
    chunk = max(1, len(payloads) // (threads * 8))
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(_call, [(func, p) for p in payloads], chunksize=chunk))


def _envelope(config, kind):
    return {"kind": kind, "config": config.to_dict(), "seed": config.seed, "version": __version__}


# --------------------------------------------------------------------------
# rate study
# --------------------------------------------------------------------------


def _regimes(config):
    return ["eigenfunction", "eigenvalue"] if config.regime == "both" else [config.regime]


def _rate_task(payload):
    cfg, n_idx, n, rep = payload
    model = _model(cfg["model"])
    design = build_design(cfg["design"])
    grid = Grid.uniform(model.interval, cfg["grid_size"])
    kernel = KernelSpec(cfg["kernel"])
    seed = derive_seed(cfg["seed"], n_idx, rep)
    j0 = min(cfg["j0"], max(model.rank, 1))
    truth = model.eigenfunction_values(grid.nodes)
    panel = simulate_panel(model, design, n, seed)
    rows = []
    for regime in cfg["regimes"]:
        h_mu, h_phi = bandwidth_schedule(n, regime, cfg["c_mu"], cfg["c_phi"])
        row = {"regime": regime, "n": n, "replicate": rep, "seed": seed, "h_mu": h_mu, "h_phi": h_phi}
        try:
            fit = fit_fpca(panel, h_mu, h_phi, grid, kernel, j0)
        except RECOVERABLE as exc:
            row.update(status="failed", reason=f"{type(exc).__name__}: {exc}")
            rows.append(row)
            continue
        row["status"] = "ok"
        row["theta_hat"] = [float(x) for x in fit.eigen.values]
        row["theta_error"] = [
            float(fit.eigen.values[j] - model.eigenvalues[j]) for j in range(min(j0, model.rank))
        ]
        errs = []
        for j in range(min(j0, model.rank)):
            ref = CurveEstimate(grid, truth[j])
            est = align_sign(fit.eigen.eigenfunction(j + 1), ref)
            errs.append(l2_distance(est, ref))
        row["psi_l2_error"] = errs
        row["negative_eigenvalues"] = int(np.sum(fit.eigen.negative))
        rows.append(row)
    return rows


def fit_slope(n_values, rmse):
    """OLS fit of log RMSE on log n; returns dict(slope, stderr, intercept) or ``None``."""
    x = np.log(np.asarray(n_values, dtype=float))
    y = np.asarray(rmse, dtype=float)
    if y.size < 3 or np.any(~np.isfinite(y)) or np.any(y <= 0):
        return None
    res = stats.linregress(x, np.log(y))
    return {"slope": float(res.slope), "stderr": float(res.stderr), "intercept": float(res.intercept)}


def _band_verdict(value, lo, hi):
    ok = value is not None and np.isfinite(value) and lo <= value <= hi
    return {"value": value, "band": [lo, hi], "pass": bool(ok)}


@dataclass
class RateReport:
    """Per-replicate table, per-n aggregates, slopes, oracle values and verdicts."""

    envelope: dict
    table: list
    aggregates: dict
    slopes: dict
    oracle: dict
    verdicts: dict

    def to_dict(self):
        d = dict(self.envelope)
        d.update(
            table=self.table, aggregates=self.aggregates, slopes=self.slopes, oracle=self.oracle, verdicts=self.verdicts
        )
        return d

    @property
    def passed(self):
        return all(v["pass"] for v in self.verdicts.values())

    def summary_rows(self):
        rows = []
        for regime, per_n in self.aggregates.items():
            for n, agg in per_n.items():
                for stat, value in agg.items():
                    rows.append((int(n), f"{regime}:{stat}", value))
        return rows


def aggregate_rate_table(table, regimes, ladder, theta1):
    """Per-regime, per-n summaries recomputed from the raw replicate rows."""
    out = {}
    for regime in regimes:
        per_n = {}
        for n in ladder:
            ok = [r for r in table if r["regime"] == regime and r["n"] == n and r["status"] == "ok"]
            if not ok:
                per_n[str(n)] = {"replicates_ok": 0}
                continue
            th = np.array([r["theta_hat"][0] for r in ok])
            e_th = th - theta1
            e_psi = np.array([r["psi_l2_error"][0] for r in ok]) if ok[0]["psi_l2_error"] else np.array([np.nan])
            per_n[str(n)] = {
                "replicates_ok": len(ok),
                "rmse_theta1": float(np.sqrt(np.mean(e_th**2))),
                "mean_theta1": float(np.mean(th)),
                "var_theta1": float(np.var(th, ddof=1)) if len(ok) > 1 else float("nan"),
                "rmse_psi1": float(np.sqrt(np.mean(e_psi**2))),
                "mean_sq_psi1": float(np.mean(e_psi**2)),
            }
        out[regime] = per_n
    return out


def run_rate_study(config, threads=1):
    """Monte Carlo convergence-rate study; returns a :class:`RateReport`."""
    config.validate()
    model = _model(config.model)
    design = build_design(config.design)
    if model.rank < 1:
        raise ConfigError("rate study needs a model with at least one component")
    regimes = _regimes(config)
    cfg = {
        "model": config.model,
        "design": config.design,
        "grid_size": config.grid_size,
        "kernel": config.kernel,
        "seed": config.seed,
        "j0": config.j0,
        "c_mu": config.c_mu,
        "c_phi": config.c_phi,
        "regimes": regimes,
    }
    payloads = [(cfg, i, n, rep) for i, n in enumerate(config.n_ladder) for rep in range(config.replicates)]
    table = [row for rows in run_tasks(_rate_task, payloads, threads) for row in rows]

    opts = config.options
    failed = [r for r in table if r["status"] != "ok"]
    if len(failed) > opts["failure_budget"] * len(table):
        reasons = sorted({r["reason"] for r in failed})[:5]
        raise ExperimentAborted(
            f"{len(failed)} of {len(table)} fits failed (budget {opts['failure_budget']:.0%}); e.g. {reasons}"
        )

    ladder = config.n_ladder
    theta1 = model.eigenvalues[0]
    aggregates = aggregate_rate_table(table, regimes, ladder, theta1)
    slopes = {}
    for regime in regimes:
        per_n = aggregates[regime]
        slopes[regime] = {
            stat: fit_slope(ladder, [per_n[str(n)].get(stat, float("nan")) for n in ladder])
            for stat in ("rmse_psi1", "rmse_theta1")
        }

    oracle = _rate_oracle(config, model, design, regimes)
    verdicts = _rate_verdicts(config, aggregates, slopes, oracle, regimes)
    return RateReport(_envelope(config, "rate-study"), table, aggregates, slopes, oracle, verdicts)


def _rate_oracle(config, model, design, regimes):
    opts = config.options
    kernel = config.kernel_spec
    j0 = min(config.j0, model.rank)
    ladder = config.n_ladder
    const = asymptotic_constants(
        model, design, ladder[-1], kernel, j0, opts["c1_variant"], draws=int(opts["mc_draws"]), seed=opts["oracle_seed"]
    )
    moments = quadruple_moments(model, j0, int(opts["mc_draws"]), opts["oracle_seed"])
    per_n = {}
    for n in ladder:
        entry = {"sigma_11": float(sigma_matrix(model, design, n, j0, moments=moments)[0, 0])}
        _, h_phi = bandwidth_schedule(n, "eigenfunction", config.c_mu, config.c_phi)
        for conv in ("ordered", "unordered"):
            entry[f"predicted_sq_psi1_{conv}"] = float(
                predicted_sq_error(const.C1[0], const.C2[0], pair_total(design, n, conv), h_phi, model.eigenvalues[0])
            )
        per_n[str(n)] = entry
    out = const.to_dict()
    out["per_n"] = per_n
    return out


def _rate_verdicts(config, aggregates, slopes, oracle, regimes):
    opts = config.options
    tol = opts["slope_tolerance"]
    n_max = str(config.n_ladder[-1])
    verdicts = {}
    if "eigenfunction" in regimes:
        target = opts["eigenfunction_slope_target"]
        s = slopes["eigenfunction"]["rmse_psi1"]
        verdicts["eigenfunction_slope"] = _band_verdict(s and s["slope"], target - tol, target + tol)
        mc = aggregates["eigenfunction"][n_max].get("mean_sq_psi1")
        pred = oracle["per_n"][n_max][f"predicted_sq_psi1_{opts['pair_convention']}"]
        lo, hi = opts["mise_ratio_band"]
        verdicts["eigenfunction_mse_vs_oracle"] = _band_verdict(mc / pred if mc and pred > 0 else None, lo, hi)
    if "eigenvalue" in regimes:
        target = opts["eigenvalue_slope_target"]
        s = slopes["eigenvalue"]["rmse_theta1"]
        verdicts["eigenvalue_slope"] = _band_verdict(s and s["slope"], target - tol, target + tol)
        var = aggregates["eigenvalue"][n_max].get("var_theta1")
        sig = oracle["per_n"][n_max]["sigma_11"]
        lo, hi = opts["variance_ratio_band"]
        verdicts["eigenvalue_variance_vs_sigma"] = _band_verdict(var / sig if var and sig > 0 else None, lo, hi)
    return verdicts


# --------------------------------------------------------------------------
# design demo: regular-grid aliasing
# --------------------------------------------------------------------------


def _demo_task(payload):
    cfg, spec, design_spec, d_idx, n_idx, n, meta, group, rep, c_mu, c_phi = payload
    model = _model(spec)
    design = build_design(design_spec)
    grid = Grid.uniform(model.interval, cfg["grid_size"])
    seed = derive_seed(cfg["seed"], d_idx, n_idx, meta, group, rep)
    panel = simulate_panel(model, design, n, seed)
    h_mu, h_phi = bandwidth_schedule(n, "eigenfunction", c_mu, c_phi)
    try:
        fit = fit_fpca(panel, h_mu, h_phi, grid, KernelSpec(cfg["kernel"]), 1)
    except RECOVERABLE as exc:
        return {"status": "failed", "reason": f"{type(exc).__name__}: {exc}", "seed": seed}
    return {"status": "ok", "theta1_hat": float(fit.eigen.values[0]), "seed": seed, "h_phi": h_phi}


def run_design_demo(config, threads=1):
    """Compare a model with its grid-aliased sibling under regular and random designs.

    For each design and sample size, ``meta_replicates`` independent
    two-sample rank-sum tests are run on theta_hat_1, each with
    ``replicates`` fits per model.
    """
    config.validate()
    opts = config.options
    model_a = _model(config.model)
    alias = opts["alias"]
    spec_b = alias_spec(config.model, alias["eigenvalue"], int(alias["frequency"]))
    model_b = _model(spec_b)
    m = build_design(config.design).m
    cfg = {"grid_size": config.grid_size, "kernel": config.kernel, "seed": config.seed}

    designs = ("regular", "random")
    payloads = []
    for d_idx, kind in enumerate(designs):
        dspec = {"kind": kind, "m": m}
        bw = opts["bandwidths"][kind]
        for n_idx, n in enumerate(config.n_ladder):
            for meta in range(opts["meta_replicates"]):
                for group, spec in enumerate((config.model, spec_b)):
                    for rep in range(config.replicates):
                        payloads.append(
                            (cfg, spec, dspec, d_idx, n_idx, n, meta, group, rep, bw["c_mu"], bw["c_phi"])
                        )
    results = run_tasks(_demo_task, payloads, threads)

    it = iter(results)
    table, tests = [], {}
    for kind in designs:
        tests[kind] = {}
        for n in config.n_ladder:
            pvals, gaps = [], []
            for meta in range(opts["meta_replicates"]):
                groups = []
                for group in ("A", "B"):
                    vals = []
                    for rep in range(config.replicates):
                        r = next(it)
                        table.append({"design": kind, "n": n, "meta": meta, "model": group, "replicate": rep, **r})
                        vals.append(r.get("theta1_hat", np.nan))
                    groups.append(np.array(vals))
                a, b = groups
                okmask = np.isfinite(a) & np.isfinite(b)
                if okmask.sum() >= 2:
                    p = float(stats.mannwhitneyu(a[okmask], b[okmask], alternative="two-sided").pvalue)
                else:
                    p = float("nan")
                pvals.append(p)
                gaps.append(np.abs(a - b))
            pvals = np.array(pvals)
            tests[kind][str(n)] = {
                "p_values": pvals.tolist(),
                "fraction_separated": float(np.mean(pvals < opts["alpha"])),
                "fraction_not_separated": float(np.mean(pvals > opts["alpha"])),
                "pair_gaps": np.concatenate(gaps).tolist(),
            }

    failed = sum(r["status"] != "ok" for r in table)
    n_max = str(config.n_ladder[-1])
    gap_reg = np.array(tests["regular"][n_max]["pair_gaps"])
    gap_rnd = np.array(tests["random"][n_max]["pair_gaps"])
    both = np.isfinite(gap_reg) & np.isfinite(gap_rnd)
    frac_gap = float(np.mean(gap_rnd[both] > gap_reg[both])) if both.any() else float("nan")
    req = opts["required_fraction"]

    a, b = model_a.interval
    pts = a + (b - a) * np.arange(1, m + 1) / m
    pt_grid_diff = float(np.max(np.abs(model_a.covariance(pts[:, None], pts[None, :]) - model_b.covariance(pts[:, None], pts[None, :]))))
    extra = sine_eigenfunction(2 * int(alias["frequency"]), model_a.interval)(pts)

    checks = {
        "alias_max_abs_at_design_points": float(np.max(np.abs(extra))),
        "design_point_covariance_max_abs_difference": pt_grid_diff,
        "true_theta1": {"A": model_a.eigenvalues[0], "B": model_b.eigenvalues[0]},
        "failed_fits": int(failed),
    }
    verdicts = {
        "regular_not_separated": {
            "value": tests["regular"][n_max]["fraction_not_separated"],
            "band": [req, 1.0],
            "pass": tests["regular"][n_max]["fraction_not_separated"] >= req,
        },
        "random_separated": {
            "value": tests["random"][n_max]["fraction_separated"],
            "band": [req, 1.0],
            "pass": tests["random"][n_max]["fraction_separated"] >= req,
        },
        "random_gap_exceeds_regular_gap": {"value": frac_gap, "band": [0.9, 1.0], "pass": bool(frac_gap >= 0.9)},
    }
    report = _envelope(config, "design-demo")
    report.update(model_b=spec_b, table=table, tests=tests, checks=checks, verdicts=verdicts)
    return report


# --------------------------------------------------------------------------
# transition study: presmoothing versus full curves
# --------------------------------------------------------------------------


def _transition_task(payload):
    cfg, n_idx, n, a_idx, a, rep = payload
    model = _model(cfg["model"])
    grid = Grid.uniform(model.interval, cfg["grid_size"])
    m = m_rule(n, a)
    seed = derive_seed(cfg["seed"], n_idx, a_idx, rep)
    panel = simulate_panel(model, DesignSpec(kind=cfg["design_kind"], m=m), n, seed)
    h = cfg["h_constant"] * n ** (-cfg["h_exponent"])
    row = {"n": n, "m_exponent": a, "m": m, "replicate": rep, "seed": seed, "h": h}
    try:
        ens = presmooth_panel(panel, h, grid, KernelSpec(cfg["kernel"]), min_spread=cfg["min_spread"])
        check = eigendecompose_surface(sample_covariance(ens), 1)
        curves = panel.true_curves(model, grid)[list(ens.kept)]
        bar = eigendecompose_surface(full_curve_oracle(curves, grid), 1)
    except RECOVERABLE as exc:
        row.update(status="failed", reason=f"{type(exc).__name__}: {exc}")
        return row
    truth = CurveEstimate(grid, model.eigenfunction_values(grid.nodes)[0])
    psi_bar = align_sign(bar.eigenfunction(1), truth)
    psi_check = align_sign(check.eigenfunction(1), psi_bar)
    theta = model.eigenvalues[0]
    d_check = abs(check.values[0] - bar.values[0])
    d_bar = abs(bar.values[0] - theta)
    f_check = l2_distance(psi_check, psi_bar)
    f_bar = l2_distance(psi_bar, truth)
    row.update(
        status="ok",
        dropped=len(ens.dropped),
        theta_check=float(check.values[0]),
        theta_bar=float(bar.values[0]),
        ratio_theta=float(d_check / d_bar) if d_bar > 0 else (0.0 if d_check == 0 else float("inf")),
        ratio_psi=float(f_check / f_bar) if f_bar > 0 else (0.0 if f_check == 0 else float("inf")),
    )
    return row


def run_transition_study(config, threads=1):
    """Median presmoothing-to-full-curve gap ratios across m-rules and sample sizes."""
    config.validate()
    opts = config.options
    model = _model(config.model)
    if model.rank < 1:
        raise ConfigError("transition study needs a model with at least one component")
    cfg = {
        "model": config.model,
        "grid_size": config.grid_size,
        "kernel": config.kernel,
        "seed": config.seed,
        "design_kind": config.design.get("kind", "random"),
        "h_constant": opts["h_constant"],
        "h_exponent": opts["h_exponent"],
        "min_spread": opts["min_spread"],
    }
    exps = list(opts["m_exponents"])
    payloads = [
        (cfg, i, n, k, a, rep)
        for i, n in enumerate(config.n_ladder)
        for k, a in enumerate(exps)
        for rep in range(config.replicates)
    ]
    table = run_tasks(_transition_task, payloads, threads)
    failed = [r for r in table if r["status"] != "ok"]
    if len(failed) > opts["failure_budget"] * len(table):
        reasons = sorted({r["reason"] for r in failed})[:5]
        raise ExperimentAborted(f"{len(failed)} of {len(table)} replicates failed; e.g. {reasons}")

    summary, constraints = {}, {}
    for n in config.n_ladder:
        summary[str(n)], constraints[str(n)] = {}, {}
        for a in exps:
            ok = [r for r in table if r["n"] == n and r["m_exponent"] == a and r["status"] == "ok"]
            summary[str(n)][str(a)] = {
                "m": m_rule(n, a),
                "replicates_ok": len(ok),
                "median_ratio_theta": float(np.median([r["ratio_theta"] for r in ok])) if ok else None,
                "median_ratio_psi": float(np.median([r["ratio_psi"] for r in ok])) if ok else None,
                "mean_dropped": float(np.mean([r["dropped"] for r in ok])) if ok else None,
            }
            constraints[str(n)][str(a)] = check_presmoothing_constraints(
                n, m_rule(n, a), opts["h_exponent"], opts["h_constant"], strict=False
            )

    top = str(exps[-1])
    n_max = str(config.n_ladder[-1])
    series = [summary[str(n)][top]["median_ratio_theta"] for n in config.n_ladder]
    decreasing = all(x is not None for x in series) and all(b < a for a, b in zip(series, series[1:]))
    at_max = {str(a): summary[n_max][str(a)]["median_ratio_theta"] for a in exps}
    smallest = all(v is not None for v in at_max.values()) and at_max[top] == min(at_max.values())
    thr = opts["ratio_threshold"]
    verdicts = {
        "top_rule_ratio_decreasing_in_n": {"value": series, "pass": bool(decreasing)},
        "top_rule_ratio_smallest_at_largest_n": {"value": at_max, "pass": bool(smallest)},
        "top_rule_ratio_below_threshold": {
            "value": at_max[top],
            "band": [0.0, thr],
            "pass": bool(at_max[top] is not None and at_max[top] < thr),
        },
    }
    report = _envelope(config, "transition-study")
    report.update(table=table, summary=summary, constraints=constraints, verdicts=verdicts)
    return report


# --------------------------------------------------------------------------
# simulate, fit, oracle
# --------------------------------------------------------------------------


def run_simulate(config, out):
    """Simulate one panel and write it as CSV plus a small metadata JSON."""
    config.validate()
    model = _model(config.model)
    design = build_design(config.design)
    n = int(config.options.get("n", config.n_ladder[0]))
    panel = simulate_panel(model, design, n, config.seed)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_panel_csv(panel, out / "panel.csv")
    meta = _envelope(config, "simulate")
    meta.update(n=n, observations=int(panel.counts.sum()), pair_count_N=panel.pair_count)
    write_json(out / "simulate.json", meta)
    return panel


def run_fit(panel, out, h_mu=None, h_phi=None, regime="eigenfunction", grid_size=101, j0=3, kernel="epanechnikov", source=None):
    """Fit a panel and write every artifact under ``out``."""
    if panel.pair_count == 0:
        raise DataTooSparseError("every subject has a single observation; covariance cannot be estimated")
    grid = Grid.uniform(panel.interval, grid_size)
    if h_mu is None or h_phi is None:
        s_mu, s_phi = bandwidth_schedule(panel.n, regime)
        h_mu = s_mu if h_mu is None else h_mu
        h_phi = s_phi if h_phi is None else h_phi
    fit = fit_fpca(panel, h_mu, h_phi, grid, KernelSpec(kernel), j0)
    extra = {
        "n": panel.n,
        "observations": int(panel.counts.sum()),
        "dropped_subjects": [panel.labels[i] for i in panel.sparse_subjects],
        "regime": regime,
        "kernel": kernel,
        "version": __version__,
    }
    if source is not None:
        extra["source"] = str(source)
    write_fit_artifacts(fit, out, extra)
    return fit


def run_oracle(config):
    """AsymptoticConstants for the configured model and design at the largest n."""
    config.validate()
    model = _model(config.model)
    design = build_design(config.design)
    n = config.n_ladder[-1]
    opts = config.options
    const = asymptotic_constants(
        model, design, n, config.kernel_spec, config.j0, opts["c1_variant"], int(opts["mc_draws"]), opts["oracle_seed"]
    )
    report = _envelope(config, "oracle")
    report["constants"] = const.to_dict()
    h_mu, h_phi = bandwidth_schedule(n, "eigenfunction", config.c_mu, config.c_phi)
    report["predicted_sq_psi"] = {
        conv: [const.predicted_sq_error(j, h_phi, conv) for j in range(1, len(const.C1) + 1)]
        for conv in ("ordered", "unordered")
    }
    report["h_phi"] = h_phi
    return report


def write_report(report, out, name):
    """Write ``<name>.json`` (and a plot-ready ``<name>_summary.csv`` for rate studies)."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(report, RateReport):
        write_rows_csv(out / f"{name}_summary.csv", ("n", "statistic", "value"), report.summary_rows())
        report = report.to_dict()
    elif "summary" in report and report.get("kind") == "transition-study":
        rows = []
        for n, per in report["summary"].items():
            for a, s in per.items():
                for stat in ("median_ratio_theta", "median_ratio_psi"):
                    rows.append((int(n), f"m_exp={a}:{stat}", s[stat]))
        write_rows_csv(out / f"{name}_summary.csv", ("n", "statistic", "value"), rows)
    (out / f"{name}.json").write_text(dumps(report), encoding="utf-8")
    return out / f"{name}.json"


def verdicts_passed(report):
    v = report.verdicts if isinstance(report, RateReport) else report.get("verdicts", {})
    return all(x["pass"] for x in v.values())
