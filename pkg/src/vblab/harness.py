"""Replicated experiments, rate-exponent regression, and table emission.

Every experiment is described by an ExperimentConfig and produces a
RateTable of per-n mean metrics with standard errors.  Replication
(n, rep) pairs map to independent random streams derived from the master
seed, so tables are bit-reproducible regardless of execution order.
fit_rate_exponent regresses log mean metric on log n, optionally with a
log log n column for rates that carry logarithmic corrections.
"""

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import changepoint, divergences, expfamily, mixture, sequence_model, truncated_series
from ._rng import generator
from .errors import InputError, NumericError, VblabError

__all__ = [
    "ExperimentConfig",
    "RateTable",
    "RateFit",
    "MODEL_IDS",
    "run_experiment",
    "fit_rate_exponent",
    "divergence_chain_report",
    "trunc_curve_rows",
    "emit",
    "read_table",
]

_CONFIG_KEYS = {"model", "n_grid", "replications", "master_seed", "params", "out"}


@dataclass(frozen=True)
class ExperimentConfig:
    """What to run: a model id, an n grid, replications, and a master seed.

    ``out`` is an optional default output path; the CLI --out flag takes
    precedence over it.
    """

    model: str
    n_grid: tuple
    replications: int
    master_seed: int
    params: dict
    out: Optional[str] = None

    def __post_init__(self):
        ns = tuple(int(n) for n in self.n_grid)
        if len(ns) == 0 or any(n <= 0 for n in ns):
            raise InputError("n_grid must contain positive integers")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise InputError("n_grid must be strictly increasing")
        object.__setattr__(self, "n_grid", ns)
        if self.replications < 1:
            raise InputError("replications must be at least 1")
        if not 0 <= self.master_seed < 2**64:
            raise InputError("master_seed must be a 64-bit unsigned integer")
        if not isinstance(self.params, dict):
            raise InputError("params must be a JSON object")

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise InputError("config must be a JSON object")
        unknown = set(raw) - _CONFIG_KEYS
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        missing = {"model", "n_grid", "replications", "master_seed"} - set(raw)
        if missing:
            raise InputError(f"missing config keys: {sorted(missing)}")
        out = raw.get("out")
        if out is not None and not isinstance(out, str):
            raise InputError("config key 'out' must be a path string")
        return cls(
            model=raw["model"],
            n_grid=tuple(raw["n_grid"]),
            replications=int(raw["replications"]),
            master_seed=int(raw["master_seed"]),
            params=raw.get("params", {}),
            out=out,
        )


@dataclass(frozen=True)
class RateTable:
    """Per-n summaries: mean metric, standard error, replication count."""

    n: np.ndarray
    mean_risk: np.ndarray
    stderr: np.ndarray
    replications: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.n, dtype=int)
        mean = np.asarray(self.mean_risk, dtype=float)
        se = np.asarray(self.stderr, dtype=float)
        reps = np.asarray(self.replications, dtype=int)
        if not (n.shape == mean.shape == se.shape == reps.shape) or n.ndim != 1:
            raise InputError("table columns must be 1-d and equally long")
        if n.size and np.any(np.diff(n) <= 0):
            raise InputError("rows must be sorted by strictly increasing n")
        if np.any(se < 0):
            raise InputError("standard errors must be non-negative")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "mean_risk", mean)
        object.__setattr__(self, "stderr", se)
        object.__setattr__(self, "replications", reps)

    def __len__(self) -> int:
        return self.n.size


@dataclass(frozen=True)
class RateFit:
    """Least-squares exponent fit of log mean metric on log n."""

    slope: float
    intercept: float
    r_squared: float
    loglog_coefficient: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.r_squared <= 1.0 + 1e-12:
            raise InputError("r_squared must lie in [0, 1]")


def fit_rate_exponent(table: RateTable, with_loglog: bool = False) -> RateFit:
    """Regress log(mean metric) on log n (and optionally log log n).

    The slope is the empirical rate exponent; with_loglog adds a
    log log n regressor for rates with logarithmic corrections.
    """
    if len(table) < 3:
        raise InputError("need at least 3 rows for an exponent fit")
    if np.any(table.mean_risk <= 0):
        raise InputError("exponent fits need strictly positive metrics")
    x = np.log(table.n.astype(float))
    y = np.log(table.mean_risk)
    cols = [np.ones_like(x), x]
    if with_loglog:
        cols.append(np.log(np.log(table.n.astype(float))))
    A = np.stack(cols, axis=1)
    coef, _, _, _ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return RateFit(
        slope=float(coef[1]),
        intercept=float(coef[0]),
        r_squared=r2,
        loglog_coefficient=float(coef[2]) if with_loglog else None,
    )


# ---------------------------------------------------------------------------
# model runners
# ---------------------------------------------------------------------------


def _resolve_spike_index(signal_opts: dict, alpha: float, n: int):
    j0 = signal_opts.get("j0")
    if j0 == "adversary":
        # spike just beyond twice the effective dimension (n / log n)^{1/(2a+1)}
        return math.ceil(2.0 * (n / math.log(n)) ** (1.0 / (2.0 * alpha + 1.0)))
    return int(j0) if j0 is not None else None


def _fit_gsm(params: dict, n: int, rng: np.random.Generator):
    alpha = float(params.get("alpha", 1.0))
    B = float(params.get("B", 1.0))
    sig_spec = params.get("signal", {"kind": "sobolev_boundary"})
    kind = sig_spec.get("kind", "sobolev_boundary")
    j0 = _resolve_spike_index(sig_spec, alpha, n)

    factor = float(params.get("k_max_factor", 4.0))
    K_max = max(8, math.ceil(factor * n ** (1.0 / (2.0 * alpha + 1.0))))
    if j0 is not None:
        K_max = max(K_max, j0 + 8)

    prior_spec = params.get("prior", {"family": "gaussian", "tau": 1.0, "sigma0_sq": 1.0})
    family_name = prior_spec.get("family", "gaussian")
    if family_name == "gaussian":
        fam = sequence_model.GaussianCoordinates(float(prior_spec.get("sigma0_sq", 1.0)))
    elif family_name == "rescaled_cauchy":
        fam = sequence_model.RescaledCauchyCoordinates(float(prior_spec.get("scale", 1.0)), n)
    elif family_name == "rescaled_gaussian":
        fam = sequence_model.RescaledGaussianCoordinates(
            float(prior_spec.get("variance", 1.0)), n
        )
    else:
        raise InputError(f"unknown coordinate family {family_name!r}")
    prior = sequence_model.SievePrior.geometric(float(prior_spec.get("tau", 1.0)), K_max, fam)

    signal = sequence_model.make_signal(kind, alpha, B, K_max, j0=j0)
    obs = sequence_model.sample_observation(signal, float(n), rng)
    post = (
        sequence_model.fit_empirical_bayes(prior, obs)
        if params.get("posterior") == "empirical_bayes"
        else sequence_model.fit_mean_field(prior, obs)
    )
    if int(np.argmax(post.log_weights)) >= K_max // 2:
        raise NumericError(
            f"model weight argmax reached K_max/2 = {K_max // 2}; truncation binds"
        )
    return post, signal


def _run_gsm_risk(params, n, rng):
    post, signal = _fit_gsm(params, n, rng)
    return sequence_model.expected_risk(post, signal)


def _run_gsm_dimension(params, n, rng):
    post, _ = _fit_gsm(params, n, rng)
    return float(post.k_tilde if hasattr(post, "k_tilde") else post.k_hat)


def _run_trunc_exact_risk(params, n, rng):
    alpha = float(params.get("alpha", 1.0))
    beta = float(params.get("beta", 1.0))
    B = float(params.get("B", 1.0))
    if params.get("k_rule") == "full":
        k = int(n)
    else:
        t = float(params.get("t", 1.0 / (2.0 * alpha + 1.0)))
        k = min(int(math.ceil(n**t - 1e-9)), int(n))
    return truncated_series.worst_case_risk(alpha, beta, int(n), k, B)


def _pc_common(params, n):
    sigma = float(params.get("sigma", 1.0))
    B = float(params.get("B", 1.0))
    G = int(params.get("G", 64))
    grid = changepoint.make_grid(B, sigma, G)
    signal_opts = params.get("signal", {"kind": "zero"})
    kind = signal_opts.get("kind", "zero")
    if kind == "zero":
        signal = changepoint.PiecewiseSignal(values=np.zeros(n), k_star=1, B=B)
    elif kind == "prefix":
        signal = changepoint.make_prefix_signal(
            n,
            int(signal_opts.get("k_star", 4)),
            B,
            seg_len=int(signal_opts.get("seg_len", 20)),
            amplitude=float(signal_opts.get("amplitude", 0.9)),
        )
        signal = changepoint.snap_to_grid(signal, grid)
    elif kind == "equal_segments":
        signal = changepoint.snap_to_grid(
            changepoint.make_piecewise_signal(n, int(signal_opts.get("k_star", 4)), B), grid
        )
    else:
        raise InputError(f"unknown piecewise signal kind {kind!r}")
    return sigma, B, grid, signal


def _run_pc_mean_field(params, n, rng):
    sigma, B, grid, signal = _pc_common(params, n)
    prior = changepoint.MarkovSitePrior(0.5, changepoint.UniformDensity(-B - 1, B + 1))
    X = signal.values + sigma * rng.standard_normal(n)
    post = changepoint.fit_mean_field(X, sigma, prior)
    return changepoint.risk(post, signal)


def _run_pc_markov_chain_batch(params, n, rngs):
    sigma, B, grid, signal = _pc_common(params, n)
    prob = params.get("change_prob", "reciprocal")
    if prob == "reciprocal":
        p = 1.0 / n
    elif isinstance(prob, dict) and "power" in prob:
        p = float(n) ** (-float(prob["power"]))  # the n^{-c} family
    else:
        p = float(prob)
    prior = changepoint.MarkovSitePrior(p, changepoint.UniformDensity(-B - 1, B + 1))
    X = np.stack([signal.values + sigma * rng.standard_normal(n) for rng in rngs])
    return changepoint.markov_chain_risks(X, sigma, prior, grid, signal)


def _run_mixture_hellinger(params, n, rng):
    truth_spec = params.get("truth", {"mu": [-3.0, 3.0], "w": [0.5, 0.5], "sigma": 0.5})
    truth = mixture.MixtureModel(
        k=len(truth_spec["mu"]),
        mu=np.asarray(truth_spec["mu"], dtype=float),
        w=np.asarray(truth_spec["w"], dtype=float),
        sigma=float(truth_spec["sigma"]),
    )
    hyper_spec = params.get("hyper", {})
    hyper = mixture.MixtureHyper(**hyper_spec)
    candidates = params.get("k_candidates", [1, 2, 3, 4])
    data = mixture.sample_mixture(truth, n, seed=rng)
    _, state = mixture.select_k(data, candidates, hyper, seed=int(rng.integers(2**63)))
    span = float(np.max(np.abs(truth.mu)) + 6.0 * max(truth.sigma, 1.0))
    grid = np.linspace(-span, span, int(params.get("grid_points", 2001)))
    f0 = mixture.mixture_pdf(truth, grid)
    return mixture.hellinger_to_truth(state, f0, grid)


def _run_expfamily_hellinger(params, n, rng):
    theta_star = np.asarray(params.get("theta_star", [0.7, -0.4, 0.2]), dtype=float)
    k = int(params.get("k", theta_star.size))
    prior = sequence_model.SievePrior.geometric(
        1.0,
        max(k, int(params.get("K_max", max(k, 6)))),
        sequence_model.GaussianCoordinates(float(params.get("sigma0_sq", 1.0))),
    )
    opt_spec = params.get("opt", {})
    cfg = expfamily.OptConfig(
        step_size=float(opt_spec.get("step_size", 0.25)),
        n_iters=int(opt_spec.get("n_iters", 250)),
        n_mc=int(opt_spec.get("n_mc", 64)),
        seed=int(rng.integers(2**63)),
    )
    data = expfamily.sample(theta_star, n, seed=rng)
    q = expfamily.fit_gaussian_mf(data, prior, k, opt_config=cfg)
    return expfamily.hellinger_numeric(q.mu, theta_star) ** 2


MODEL_IDS = {
    "gsm_risk": (_run_gsm_risk, False),
    "gsm_dimension": (_run_gsm_dimension, False),
    "gsm_spike_risk": (_run_gsm_risk, False),
    "trunc_exact_risk": (_run_trunc_exact_risk, False),
    "pc_mean_field": (_run_pc_mean_field, False),
    "pc_markov_chain": (_run_pc_markov_chain_batch, True),
    "mixture_hellinger": (_run_mixture_hellinger, False),
    "expfamily_hellinger": (_run_expfamily_hellinger, False),
}


def run_experiment(config: ExperimentConfig) -> RateTable:
    """Replicate the configured model over the n grid.

    The stream for replication r at sample size n is derived from
    (master_seed, n, r), so any subset of the table can be reproduced in
    isolation; failures are re-raised with the (n, rep) coordinates.
    """
    if config.model not in MODEL_IDS:
        raise InputError(f"unknown model id {config.model!r}")
    runner, batched = MODEL_IDS[config.model]
    means, ses = [], []
    for n in config.n_grid:
        rngs = [generator(config.master_seed, n, rep) for rep in range(config.replications)]
        try:
            if batched:
                vals = np.asarray(runner(config.params, n, rngs), dtype=float)
            else:
                vals = np.array(
                    [_run_one(runner, config.params, n, rep, rng) for rep, rng in enumerate(rngs)]
                )
        except VblabError as exc:
            raise type(exc)(f"n={n}: {exc}") from exc
        means.append(float(vals.mean()))
        ses.append(float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0)
    return RateTable(
        n=np.asarray(config.n_grid, dtype=int),
        mean_risk=np.asarray(means),
        stderr=np.asarray(ses),
        replications=np.full(len(config.n_grid), config.replications, dtype=int),
    )


def _run_one(runner, params, n, rep, rng):
    try:
        return float(runner(params, n, rng))
    except VblabError as exc:
        raise type(exc)(f"rep={rep}: {exc}") from exc


# ---------------------------------------------------------------------------
# special-purpose reports
# ---------------------------------------------------------------------------


def divergence_chain_report(config: ExperimentConfig) -> dict:
    """Random-pair audit of the divergence chain and Renyi monotonicity.

    Uses config.replications Dirichlet(1) pairs with sizes drawn from
    [n_grid[0], n_grid[-1]]; returns violation counts and the worst
    observed slack exceedance.
    """
    lo, hi = int(config.n_grid[0]), int(config.n_grid[-1])
    if lo < 2:
        raise InputError("distribution sizes start at 2")
    slack = float(config.params.get("slack", 1e-10))
    rho_grid = [float(r) for r in config.params.get("rho_grid", [0.5, 2.0, 4.0, 8.0])]
    ordering_failures = 0
    monotonicity_failures = 0
    worst = 0.0
    for i in range(config.replications):
        rng = generator(config.master_seed, 0, i)
        size = int(rng.integers(lo, hi + 1))
        p = divergences.DiscreteDistribution(rng.dirichlet(np.ones(size)))
        q = divergences.DiscreteDistribution(rng.dirichlet(np.ones(size)))
        rep = divergences.chain_report(p, q)
        vals = rep.chain()
        gap = max(
            (a - b)
            for a, b in zip(vals, vals[1:])
            if math.isfinite(a) and math.isfinite(b)
        )
        worst = max(worst, gap)
        if not rep.satisfies_ordering(slack):
            ordering_failures += 1
        if not divergences.renyi_monotonicity_check(p, q, rho_grid, slack=slack):
            monotonicity_failures += 1
    return {
        "pairs": config.replications,
        "ordering_failures": ordering_failures,
        "monotonicity_failures": monotonicity_failures,
        "max_ordering_gap": worst,
        "slack": slack,
    }


def trunc_curve_rows(config: ExperimentConfig) -> list:
    """Rate-exponent curve rows (t, fitted, theory) for the truncated family."""
    params = config.params
    t_grid = [float(t) for t in params.get("t_grid", [round(0.1 * i, 1) for i in range(1, 11)])]
    rows = truncated_series.rate_exponent_curve(
        float(params.get("alpha", 1.0)),
        float(params.get("beta", 1.0)),
        t_grid,
        list(config.n_grid),
        B=float(params.get("B", 1.0)),
    )
    return [
        {"t": t, "fitted_exponent": fitted, "theory_exponent": theory}
        for t, fitted, theory in rows
    ]


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


def _table_rows(table: RateTable) -> list:
    return [
        {
            "n": int(n),
            "mean_risk": float(m),
            "stderr": float(s),
            "replications": int(r),
        }
        for n, m, s, r in zip(table.n, table.mean_risk, table.stderr, table.replications)
    ]


def _fit_row(fit: RateFit) -> dict:
    row = {"slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared}
    if fit.loglog_coefficient is not None:
        row["loglog_coefficient"] = fit.loglog_coefficient
    return row


def _csv_text(rows: list, header: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(row[h]) if isinstance(row[h], float) else row[h] for h in header])
    return buf.getvalue()


def to_text(obj, fmt: str) -> str:
    """Serialize a table, fit, curve row list, or report dict."""
    if fmt not in ("csv", "json"):
        raise InputError(f"format must be 'csv' or 'json', got {fmt!r}")
    if isinstance(obj, RateTable):
        rows, header = _table_rows(obj), ["n", "mean_risk", "stderr", "replications"]
    elif isinstance(obj, RateFit):
        row = _fit_row(obj)
        rows, header = [row], list(row.keys())
    elif isinstance(obj, list):
        rows = obj
        header = list(rows[0].keys()) if rows else []
    elif isinstance(obj, dict):
        rows, header = [obj], list(obj.keys())
    else:
        raise InputError(f"cannot emit object of type {type(obj).__name__}")
    if fmt == "csv":
        return _csv_text(rows, header)
    payload = rows[0] if isinstance(obj, (RateFit, dict)) else rows
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def emit(obj, fmt: str, path: str) -> None:
    """Write a serialized object to path; I/O errors carry the path."""
    text = to_text(obj, fmt)
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from exc


def read_table(path: str, fmt: str = "csv") -> RateTable:
    """Parse a RateTable previously written by emit (round-trip exact)."""
    try:
        with open(path, "r", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if fmt == "json":
        rows = json.loads(text)
    elif fmt == "csv":
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != ["n", "mean_risk", "stderr", "replications"]:
            raise InputError(f"unexpected CSV header {reader.fieldnames}")
        rows = list(reader)
    else:
        raise InputError(f"format must be 'csv' or 'json', got {fmt!r}")
    return RateTable(
        n=np.array([int(r["n"]) for r in rows]),
        mean_risk=np.array([float(r["mean_risk"]) for r in rows]),
        stderr=np.array([float(r["stderr"]) for r in rows]),
        replications=np.array([int(r["replications"]) for r in rows]),
    )
