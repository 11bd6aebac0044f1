# The docstring below is used as part of the reference docs. It describes
# the experiment runner, which is mostly used through the command line.

"""

### Experiments

Every experiment is run with `python -m amp_lab <experiment> [flags]`:

* `soundness`: acceptance rate of a toy verifier against a toy prover
  (`toy`, `prover`, `rounds`, `bits`, `copies`, `wrap`, and `m`, `eps`,
  `n`, `kappa` for the `ce` toy).
* `attack-curve`: success of the attacker against the parallel repetition
  of the random-terminating counterexample verifier, for each `n` in a
  list, with the closed form, the lower bound and the decay rate.
* `skewed-exact`: the exact identities of the skewed distribution on random
  tiny instances (or on the instance file given with `--instance`).
* `smoothkl-cert`: the f_cut certificate and the small-event transport on
  the same instances.
* `martingale`: Monte Carlo exceedance against the martingale bounds.
* `concentration`: Monte Carlo domination of the tail bounds and the
  smooth-sampling identity.
* `bad-t`: report-only running-time diagnostics.
* `embed-law`: the law of the rejection-continuation attack against the
  exact skewed distribution.
* `warmup`: the two-round warm-up protocol.

### Configuration

Parameters come from the defaults of the experiment, then from a flat
`key = value` file (`--config`), then from the command line, where later
sources win. Values are read as int, float, comma-separated list or
string, in that order. `seed` fixes every random draw: a trial (or a block
of vectorized trials) uses its own stream derived from the seed, the
experiment and its index, so the results do not depend on `workers`.

### Reports

A report holds one record per metric with the estimate, its confidence
interval (two-sided Hoeffding at 99.7%), the bound it is compared with, a
short description of that bound and a verdict (`pass`, `fail` or
`report`). `--format json` writes a nested document with `schema` "1";
`--format csv` writes one row per metric.

"""

import csv
import hashlib
import io
import itertools
import json
import logging
import math
import time
from dataclasses import dataclass, field
from multiprocessing import Pool

import numpy as np
from scipy.stats import linregress

from . import __version__
from .attack import (
    AttackConfig,
    bounding_function_gap,
    embed_attack,
    grouped_embed_attack,
    winning_model,
)
from .concentration import (
    hoeffding_bound,
    hoeffding_interval,
    scaled_bernoulli_bound,
    simulate_scaled_bernoulli,
    simulate_uniform_sums,
    simulate_weighted_bernoulli,
    smooth_sampling_check,
    standard_error,
    variance_bound,
)
from .counterexample import (
    PROVERS as CE_PROVERS,
    CEParams,
    IdealPKE,
    attack_success_exact,
    bin_verifier,
    ce_attacker,
    ce_verifier,
    lower_bound_value,
    naive_success_exact,
    rate_bound,
)
from .dist_core import EventPredicate, empirical_pmf, total_variation
from .divergence import small_event_bound
from .errors import ConfigError, LabError
from .instances import (
    bit_columns,
    load_instance,
    make_winning_event,
    random_instance,
    termination_family,
)
from .martingale import (
    combine,
    estimate_from_summary,
    make_generator,
    martingale_self_test,
    simulate_block,
    summarize,
)
from .protocol import (
    AlwaysAccept,
    BlindProver,
    CoinGuessing,
    GroupedProver,
    OracleProver,
    ProductProver,
    SealCopyingProver,
    parallel_repeat,
    random_terminating_wrap,
    rt_simulator,
    run_protocol,
)
from .skewed import BaseModel, get_model, ideal_running_time_diagnostic


logger = logging.getLogger(__name__)

SCHEMA = "1"
CHUNK = 1000
TOL = 1e-9
LAW_TV = 0.02

COMMON = {
    "seed": 0,
    "workers": 1,
    "out": "",
    "format": "json",
}

_INSTANCE_PARAMS = {
    "instance": "",
    "m": 2,
    "n": 2,
    "delta": 0.5,
    "w": "column-sums-equal",
}

DEFAULTS = {
    "soundness": {
        "toy": "coin-guess",
        "prover": "blind",
        "rounds": 2,
        "bits": 1,
        "copies": 1,
        "wrap": 0,
        "m": 4,
        "eps": 0.1,
        "n": 2,
        "kappa": 32,
        "trials": 10_000,
    },
    "attack-curve": {
        "m": 4,
        "eps": 0.1,
        "n": [20, 40, 60, 80],
        "kappa": 32,
        "trials": 100_000,
    },
    "skewed-exact": dict(_INSTANCE_PARAMS, instances=100),
    "smoothkl-cert": dict(_INSTANCE_PARAMS, instances=50, events=1000),
    "martingale": {
        "family": ["multiplicative", "survival-4", "survival-10", "uniform-ratio", "stopped", "ratio"],
        "lambda": [0.05, 0.1, 0.25],
        "trials": 100_000,
        "block": 10_000,
    },
    "concentration": {"trials": 100_000, "instances": 100},
    "bad-t": dict(_INSTANCE_PARAMS, instances=20, t=[2, 4, 8, 16], events=200),
    "embed-law": {
        "rounds": 2,
        "bits": 1,
        "n": 2,
        "groups": 1,
        "cap": 10_000,
        "trials": 100_000,
    },
    "warmup": {"n": [2, 4, 6, 8], "kappa": 32, "trials": 100_000},
}

EXPERIMENTS = tuple(DEFAULTS)


# %% Configuration


def parse_value(text):
    """Read a config value as int, float, comma-separated list or string."""
    if not isinstance(text, str):
        return text
    text = text.strip()
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    if "," in text:
        return [parse_value(part) for part in text.split(",") if part.strip()]
    return text


def read_config_file(path):
    """Read a flat `key = value` file into a dict of raw strings."""
    values = {}
    try:
        with open(path, "rb") as f:
            text = f.read().decode()
    except OSError as err:
        raise ConfigError(f"Cannot read config file {path!r}: {err}") from err
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        values[key.strip()] = value.strip()
    return values


def _coerce(key, value, default):
    if isinstance(default, list):
        value = value if isinstance(value, list) else [value]
        if any(isinstance(v, str) for v in value) != any(isinstance(v, str) for v in default):
            raise ConfigError(f"Invalid value {value!r} for {key!r}")
        return value
    if isinstance(default, bool) or isinstance(default, int):
        if not isinstance(value, int):
            raise ConfigError(f"Expected {key} to be an int, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, (list, str)):
            raise ConfigError(f"Expected {key} to be a number, got {value!r}")
        return float(value)
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment configuration.

    * `name` (`str`): the experiment.
    * `params` (`dict`): the experiment parameters.
    * `seed` (`int`): the master seed.
    * `workers` (`int`): the number of worker processes.
    * `out` (`str`): the output path, empty for stdout.
    * `format` (`str`): "json" or "csv".
    """

    name: str
    params: dict
    seed: int = 0
    workers: int = 1
    out: str = ""
    format: str = "json"

    def __getitem__(self, key):
        return self.params[key]

    def as_dict(self):
        """The configuration as plain data. The worker count is left out,
        since it does not change the results.
        """
        return {
            "name": self.name,
            "params": dict(self.params),
            "seed": self.seed,
            "format": self.format,
        }


def load_config(name, flags=None, file=None):
    """Build an ExperimentConfig from the defaults, an optional config file
    and a dict of flags. Flags win over the file; `None` flags are ignored.
    """
    if name not in DEFAULTS:
        raise ConfigError(f"Unknown experiment {name!r}; expected one of {', '.join(EXPERIMENTS)}")
    defaults = dict(COMMON, **DEFAULTS[name])
    merged = dict(defaults)
    for source in (read_config_file(file) if file else {}, flags or {}):
        for key, value in source.items():
            if value is None:
                continue
            key = key.strip().replace("_", "-")
            if key not in defaults:
                key = key.replace("-", "_")
            if key not in defaults:
                raise ConfigError(f"Unknown parameter {key!r} for experiment {name!r}")
            merged[key] = _coerce(key, parse_value(value), defaults[key])
    common = {key: merged.pop(key) for key in COMMON}
    if common["seed"] < 0:
        raise ConfigError("Expected seed to be nonnegative.")
    if common["workers"] < 1:
        raise ConfigError("Expected workers to be positive.")
    if common["format"] not in ("json", "csv"):
        raise ConfigError(f"Unknown report format {common['format']!r}")
    if "trials" in merged and merged["trials"] < 1:
        raise ConfigError("Expected trials >= 1.")
    return ExperimentConfig(name, merged, **common)


# %% Seeding and parallel execution


def experiment_key(name):
    """A stable 64-bit integer derived from a name."""
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


def stream(seed, name, index):
    """The random stream of trial (or block) `index` of experiment `name`."""
    return np.random.default_rng(np.random.SeedSequence([seed, experiment_key(name), index]))


def _pool_map(fn, tasks, workers):
    if workers > 1 and len(tasks) > 1:
        with Pool(processes=workers) as pool:
            return pool.map(fn, tasks)
    return [fn(task) for task in tasks]


def _run_chunk(task):
    kind, params, seed, tag, start, stop = task
    fn = TRIALS[kind]
    return [fn(params, stream(seed, tag, k)) for k in range(start, stop)]


def run_trials(kind, params, cfg, trials, tag=None):
    """Run `trials` independent trials of `kind` and return their results in
    trial order. Trials are cut into fixed chunks that run on
    `cfg.workers` processes.
    """
    tag = tag or cfg.name
    tasks = [
        (kind, params, cfg.seed, tag, start, min(start + CHUNK, trials))
        for start in range(0, trials, CHUNK)
    ]
    chunks = _pool_map(_run_chunk, tasks, cfg.workers)
    return [result for chunk in chunks for result in chunk]


# %% Reports


@dataclass(frozen=True)
class Metric:
    """One line of a report.

    * `name` (`str`): what is measured.
    * `estimate` (`float`): the measured or computed value.
    * `ci` (tuple or `None`): the confidence interval of a Monte Carlo estimate.
    * `bound` (`float` or `None`): the value it is compared with.
    * `bound_ref` (`str`): what the bound is.
    * `verdict` (`str`): "pass", "fail" or "report".
    """

    name: str
    estimate: float
    ci: tuple = None
    bound: float = None
    bound_ref: str = ""
    verdict: str = "report"

    def as_dict(self):
        return {
            "name": self.name,
            "estimate": self.estimate,
            "ci": list(self.ci) if self.ci is not None else None,
            "bound": self.bound,
            "bound_ref": self.bound_ref,
            "verdict": self.verdict,
        }


@dataclass
class ExperimentReport:
    """The result of `run_experiment`."""

    config: ExperimentConfig
    metrics: list = field(default_factory=list)
    caps: dict = field(default_factory=dict)
    runtime_ms: float = 0.0
    schema: str = SCHEMA
    version: str = __version__

    @property
    def passed(self) -> bool:
        """Whether no metric failed."""
        return all(m.verdict != "fail" for m in self.metrics)

    def metric(self, name):
        """The metric called `name`."""
        for m in self.metrics:
            if m.name == name:
                return m
        raise KeyError(name)

    def add(self, *args, **kwargs):
        metric = Metric(*args, **kwargs)
        if metric.verdict == "fail":
            logger.warning("%s: %s failed (%r vs %r, %s)", self.config.name, metric.name, metric.estimate, metric.bound, metric.bound_ref)
        self.metrics.append(metric)
        return metric

    def as_dict(self):
        return {
            "config": self.config.as_dict(),
            "metrics": [m.as_dict() for m in self.metrics],
            "caps": dict(self.caps),
            "runtime_ms": self.runtime_ms,
            "schema": self.schema,
            "version": self.version,
        }


CSV_FIELDS = ("experiment", "metric", "estimate", "ci_low", "ci_high", "bound", "verdict")


def emit_report(report, fmt="json", path=None):
    """Render a report as JSON or CSV text, and write it to `path` if given."""
    if fmt == "json":
        text = json.dumps(report.as_dict(), indent=2) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for m in report.metrics:
            lo, hi = m.ci if m.ci is not None else ("", "")
            writer.writerow(
                {
                    "experiment": report.config.name,
                    "metric": m.name,
                    "estimate": m.estimate,
                    "ci_low": lo,
                    "ci_high": hi,
                    "bound": "" if m.bound is None else m.bound,
                    "verdict": m.verdict,
                }
            )
        text = buf.getvalue()
    else:
        raise ConfigError(f"Unknown report format {fmt!r}")
    if path:
        with open(path, "wb") as f:
            f.write(text.encode())
        logger.info("Wrote %s report to %s", fmt, path)
    return text


def _verdict(ok):
    return "pass" if ok else "fail"


def _rate(report, name, hits, trials, expected=None, bound_ref=""):
    # passes when the expected value lies in the Hoeffding interval
    p_hat = hits / trials
    ci = hoeffding_interval(p_hat, trials)
    if expected is None:
        return report.add(name, p_hat, ci, None, bound_ref, "report")
    ok = ci[0] - TOL <= expected <= ci[1] + TOL
    return report.add(name, p_hat, ci, expected, bound_ref, _verdict(ok))


def _at_most(report, name, value, bound, bound_ref):
    return report.add(name, float(value), None, bound, bound_ref, _verdict(value <= bound))


# %% Protocol trials


def _soundness_setup(params):
    toy, prover, copies = params["toy"], params["prover"], params["copies"]
    if toy == "always-accept":
        v = AlwaysAccept(params["rounds"])
        make = BlindProver
    elif toy == "coin-guess":
        v = CoinGuessing(params["rounds"], params["bits"])
        if prover == "blind":
            make = lambda: BlindProver(params["bits"])  # noqa: E731
        elif prover == "oracle":
            make = OracleProver
        else:
            raise ConfigError(f"Unknown prover {prover!r} for the coin-guess toy")
    elif toy == "ce":
        pke = IdealPKE()
        ce = CEParams(params["m"], params["eps"], params["n"], params["kappa"])
        v = ce_verifier(ce, pke)
        if prover not in CE_PROVERS:
            raise ConfigError(f"Unknown prover {prover!r} for the ce toy")
        make = lambda: CE_PROVERS[prover](ce, pke)  # noqa: E731
    else:
        raise ConfigError(f"Unknown toy {toy!r}")
    if params["wrap"]:
        v = random_terminating_wrap(v)
    if copies > 1:
        return parallel_repeat(v, copies), ProductProver([make() for _ in range(copies)])
    return v, make()


def soundness_expected(params):
    """The exact acceptance probability of a soundness configuration, or
    None where no closed form is known.
    """
    toy, prover = params["toy"], params["prover"]
    if toy == "always-accept":
        s = 1.0
    elif toy == "coin-guess":
        s = 1.0 if prover == "oracle" else 2.0 ** -params["bits"]
    elif params["wrap"]:
        return None
    else:
        eps = params["eps"]
        s = {"honest": 1.0, "naive": naive_success_exact(eps), "replay": 1 - 3 * eps}[prover]
    if params["wrap"]:
        r = params["m"] if toy == "ce" else params["rounds"]
        s = 1 - (1 - 1 / r) ** r * (1 - s)
    return s ** params["copies"]


def _soundness_trial(params, rng):
    v, p = _soundness_setup(params)
    return bool(run_protocol(v, p, rng).accepted)


def _attack_trial(params, rng):
    pke = IdealPKE()
    ce = CEParams(params["m"], params["eps"], params["n_value"], params["kappa"])
    par = parallel_repeat(random_terminating_wrap(ce_verifier(ce, pke)), ce.n)
    t = run_protocol(par, ce_attacker(ce, pke), rng)
    return bool(t.accepted), pke.dec_calls


def _warmup_trial(params, rng):
    pke = IdealPKE()
    v = bin_verifier(pke, n=params["n_value"], kappa=params["kappa"])
    par = parallel_repeat(random_terminating_wrap(v), v.params.n)
    t = run_protocol(par, ce_attacker(v.params, pke), rng)
    return bool(t.accepted), pke.dec_calls


def _embed_setup(params):
    v = random_terminating_wrap(CoinGuessing(params["rounds"], params["bits"]))
    return v, rt_simulator(v)


def _embed_trial(params, rng):
    v, sim = _embed_setup(params)
    n, groups = params["n"], params["groups"]
    cfg = AttackConfig(n, cap=params["cap"], groups=groups)
    if groups == 1:
        attacker = embed_attack(SealCopyingProver(n), sim, cfg)
    else:
        oracle = GroupedProver([SealCopyingProver(n) for _ in range(groups)], n)
        attacker = grouped_embed_attack(oracle, sim, cfg)
    t = run_protocol(v, attacker, rng, run_to_end=True)
    stats = attacker.stats
    if stats.capped:
        return None, False, stats.total_iterations
    return (stats.j, stats.matrix(t.coins, rounds=v.rounds)), bool(t.accepted), stats.total_iterations


TRIALS = {
    "soundness": _soundness_trial,
    "attack": _attack_trial,
    "warmup": _warmup_trial,
    "embed": _embed_trial,
}


# %% Experiments


def _run_soundness(cfg, report):
    params = cfg.params
    _soundness_setup(params)
    results = run_trials("soundness", params, cfg, params["trials"])
    _rate(
        report,
        "acceptance",
        sum(results),
        len(results),
        soundness_expected(params),
        "exact acceptance probability of the toy",
    )


def _slope_error(ns, rates, trials, fit_stderr):
    # sampling error of log(rate) by the delta method, added to the fit residuals
    ns = np.asarray(ns, dtype=float)
    rates = np.asarray(rates, dtype=float)
    w = (ns - ns.mean()) / ((ns - ns.mean()) ** 2).sum()
    sampling = ((w ** 2) * (1 - rates) / (rates * trials)).sum()
    fit = fit_stderr if math.isfinite(fit_stderr) else 0.0
    return math.sqrt(sampling + fit ** 2)


def measured_decay(report, ns, rates, trials, bound):
    """Fit log(rate) against n and check the decay rate against `bound`,
    with 3 standard errors of the fitted slope as slack.
    """
    res = linregress(ns, np.log(rates))
    rate = abs(res.slope)
    slack = 3 * _slope_error(ns, rates, trials, res.stderr)
    return report.add(
        "measured decay rate",
        rate,
        (max(0.0, rate - slack), rate + slack),
        bound,
        "14 |ln(1 - eps)| / m, with 3 standard errors of the fitted slope",
        _verdict(rate <= bound + slack),
    )


def _run_attack_curve(cfg, report):
    p = cfg.params
    m, eps = p["m"], p["eps"]
    ns = sorted(p["n"])
    exact, measured = [], []
    dec_calls = 0
    for n in ns:
        params = dict(p, n_value=n)
        results = run_trials("attack", params, cfg, p["trials"], tag=f"{cfg.name}:n={n}")
        wins = sum(acc for acc, _ in results)
        dec_calls += sum(calls for _, calls in results)
        value = attack_success_exact(eps, n, m)
        metric = _rate(report, f"success n={n}", wins, len(results), value, "closed-form attack success")
        exact.append(value)
        measured.append(metric.estimate)
        lb = lower_bound_value(eps, n, m)
        if n >= m / eps:
            report.add(f"above lower bound n={n}", metric.estimate, metric.ci, lb, "(1 - eps)^(14 n / m)", _verdict(metric.ci[0] > lb))
        else:
            report.add(f"above lower bound n={n}", metric.estimate, metric.ci, lb, "(1 - eps)^(14 n / m), n < m / eps")
    report.add("decryption calls", dec_calls, None, 0, "the attacker never decrypts", _verdict(dec_calls == 0))
    if len(ns) >= 2:
        bound = rate_bound(eps, m)
        slope = linregress(ns, np.log(exact)).slope
        _at_most(report, "closed-form decay rate", abs(slope), bound, "14 |ln(1 - eps)| / m")
        if all(v > 0 for v in measured):
            measured_decay(report, ns, measured, p["trials"], bound)


def _run_warmup(cfg, report):
    p = cfg.params
    for n in sorted(p["n"]):
        params = dict(p, n_value=n)
        results = run_trials("warmup", params, cfg, p["trials"], tag=f"{cfg.name}:n={n}")
        wins = sum(acc for acc, _ in results)
        calls = sum(c for _, c in results)
        metric = _rate(
            report,
            f"success n={n}",
            wins,
            len(results),
            attack_success_exact(1 / 3, n, 2, dilute=False),
            "closed-form attack success without dilution",
        )
        report.add(f"failure n={n}", 1 - metric.estimate, None, 2.0 ** (-n / 4), "2^(-n/4), informal success of the naive attack")
        report.add(f"decryption calls n={n}", calls, None, 0, "the attacker never decrypts", _verdict(calls == 0))


def _run_embed_law(cfg, report):
    p = cfg.params
    results = run_trials("embed", p, cfg, p["trials"])
    trials = len(results)
    keys = [key for key, _, _ in results if key is not None]
    caps = trials - len(keys)
    report.caps["inner-loop"] = caps
    if caps:
        logger.warning("%d of %d runs hit the inner-loop cap", caps, trials)
    report.add("cap rate", caps / trials, None, 1e-3, "cap hits below 0.1%", _verdict(caps / trials < 1e-3))
    _rate(report, "real verifier accepts", sum(acc for _, acc, _ in results), trials, None, "acceptance of the embedded copy")
    report.add("mean inner iterations", float(np.mean([it for _, _, it in results])), None, None, "summed over rounds and groups")
    if p["groups"] != 1 or not keys:
        return
    v, _ = _embed_setup(p)
    base, fam = winning_model(v, SealCopyingProver(p["n"]), p["n"])
    m = v.rounds
    Q = get_model(base, fam).skewed.map_values(lambda jx: (jx[0], jx[1][:m]))
    tv = total_variation(empirical_pmf(keys), Q)
    _at_most(report, "law total variation", tv, LAW_TV, "TV to the skewed distribution")


# %% Exact suites


def _instances(cfg):
    # yields (label, base, family, builtin)
    p = cfg.params
    if p["instance"]:
        base, fam = load_instance(p["instance"])
        yield "file", base, fam, False
        return
    m, n = p["m"], p["n"]
    name, *args = p["w"].split()
    W = make_winning_event(name, m, n, *args)
    yield "termination", BaseModel(m, n, bit_columns(m, n, p["delta"]), W), termination_family(m, n), True
    for k in range(p["instances"]):
        rng = stream(cfg.seed, cfg.name, k)
        base, fam = random_instance(rng, m, n, prefix=bool(k % 2))
        yield f"random {k}", base, fam, True


def _support_mask(model):
    return np.array([model.ideal.prob(x) > 0 for x in model.matrices])


def skewed_identities(model):
    """The largest deviations from the exact identities of a skewed model,
    as a dict of floats (all zero up to rounding).
    """
    base = model.base
    m, n = base.m, base.n
    X = model.matrices
    support = _support_mask(model)
    ledgers = {}

    def ledger(prefix):
        if prefix not in ledgers:
            ledgers[prefix] = model.ledger(prefix)
        return ledgers[prefix]

    q_j = np.zeros(n)
    post = {}
    for (j, x), q in model.skewed.items():
        q_j[j] += q
        for i in range(m):
            post.setdefault(x[:i], np.zeros(n))[j] += q
    out = {"q_j uniform": float(np.max(np.abs(q_j - 1 / n)))}

    bayes = first = 0.0
    for prefix, weights in post.items():
        omega = np.array(ledger(prefix).omega)
        if not prefix:
            first = max(first, float(np.max(np.abs(omega - 1))))
        bayes = max(bayes, float(np.max(np.abs(weights / weights.sum() - omega / omega.sum()))))
    out["posterior of j"] = bayes
    out["first-round omega"] = first

    gamma = model.gamma_array
    worst = 0.0
    for i in range(m):
        mean = model.conditional_mean(np.where(support, gamma[i], 0.0), i)[support]
        mean = mean[np.isfinite(mean)]
        if mean.size:
            worst = max(worst, float(np.max(np.abs(mean))))
    out["gamma mean"] = worst

    ext = model.ext_arrays()
    worst = 0.0
    for key in ("U", "V"):
        arr = ext[key]
        for i in range(m):
            for j in range(n):
                prev = arr[i - 1, j] if i else np.ones(len(X))
                mean = model.conditional_mean(np.where(support, arr[i, j], 0.0), i)
                dev = np.abs(mean - prev)[support] / np.maximum(1.0, np.abs(prev[support]))
                dev = dev[np.isfinite(dev)]
                if dev.size:
                    worst = max(worst, float(np.max(dev)))
    out["U and V martingales"] = worst

    worst = 0.0
    U, V, R = ext["U"], ext["V"], ext["R"]
    for k in np.flatnonzero(support):
        for i in range(m):
            omega = np.array(ledger(X[k][:i]).omega)
            with np.errstate(invalid="ignore", divide="ignore"):
                rhs = R[i, :, k] * (V[i - 1, :, k] / U[i - 1, :, k] if i else 1.0)
            ok = np.isfinite(rhs)
            if np.any(ok):
                worst = max(worst, float(np.max(np.abs(omega[ok] - rhs[ok]))))
    out["omega = R V / U"] = worst

    _, d = model.divergence_budget()
    log_w = math.log(1 / model.u_w)
    out["d - m ln(1/U[W])"] = d - m * log_w
    if model.density.prefix:
        out["d - 2 ln(1/U[W])"] = d - 2 * log_w
    return out


def degeneracy_deviation(base, fam):
    """With W the full event, the largest of |beta' - 1|, |omega - 1|,
    |rho|, |tau|, |xi| and d, over the support.
    """
    model = get_model(BaseModel(base.m, base.n, base.columns, EventPredicate.full()), fam)
    ext = model.ext_arrays()
    values = [model.divergence_budget()[1]]
    for key in ("alpha", "rho", "tau", "xi"):
        arr = ext[key]
        arr = arr[np.isfinite(arr)]
        values.append(float(np.max(np.abs(arr))) if arr.size else 0.0)
    for x in model.matrices:
        for i in range(base.m):
            led = model.ledger(x[:i])
            values.append(float(np.max(np.abs(np.array(led.omega) - 1))))
            for j in range(base.n):
                values.extend(abs(b - 1) for b in led.beta[j].values())
    return max(values)


def _run_skewed_exact(cfg, report):
    worst = {}
    degenerate = 0.0
    count = 0
    for label, base, fam, builtin in _instances(cfg):
        model = get_model(base, fam)
        for key, value in skewed_identities(model).items():
            if value > worst.get(key, (-math.inf, ""))[0]:
                worst[key] = (value, label)
        if builtin:
            degenerate = max(degenerate, degeneracy_deviation(base, fam))
        count += 1
    logger.info("Checked %d instances", count)
    for key, (value, label) in worst.items():
        _at_most(report, key, value, TOL, f"exact identity, worst on {label}")
    _at_most(report, "full-W degeneracy", degenerate, TOL, "beta = omega = 1, rho = tau = xi = d = 0 when W is full")


def _subsets(outcomes, rng, limit):
    # every subset for small universes, `limit` random ones otherwise
    if len(outcomes) <= 16:
        for r in range(len(outcomes) + 1):
            yield from itertools.combinations(outcomes, r)
        return
    for _ in range(limit):
        mask = rng.random(len(outcomes)) < 0.5
        yield tuple(x for x, keep in zip(outcomes, mask) if keep)


def _set_event(members):
    members = frozenset(members)
    return EventPredicate(lambda x: x in members, f"{len(members)} outcomes")


def _run_smoothkl_cert(cfg, report):
    alpha_dev = div_excess = worst_margin = -math.inf
    violations = events = 0
    for k, (label, base, fam, _) in enumerate(_instances(cfg)):
        model = get_model(base, fam)
        cert = model.fcut_certificate()
        alpha_dev = max(alpha_dev, abs(cert.cert.alpha - (1 - cert.ideal_c)))
        div_excess = max(div_excess, cert.cert.div - cert.bound)
        rng = stream(cfg.seed, f"{cfg.name}:events", k)
        Q = model.skewed_x
        for subset in _subsets(model.ideal.outcomes, rng, cfg["events"]):
            E = _set_event(subset)
            margin = Q.prob_of(E) - small_event_bound(cert.projected, model.ideal, E)
            worst_margin = max(worst_margin, margin)
            violations += margin > TOL
            events += 1
    _at_most(report, "alpha = 1 - Idl[C]", alpha_dev, TOL, "f_cut certificate mass")
    _at_most(report, "div - sum of round terms", div_excess, TOL, "chain rule over rounds")
    report.add("small-event violations", violations, None, 0, f"Q[E] <= 2 max(alpha + Idl[E], 4 div) over {events} events", _verdict(violations == 0))
    report.add("worst small-event margin", worst_margin, None, None, "Q[E] - 2 max(alpha + Idl[E], 4 div)")


def _run_bad_t(cfg, report):
    ts = sorted(cfg["t"])
    p_t = {t: [] for t in ts}
    implied = {t: [] for t in ts}
    gaps = []
    for k, (label, base, fam, _) in enumerate(_instances(cfg)):
        for t in ts:
            diag = ideal_running_time_diagnostic(base, fam, t)
            p_t[t].append(diag["p_t"])
            implied[t].append(diag["implied_constant"])
        rng = stream(cfg.seed, f"{cfg.name}:events", k)
        outcomes = get_model(base, fam).ideal.outcomes
        for _ in range(cfg["events"]):
            mask = rng.random(len(outcomes)) < 0.5
            E = _set_event(x for x, keep in zip(outcomes, mask) if keep)
            gaps.append(bounding_function_gap(base, fam, E)[2])
    for t in ts:
        report.add(f"max p_t t={t}", max(p_t[t]), None, None, "Pr[Bad_t] over the instances")
        report.add(f"max implied constant t={t}", max(implied[t]), None, None, "(p_t - 2m/t) delta n / (d + 1)")
    if gaps:
        report.add("max bounding-function gap", max(gaps), None, None, "max(0, Q_X[T] - 2 Idl_X[T]) over random events T")


# %% Monte Carlo suites


def _generator(label):
    name, _, arg = label.rpartition("-")
    if name == "survival" and arg.isdigit():
        return make_generator("survival", m=int(arg))
    return make_generator(label)


def _martingale_block(task):
    label, lam, seed, tag, index, size = task
    return summarize(simulate_block(_generator(label), size, stream(seed, tag, index)), lam)


def _run_martingale(cfg, report):
    p = cfg.params
    trials, block = p["trials"], p["block"]
    if trials < 1000:
        raise ConfigError("Expected at least 1000 trials.")
    for label in p["family"]:
        gen = _generator(label)
        dev = martingale_self_test(gen, stream(cfg.seed, f"{cfg.name}:{label}:self-test", 0))
        _at_most(report, f"{label} step mean", dev, 5.0, "conditional mean of the step, in standard errors")
        for lam in p["lambda"]:
            tag = f"{cfg.name}:{label}:{lam}"
            tasks = [
                (label, lam, cfg.seed, tag, index, min(block, trials - start))
                for index, start in enumerate(range(0, trials, block))
            ]
            est = estimate_from_summary(combine(_pool_map(_martingale_block, tasks, cfg.workers)), lam)
            checks = [("lemma", est.lemma_check(), "23 E[mu] / lambda^2")]
            if gen.two_factor:
                checks.append(("two-factor", est.prop_check(), "150 E[sum min(|z|,z^2) + min(|t|,t^2)] / lambda^2"))
            for kind, (p_hat, bound, slack), ref in checks:
                if bound > 1:
                    logger.warning("%s at lambda=%g: vacuous %s bound %g", label, lam, kind, bound)
                report.add(
                    f"{label} {kind} lambda={lam}",
                    p_hat,
                    est.ci,
                    bound,
                    f"{ref} (+ {slack:.3g} slack)",
                    _verdict(p_hat <= bound + slack),
                )


def _mc_metric(report, name, emp, trials, bound, ref):
    slack = 3 * max(standard_error(emp, trials), 1 / trials)
    report.add(name, emp, hoeffding_interval(emp, trials), bound, ref, _verdict(emp <= bound + slack))


def _run_concentration(cfg, report):
    p = cfg.params
    trials = p["trials"]
    name = cfg.name

    k, t = 100, 10.0
    emp = simulate_uniform_sums(k, t, trials, stream(cfg.seed, name, 0))
    _mc_metric(report, "hoeffding", emp, trials, hoeffding_bound([(0, 1)] * k, t), "exp(-2 t^2 / k), k=100 uniforms, t=10")

    b, q = np.ones(50), np.full(50, 0.1)
    t = 5.0
    emp = simulate_weighted_bernoulli(b, q, t, trials, stream(cfg.seed, name, 1))
    _mc_metric(report, "variance bound", emp, trials, variance_bound(float(b ** 2 @ q), 1.0, t), "2 exp(-t^2 / (2 (v + b t / 3))), 50 Bern(0.1), t=5")

    L, q, gamma = np.ones(200), np.full(200, 0.5), 0.3
    emp = simulate_scaled_bernoulli(L, q, gamma, trials, stream(cfg.seed, name, 2))
    bound = scaled_bernoulli_bound(0.5, float(L.sum()), gamma, 1.0, 200)
    _mc_metric(report, "scaled bernoulli", emp, trials, bound, "4 exp(-p mu^2 gamma^2 / (5 l^2 n)), n=200, p=1/2, gamma=0.3")

    excess = exact = 0.0
    for k in range(p["instances"]):
        base, _ = random_instance(stream(cfg.seed, f"{name}:instances", k), 2, 2)
        U = base.matrix_pmf()
        for i in range(base.m + 1):
            lhs, rhs = smooth_sampling_check(U, base.W, i)
            excess = max(excess, lhs - rhs)
            if {x[:i] for x in U.support} == {x[:i] for x in U.support if base.W(x)}:
                exact = max(exact, abs(lhs - rhs))
    _at_most(report, "smooth sampling excess", excess, TOL, "E[1 / P[W | x_<i] | W] <= 1 / P[W]")
    _at_most(report, "smooth sampling identity", exact, TOL, "equality when every prefix reaches W")


RUNNERS = {
    "soundness": _run_soundness,
    "attack-curve": _run_attack_curve,
    "skewed-exact": _run_skewed_exact,
    "smoothkl-cert": _run_smoothkl_cert,
    "martingale": _run_martingale,
    "concentration": _run_concentration,
    "bad-t": _run_bad_t,
    "embed-law": _run_embed_law,
    "warmup": _run_warmup,
}


def _with_context(name, err):
    message = f"{name}: {err}"
    try:
        return type(err)(message)
    except TypeError:
        return LabError(message)


def run_experiment(cfg):
    """Run the experiment described by an ExperimentConfig and return its
    ExperimentReport.
    """
    if not isinstance(cfg, ExperimentConfig):
        raise TypeError("Expected an ExperimentConfig.")
    logger.info("Running %s with seed %d on %d worker(s)", cfg.name, cfg.seed, cfg.workers)
    report = ExperimentReport(cfg)
    start = time.perf_counter()
    try:
        RUNNERS[cfg.name](cfg, report)
    except Exception as err:
        raise _with_context(cfg.name, err) from err
    report.runtime_ms = 1000 * (time.perf_counter() - start)
    logger.info("Finished %s in %.0f ms (%d metrics)", cfg.name, report.runtime_ms, len(report.metrics))
    return report


__all__ = [
    "EXPERIMENTS",
    "DEFAULTS",
    "ExperimentConfig",
    "Metric",
    "ExperimentReport",
    "load_config",
    "run_experiment",
    "emit_report",
    "skewed_identities",
    "soundness_expected",
]
