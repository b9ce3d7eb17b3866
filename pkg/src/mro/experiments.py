"""Seeded generators for the four case studies and the (K, eps) sweep runner.

Problem data (costs, matrices, cash flows) come from ``default_rng(seed)``;
uncertain samples come from separate sampler functions so out-of-sample
draws follow the same distribution as the training data.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from mro.clustering import ClusteredSet, kmeans
from mro.conic import DEFAULT_TOL, Solution
from mro.data import Dataset, SupportSet, UncertaintySpec
from mro.families import Affine, CapitalBudgetingNPV, ConcaveQuadratic, LogSumExp
from mro.guarantees import out_of_sample_beta
from mro.reformulate import MroProblem, solve_problem

log = logging.getLogger(__name__)

EXPERIMENTS = ("facility", "capital", "quadratic", "logsumexp")
BINARY_CAP = 20


# -- facility location ---------------------------------------------------------

class FacilityInstance(NamedTuple):
    c: np.ndarray        # opening costs, (n,)
    C: np.ndarray        # pairwise customer distances, (m, m); row i < n is facility i
    r: np.ndarray        # capacities, (n,)
    data: Dataset        # demands, (N, m)


def sample_facility_demands(rng: np.random.Generator, N: int, m: int) -> np.ndarray:
    return rng.uniform(1.0, 6.0, size=(N, m))


def gen_facility(n: int = 5, m: int = 25, N: int = 50, seed: int = 0) -> FacilityInstance:
    """Facility location data; facility ``i`` sits at customer ``i``'s location."""
    if min(n, m, N) < 1 or n > m:
        raise ValueError("need 1 <= n <= m and N >= 1")
    rng = np.random.default_rng(seed)
    c = rng.uniform(30, 70, size=n)
    loc = rng.uniform(0, 15, size=(m, 2))
    C = np.linalg.norm(loc[:, None, :] - loc[None, :, :], axis=2)
    r = rng.uniform(10, 50, size=n)
    return FacilityInstance(c, C, r, Dataset(sample_facility_demands(rng, N, m)))


def facility_problem(inst: FacilityInstance, clustered: ClusteredSet,
                     spec: UncertaintySpec) -> MroProblem:
    """Variables ``(x, X)`` with ``X`` stored row-major after the n binaries."""
    n, m = inst.r.size, inst.C.shape[1]
    nv = n + n * m
    fams = []
    for i in range(n):
        a = np.zeros(nv)
        a[i] = -inst.r[i]
        P = np.zeros((nv, m))
        P[n + i * m + np.arange(m), np.arange(m)] = 1.0
        fams.append(Affine(a, P, 0.0))
    A_eq = np.zeros((m, nv))
    for j in range(m):
        A_eq[j, n + np.arange(n) * m + j] = 1.0
    ub = np.full(nv, np.inf)
    ub[:n] = 1.0
    return MroProblem(fams, nv, np.concatenate([inst.c, inst.C[:n].reshape(-1)]),
                      clustered, spec, A_eq=A_eq, b_eq=np.ones(m), lb=0.0, ub=ub,
                      binary=tuple(range(n)), name="facility")


# -- capital budgeting ---------------------------------------------------------

class CapitalInstance(NamedTuple):
    F: np.ndarray        # cash flows, (n, T+1)
    h: np.ndarray        # project weights, (n,)
    theta: float         # budget
    data: Dataset        # discount rates, (N, n)


def sample_capital_rates(rng: np.random.Generator, N: int, n: int) -> np.ndarray:
    """First half on ``j [0.005, 0.02]``, second half on ``j [0.01, 0.025]``."""
    j = np.arange(1, n + 1)
    half = N // 2
    first = rng.uniform(j * 0.005, j * 0.02, size=(half, n))
    second = rng.uniform(j * 0.01, j * 0.025, size=(N - half, n))
    return np.vstack([first, second])


def gen_capital(n: int = 20, T: int = 5, N: int = 120, theta: float | None = None,
                seed: int = 0) -> CapitalInstance:
    """Capital budgeting data.

    ``h_j`` is drawn on ``[1, max(1, 3 - 0.5 j)]`` because the interval is
    empty for ``j >= 5``.  The default budget is ``12 n / 20``, the ratio of
    the 20-project setting.
    """
    if n < 1 or T < 0 or N < 1:
        raise ValueError("invalid sizes")
    rng = np.random.default_rng(seed)
    t = np.arange(T + 1)
    F = rng.uniform(0.1, 0.5 + 0.004 * t, size=(n, T + 1))
    j = np.arange(1, n + 1)
    h = rng.uniform(1.0, np.maximum(1.0, 3.0 - 0.5 * j))
    theta = 12.0 * n / 20.0 if theta is None else float(theta)
    return CapitalInstance(F, h, theta, Dataset(sample_capital_rates(rng, N, n)))


def capital_support(n: int) -> SupportSet:
    return SupportSet.box(np.zeros(n), np.ones(n))


def capital_problem(inst: CapitalInstance, clustered: ClusteredSet,
                    spec: UncertaintySpec) -> MroProblem:
    n = inst.h.size
    return MroProblem([CapitalBudgetingNPV(inst.F)], n, np.zeros(n), clustered, spec,
                      epigraph=True, A_ub=inst.h[None, :], b_ub=[inst.theta], lb=0.0,
                      ub=1.0, binary=tuple(range(n)), name="capital")


# -- quadratic concave ---------------------------------------------------------

GAMMA_QUADRATIC = (1, 5, 15, 25, 40)


class QuadraticInstance(NamedTuple):
    A: np.ndarray        # (n, m, m)
    data: Dataset


def sample_quadratic(rng: np.random.Generator, N: int, m: int,
                     gammas=GAMMA_QUADRATIC) -> np.ndarray:
    """Equal-sized normal modes; the last mode absorbs any remainder."""
    i = np.arange(1, m + 1)
    std = np.sqrt(0.02**2 + (0.025 * i) ** 2)
    sizes = [N // len(gammas)] * len(gammas)
    sizes[-1] += N - sum(sizes)
    return np.vstack([rng.normal(g * 0.03 * i, std, size=(s, m))
                      for g, s in zip(gammas, sizes)])


def gen_quadratic(n: int = 10, m: int = 10, N: int = 90, seed: int = 0) -> QuadraticInstance:
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(n, m, m))
    A = np.einsum("nki,nkj->nij", G, G) + 1e-3 * np.eye(m)
    A = 0.5 * (A + np.transpose(A, (0, 2, 1)))
    return QuadraticInstance(A, Dataset(sample_quadratic(rng, N, m)))


def quadratic_problem(inst: QuadraticInstance, clustered: ClusteredSet,
                      spec: UncertaintySpec) -> MroProblem:
    n = inst.A.shape[0]
    return MroProblem([ConcaveQuadratic(inst.A)], n, np.zeros(n), clustered, spec,
                      epigraph=True, A_eq=np.ones((1, n)), b_eq=[1.0], lb=0.0,
                      name="quadratic")


# -- log-sum-exp ---------------------------------------------------------------

GAMMA_LOGSUMEXP = (1, 3, 7)
LSE_DOMAIN_LB = 0.01


def sample_logsumexp(rng: np.random.Generator, N: int, n: int,
                     gammas=GAMMA_LOGSUMEXP) -> np.ndarray:
    i = np.arange(1, n + 1)
    sizes = [N // len(gammas)] * len(gammas)
    sizes[-1] += N - sum(sizes)
    return np.vstack([rng.uniform(0.01 * g * i, 0.01 * g * (i + 1), size=(s, n))
                      for g, s in zip(gammas, sizes)])


def gen_logsumexp(n: int = 30, N: int = 90, seed: int = 0) -> Dataset:
    return Dataset(sample_logsumexp(np.random.default_rng(seed), N, n))


def logsumexp_support(n: int) -> SupportSet:
    return SupportSet.box(np.full(n, LSE_DOMAIN_LB), np.full(n, np.inf))


def logsumexp_problem(n: int, clustered: ClusteredSet, spec: UncertaintySpec) -> MroProblem:
    return MroProblem([LogSumExp(n)], n, np.zeros(n), clustered, spec, epigraph=True,
                      A_ub=-np.ones((1, n)), b_ub=[-10.0], lb=0.0, ub=10.0,
                      name="logsumexp")


# -- experiment plumbing -------------------------------------------------------

DEFAULT_SIZES = {
    "facility": {"n": 5, "m": 25, "N": 50},
    "capital": {"n": 10, "T": 5, "N": 60},
    "quadratic": {"n": 10, "m": 10, "N": 90},
    "logsumexp": {"n": 30, "N": 90},
}
DEFAULT_P = {"facility": math.inf, "capital": 2, "quadratic": 2, "logsumexp": 2}


@dataclass
class ExperimentConfig:
    experiment: str
    sizes: dict = field(default_factory=dict)
    K_list: list = field(default_factory=lambda: [1])
    eps_grid: list = field(default_factory=lambda: [0.1])
    p: float | None = None
    seed: int = 0
    backend: str = "clarabel"
    out: str | None = None
    method: str = "auto"
    strategy: str = "exhaustive"
    R: int = 0
    N_eval: int | None = None
    criterion: str = "simultaneous"
    theta: float | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        self.sizes = {**DEFAULT_SIZES[self.experiment], **(self.sizes or {})}
        if self.p is None:
            self.p = DEFAULT_P[self.experiment]
        if self.p in ("inf", "Inf"):
            self.p = math.inf
        self.K_list = sorted(int(k) for k in self.K_list)
        self.eps_grid = sorted(float(e) for e in self.eps_grid)
        if any(k < 1 or k > self.sizes["N"] for k in self.K_list):
            raise ValueError("K values must lie in [1, N]")
        if self.experiment in ("facility", "capital") and self.strategy == "exhaustive" \
                and self.sizes["n"] > BINARY_CAP:
            raise ValueError(f"{self.sizes['n']} binaries exceed the cap of {BINARY_CAP}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["p"] = "inf" if self.p == math.inf else self.p
        return d


@dataclass
class Setup:
    """Everything needed to build and resample one experiment."""

    config: ExperimentConfig
    data: Dataset
    support: SupportSet
    build: Callable[[ClusteredSet, UncertaintySpec], MroProblem]
    sampler: Callable[[np.random.Generator, int], np.ndarray]
    instance: object = None

    def spec(self, eps: float) -> UncertaintySpec:
        return UncertaintySpec(self.config.p, eps, self.support)

    def method(self) -> str:
        if self.config.method != "auto":
            return self.config.method
        # log-sum-exp has no conjugate; the capital master is a tiny binary
        # enumeration, far cheaper than a 2^n sweep of large dual programs
        if self.config.experiment in ("logsumexp", "capital"):
            return "cutting-plane"
        return "dual"


def make_setup(cfg: ExperimentConfig) -> Setup:
    s = cfg.sizes
    seed = cfg.seed
    if cfg.experiment == "facility":
        inst = gen_facility(s["n"], s["m"], s["N"], seed)
        m = s["m"]
        return Setup(cfg, inst.data, SupportSet.nonneg(m),
                     lambda cs, sp: facility_problem(inst, cs, sp),
                     lambda rng, N: sample_facility_demands(rng, N, m), inst)
    if cfg.experiment == "capital":
        inst = gen_capital(s["n"], s["T"], s["N"], cfg.theta, seed)
        n = s["n"]
        return Setup(cfg, inst.data, capital_support(n),
                     lambda cs, sp: capital_problem(inst, cs, sp),
                     lambda rng, N: sample_capital_rates(rng, N, n), inst)
    if cfg.experiment == "quadratic":
        inst = gen_quadratic(s["n"], s["m"], s["N"], seed)
        m = s["m"]
        return Setup(cfg, inst.data, SupportSet.full(m),
                     lambda cs, sp: quadratic_problem(inst, cs, sp),
                     lambda rng, N: sample_quadratic(rng, N, m), inst)
    n = s["n"]
    data = gen_logsumexp(n, s["N"], seed)
    return Setup(cfg, data, logsumexp_support(n),
                 lambda cs, sp: logsumexp_problem(n, cs, sp),
                 lambda rng, N: sample_logsumexp(rng, N, n))


def solve_cell(setup: Setup, prob: MroProblem) -> Solution:
    cfg = setup.config
    return solve_problem(prob, method=setup.method(), backend=cfg.backend, tol=DEFAULT_TOL,
                         strategy=cfg.strategy)


@dataclass
class ResultRecord:
    experiment: str
    K: int
    eps: float
    objective: float
    solve_time_s: float
    beta_hat: float | None
    D: float
    eta: float
    status: str
    seed: int


CSV_COLUMNS = ("experiment", "K", "eps", "objective", "solve_time_s", "beta_hat", "D",
               "eta", "status", "seed")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_to_csv(records, columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in records:
        d = asdict(r) if not isinstance(r, dict) else r
        w.writerow([_fmt(d[c]) for c in columns])
    return buf.getvalue()


def run_sweep(config: ExperimentConfig, setup: Setup | None = None) -> list[ResultRecord]:
    """Solve every (K, eps) cell; clustering is shared across eps for each K."""
    setup = setup or make_setup(config)
    records = []
    if not config.eps_grid:
        return records
    for K in config.K_list:
        cs = kmeans(setup.data, K, seed=config.seed)
        for eps in config.eps_grid:
            prob = setup.build(cs, setup.spec(eps))
            try:
                sol = solve_cell(setup, prob)
                status, obj, secs = sol.status, sol.objective, sol.solve_time
            except Exception as exc:  # record and continue with the sweep
                log.error("cell K=%d eps=%g failed: %s", K, eps, exc)
                status, obj, secs = "numerical-failure", math.nan, 0.0
            beta = None
            if config.R > 0 and status == "optimal":
                beta = beta_for_cell(setup, K, eps).beta_hat
            records.append(ResultRecord(config.experiment, K, eps, float(obj), float(secs),
                                        beta, cs.D, cs.eta, status, config.seed))
    records.sort(key=lambda r: (r.K, r.eps))
    if config.out:
        Path(config.out).write_text(records_to_csv(records))
    return records


def beta_for_cell(setup: Setup, K: int, eps: float, R: int | None = None):
    """Out-of-sample beta for one cell with training sets of the configured N."""
    cfg = setup.config

    def template(train: Dataset) -> MroProblem:
        cs = kmeans(train, min(K, train.N), seed=cfg.seed)
        return setup.build(cs, setup.spec(eps))

    return out_of_sample_beta(template, lambda prob: solve_cell(setup, prob), setup.sampler,
                              R or cfg.R, cfg.sizes["N"], cfg.N_eval, cfg.seed,
                              cfg.criterion)


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0
