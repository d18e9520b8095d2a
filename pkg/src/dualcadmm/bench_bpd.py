"""
Basis pursuit denoising benchmark.

    minimize ||u||_1  subject to  ||R u - r||_2 <= eps

The columns of ``R`` are split evenly over the agents.  Agent ``i`` owns
``(u_i, v_i)`` with objective ``||u_i||_1 + I{eps/N}(v_i)`` and
``A_i (u_i, v_i) = (R_i u_i, v_i)``, ``b_i = (r/N, 0)``; the coupling cone is
the second-order cone in ``R^(p+1)``.  Summing over agents gives
``(R u - r, eps)``, which lies in the cone iff ``u`` is feasible.

CSV schema (one row per iteration, 17 significant digits)::

    iter,relSubopt,infeas,solDist,consViol

relSubopt  ``| ||u^k||_1 - ||u*||_1 | / ||u*||_1``
infeas     ``max(||R u^k - r|| - eps, 0)``
solDist    ``||u^k - u*||_2``
consViol   ``max_i ||y_i^k - ybar^k||_2``
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import chi2

from . import cones
from .dual_solvers import ALGORITHMS, InnerConfig, SolverConfig, run
from .graph import Graph, small_world, streams
from .objectives import L1, IndicatorPoint, SeparableSum
from .problem import AgentProblem, CoupledProblem

log = logging.getLogger(__name__)

CSV_HEADER = ("iter", "relSubopt", "infeas", "solDist", "consViol")
NOISE_VAR_PER_NONZERO = 1e-4
CONFIDENCE = 0.95


@dataclass(eq=False)
class BpdInstance:
    R: np.ndarray
    r: np.ndarray
    eps: float
    u_true: np.ndarray
    partition: list
    graph: Graph
    seed: int | None = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        pos = 0
        for start, stop in self.partition:
            if start != pos or stop <= start:
                raise ValueError("partition must cover the columns contiguously")
            pos = stop
        if pos != self.R.shape[1]:
            raise ValueError("partition does not cover all columns")
        if len(self.partition) != self.graph.n_nodes:
            raise ValueError("one block per graph node is required")

    @property
    def p(self):
        return self.R.shape[0]

    @property
    def q(self):
        return self.R.shape[1]

    @property
    def n_agents(self):
        return len(self.partition)


@dataclass
class MetricsRow:
    iter: int
    rel_subopt: float
    infeas: float
    sol_dist: float
    cons_viol: float

    def values(self):
        return (self.iter, self.rel_subopt, self.infeas, self.sol_dist, self.cons_viol)


def noise_radius(p, kappa, confidence=CONFIDENCE):
    """``eps`` with ``P(||eta|| <= eps) = confidence`` for ``eta ~ N(0, kappa 1e-4 I_p)``."""
    return float(np.sqrt(kappa * NOISE_VAR_PER_NONZERO * chi2.ppf(confidence, p)))


def generate(p=20, q=120, kappa=20, n_agents=10, n_edges=15, seed=0) -> BpdInstance:
    """Random instance; the graph and the data use separate random streams."""
    if n_agents < 1 or q % n_agents:
        raise ValueError(f"q={q} must be divisible by the number of agents {n_agents}")
    if not 0 <= kappa <= q:
        raise ValueError(f"kappa={kappa} must lie in 0..q")
    eps = noise_radius(p, kappa) if kappa > 0 else 0.0
    if not eps > 0:
        raise ValueError("kappa = 0 gives eps = 0; the noise radius must be positive")
    graph_rng, data_rng = streams(seed)
    R = data_rng.standard_normal((p, q))
    u_true = np.zeros(q)
    support = data_rng.choice(q, size=kappa, replace=False)
    u_true[support] = data_rng.standard_normal(kappa)
    eta = data_rng.normal(0.0, np.sqrt(kappa * NOISE_VAR_PER_NONZERO), size=p)
    r = R @ u_true + eta
    graph = small_world(n_agents, n_edges, rng=graph_rng)
    block = q // n_agents
    partition = [(i * block, (i + 1) * block) for i in range(n_agents)]
    return BpdInstance(R, r, eps, u_true, partition, graph, seed)


def reformulate(inst: BpdInstance) -> CoupledProblem:
    N = inst.n_agents
    p = inst.p
    agents = []
    for start, stop in inst.partition:
        qi = stop - start
        A = np.zeros((p + 1, qi + 1))
        A[:p, :qi] = inst.R[:, start:stop]
        A[p, qi] = 1.0
        b = np.zeros(p + 1)
        b[:p] = inst.r / N
        obj = SeparableSum([(L1(1.0, qi), (0, qi)), (IndicatorPoint([inst.eps / N]), (qi, qi + 1))])
        agents.append(AgentProblem(obj, A, b))
    return CoupledProblem(agents, cones.SecondOrder(p + 1), inst.graph)


# --- reference solution ---------------------------------------------------

class ReferenceError(RuntimeError):
    pass


def _lasso_on_support(R, r, support, signs, eps):
    """Solve the BPD optimality system with a fixed support and sign pattern.

    On the support ``u_S(lam) = G^{-1}(R_S' r - lam * signs)``; the residual
    ``R u - r`` is affine in ``lam`` and ``||R u - r|| = eps`` fixes ``lam``.
    """
    RS = R[:, support]
    G = RS.T @ RS
    a = np.linalg.solve(G, RS.T @ r)
    d = np.linalg.solve(G, signs)
    e0 = RS @ a - r
    e1 = RS @ d
    # ||e0 - lam e1||^2 = eps^2
    A2, A1, A0 = e1 @ e1, -2.0 * (e0 @ e1), e0 @ e0 - eps * eps
    disc = A1 * A1 - 4.0 * A2 * A0
    if A2 <= 0 or disc < 0:
        return None
    roots = [(-A1 + sgn * np.sqrt(disc)) / (2.0 * A2) for sgn in (1.0, -1.0)]
    best = None
    for lam in roots:
        if lam <= 0:
            continue
        uS = a - lam * d
        if np.all(np.sign(uS) == signs):
            u = np.zeros(R.shape[1])
            u[support] = uS
            if best is None or np.abs(uS).sum() < np.abs(best[0]).sum():
                best = (u, lam)
    return best


def _kkt_gap(R, r, u, lam):
    corr = R.T @ (r - R @ u)
    on = u != 0
    g_on = np.max(np.abs(corr[on] - lam * np.sign(u[on])), initial=0.0)
    g_off = max(np.max(np.abs(corr[~on]), initial=0.0) - lam, 0.0)
    return max(g_on, g_off) / max(lam, 1.0)


_REFERENCE_CACHE = {}


def reference_solution(inst: BpdInstance, tol=1e-10):
    """Centralized high-accuracy solution ``(u*, ||u*||_1)``.

    Follows the lasso regularization path (``sklearn.linear_model.lars_path``)
    to the segment where the residual norm crosses ``eps``, then solves the
    optimality system exactly on that support.  The answer is accepted only
    if its KKT gap is below ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    key = (id(inst), tol)
    hit = _REFERENCE_CACHE.get(key)
    if hit is not None and hit[0] is inst:
        return hit[1]
    out = _reference(inst.R, inst.r, inst.eps, tol)
    _REFERENCE_CACHE[key] = (inst, out)
    return out


def _reference(R, r, eps, tol):
    from sklearn.linear_model import lars_path

    if np.linalg.norm(r) <= eps:
        return np.zeros(R.shape[1]), 0.0
    alphas, _, coefs = lars_path(R, r, method="lasso", alpha_min=0.0)
    res = np.linalg.norm(R @ coefs - r[:, None], axis=0)
    candidates = []
    for k in range(len(alphas) - 1):
        if res[k] >= eps >= res[k + 1] or res[k] <= eps <= res[k + 1]:
            candidates.append(k)
    for k in candidates:
        mid = 0.5 * (coefs[:, k] + coefs[:, k + 1])
        for guess in (mid, coefs[:, k + 1], coefs[:, k]):
            support = np.flatnonzero(guess)
            if support.size == 0:
                continue
            sol = _lasso_on_support(R, r, support, np.sign(guess[support]), eps)
            if sol is None:
                continue
            u, lam = sol
            if _kkt_gap(R, r, u, lam) <= tol and abs(np.linalg.norm(R @ u - r) - eps) <= tol * (1 + eps):
                return u, float(np.abs(u).sum())
    raise ReferenceError("could not certify a reference solution on the lasso path")


def metrics(inst: BpdInstance, u_star, xs, ys, k=0) -> MetricsRow:
    """The four benchmark metrics for one iterate; ``v_i`` entries are dropped."""
    u = np.concatenate([np.asarray(x)[:-1] for x in xs])
    Y = np.asarray(ys)
    ybar = Y.mean(axis=0)
    ref = np.abs(u_star).sum()
    return MetricsRow(
        iter=int(k),
        # when u* = 0 the relative gap is undefined; report the absolute one
        rel_subopt=float(abs(np.abs(u).sum() - ref) / ref if ref > 0 else np.abs(u).sum()),
        infeas=float(max(np.linalg.norm(inst.R @ u - inst.r) - inst.eps, 0.0)),
        sol_dist=float(np.linalg.norm(u - u_star)),
        cons_viol=float(np.max(np.linalg.norm(Y - ybar, axis=1))),
    )


# --- experiment driver ----------------------------------------------------

@dataclass
class BenchConfig:
    seeds: int = 10
    algorithms: tuple = ALGORITHMS
    rho: float = 1.0
    sigma: float = 1.0
    iters: int = 2000
    out: str = "bpd_results"
    p: int = 20
    q: int = 120
    kappa: int = 20
    n_agents: int = 10
    n_edges: int = 15
    seed_offset: int = 0
    workers: int = 1
    inner: InnerConfig = field(default_factory=InnerConfig)
    plot: bool = True

    def __post_init__(self):
        self.algorithms = tuple(self.algorithms)
        for alg in self.algorithms:
            if alg not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {alg!r}")
        if not self.algorithms:
            raise ValueError("at least one algorithm is required")
        if self.seeds < 1:
            raise ValueError("at least one seed is required")
        if not self.rho > 0 or not self.sigma > 0:
            raise ValueError("rho and sigma must be positive")
        if self.iters < 1:
            raise ValueError("iters must be positive")

    def seed_list(self):
        return list(range(self.seed_offset, self.seed_offset + self.seeds))


def run_single(inst, algorithm, rho=1.0, sigma=1.0, iters=2000, inner=None, workers=1):
    """Run one algorithm on one instance; returns ``iters`` metric rows."""
    u_star, _ = reference_solution(inst)
    problem = reformulate(inst)
    rows = []

    def record(k, states, _rec):
        rows.append(metrics(inst, u_star, [st.x for st in states], [st.y for st in states], k))

    cfg = SolverConfig(algorithm=algorithm, rho=rho, sigma=sigma, max_iter=iters, tol=0.0,
                       inner=inner or InnerConfig(), workers=workers)
    run(problem, cfg, callback=record, track_residuals=False)
    return rows


def format_value(v):
    return str(v) if isinstance(v, (int, np.integer)) else format(float(v), ".17g")


def write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in rows:
            w.writerow([format_value(v) for v in row.values()])


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [MetricsRow(int(r[0]), *(float(v) for v in r[1:])) for r in reader]


def mean_rows(runs):
    """Row-wise mean over runs of equal length."""
    out = []
    for group in zip(*runs):
        vals = np.array([[g.rel_subopt, g.infeas, g.sol_dist, g.cons_viol] for g in group])
        out.append(MetricsRow(group[0].iter, *vals.mean(axis=0)))
    return out


def run_file(out, algorithm, seed):
    return os.path.join(out, f"{algorithm}_seed{seed}.csv")


def mean_file(out, algorithm):
    return os.path.join(out, f"mean_{algorithm}.csv")


def _job(args):
    cfg, algorithm, seed = args
    inst = generate(cfg.p, cfg.q, cfg.kappa, cfg.n_agents, cfg.n_edges, seed)
    rows = run_single(inst, algorithm, cfg.rho, cfg.sigma, cfg.iters, cfg.inner)
    return algorithm, seed, rows


def run_experiment(cfg: BenchConfig) -> dict:
    """Run every (algorithm, seed) pair and write per-run and mean CSVs.

    Returns a mapping with the written paths under ``"runs"``, ``"means"`` and
    (when plotting) ``"figure"``.  Jobs are independent, so ``cfg.workers``
    only changes wall-clock time, never the output bytes.
    """
    os.makedirs(cfg.out, exist_ok=True)
    jobs = [(cfg, alg, seed) for alg in cfg.algorithms for seed in cfg.seed_list()]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]

    paths = {"runs": [], "means": []}
    by_alg = {alg: [] for alg in cfg.algorithms}
    for alg, seed, rows in results:
        path = run_file(cfg.out, alg, seed)
        write_csv(path, rows)
        paths["runs"].append(path)
        by_alg[alg].append(rows)
        log.info("%s seed %d: final %s", alg, seed, rows[-1])
    for alg, runs in by_alg.items():
        path = mean_file(cfg.out, alg)
        write_csv(path, mean_rows(runs))
        paths["means"].append(path)

    report_dir = os.path.join(cfg.out, "report")
    os.makedirs(report_dir, exist_ok=True)
    meta = asdict(cfg)
    meta["seeds_used"] = cfg.seed_list()
    meta["csv_header"] = list(CSV_HEADER)
    with open(os.path.join(report_dir, "metadata.json"), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
    if cfg.plot:
        from .plotting import plot_metrics

        fig_path = os.path.join(report_dir, "bpd_metrics.png")
        plot_metrics({alg: mean_file(cfg.out, alg) for alg in cfg.algorithms}, fig_path)
        paths["figure"] = fig_path
    return paths
