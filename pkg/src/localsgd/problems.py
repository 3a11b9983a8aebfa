"""Problem families: shared-optimum quadratics, the two adversarial
lower-bound instances, and the squared-hinge perceptron on linearly
separable data, together with estimators for the constants that the
convergence guarantees depend on (smoothness L, strong convexity mu,
gradient growth rho, similarity c).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .core import (
    PURPOSE_C_DIRECTION,
    PURPOSE_C_RADIUS,
    PURPOSE_DATASET,
    RECORD_EVERY,
    RULE_MANUAL,
    RngStream,
    RunConfig,
    StepsizePolicy,
    make_schedule,
)

if TYPE_CHECKING:
    from .partition import PartitionAssignment


class EstimateUndefinedError(RuntimeError):
    """No probe/trial produced a well-defined ratio."""


class LocalLoss:
    """One node's loss: exact value/gradient plus a per-sample gradient oracle.

    The node's distribution is uniform over its finite sample set, so the
    sample average of stoch_grad is exactly grad. sample_count may be 0
    (a node with no data), in which case value and grad are identically 0.
    """

    dimension: int
    sample_count: int
    smoothness: float
    strong_convexity: float

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def stoch_grad(self, x: np.ndarray, sample: int) -> np.ndarray:
        raise NotImplementedError

    def values(self, xs: np.ndarray) -> np.ndarray:
        """value() over rows of xs; subclasses override with vectorized forms."""
        return np.array([self.value(x) for x in xs])


class QuadraticLoss(LocalLoss):
    """f(x) = (a/2)||x - x_star||^2 with curvature a (negative allowed).

    With sample_spread > 0 the loss splits into two samples of curvature
    a - spread and a + spread; their gradients average to the exact gradient
    and both vanish at x_star, so interpolation is preserved.
    """

    def __init__(self, curvature: float, x_star: np.ndarray, sample_spread: float = 0.0):
        if sample_spread < 0:
            raise ValueError("sample_spread must be nonnegative")
        self.curvature = float(curvature)
        self.x_star = np.asarray(x_star, dtype=np.float64)
        self.sample_spread = float(sample_spread)
        self.dimension = self.x_star.shape[0]
        if self.sample_spread > 0:
            self._sample_curvatures = (self.curvature - self.sample_spread,
                                       self.curvature + self.sample_spread)
        else:
            self._sample_curvatures = (self.curvature,)
        self.sample_count = len(self._sample_curvatures)
        self.smoothness = max(abs(a) for a in self._sample_curvatures)
        self.strong_convexity = max(0.0, min(self._sample_curvatures))

    def value(self, x: np.ndarray) -> float:
        diff = x - self.x_star
        return 0.5 * self.curvature * float(diff @ diff)

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.curvature * (x - self.x_star)

    def stoch_grad(self, x: np.ndarray, sample: int) -> np.ndarray:
        return self._sample_curvatures[sample] * (x - self.x_star)

    def values(self, xs: np.ndarray) -> np.ndarray:
        diff = xs - self.x_star
        return 0.5 * self.curvature * np.sum(diff * diff, axis=-1)


class ZeroLoss(LocalLoss):
    """A node with an empty dataset: value and gradient identically zero."""

    def __init__(self, dimension: int):
        self.dimension = dimension
        self.sample_count = 0
        self.smoothness = 0.0
        self.strong_convexity = 0.0

    def value(self, x: np.ndarray) -> float:
        return 0.0

    def grad(self, x: np.ndarray) -> np.ndarray:
        return np.zeros(self.dimension)

    def stoch_grad(self, x: np.ndarray, sample: int) -> np.ndarray:
        raise ValueError("a loss with no samples has no stochastic gradient")

    def values(self, xs: np.ndarray) -> np.ndarray:
        return np.zeros(xs.shape[0])


class HingeShardLoss(LocalLoss):
    """Mean squared hinge over one shard: (1/m) sum max(0, 1 - y <x, w>)^2,
    plus an optional strongly convex correction (mu/2)||w - center||^2.

    Per-sample smoothness is 2||x||^2 (the hinge-squared Hessian is bounded
    by 2 x x^T on its active set), so the node constant is the shard max
    plus the correction curvature.
    """

    def __init__(
        self,
        points: np.ndarray,
        labels: np.ndarray,
        mu_correction: float = 0.0,
        center: Optional[np.ndarray] = None,
    ):
        if mu_correction < 0:
            raise ValueError("mu_correction must be nonnegative")
        if mu_correction > 0 and center is None:
            raise ValueError("a positive correction requires a center")
        self.points = np.asarray(points, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.float64)
        self.mu_correction = float(mu_correction)
        self.center = None if center is None else np.asarray(center, dtype=np.float64)
        self.sample_count = self.points.shape[0]
        self.dimension = self.points.shape[1] if self.points.ndim == 2 else (
            0 if self.center is None else self.center.shape[0])
        hinge_l = 2.0 * float(np.max(np.sum(self.points * self.points, axis=1))) \
            if self.sample_count else 0.0
        self.smoothness = hinge_l + self.mu_correction
        self.strong_convexity = self.mu_correction

    def _margins(self, w: np.ndarray) -> np.ndarray:
        return 1.0 - self.labels * (self.points @ w)

    def value(self, w: np.ndarray) -> float:
        total = 0.0
        if self.sample_count:
            active = np.maximum(self._margins(w), 0.0)
            total = float(np.mean(active * active))
        if self.mu_correction > 0:
            diff = w - self.center
            total += 0.5 * self.mu_correction * float(diff @ diff)
        return total

    def grad(self, w: np.ndarray) -> np.ndarray:
        g = np.zeros_like(w, dtype=np.float64)
        if self.sample_count:
            active = np.maximum(self._margins(w), 0.0)
            g = -(2.0 / self.sample_count) * ((active * self.labels) @ self.points)
        if self.mu_correction > 0:
            g = g + self.mu_correction * (w - self.center)
        return g

    def stoch_grad(self, w: np.ndarray, sample: int) -> np.ndarray:
        x = self.points[sample]
        y = self.labels[sample]
        m = 1.0 - y * (x @ w)
        g = -2.0 * m * y * x if m > 0 else np.zeros_like(w, dtype=np.float64)
        if self.mu_correction > 0:
            g = g + self.mu_correction * (w - self.center)
        return g

    def values(self, ws: np.ndarray) -> np.ndarray:
        out = np.zeros(ws.shape[0])
        if self.sample_count:
            active = np.maximum(1.0 - self.labels * (ws @ self.points.T), 0.0)
            out = np.mean(active * active, axis=1)
        if self.mu_correction > 0:
            diff = ws - self.center
            out = out + 0.5 * self.mu_correction * np.sum(diff * diff, axis=1)
        return out


@dataclass
class ProblemInstance:
    """n local losses plus whatever is known about the global problem.

    The global objective is f(x) = objective_scale * (1/n) sum_i f_i(x).
    The scale is 1 everywhere except the two-node nonconvergence instance,
    whose stated objective and gradient are the plain sum of its node losses
    (scale = n = 2); node dynamics never see the scale.
    """

    losses: list[LocalLoss]
    L: float
    mu: float = 0.0
    optimum: Optional[np.ndarray] = None
    f_star: float = 0.0
    rho: Optional[float] = None
    c: Optional[float] = None
    objective_scale: float = 1.0
    default_x0: Optional[np.ndarray] = None

    @property
    def n_nodes(self) -> int:
        return len(self.losses)

    @property
    def dimension(self) -> int:
        return self.losses[0].dimension

    def objective_value(self, x: np.ndarray) -> float:
        vals = np.array([loss.value(x) for loss in self.losses])
        return self.objective_scale * float(np.mean(vals))

    def objective_grad(self, x: np.ndarray) -> np.ndarray:
        grads = np.stack([loss.grad(x) for loss in self.losses])
        return self.objective_scale * np.mean(grads, axis=0)

    def gap(self, x: np.ndarray) -> float:
        return self.objective_value(x) - self.f_star


def c_exact_quadratic(curvatures: Sequence[float]) -> float:
    """Similarity constant for shared-optimum quadratics with the given
    curvatures: harmonic mean / arithmetic mean, and 0 as soon as any
    curvature vanishes (all displacement can hide on a flat node)."""
    a = np.asarray(curvatures, dtype=np.float64)
    if a.size == 0 or np.any(a < 0):
        raise ValueError("curvatures must be nonnegative")
    if not np.any(a > 0):
        raise ValueError("at least one curvature must be positive")
    if np.any(a == 0):
        return 0.0
    harmonic = a.size / float(np.sum(1.0 / a))
    arithmetic = float(np.mean(a))
    return min(1.0, harmonic / arithmetic)


def make_shared_optimum_quadratic(
    curvatures: Sequence[float],
    x_star: np.ndarray,
    sample_spread: float = 0.0,
) -> ProblemInstance:
    """Quadratics f_i = (a_i/2)||x - x*||^2 all minimized at the same point.

    Deterministic one-sample oracles by default; sample_spread > 0 gives each
    node a two-sample oracle (curvatures a_i -/+ spread) that stays unbiased
    and interpolating. The growth constant is only well defined when all
    curvatures are equal; otherwise it is left absent.
    """
    a = np.asarray(curvatures, dtype=np.float64)
    if np.any(a < 0):
        raise ValueError("curvatures must be nonnegative")
    if not np.any(a > 0):
        raise ValueError("all-zero curvatures give a constant objective; rejected")
    x_star = np.asarray(x_star, dtype=np.float64)
    losses: list[LocalLoss] = [QuadraticLoss(ai, x_star, sample_spread) for ai in a]
    L = max(loss.smoothness for loss in losses)
    mu = min(loss.strong_convexity for loss in losses)
    rho: Optional[float] = None
    if np.all(a == a[0]):
        base = float(a[0])
        rho = (base * base + sample_spread * sample_spread) / (base * base)
    return ProblemInstance(
        losses=losses,
        L=L,
        mu=mu,
        optimum=x_star,
        f_star=0.0,
        rho=rho,
        c=c_exact_quadratic(a),
    )


def c_estimate(problem: ProblemInstance, trials: int, radius: float, rng: RngStream) -> float:
    """Sampling upper bound on the similarity constant.

    Draws per-node points uniformly in the radius-ball around the optimum and
    minimizes the ratio (1/n) sum_i (f_i(x_i) - f_i(x*)) over f(xbar) - f*,
    skipping configurations whose denominator is degenerate. The estimate is
    non-increasing in trials for a fixed stream (later trials extend the
    same sample prefix).
    """
    if problem.optimum is None:
        raise ValueError("c_estimate needs a known optimum")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n, d = problem.n_nodes, problem.dimension
    x_star = problem.optimum

    dirs = rng.generator(0, 0, PURPOSE_C_DIRECTION).standard_normal((trials, n, d))
    norms = np.linalg.norm(dirs, axis=2, keepdims=True)
    norms[norms == 0.0] = 1.0
    radii = radius * rng.generator(0, 0, PURPOSE_C_RADIUS).random((trials, n, 1)) ** (1.0 / d)
    points = x_star + dirs / norms * radii  # (trials, n, d), uniform in the ball

    f_i_star = np.array([loss.value(x_star) for loss in problem.losses])
    gaps = np.stack(
        [problem.losses[i].values(points[:, i, :]) - f_i_star[i] for i in range(n)],
        axis=1,
    )
    numerator = np.mean(gaps, axis=1)

    means = np.mean(points, axis=1)
    f_star_mean = float(np.mean(f_i_star))
    denominator = np.mean(
        np.stack([loss.values(means) for loss in problem.losses], axis=1), axis=1
    ) - f_star_mean

    valid = denominator > 1e-12
    if not np.any(valid):
        raise EstimateUndefinedError("every sampled configuration had a degenerate denominator")
    return float(np.min(numerator[valid] / denominator[valid]))


def make_prop1_instance(L: float, K: int, R: int) -> tuple[ProblemInstance, RunConfig]:
    """Worst-case similarity instance: one curved node among 4R flat ones.

    f_1(x) = (L/2)x^2 and every other node is empty, so f(x) = (L/2n)x^2
    with n = 4R. Starts at x0 = 1 with the manual stepsize 1/L; everything
    is deterministic.
    """
    if not L > 0:
        raise ValueError("L must be positive")
    schedule = make_schedule(K, R)
    n = 4 * R
    x_star = np.zeros(1)
    losses: list[LocalLoss] = [QuadraticLoss(L, x_star)]
    losses.extend(ZeroLoss(1) for _ in range(n - 1))
    problem = ProblemInstance(
        losses=losses,
        L=float(L),
        mu=0.0,
        optimum=x_star,
        f_star=0.0,
        rho=None,
        c=0.0,
        default_x0=np.ones(1),
    )
    config = RunConfig(
        schedule=schedule,
        stepsize=StepsizePolicy(RULE_MANUAL, eta=1.0 / L),
        seed=0,
        record_granularity=RECORD_EVERY,
        record_node_states=True,
    )
    return problem, config


def make_prop2_instance(L: float) -> ProblemInstance:
    """Two-node nonconvergence instance: f_1 = (L/2)x^2, f_2 = -(L/4)x^2.

    The global objective here is the sum f = f_1 + f_2 = (L/4)x^2
    (objective_scale = 2); its only stationary point is 0, yet at stepsizes
    in [2/(LK), 1/L] the averaged iterate stays >= 1 forever. The nominal
    growth constant 2 is stored; the measured value (see rho_estimate) is 4.
    """
    if not L > 0:
        raise ValueError("L must be positive")
    x_star = np.zeros(1)
    losses: list[LocalLoss] = [
        QuadraticLoss(L, x_star),
        QuadraticLoss(-L / 2.0, x_star),
    ]
    return ProblemInstance(
        losses=losses,
        L=float(L),
        mu=0.0,
        optimum=x_star,
        f_star=0.0,
        rho=2.0,
        c=None,
        objective_scale=2.0,
        default_x0=np.ones(1),
    )


@dataclass
class LinSepDataset:
    """Points in the cube [-1,1]^d labeled by a random hyperplane through
    the origin (unit normal); every point clears the hyperplane by at least
    the generation margin."""

    points: np.ndarray
    labels: np.ndarray
    generator_normal: np.ndarray

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def margins(self) -> np.ndarray:
        return self.labels * (self.points @ self.generator_normal)

    def min_margin(self) -> float:
        return float(np.min(self.margins()))


def make_linsep_dataset(N: int, d: int, margin: float, rng: RngStream) -> LinSepDataset:
    """Uniform cube points; points within `margin` of the labeling hyperplane
    are resampled so a finite-norm exact separator always exists (margin=0
    keeps every draw)."""
    if N < 1 or d < 1:
        raise ValueError("need N >= 1 and d >= 1")
    if margin >= 1:
        raise ValueError(f"margin must be < 1 (resampling would stall), got {margin}")
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    gen = rng.generator(0, 0, PURPOSE_DATASET)
    normal = gen.standard_normal(d)
    normal /= np.linalg.norm(normal)
    points = gen.uniform(-1.0, 1.0, size=(N, d))
    proj = points @ normal
    bad = np.abs(proj) < margin
    while np.any(bad):
        points[bad] = gen.uniform(-1.0, 1.0, size=(int(np.sum(bad)), d))
        proj = points @ normal
        bad = np.abs(proj) < margin
    labels = np.where(proj > 0, 1.0, -1.0)
    return LinSepDataset(points=points, labels=labels, generator_normal=normal)


def exact_separator(dataset: LinSepDataset) -> np.ndarray:
    """Scaled generator normal with functional margin >= 3 on every point,
    hence zero hinge loss and zero per-sample gradients."""
    m = dataset.min_margin()
    if m <= 0:
        raise ValueError("dataset is not strictly separated by its generator normal")
    return (3.0 / m) * dataset.generator_normal


def make_hinge_problem(
    dataset: LinSepDataset,
    partition: "PartitionAssignment",
    mu_correction: float = 0.0,
    center: Optional[np.ndarray] = None,
) -> ProblemInstance:
    """Squared-hinge perceptron split across nodes by the given partition.

    Node i averages the squared hinge over its shard; with mu_correction > 0
    every node (including empty ones) additionally carries the quadratic
    correction centered at `center`, which then becomes the known optimum.
    """
    if mu_correction < 0:
        raise ValueError("mu_correction must be nonnegative")
    if mu_correction > 0 and center is None:
        raise ValueError("mu_correction > 0 requires a center")
    covered = np.sort(np.concatenate([np.asarray(s, dtype=np.int64) for s in partition.shards]))
    if covered.size != dataset.N or not np.array_equal(covered, np.arange(dataset.N)):
        raise ValueError("partition must cover all dataset points disjointly")
    losses: list[LocalLoss] = []
    for shard in partition.shards:
        idx = np.asarray(shard, dtype=np.int64)
        losses.append(HingeShardLoss(
            dataset.points[idx].reshape(len(idx), dataset.d),
            dataset.labels[idx],
            mu_correction=mu_correction,
            center=center,
        ))
    L = max(loss.smoothness for loss in losses)
    optimum = None if center is None else np.asarray(center, dtype=np.float64)
    return ProblemInstance(
        losses=losses,
        L=L,
        mu=mu_correction,
        optimum=optimum,
        f_star=0.0,
        rho=None,
        c=None,
        default_x0=np.zeros(dataset.d),
    )


def rho_estimate(problem: ProblemInstance, probes: Sequence[np.ndarray], per_node: bool = True) -> float:
    """Empirical lower bound on any valid gradient-growth constant.

    At each probe x with a non-degenerate global gradient, computes the
    exact per-node expectation (1/m_i) sum_s ||stoch_grad(x, s)||^2 divided
    by ||grad f(x)||^2, and returns the max over probes (and over nodes when
    per_node, else the node average)."""
    if len(probes) == 0:
        raise ValueError("need at least one probe point")
    best = -np.inf
    any_valid = False
    for x in probes:
        g = problem.objective_grad(np.asarray(x, dtype=np.float64))
        denom = float(g @ g)
        if denom <= 1e-12:
            continue
        any_valid = True
        node_vals = []
        for loss in problem.losses:
            if loss.sample_count == 0:
                node_vals.append(0.0)
                continue
            sq = [
                float(np.sum(loss.stoch_grad(np.asarray(x, dtype=np.float64), s) ** 2))
                for s in range(loss.sample_count)
            ]
            node_vals.append(float(np.mean(sq)))
        ratio = (max(node_vals) if per_node else float(np.mean(node_vals))) / denom
        best = max(best, ratio)
    if not any_valid:
        raise EstimateUndefinedError("all probes sit at stationary points")
    return best


@dataclass
class InterpolationReport:
    per_node_max: list[float]
    tol: float

    @property
    def worst(self) -> float:
        return max(self.per_node_max) if self.per_node_max else 0.0

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol


def verify_interpolation(problem: ProblemInstance, tol: float = 1e-8) -> InterpolationReport:
    """Max per-sample gradient norm at the optimum, per node; passes iff all
    samples' gradients vanish there (to tol)."""
    if problem.optimum is None:
        raise ValueError("verify_interpolation needs a known optimum")
    x_star = problem.optimum
    per_node = []
    for loss in problem.losses:
        worst = 0.0
        for s in range(loss.sample_count):
            worst = max(worst, float(np.linalg.norm(loss.stoch_grad(x_star, s))))
        per_node.append(worst)
    return InterpolationReport(per_node_max=per_node, tol=tol)


def save_dataset_csv(dataset: LinSepDataset, path: str) -> None:
    """d feature columns then a -1/+1 label column; leading comment lines
    carry d, N and the generator normal so a file round-trips on its own."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# d={dataset.d} N={dataset.N}\n")
        fh.write("# normal=" + " ".join(repr(float(v)) for v in dataset.generator_normal) + "\n")
        writer = csv.writer(fh)
        for row, label in zip(dataset.points, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def load_dataset_csv(path: str) -> LinSepDataset:
    meta: dict[str, str] = {}
    normal = None
    rows = []
    labels = []
    with open(path, newline="") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("normal="):
                    normal = np.array([float(v) for v in body[len("normal="):].split()])
                else:
                    for part in body.split():
                        if "=" in part:
                            k, v = part.split("=", 1)
                            meta[k] = v
                continue
            fields = line.split(",")
            rows.append([float(v) for v in fields[:-1]])
            labels.append(float(fields[-1]))
    points = np.array(rows, dtype=np.float64)
    if normal is None:
        raise ValueError(f"{path} has no generator-normal header line")
    if "d" in meta and int(meta["d"]) != points.shape[1]:
        raise ValueError("declared d does not match the data")
    if "N" in meta and int(meta["N"]) != points.shape[0]:
        raise ValueError("declared N does not match the data")
    return LinSepDataset(points=points, labels=np.array(labels), generator_normal=normal)
