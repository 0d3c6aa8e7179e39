"""Benchmark ODE systems, trajectory integration, and derivative estimation.

A small registry of desk-scale dynamical systems provides the ground truth for
everything downstream: trajectories are produced with classical fixed-step RK4,
derivatives are estimated with second-order finite differences, and train/test
splits use distinct initial conditions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

# Integration aborts once any state magnitude exceeds this; the benchmark
# systems live orders of magnitude below it.
DIVERGENCE_LIMIT = 1e9

# Relative tolerance for the uniform-grid check in finite_difference.
GRID_RTOL = 1e-9


class DivergenceError(RuntimeError):
    """Integration produced a non-finite or runaway state."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"state diverged at step {step}")


class NonUniformGridError(ValueError):
    """Finite differencing requires a uniform time grid."""

    def __init__(self, max_rel_deviation: float):
        self.max_rel_deviation = max_rel_deviation
        super().__init__(
            f"time grid is not uniform: max relative step deviation "
            f"{max_rel_deviation:.3e} exceeds {GRID_RTOL:.0e}"
        )


@dataclass
class SystemDefinition:
    """A benchmark ODE system dx/dt = rhs(x) with documented defaults.

    ``ground_truth_terms`` holds, per state dimension, the (feature name,
    coefficient) pairs whose linear combination equals ``rhs``; it is ``None``
    for systems that are not a linear combination of library primitives.
    Feature names follow the textual contract of the feature-library module
    (e.g. ``"x0"``, ``"x0 x1"``, ``"x0^2"``).
    """

    id: str
    dimension: int
    rhs: Callable[[np.ndarray], np.ndarray]
    params: dict[str, float]
    description: str
    ground_truth_terms: tuple[tuple[tuple[str, float], ...], ...] | None = None
    # Documented data-generation defaults (the trajectory lengths are not
    # dictated by the benchmark protocol, so each system fixes its own).
    default_dt: float = 0.01
    default_steps: int = 2000
    train_inits: tuple[tuple[float, ...], ...] = ()
    test_inits: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self):
        if self.dimension <= 0:
            raise ValueError(f"dimension must be positive, got {self.dimension}")
        for value in self.params.values():
            if not np.isfinite(value):
                raise ValueError(f"non-finite parameter in system {self.id!r}")


@dataclass
class Trajectory:
    """Time-stamped state samples, optionally with estimated derivatives."""

    times: np.ndarray  # (K,)
    states: np.ndarray  # (K, n)
    derivatives: np.ndarray | None = None  # (K, n) when filled

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.times.ndim != 1:
            raise ValueError("times must be one-dimensional")
        if self.states.ndim != 2:
            raise ValueError("states must be a K x n matrix")
        if len(self.times) != len(self.states):
            raise ValueError(
                f"times ({len(self.times)}) and states ({len(self.states)}) "
                "row counts differ"
            )
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(self.times)) or not np.all(np.isfinite(self.states)):
            raise ValueError("trajectory contains non-finite entries")
        if self.derivatives is not None:
            self.derivatives = np.asarray(self.derivatives, dtype=float)
            if self.derivatives.shape != self.states.shape:
                raise ValueError("derivatives shape must match states")
            if not np.all(np.isfinite(self.derivatives)):
                raise ValueError("derivatives contain non-finite entries")

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def K(self) -> int:
        return self.states.shape[0]


@dataclass
class Dataset:
    """Train/test trajectory split for one system."""

    train: list[Trajectory]
    test: list[Trajectory]
    system_id: str

    def __post_init__(self):
        if not self.train or not self.test:
            raise ValueError("dataset needs at least one train and one test trajectory")
        dims = {t.n for t in self.train} | {t.n for t in self.test}
        if len(dims) != 1:
            raise ValueError(f"trajectories disagree on dimension: {sorted(dims)}")

    @property
    def dimension(self) -> int:
        return self.train[0].n


def integrate(
    system: SystemDefinition,
    x0: Sequence[float] | np.ndarray,
    dt: float,
    steps: int,
) -> Trajectory:
    """Integrate with classical fourth-order Runge-Kutta at fixed step dt.

    Returns steps+1 samples at t = 0, dt, ..., steps*dt. Derivatives are left
    unset. Raises DivergenceError naming the first bad step if the state goes
    non-finite or beyond DIVERGENCE_LIMIT.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if steps < 2:
        raise ValueError(f"steps must be >= 2, got {steps}")
    x = np.asarray(x0, dtype=float)
    if x.shape != (system.dimension,):
        raise ValueError(
            f"x0 has shape {x.shape}, expected ({system.dimension},) for {system.id!r}"
        )

    out = np.empty((steps + 1, system.dimension))
    out[0] = x
    f = system.rhs
    with np.errstate(all="ignore"):
        for k in range(steps):
            k1 = f(x)
            k2 = f(x + 0.5 * dt * k1)
            k3 = f(x + 0.5 * dt * k2)
            k4 = f(x + dt * k3)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if _diverged(x):
                raise DivergenceError(k + 1)
            out[k + 1] = x
    times = dt * np.arange(steps + 1)
    return Trajectory(times=times, states=out)


def _diverged(x: np.ndarray) -> bool:
    return bool(np.any(~np.isfinite(x)) or np.any(np.abs(x) > DIVERGENCE_LIMIT))


def finite_difference(traj: Trajectory) -> Trajectory:
    """Fill derivatives with second-order finite differences.

    Interior points use central differences; the two endpoints use one-sided
    three-point stencils, so the derivative array has no missing rows.
    """
    if traj.K < 3:
        raise ValueError(f"need at least 3 samples, got {traj.K}")
    dts = np.diff(traj.times)
    dt = dts[0]
    max_rel = float(np.max(np.abs(dts - dt)) / dt)
    if max_rel > GRID_RTOL:
        raise NonUniformGridError(max_rel)

    x = traj.states
    d = np.empty_like(x)
    d[1:-1] = (x[2:] - x[:-2]) / (2.0 * dt)
    d[0] = (-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * dt)
    d[-1] = (3.0 * x[-1] - 4.0 * x[-2] + x[-3]) / (2.0 * dt)
    return Trajectory(times=traj.times.copy(), states=x.copy(), derivatives=d)


def make_dataset(
    system: SystemDefinition,
    train_inits: Sequence[Sequence[float]],
    test_inits: Sequence[Sequence[float]],
    dt: float,
    steps: int,
) -> Dataset:
    """Integrate every initial condition and fill derivatives."""
    if not train_inits or not test_inits:
        raise ValueError("need at least one train and one test initial condition")

    def run(inits, split):
        trajs = []
        for i, x0 in enumerate(inits):
            try:
                trajs.append(finite_difference(integrate(system, x0, dt, steps)))
            except (DivergenceError, NonUniformGridError, ValueError) as exc:
                raise RuntimeError(
                    f"{split} init {list(x0)} for system {system.id!r} failed: {exc}"
                ) from exc
        return trajs

    return Dataset(
        train=run(train_inits, "train"),
        test=run(test_inits, "test"),
        system_id=system.id,
    )


def default_dataset(system: SystemDefinition) -> Dataset:
    """Dataset built from the system's documented defaults."""
    return make_dataset(
        system,
        system.train_inits,
        system.test_inits,
        system.default_dt,
        system.default_steps,
    )


def save_csv(traj: Trajectory, path: str | Path) -> None:
    """Write a trajectory as CSV with header ``t,x0,...,x{n-1}``."""
    header = "t," + ",".join(f"x{i}" for i in range(traj.n))
    data = np.column_stack([traj.times, traj.states])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=header, comments="")


def load_csv(path: str | Path) -> Trajectory:
    """Read a trajectory written by save_csv (derivatives unset)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] < 2:
        raise ValueError(f"{path}: expected columns t,x0,... got {data.shape[1]}")
    return Trajectory(times=data[:, 0], states=data[:, 1:])


# --------------------------------------------------------------------------
# Benchmark registry
# --------------------------------------------------------------------------


def _lorenz(sigma=10.0, rho=28.0, beta=2.66667) -> SystemDefinition:
    def rhs(x):
        return np.array(
            [
                sigma * (x[1] - x[0]),
                x[0] * (rho - x[2]) - x[1],
                x[0] * x[1] - beta * x[2],
            ]
        )

    return SystemDefinition(
        id="lorenz",
        dimension=3,
        rhs=rhs,
        params={"sigma": sigma, "rho": rho, "beta": beta},
        description=(
            "A three-dimensional system modelling atmospheric convection. The "
            "trajectory orbits a two-lobed chaotic attractor: x0 and x1 swing "
            "between positive and negative bands while x2 oscillates around a "
            "positive mean. Dynamics are quadratic with strong coupling "
            "between the states."
        ),
        ground_truth_terms=(
            (("x0", -sigma), ("x1", sigma)),
            (("x0", rho), ("x1", -1.0), ("x0 x2", -1.0)),
            (("x2", -beta), ("x0 x1", 1.0)),
        ),
        default_dt=2e-3,
        default_steps=5000,
        train_inits=((-8.0, 8.0, 27.0),),
        test_inits=((8.0, 7.0, 15.0),),
    )


def _rossler(a=0.2, b=0.2, c=5.7) -> SystemDefinition:
    def rhs(x):
        return np.array([-x[1] - x[2], x[0] + a * x[1], b + x[2] * (x[0] - c)])

    return SystemDefinition(
        id="rossler",
        dimension=3,
        rhs=rhs,
        params={"a": a, "b": b, "c": c},
        description=(
            "A three-dimensional chaotic system with a single folded band. "
            "x0 and x1 oscillate quasi-periodically with slowly growing "
            "amplitude, and x2 stays near zero except for brief large spikes. "
            "Only one quadratic coupling is present."
        ),
        ground_truth_terms=(
            (("x1", -1.0), ("x2", -1.0)),
            (("x0", 1.0), ("x1", a)),
            (("1", b), ("x2", -c), ("x0 x2", 1.0)),
        ),
        default_dt=0.01,
        default_steps=5000,
        train_inits=((1.0, 1.0, 0.0),),
        test_inits=((-4.0, 0.0, 0.5),),
    )


def _logistic(r=1.8, cap=2.0) -> SystemDefinition:
    def rhs(x):
        return np.array([r * x[0] * (1.0 - x[0] / cap)])

    return SystemDefinition(
        id="logistic",
        dimension=1,
        rhs=rhs,
        params={"r": r, "cap": cap},
        description=(
            "A one-dimensional saturating growth model. Starting from a small "
            "positive value the state rises along an S-shaped curve and "
            "levels off at a finite carrying capacity. The velocity is a "
            "downward parabola in the state."
        ),
        ground_truth_terms=((("x0", r), ("x0^2", -r / cap)),),
        default_dt=0.01,
        default_steps=1000,
        train_inits=((0.1,),),
        test_inits=((3.0,),),
    )


def _sigmoid_growth(c0=2.0, c1=0.5) -> SystemDefinition:
    def rhs(x):
        return np.array([1.0 / (1.0 + np.exp(c0 - x[0] / c1))])

    return SystemDefinition(
        id="sigmoid_growth",
        dimension=1,
        rhs=rhs,
        params={"c0": c0, "c1": c1},
        description=(
            "A one-dimensional growth model whose velocity is a saturating "
            "sigmoid of the state: motion is very slow below a soft "
            "threshold, speeds up through a transition region, and "
            "approaches a constant drift rate for large states."
        ),
        ground_truth_terms=None,
        default_dt=0.01,
        default_steps=1000,
        train_inits=((0.0,),),
        test_inits=((4.0,),),
    )


def _xlog_growth(c0=-0.7, c1=0.5) -> SystemDefinition:
    def rhs(x):
        return np.array([c0 * x[0] * np.log(c1 * x[0])])

    return SystemDefinition(
        id="xlog_growth",
        dimension=1,
        rhs=rhs,
        params={"c0": c0, "c1": c1},
        description=(
            "A one-dimensional growth model with a logarithmic rate law, "
            "similar to tumour-growth curves: the state relaxes "
            "monotonically toward a finite plateau, fast at first and ever "
            "slower near the equilibrium. States remain strictly positive."
        ),
        ground_truth_terms=None,
        default_dt=0.01,
        default_steps=1000,
        train_inits=((0.25,),),
        test_inits=((6.0,),),
    )


def _linear2d(a=-0.3, b=2.0) -> SystemDefinition:
    def rhs(x):
        return np.array([a * x[0] + b * x[1], -b * x[0] + a * x[1]])

    return SystemDefinition(
        id="linear2d",
        dimension=2,
        rhs=rhs,
        params={"a": a, "b": b},
        description=(
            "A two-dimensional damped rotation: both states oscillate at a "
            "common frequency with exponentially decaying amplitude, tracing "
            "a spiral into the origin. The dynamics are purely linear."
        ),
        ground_truth_terms=(
            (("x0", a), ("x1", b)),
            (("x0", -b), ("x1", a)),
        ),
        default_dt=0.01,
        default_steps=1500,
        train_inits=((2.0, 0.0),),
        test_inits=((0.0, -1.5),),
    )


def _damped_oscillator(k=4.0, c=0.2) -> SystemDefinition:
    def rhs(x):
        return np.array([x[1], -k * x[0] - c * x[1]])

    return SystemDefinition(
        id="damped_oscillator",
        dimension=2,
        rhs=rhs,
        params={"k": k, "c": c},
        description=(
            "A lightly damped harmonic oscillator in position/velocity form. "
            "x0 and x1 oscillate a quarter period out of phase with slowly "
            "shrinking amplitude."
        ),
        ground_truth_terms=(
            (("x1", 1.0),),
            (("x0", -k), ("x1", -c)),
        ),
        default_dt=0.01,
        default_steps=2000,
        train_inits=((1.5, 0.0),),
        test_inits=((-1.0, 2.0),),
    )


def _vanderpol(mu=1.2) -> SystemDefinition:
    def rhs(x):
        return np.array([x[1], mu * (1.0 - x[0] ** 2) * x[1] - x[0]])

    return SystemDefinition(
        id="vanderpol",
        dimension=2,
        rhs=rhs,
        params={"mu": mu},
        description=(
            "A self-excited relaxation oscillator. Trajectories converge onto "
            "a stable limit cycle: x0 sweeps between roughly -2 and 2 with "
            "alternating slow drifts and fast jumps, while x1 shows sharp "
            "spikes. Damping is negative for small amplitudes and positive "
            "for large ones, which requires a cubic interaction term."
        ),
        ground_truth_terms=(
            (("x1", 1.0),),
            (("x0", -1.0), ("x1", mu), ("x0^2 x1", -mu)),
        ),
        default_dt=0.01,
        default_steps=2000,
        train_inits=((0.5, 1.0),),
        test_inits=((-2.0, 0.5),),
    )


def _duffing(delta=0.2, alpha=1.0, beta=5.0) -> SystemDefinition:
    def rhs(x):
        return np.array([x[1], -delta * x[1] - alpha * x[0] - beta * x[0] ** 3])

    return SystemDefinition(
        id="duffing",
        dimension=2,
        rhs=rhs,
        params={"delta": delta, "alpha": alpha, "beta": beta},
        description=(
            "An unforced stiffening-spring oscillator. Oscillations decay "
            "toward the origin, but the period visibly shortens at large "
            "amplitude because the restoring force grows with the cube of "
            "the displacement."
        ),
        ground_truth_terms=(
            (("x1", 1.0),),
            (("x0", -alpha), ("x1", -delta), ("x0^3", -beta)),
        ),
        default_dt=0.01,
        default_steps=2000,
        train_inits=((1.5, 0.0),),
        test_inits=((-1.0, 1.0),),
    )


def _lotka_volterra(alpha=0.8, beta=0.4, gamma=0.6, delta=0.3) -> SystemDefinition:
    def rhs(x):
        return np.array(
            [
                alpha * x[0] - beta * x[0] * x[1],
                delta * x[0] * x[1] - gamma * x[1],
            ]
        )

    return SystemDefinition(
        id="lotka_volterra",
        dimension=2,
        rhs=rhs,
        params={"alpha": alpha, "beta": beta, "gamma": gamma, "delta": delta},
        description=(
            "A two-species predator-prey model. Both populations cycle "
            "periodically with the predator peak lagging the prey peak; "
            "amplitudes depend on the starting point and neither state ever "
            "becomes negative. Interactions are bilinear."
        ),
        ground_truth_terms=(
            (("x0", alpha), ("x0 x1", -beta)),
            (("x1", -gamma), ("x0 x1", delta)),
        ),
        default_dt=0.01,
        default_steps=3000,
        train_inits=((1.0, 1.0),),
        test_inits=((3.0, 1.0),),
    )


def _cubic_oscillator(a=-0.5, b=2.0) -> SystemDefinition:
    def rhs(x):
        return np.array(
            [
                a * x[0] ** 3 + b * x[1] ** 3,
                -b * x[0] ** 3 + a * x[1] ** 3,
            ]
        )

    return SystemDefinition(
        id="cubic_oscillator",
        dimension=2,
        rhs=rhs,
        params={"a": a, "b": b},
        description=(
            "A two-dimensional oscillator whose damping and rotation are both "
            "cubic in the states. The orbit spirals slowly toward the origin "
            "and the oscillation slows dramatically as the amplitude decays."
        ),
        ground_truth_terms=(
            (("x0^3", a), ("x1^3", b)),
            (("x0^3", -b), ("x1^3", a)),
        ),
        default_dt=0.01,
        default_steps=2500,
        train_inits=((2.0, 0.0),),
        test_inits=((1.0, -1.0),),
    )


def registry() -> list[SystemDefinition]:
    """All benchmark systems, in a stable order."""
    return [
        _lorenz(),
        _rossler(),
        _logistic(),
        _sigmoid_growth(),
        _xlog_growth(),
        _linear2d(),
        _damped_oscillator(),
        _vanderpol(),
        _duffing(),
        _lotka_volterra(),
        _cubic_oscillator(),
    ]


def get_system(system_id: str) -> SystemDefinition:
    for system in registry():
        if system.id == system_id:
            return system
    known = ", ".join(s.id for s in registry())
    raise KeyError(f"unknown system {system_id!r}; known systems: {known}")
