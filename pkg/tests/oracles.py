"""Independent reference implementations used only by the tests."""
import itertools

import numpy as np


def brute_force_box_lstsq(a, b, lower, upper):
    """Minimize ||a x - b|| over lower <= x <= upper by enumerating active sets.

    Every variable is either free, at its lower bound or at its upper bound
    (infinite bounds are never pinned). Each candidate is solved with
    numpy's SVD-based lstsq and the best feasible one is returned.
    """
    p = a.shape[1]
    choices = []
    for j in range(p):
        opts = ["free"]
        if np.isfinite(lower[j]):
            opts.append("lower")
        if np.isfinite(upper[j]):
            opts.append("upper")
        choices.append(opts)
    best, best_obj = None, np.inf
    for combo in itertools.product(*choices):
        x = np.zeros(p)
        for j, c in enumerate(combo):
            if c == "lower":
                x[j] = lower[j]
            elif c == "upper":
                x[j] = upper[j]
        free = [j for j, c in enumerate(combo) if c == "free"]
        if free:
            fixed = [j for j in range(p) if j not in free]
            rhs = b - a[:, fixed] @ x[fixed]
            x[free] = np.linalg.lstsq(a[:, free], rhs, rcond=None)[0]
        slack = 1e-10 * (1 + np.abs(x))
        if np.any(x < lower - slack) or np.any(x > upper + slack):
            continue
        obj = float(np.sum((a @ x - b) ** 2))
        if best is None or obj < best_obj:
            best, best_obj = x, obj
    return best, best_obj


def dense_recurrence(system, z0, steps):
    step = np.eye(2 * system.size) + system.ts * np.linalg.solve(system.E, system.A)
    out = [np.asarray(z0, dtype=float)]
    for _ in range(steps - 1):
        out.append(step @ out[-1])
    return np.array(out)
