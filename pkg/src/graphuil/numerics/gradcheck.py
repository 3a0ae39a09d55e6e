"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, value_and_grad


@dataclass
class GradCheckReport:
    block_errors: dict[str, float] = field(default_factory=dict)
    coords_checked: dict[str, int] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.block_errors.values(), default=0.0)

    def __str__(self):
        lines = [f"{k}: {v:.3e} ({self.coords_checked[k]} coords)"
                 for k, v in self.block_errors.items()]
        return "\n".join(lines + [f"max: {self.max_error:.3e}"])


PRECISIONS = {"double": np.float64, "extended": np.longdouble}


def finite_diff_check(fn, params: dict[str, np.ndarray], eps: float = 1e-5,
                      max_coords: int | None = None, seed: int = 0,
                      precision: str = "double") -> GradCheckReport:
    """Compare ``grad(fn)`` against ``(f(p+eps) - f(p-eps)) / (2 eps)``.

    Every coordinate is checked unless ``max_coords`` is given, in which case
    blocks larger than it are subsampled (never below 32 coordinates).
    Relative error uses ``max(|analytic|, |numeric|, 1e-8)`` as denominator.

    With ``precision="extended"`` the two loss evaluations run in
    ``np.longdouble``. The difference quotient loses about
    ``ulp(loss) / eps`` to rounding, which in double precision swamps
    coordinates whose gradient is many orders below the loss value;
    extended precision (where the platform has it) lowers that floor.
    The analytic gradient is always the double-precision one.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if precision not in PRECISIONS:
        raise ValueError(f"precision must be one of {sorted(PRECISIONS)}")
    _, analytic, _ = value_and_grad(fn, params)
    rng = np.random.default_rng(seed)
    work = {k: np.array(v, dtype=PRECISIONS[precision]) for k, v in params.items()}

    def f():
        out = fn({k: Tensor(v) for k, v in work.items()})
        return out.value[()]

    report = GradCheckReport()
    for name, block in work.items():
        flat = block.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max(max_coords, 32):
            idx = np.sort(rng.choice(flat.size, size=max(max_coords, 32), replace=False))
        worst = 0.0
        ga = analytic[name].reshape(-1)
        for k in idx:
            orig = flat[k]
            flat[k] = orig + eps
            hi = f()
            flat[k] = orig - eps
            lo = f()
            flat[k] = orig
            num = (hi - lo) / (2 * eps)
            err = abs(ga[k] - num) / max(abs(ga[k]), abs(num), 1e-8)
            worst = max(worst, float(err))
        report.block_errors[name] = worst
        report.coords_checked[name] = len(idx)
    return report
