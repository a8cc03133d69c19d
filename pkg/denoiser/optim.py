"""Adam optimizer state and the linear-decay learning rate."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptState:
    """Adam moments per parameter name plus the step counter."""
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "OptState":
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})

    def copy(self) -> "OptState":
        return OptState(m={k: a.copy() for k, a in self.m.items()},
                        v={k: a.copy() for k, a in self.v.items()},
                        step=self.step, beta1=self.beta1, beta2=self.beta2, eps=self.eps)


def adam_update(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], opt: OptState,
                lr: float, in_place: bool = False) -> tuple[dict[str, np.ndarray], OptState]:
    """One bias-corrected Adam step.

    Returns new (params, opt) unless ``in_place`` is set, in which case the
    given arrays are updated and returned.
    """
    if not in_place:
        params = {k: p.copy() for k, p in params.items()}
        opt = opt.copy()
    opt.step += 1
    b1, b2 = opt.beta1, opt.beta2
    correction1 = 1.0 - b1 ** opt.step
    correction2 = 1.0 - b2 ** opt.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"Gradient shape {g.shape} != parameter shape {p.shape} for '{name}'")
        m = opt.m.setdefault(name, np.zeros_like(p))
        v = opt.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        p -= (lr * m_hat / (np.sqrt(v_hat) + opt.eps)).astype(p.dtype)
    return params, opt


def lr_for_epoch(lr_prev: float, k: int, K: int) -> float:
    """lr_k = lr_{k-1} * (1 - k / K) for 1 <= k <= K."""
    if not 1 <= k <= K:
        raise ValueError(f"Epoch {k} outside 1..{K}")
    return lr_prev * (1.0 - k / K)
