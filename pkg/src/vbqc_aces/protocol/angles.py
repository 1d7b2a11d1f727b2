"""Measurement angles as integers mod 8 (units of pi/4) and per-qubit secrets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ANGLE_COUNT = 8
PI = 4  # pi in units of pi/4


def angle(k: int) -> int:
    return int(k) % ANGLE_COUNT


def to_radians(k: int) -> float:
    return angle(k) * math.pi / PI


@dataclass(frozen=True)
class QubitSecrets:
    theta: int
    r: int
    a: int

    def __post_init__(self) -> None:
        if not 0 <= self.theta < ANGLE_COUNT or self.r not in (0, 1) or self.a not in (0, 1):
            raise ValueError(f"invalid secrets {self}")

    @classmethod
    def sample(cls, rng: np.random.Generator) -> QubitSecrets:
        theta, r, a = rng.integers(0, ANGLE_COUNT), rng.integers(0, 2), rng.integers(0, 2)
        return cls(int(theta), int(r), int(a))

    def to_dict(self) -> dict[str, int]:
        return {"theta": self.theta, "r": self.r, "a": self.a}


def corrected_angle(phi: int, s_x: int, s_z: int) -> int:
    """Flow-corrected angle ``(-1)^sX * phi + sZ * pi``."""
    return angle((-1) ** (s_x & 1) * phi + PI * (s_z & 1))


def delta_angle(phi_corrected: int, secrets: QubitSecrets, flip_bit: int) -> int:
    """Angle sent to the server.

    ``flip_bit`` is the parity of the ``a`` bits of the qubit's graph
    neighbours: the stabilizer ``X_w Z_N(w)`` turns each such ``a_w`` into a
    Z byproduct on this qubit.
    """
    return angle(
        (-1) ** secrets.a * phi_corrected + secrets.theta + PI * secrets.r + PI * (flip_bit & 1)
    )


def decrypt(b: int, r: int) -> int:
    return (b ^ r) & 1


encrypt = decrypt
