"""Built-in laws fitted on protein-sequence pre-training runs.

These let allocation queries run without any raw run data. Each preset is
addressable by name (``clm``, ``mlm``, ``transfer-mlm``, ``transfer-clm``,
``joint-clm``, ``joint-mlm``, ``dt``, ``dual``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .errors import UnknownPresetError
from .jointfit import JointLaw
from .powerlaw import PowerLaw


@dataclass(frozen=True)
class ObjectiveLaws:
    """Compute-allocation and loss laws for one objective."""

    name: str
    n_of_c: PowerLaw
    d_of_c: PowerLaw
    loss_of_n: PowerLaw
    loss_of_d: PowerLaw
    loss_of_c: PowerLaw

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "objective",
            "name": self.name,
            **{k: getattr(self, k).to_dict() for k in ("n_of_c", "d_of_c", "loss_of_n", "loss_of_d", "loss_of_c")},
        }


@dataclass(frozen=True)
class TransferLaws:
    """From-scratch ``L(C_s)`` and transferred ``L(C_t)`` for one target objective."""

    name: str
    scratch: PowerLaw
    transfer: PowerLaw

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "transfer", "name": self.name, "scratch": self.scratch.to_dict(), "transfer": self.transfer.to_dict()}


@dataclass(frozen=True)
class EffectiveTokensLaw:
    """``D_t = k / (D_f**delta * N**gamma)``; negative ``delta``/``gamma`` mean growth."""

    k: float
    delta: float
    gamma: float
    name: str = "dt"

    def __call__(self, n_params, d_f):
        return self.k / (d_f**self.delta * n_params**self.gamma)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "effective_tokens", "name": self.name, "k": self.k, "delta": self.delta, "gamma": self.gamma}


@dataclass(frozen=True)
class DualLaws:
    """Fitted shortcuts for training one CLM and one MLM of equal size."""

    n_of_csum: PowerLaw
    token_ratio: PowerLaw
    name: str = "dual"

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "dual", "name": self.name, "n_of_csum": self.n_of_csum.to_dict(), "token_ratio": self.token_ratio.to_dict()}


def _law(coeff: float, exponent: float, x: str, y: str) -> PowerLaw:
    return PowerLaw(coeff=coeff, exponent=exponent, x_name=x, y_name=y)


CLM = ObjectiveLaws(
    name="clm",
    n_of_c=_law(1.26e-3, 0.578, "C", "N"),
    d_of_c=_law(1.23e2, 0.422, "C", "D"),
    loss_of_n=_law(4.835, -0.037, "N", "L"),
    loss_of_d=_law(7.904, -0.051, "D", "L"),
    loss_of_c=_law(8.251, -0.027, "C", "L"),
)

MLM = ObjectiveLaws(
    name="mlm",
    n_of_c=_law(6.19e-8, 0.776, "C", "N"),
    d_of_c=_law(2.02e6, 0.230, "C", "D"),
    loss_of_n=_law(4.530, -0.040, "N", "L"),
    loss_of_d=_law(42.614, -0.120, "D", "L"),
    loss_of_c=_law(10.125, -0.034, "C", "L"),
)

TRANSFER_MLM = TransferLaws(
    name="transfer-mlm",
    scratch=_law(10.125, -0.034, "C_s", "L"),
    transfer=_law(11.133, -0.038, "C_t", "L"),
)

TRANSFER_CLM = TransferLaws(
    name="transfer-clm",
    scratch=_law(8.251, -0.027, "C_s", "L"),
    transfer=_law(7.191, -0.024, "C_t", "L"),
)

# The irreducible loss was not reported alongside these fits; E = 0 keeps
# allocation exact (it does not depend on E) and makes absolute loss values
# lower bounds.
JOINT_CLM = JointLaw(A=143.9, B=22036.5, E=0.0, alpha=0.367, beta=0.496)
JOINT_MLM = JointLaw(A=3.365, B=7.569, E=0.0, alpha=0.042, beta=0.099)

EFFECTIVE_TOKENS = EffectiveTokensLaw(k=3.65e5, delta=-0.137, gamma=-0.369)

DUAL = DualLaws(
    n_of_csum=_law(1.497e-6, 0.703, "C_sum", "N"),
    token_ratio=_law(8.449e4, -0.392, "N", "r"),
)

PRESETS: dict[str, Any] = {
    "clm": CLM,
    "mlm": MLM,
    "transfer-mlm": TRANSFER_MLM,
    "transfer-clm": TRANSFER_CLM,
    "joint-clm": JOINT_CLM,
    "joint-mlm": JOINT_MLM,
    "dt": EFFECTIVE_TOKENS,
    "dual": DUAL,
}


def get_preset(name: str):
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise UnknownPresetError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None


def describe_presets() -> dict[str, dict[str, Any]]:
    return {name: preset.to_dict() for name, preset in PRESETS.items()}
