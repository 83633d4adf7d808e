"""Custom types."""  # noqa: A005

from __future__ import annotations

from typing import Literal, TypeAlias

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp

FloatArray: TypeAlias = npt.NDArray[np.float64]
IntArray: TypeAlias = npt.NDArray[np.int64]
BoolArray: TypeAlias = npt.NDArray[np.bool_]
CsrSparse: TypeAlias = sp.csr_matrix

Mode: TypeAlias = Literal["train", "eval"]
Variant: TypeAlias = Literal["idgl", "idgl-anch"]
AttackMode: TypeAlias = Literal["delete", "add"]

JSON: TypeAlias = dict[str, "JSON"] | list["JSON"] | str | int | float | bool | None

__all__ = [
    "JSON",
    "AttackMode",
    "BoolArray",
    "CsrSparse",
    "FloatArray",
    "IntArray",
    "Mode",
    "Variant",
]
