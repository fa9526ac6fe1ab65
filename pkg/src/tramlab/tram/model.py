"""TRAM parameter partition and forward graphs.

A model holds four disjoint parameter blocks:

* ``phi``    feature extractor on x,
* ``psi``    joint extractor: an a-only stack followed by a stack on
             concat(a-stack output, phi(x)),
* ``head_w`` marginal head on phi(x) (the test-time predictor),
* ``head_u`` conditional head on the psi output (training time only),

plus an optional ``het_w`` block producing the raw variance (or logit-noise
scale) of a heteroscedastic marginal head. A model without ``psi`` and
``head_u`` is a plain network trained without PI.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..nn import autodiff as ad
from ..nn.mlp import MLPSpec, ParamBlock, apply, leaves, mlp_init

REGRESSION = "regression"
CLASSIFICATION = "classification"


@dataclass(frozen=True)
class TramWidths:
    """Hidden widths; an empty ``psi_a`` feeds a straight into the concat."""

    phi: tuple[int, ...] = (64, 64)
    psi_a: tuple[int, ...] = ()
    psi_joint: tuple[int, ...] = (64,)
    activation: str = "tanh"

    def __post_init__(self) -> None:
        for name in ("phi", "psi_a", "psi_joint"):
            widths = tuple(int(w) for w in getattr(self, name))
            if any(w <= 0 for w in widths):
                raise ValueError(f"{name} widths must be positive, got {widths}")
            object.__setattr__(self, name, widths)
        if not self.phi:
            raise ValueError("phi needs at least one layer")

    def scaled(self, factor: float) -> TramWidths:
        """All hidden widths multiplied by ``factor`` (rounded, at least 1)."""

        def sc(ws):
            return tuple(max(1, int(round(w * factor))) for w in ws)

        return TramWidths(sc(self.phi), sc(self.psi_a), sc(self.psi_joint), self.activation)


@dataclass
class TramModel:
    task: str
    n_classes: int
    phi_spec: MLPSpec
    phi: ParamBlock
    head_w_spec: MLPSpec
    head_w: ParamBlock
    psi_a_spec: MLPSpec | None = None
    psi_joint_spec: MLPSpec | None = None
    psi: ParamBlock | None = None
    head_u_spec: MLPSpec | None = None
    head_u: ParamBlock | None = None
    het_spec: MLPSpec | None = None
    het_w: ParamBlock | None = None
    pi_dim: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return self.phi_spec.input_dim

    @property
    def out_dim(self) -> int:
        """Width of one head's location output (1 for regression, C for classification)."""
        return 1 if self.task == REGRESSION else self.n_classes

    @property
    def has_pi(self) -> bool:
        return self.psi is not None

    @property
    def is_het(self) -> bool:
        return self.het_w is not None

    def blocks(self) -> dict[str, ParamBlock]:
        out = {"phi": self.phi, "head_w": self.head_w}
        if self.psi is not None:
            out["psi"] = self.psi
            out["head_u"] = self.head_u
        if self.het_w is not None:
            out["het_w"] = self.het_w
        return out

    def copy(self) -> TramModel:
        def cp(b):
            return None if b is None else b.copy()

        return TramModel(
            self.task, self.n_classes, self.phi_spec, self.phi.copy(), self.head_w_spec,
            self.head_w.copy(), self.psi_a_spec, self.psi_joint_spec, cp(self.psi),
            self.head_u_spec, cp(self.head_u), self.het_spec, cp(self.het_w), self.pi_dim,
            dict(self.meta),
        )

    def load_blocks(self, blocks: dict[str, ParamBlock]) -> None:
        """Overwrite parameters in place from serialized blocks."""
        for name, block in self.blocks().items():
            if name not in blocks:
                raise KeyError(f"missing parameter block {name!r}")
            for key, arr in block.items():
                arr[...] = blocks[name][key]
            block.bump()


def _check_task(task: str, n_classes: int) -> None:
    if task not in (REGRESSION, CLASSIFICATION):
        raise ValueError(f"unknown task {task!r}")
    if task == CLASSIFICATION and n_classes < 2:
        raise ValueError("classification needs at least two classes")


def _head(in_dim: int, out_dim: int, seed: int) -> MLPSpec:
    return MLPSpec(in_dim, (out_dim,), ("identity",), seed)


def build_tram(
    input_dim: int,
    pi_dim: int,
    task: str = REGRESSION,
    widths: TramWidths = TramWidths(),
    n_classes: int = 2,
    het: bool = False,
    seed: int = 0,
) -> TramModel:
    """Fresh TRAM model; every block is initialized from its own seeded stream."""
    _check_task(task, n_classes)
    if pi_dim <= 0:
        raise ValueError("TRAM needs at least one PI column; use build_no_pi otherwise")
    act = widths.activation
    phi_spec = MLPSpec(input_dim, widths.phi, (act,) * len(widths.phi), seed)
    out = 1 if task == REGRESSION else n_classes
    feat = phi_spec.output_dim
    arrays: dict[str, np.ndarray] = {}
    psi_a_spec = None
    a_out = pi_dim
    if widths.psi_a:
        psi_a_spec = MLPSpec(pi_dim, widths.psi_a, (act,) * len(widths.psi_a), seed)
        arrays.update(mlp_init(psi_a_spec, "psi.a.").arrays)
        a_out = psi_a_spec.output_dim
    psi_joint_spec = None
    joint_out = a_out + feat
    if widths.psi_joint:
        psi_joint_spec = MLPSpec(joint_out, widths.psi_joint, (act,) * len(widths.psi_joint), seed)
        arrays.update(mlp_init(psi_joint_spec, "psi.joint.").arrays)
        joint_out = psi_joint_spec.output_dim
    head_w_spec = _head(feat, out, seed)
    head_u_spec = _head(joint_out, out, seed)
    het_spec = _head(feat, out, seed) if het else None
    return TramModel(
        task=task,
        n_classes=n_classes if task == CLASSIFICATION else 0,
        phi_spec=phi_spec,
        phi=mlp_init(phi_spec, "phi."),
        head_w_spec=head_w_spec,
        head_w=mlp_init(head_w_spec, "head_w."),
        psi_a_spec=psi_a_spec,
        psi_joint_spec=psi_joint_spec,
        psi=ParamBlock(arrays),
        head_u_spec=head_u_spec,
        head_u=mlp_init(head_u_spec, "head_u."),
        het_spec=het_spec,
        het_w=mlp_init(het_spec, "het_w.") if het else None,
        pi_dim=pi_dim,
    )


def build_no_pi(
    input_dim: int,
    task: str = REGRESSION,
    widths: TramWidths = TramWidths(),
    n_classes: int = 2,
    het: bool = False,
    seed: int = 0,
) -> TramModel:
    """phi plus a marginal head, with the same initialization as :func:`build_tram`."""
    _check_task(task, n_classes)
    act = widths.activation
    phi_spec = MLPSpec(input_dim, widths.phi, (act,) * len(widths.phi), seed)
    out = 1 if task == REGRESSION else n_classes
    feat = phi_spec.output_dim
    head_w_spec = _head(feat, out, seed)
    het_spec = _head(feat, out, seed) if het else None
    return TramModel(
        task=task,
        n_classes=n_classes if task == CLASSIFICATION else 0,
        phi_spec=phi_spec,
        phi=mlp_init(phi_spec, "phi."),
        head_w_spec=head_w_spec,
        head_w=mlp_init(head_w_spec, "head_w."),
        het_spec=het_spec,
        het_w=mlp_init(het_spec, "het_w.") if het else None,
    )


@dataclass
class Graph:
    """Parameter leaves and output tensors of one forward pass."""

    nodes: dict[str, dict[str, ad.Tensor]]
    features: ad.Tensor
    marginal: ad.Tensor | None
    conditional: ad.Tensor | None


def build_graph(
    model: TramModel,
    x: np.ndarray,
    a: np.ndarray | None = None,
    *,
    marginal: bool = True,
    conditional: bool = True,
    stop_marginal: bool = True,
) -> Graph:
    """Forward both heads.

    With ``stop_marginal`` the marginal head reads phi(x) through a
    stop-gradient, so its loss can only reach ``head_w`` and ``het_w``.
    The marginal output has ``out_dim`` columns, followed by another
    ``out_dim`` raw-scale columns for heteroscedastic models.
    """
    nodes = {name: leaves(block) for name, block in model.blocks().items()}
    x_t = ad.constant(np.asarray(x, dtype=float).reshape(-1, model.input_dim))
    h = apply(model.phi_spec, nodes["phi"], x_t, "phi.")
    marg = cond = None
    if marginal:
        hm = ad.stop_gradient(h) if stop_marginal else h
        marg = apply(model.head_w_spec, nodes["head_w"], hm, "head_w.")
        if model.het_w is not None:
            raw = apply(model.het_spec, nodes["het_w"], hm, "het_w.")
            marg = ad.concat([marg, raw])
    if conditional:
        if not model.has_pi:
            raise ValueError("model has no conditional (PI) path")
        if a is None:
            raise ValueError("conditional head needs PI input a")
        a = np.asarray(a, dtype=float).reshape(x_t.data.shape[0], -1)
        if a.shape[1] != model.pi_dim:
            raise ValueError(f"expected {model.pi_dim} PI columns, got {a.shape[1]}")
        z = ad.constant(a)
        if model.psi_a_spec is not None:
            z = apply(model.psi_a_spec, nodes["psi"], z, "psi.a.")
        z = ad.concat([z, h])
        if model.psi_joint_spec is not None:
            z = apply(model.psi_joint_spec, nodes["psi"], z, "psi.joint.")
        cond = apply(model.head_u_spec, nodes["head_u"], z, "head_u.")
    return Graph(nodes, h, marg, cond)


def features(model: TramModel, x: np.ndarray) -> np.ndarray:
    """phi(x) as a plain array."""
    return build_graph(model, x, marginal=False, conditional=False).features.data
