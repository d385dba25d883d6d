"""Batch nonlinear least-squares over SE(3) trajectories.

Variables are poses keyed by (robot id, node index); factors measure relative
poses (odometry, loop closures) or anchor absolute poses (priors). The
residual of a relative factor is log(Z^-1 Ti^-1 Tj) in the se(3) tangent
space, ordered [rotation; translation], with left-multiplicative perturbation
T <- Exp(d) T. Levenberg-Marquardt accepts only cost-decreasing steps, so chi2
is non-increasing by construction.

Graph mutation is single-threaded; optimize() works on the current snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DuplicateNode, GaugeError, MissingNode, NonSPDInformation
from .geometry import (
    SE3,
    se3_adjoint,
    se3_exp,
    se3_left_jacobian_inv,
    se3_log,
)

NodeKey = tuple[int, int]  # (robot id, node index)


def information_from_sigmas(translation_sigma: float = 0.1,
                            rotation_sigma: float = 0.02) -> np.ndarray:
    """Isotropic 6x6 information matrix from per-axis standard deviations."""
    w = np.array([1.0 / rotation_sigma ** 2] * 3 + [1.0 / translation_sigma ** 2] * 3)
    return np.diag(w)


@dataclass(frozen=True)
class Factor:
    kind: str                      # "odometry" | "loop_closure" | "prior"
    node_a: NodeKey                # priors use node_a only
    node_b: NodeKey | None
    measurement: SE3
    information: np.ndarray
    sqrt_information: np.ndarray = field(compare=False, default=None)


@dataclass
class GraphSolution:
    poses: dict
    chi2: float
    iterations: int
    converged: bool
    chi2_history: list


class PoseGraph:
    def __init__(self, huber_delta: float = 1.0):
        self.nodes: dict[NodeKey, SE3] = {}
        self.factors: list[Factor] = []
        self.huber_delta = float(huber_delta)

    # -- construction --------------------------------------------------------

    def add_node(self, robot_id: int, node_index: int, pose: SE3) -> NodeKey:
        key = (int(robot_id), int(node_index))
        if key in self.nodes:
            raise DuplicateNode(f"node {key} already exists")
        self.nodes[key] = pose
        return key

    def _check_factor_inputs(self, key_a, key_b, information) -> np.ndarray:
        for key in (key_a, key_b):
            if key is not None and key not in self.nodes:
                raise MissingNode(f"factor references missing node {key}")
        info = np.asarray(information, dtype=np.float64).reshape(6, 6)
        if np.max(np.abs(info - info.T)) > 1e-9:
            raise NonSPDInformation("information matrix is not symmetric")
        try:
            L = np.linalg.cholesky(info)
        except np.linalg.LinAlgError as e:
            raise NonSPDInformation("information matrix is not positive-definite") from e
        return L.T  # upper-triangular A with A^T A = info

    def add_factor(self, kind: str, node_a: NodeKey, node_b: NodeKey,
                   measurement: SE3, information=None) -> Factor:
        if information is None:
            information = information_from_sigmas()
        sqrt_info = self._check_factor_inputs(node_a, node_b, information)
        f = Factor(kind=kind, node_a=tuple(node_a), node_b=tuple(node_b),
                   measurement=measurement,
                   information=np.asarray(information, dtype=np.float64),
                   sqrt_information=sqrt_info)
        self.factors.append(f)
        return f

    def add_odometry(self, robot_id: int, index_a: int, index_b: int,
                     measurement: SE3, information=None) -> Factor:
        return self.add_factor("odometry", (robot_id, index_a), (robot_id, index_b),
                               measurement, information)

    def add_loop_closure(self, node_a: NodeKey, node_b: NodeKey,
                         measurement: SE3, information=None) -> Factor:
        return self.add_factor("loop_closure", node_a, node_b, measurement, information)

    def add_prior(self, node: NodeKey, pose: SE3, information=None) -> Factor:
        if information is None:
            information = information_from_sigmas(1e-3, 1e-3)
        sqrt_info = self._check_factor_inputs(node, None, information)
        f = Factor(kind="prior", node_a=tuple(node), node_b=None, measurement=pose,
                   information=np.asarray(information, dtype=np.float64),
                   sqrt_information=sqrt_info)
        self.factors.append(f)
        return f

    # -- residuals and jacobians ----------------------------------------------

    @staticmethod
    def _relative_residual(f: Factor, Ti: SE3, Tj: SE3):
        E = f.measurement.inverse().compose(Ti.inverse()).compose(Tj)
        r = se3_log(E)
        Jl_inv = se3_left_jacobian_inv(r)
        Jr_inv = se3_left_jacobian_inv(-r)
        Ja = -Jr_inv @ se3_adjoint(Tj.inverse())
        Jb = Jl_inv @ se3_adjoint(Ti.compose(f.measurement).inverse())
        return r, Ja, Jb

    @staticmethod
    def _prior_residual(f: Factor, Ti: SE3):
        E = f.measurement.inverse().compose(Ti)
        r = se3_log(E)
        J = se3_left_jacobian_inv(r) @ se3_adjoint(f.measurement.inverse())
        return r, J

    def _robust_weight(self, f: Factor, r_white: np.ndarray) -> float:
        if f.kind != "loop_closure":
            return 1.0
        norm = float(np.linalg.norm(r_white))
        if norm <= self.huber_delta:
            return 1.0
        return self.huber_delta / norm

    def chi2(self, poses: dict | None = None) -> float:
        poses = poses or self.nodes
        total = 0.0
        for f in self.factors:
            if f.kind == "prior":
                r, _ = self._prior_residual(f, poses[f.node_a])
            else:
                r, _, _ = self._relative_residual(f, poses[f.node_a], poses[f.node_b])
            rw = f.sqrt_information @ r
            w = self._robust_weight(f, rw)
            total += w * float(rw @ rw)
        return total

    # -- solving ----------------------------------------------------------------

    def _connected_components(self) -> list[set]:
        adj: dict[NodeKey, set] = {k: set() for k in self.nodes}
        for f in self.factors:
            if f.node_b is not None:
                adj[f.node_a].add(f.node_b)
                adj[f.node_b].add(f.node_a)
        seen: set = set()
        comps = []
        for start in sorted(adj):
            if start in seen:
                continue
            comp = set()
            stack = [start]
            while stack:
                k = stack.pop()
                if k in comp:
                    continue
                comp.add(k)
                stack.extend(adj[k] - comp)
            seen |= comp
            comps.append(comp)
        return comps

    def check_gauge(self, auto_anchor: bool = False) -> list[Factor]:
        """Every connected component needs a prior. With auto_anchor, anchor
        unanchored components at their lowest node's current estimate and
        return the ephemeral prior factors used."""
        anchored = {f.node_a for f in self.factors if f.kind == "prior"}
        extra: list[Factor] = []
        for comp in self._connected_components():
            if comp & anchored:
                continue
            if not auto_anchor:
                raise GaugeError(f"component containing {min(comp)} has no prior")
            node = min(comp)
            sqrt_info = np.linalg.cholesky(information_from_sigmas(1e-3, 1e-3)).T
            extra.append(Factor(kind="prior", node_a=node, node_b=None,
                                measurement=self.nodes[node],
                                information=information_from_sigmas(1e-3, 1e-3),
                                sqrt_information=sqrt_info))
        return extra

    def optimize(self, max_iters: int = 100, tol: float = 1e-9,
                 auto_anchor: bool = False) -> GraphSolution:
        """Levenberg-Marquardt; terminates on relative chi2 change < tol."""
        extra = self.check_gauge(auto_anchor=auto_anchor)
        factors = self.factors + extra
        keys = sorted(self.nodes)
        slot = {k: i for i, k in enumerate(keys)}
        poses = dict(self.nodes)
        n = len(keys)

        def total_chi2(p):
            total = 0.0
            for f in factors:
                if f.kind == "prior":
                    r, _ = self._prior_residual(f, p[f.node_a])
                else:
                    r, _, _ = self._relative_residual(f, p[f.node_a], p[f.node_b])
                rw = f.sqrt_information @ r
                total += self._robust_weight(f, rw) * float(rw @ rw)
            return total

        chi2 = total_chi2(poses)
        history = [chi2]
        lam = 1e-6
        converged = False
        iterations = 0
        for iterations in range(1, max_iters + 1):
            H = np.zeros((6 * n, 6 * n))
            g = np.zeros(6 * n)
            for f in factors:
                if f.kind == "prior":
                    r, J = self._prior_residual(f, poses[f.node_a])
                    rw = f.sqrt_information @ r
                    w = self._robust_weight(f, rw)
                    Jw = f.sqrt_information @ J
                    ia = slot[f.node_a] * 6
                    H[ia:ia + 6, ia:ia + 6] += w * Jw.T @ Jw
                    g[ia:ia + 6] += w * Jw.T @ rw
                else:
                    r, Ja, Jb = self._relative_residual(f, poses[f.node_a], poses[f.node_b])
                    rw = f.sqrt_information @ r
                    w = self._robust_weight(f, rw)
                    Jaw = f.sqrt_information @ Ja
                    Jbw = f.sqrt_information @ Jb
                    ia, ib = slot[f.node_a] * 6, slot[f.node_b] * 6
                    H[ia:ia + 6, ia:ia + 6] += w * Jaw.T @ Jaw
                    H[ib:ib + 6, ib:ib + 6] += w * Jbw.T @ Jbw
                    H[ia:ia + 6, ib:ib + 6] += w * Jaw.T @ Jbw
                    H[ib:ib + 6, ia:ia + 6] += w * Jbw.T @ Jaw
                    g[ia:ia + 6] += w * Jaw.T @ rw
                    g[ib:ib + 6] += w * Jbw.T @ rw

            accepted = False
            for _ in range(12):
                damped = H + lam * np.diag(np.maximum(np.diag(H), 1e-12))
                try:
                    delta = np.linalg.solve(damped, -g)
                except np.linalg.LinAlgError:
                    lam *= 10
                    continue
                candidate = {
                    k: se3_exp(delta[slot[k] * 6: slot[k] * 6 + 6]).compose(poses[k])
                    for k in keys}
                new_chi2 = total_chi2(candidate)
                if new_chi2 <= chi2:
                    accepted = True
                    break
                lam *= 10
            if not accepted:
                converged = True
                break
            poses = candidate
            lam = max(lam / 3.0, 1e-12)
            history.append(new_chi2)
            rel_change = abs(chi2 - new_chi2) / max(chi2, 1e-300)
            chi2 = new_chi2
            if rel_change < tol or chi2 < 1e-20:
                converged = True
                break

        self.nodes.update(poses)
        return GraphSolution(poses=poses, chi2=chi2, iterations=iterations,
                             converged=converged, chi2_history=history)


def export_trajectory(path, poses: dict) -> None:
    """One line per node: robot id, node index, then the 12 floats of the
    row-major [R|t] pose block."""
    with open(path, "w", encoding="ascii") as f:
        for (robot, index) in sorted(poses):
            T = poses[(robot, index)]
            block = np.hstack([T.rotation, T.translation.reshape(3, 1)])
            vals = " ".join(f"{v:.12g}" for v in block.reshape(-1))
            f.write(f"{robot} {index} {vals}\n")
