"""Node flow solvers.

Three solvers share the same contract (flows never exceed demands or
supplies, stay nonnegative, and respect FIFO split proportions):

* solve_node     -- general m-input / n-output node with a split-ratio
                    matrix and input priorities, solved by iterative
                    reduction-factor selection;
* solve_merge    -- the specialized freeway merge (upstream mainline +
                    on-ramp into one link), a closed-form 4-case rule;
* solve_toll_node -- the dual-lane entrance node where a common ramp flow
                    is split between the toll and GP lane groups by a
                    requested ratio, reduced by a common factor lambda
                    when either group cannot take its share.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ABS_TOL = 1e-12


class DegenerateNode(ValueError):
    """All competing inputs at an active output have zero priority."""


@dataclass(frozen=True)
class NodeProblem:
    demands: np.ndarray  # (m,)
    supplies: np.ndarray  # (n,)
    split: np.ndarray  # (m, n), rows sum to 1
    priorities: np.ndarray  # (m,)

    def __post_init__(self):
        d = np.asarray(self.demands, dtype=float)
        s = np.asarray(self.supplies, dtype=float)
        B = np.asarray(self.split, dtype=float)
        p = np.asarray(self.priorities, dtype=float)
        object.__setattr__(self, "demands", d)
        object.__setattr__(self, "supplies", s)
        object.__setattr__(self, "split", B)
        object.__setattr__(self, "priorities", p)
        m, n = B.shape
        if d.shape != (m,) or s.shape != (n,) or p.shape != (m,):
            raise ValueError("inconsistent problem dimensions")
        if (d < 0).any() or (s < 0).any() or (B < 0).any() or (p < 0).any():
            raise ValueError("demands, supplies, splits and priorities must be nonnegative")
        if np.abs(B.sum(axis=1) - 1.0).max() > ABS_TOL:
            raise ValueError("split-ratio rows must sum to 1")

    @property
    def shape(self):
        return self.split.shape


@dataclass(frozen=True)
class NodeFlows:
    flows: np.ndarray  # (m, n)
    iterations: int

    @property
    def by_input(self):
        return self.flows.sum(axis=1)

    @property
    def by_output(self):
        return self.flows.sum(axis=0)


def solve_node(problem: NodeProblem, strict: bool = False) -> NodeFlows:
    """Distribute input demands over output supplies.

    Each iteration finds the output with the smallest reduction factor
    (residual supply per unit of competing priority).  Inputs whose whole
    demand fits within that factor are served in full; otherwise every
    input competing for the pivotal output is cut back proportionally to
    its priority and that output is exhausted.  Terminates in at most m
    iterations.

    Zero-priority degeneracy (every input competing for an active output
    has priority 0) is resolved by treating those inputs as equal-priority
    unless strict=True, in which case DegenerateNode is raised.
    """
    m, n = problem.shape
    d = problem.demands
    B = problem.split
    p = problem.priorities

    oriented = d[:, None] * B  # f^d_ij
    flows = np.zeros((m, n))
    residual = problem.supplies.astype(float).copy()

    active = [set(i for i in range(m) if oriented[i, j] > 0.0) for j in range(n)]
    J = [j for j in range(n) if active[j]]

    iterations = 0
    while J:
        iterations += 1
        # Reduction factor per active output; uniform weights stand in for
        # an all-zero priority set.
        best_j = -1
        best_a = 0.0
        degenerate = {}
        for j in J:
            denom = sum(p[i] * B[i, j] for i in active[j])
            if denom == 0.0:
                if strict:
                    raise DegenerateNode(f"output {j}: all competing inputs have zero priority")
                degenerate[j] = True
                denom = sum(B[i, j] for i in active[j])
            a_j = residual[j] / denom
            if best_j < 0 or a_j < best_a:
                best_j, best_a = j, a_j
        jhat, ahat = best_j, best_a
        uniform = degenerate.get(jhat, False)

        def weight(i):
            return 1.0 if uniform else p[i]

        served = [i for i in sorted(active[jhat])
                  if d[i] <= ahat * weight(i) + ABS_TOL]
        if served:
            for i in served:
                flows[i, :] = oriented[i, :]
        else:
            for i in sorted(active[jhat]):
                flows[i, :] = ahat * weight(i) * B[i, :]
            served = sorted(active[jhat])

        for j in J:
            for i in served:
                if i in active[j]:
                    residual[j] -= flows[i, j]
                    active[j].discard(i)
            if residual[j] < 0.0:
                residual[j] = 0.0
        J = [j for j in J if active[j]]

    return NodeFlows(flows=flows, iterations=iterations)


def solve_merge(fd_up: float, rd: float, fs_down: float, pf: float, pr: float):
    """Freeway merge of the upstream mainline and an on-ramp into one link.

    Returns (f_up, r).  When the supply cannot take both demands, whichever
    demand fits inside its priority share is served in full and the other
    takes the residual; if neither fits, flows are priority-proportional.
    """
    if fd_up + rd <= fs_down:
        return fd_up, rd
    if fd_up <= pf * fs_down:
        return fd_up, fs_down - fd_up
    if rd <= pr * fs_down:
        return fs_down - rd, rd
    return pf * fs_down, pr * fs_down


@dataclass(frozen=True)
class TollNodeResult:
    r: tuple[float, float]  # ramp flow into (toll, gp)
    f_up: tuple[float, float]  # upstream mainline flow into (toll, gp)
    lam: float  # realized common reduction factor
    lam_by_group: tuple[float, float]
    psi: tuple[float, float]  # potential ramp flows


def _potential_flow(alpha, rd, fs, fd_up, pf, pr):
    denom = alpha * pr + pf
    if denom > 0.0:
        share = fs * (alpha * pr) / denom
    else:
        share = fs  # both priorities zero: the ramp may claim the whole supply
    psi = share
    if fs - fd_up > psi:
        psi = fs - fd_up
    if alpha * rd < psi:
        psi = alpha * rd
    return psi


def solve_toll_node(alpha1, alpha2, rd, fd_up, fs, pf, pr) -> TollNodeResult:
    """Entrance node of a dual-lane freeway.

    alpha1 + alpha2 = 1 splits the ramp demand rd between the lane groups;
    fd_up, fs and pf are per-group pairs (toll, gp).  The realized ramp
    flows are lambda * alpha_xi * rd with a common lambda = min over groups,
    which keeps them proportional to the requested split.
    """
    if alpha1 < -ABS_TOL or alpha2 < -ABS_TOL or abs(alpha1 + alpha2 - 1.0) > 1e-9:
        raise ValueError("split ratios must be nonnegative and sum to 1")
    if rd <= 0.0:
        f1 = min(fd_up[0], fs[0])
        f2 = min(fd_up[1], fs[1])
        return TollNodeResult(
            r=(0.0, 0.0), f_up=(f1, f2), lam=1.0, lam_by_group=(1.0, 1.0), psi=(0.0, 0.0)
        )
    alphas = (alpha1, alpha2)
    psi = [0.0, 0.0]
    lam_g = [1.0, 1.0]
    for g in range(2):
        if alphas[g] == 0.0:
            lam_g[g] = 1.0
            psi[g] = 0.0
        else:
            psi[g] = _potential_flow(alphas[g], rd, fs[g], fd_up[g], pf[g], pr)
            lam_g[g] = psi[g] / (alphas[g] * rd)
    lam = min(lam_g[0], lam_g[1])
    r = (lam * alpha1 * rd, lam * alpha2 * rd)
    f_up = (min(fd_up[0], fs[0] - r[0]), min(fd_up[1], fs[1] - r[1]))
    return TollNodeResult(
        r=r, f_up=f_up, lam=lam, lam_by_group=(lam_g[0], lam_g[1]), psi=(psi[0], psi[1])
    )
