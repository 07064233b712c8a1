"""Preferred-basis solver for finite coupled quantum systems.

A bipartite model (sub-system tensor surroundings) with Hamiltonian
H = H_s (x) I + delta * H_int + I (x) H_e and a fixed unit system state psi
admits an orthonormal family of sub-system states whose induced system
states make H diagonal in the projected sense:

    <psi_sj | psi_sk> = delta_jk,     <psi_j | H | psi_k> = E_j delta_jk,

where |psi_j> is the normalized projection |psi_sj><psi_sj|psi>.  The
solver switches the interaction on in N equal increments and solves the
linearized constraint equations at each increment, taking the minimum-norm
correction whenever the linear system is rank deficient (the row-phase
freedom always leaves a null space).  A brute-force two-angle scan is
provided as an independent oracle for two-dimensional sub-systems.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np
from scipy.linalg import cho_factor as _scipy_cho_factor
from scipy.linalg import cho_solve as _cho_solve

from .numerics import hermitian_eigendecomposition

logger = logging.getLogger(__name__)


def _dposv_factor(g: np.ndarray):
    """Cholesky factor of a symmetric positive-definite matrix, or a nonzero
    info flag when the factorization breaks down."""
    try:
        factor, _ = _scipy_cho_factor(g, lower=True, check_finite=False)
        return factor, 0
    except np.linalg.LinAlgError:
        return g, 1

# States with this little projected weight are treated as unoccupied: their
# energy is pinned at zero and they are skipped in diagonality residuals.
OCCUPIED_THRESHOLD = 1e-12

# Re-orthonormalize the coefficient rows when one step increases the
# orthogonality residual by more than this multiple of ortho_tol / n_steps.
_RENORM_FACTOR = 10.0


class ContinuationError(RuntimeError):
    """The continuation finished without meeting the residual tolerances."""

    def __init__(self, message: str, solution: "PreferredBasisSolution"):
        super().__init__(message)
        self.solution = solution
        self.residual_ortho = solution.residual_ortho
        self.residual_offdiag = solution.residual_offdiag


class StepError(RuntimeError):
    """A single linearized step could not be solved reliably."""

    def __init__(self, message: str, rank: int, residual: float):
        super().__init__(message)
        self.rank = rank
        self.residual = residual


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

def _as_complex(x) -> np.ndarray:
    return np.array(x, dtype=complex)


def _check_hermitian(m: np.ndarray, name: str, rel_tol: float = 1e-12) -> None:
    scale = float(np.max(np.abs(m))) or 1.0
    if float(np.max(np.abs(m - m.conj().T))) > rel_tol * scale:
        raise ValueError(f"{name} is not Hermitian within {rel_tol} relative")


@dataclass(frozen=True)
class CoupledSystem:
    """A finite sub-system/surroundings model with a fixed system state.

    The sub-system index is the slow (outer) index of the tensor product:
    the full Hamiltonian is kron(h_s, I) + delta * h_int + kron(I, h_e).
    """

    h_s: np.ndarray
    h_e: np.ndarray
    h_int: np.ndarray
    psi: np.ndarray
    delta: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "h_s", _as_complex(self.h_s))
        object.__setattr__(self, "h_e", _as_complex(self.h_e))
        object.__setattr__(self, "h_int", _as_complex(self.h_int))
        object.__setattr__(self, "psi", _as_complex(self.psi).ravel())
        ds, de = self.h_s.shape[0], self.h_e.shape[0]
        if self.h_s.shape != (ds, ds) or self.h_e.shape != (de, de):
            raise ValueError("h_s and h_e must be square")
        if self.h_int.shape != (ds * de, ds * de):
            raise ValueError(
                f"h_int must be {(ds * de, ds * de)}, got {self.h_int.shape}")
        if self.psi.shape != (ds * de,):
            raise ValueError(f"psi must have length {ds * de}")
        _check_hermitian(self.h_s, "h_s")
        _check_hermitian(self.h_e, "h_e")
        _check_hermitian(self.h_int, "h_int")
        norm = float(np.linalg.norm(self.psi))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"psi must be unit norm, got {norm}")

    @property
    def dim_s(self) -> int:
        return self.h_s.shape[0]

    @property
    def dim_e(self) -> int:
        return self.h_e.shape[0]

    def full_hamiltonian(self) -> np.ndarray:
        eye_s = np.eye(self.dim_s)
        eye_e = np.eye(self.dim_e)
        return (np.kron(self.h_s, eye_e) + self.delta * self.h_int
                + np.kron(eye_s, self.h_e))

    def to_json_dict(self) -> dict:
        return {
            "dim_s": self.dim_s,
            "dim_e": self.dim_e,
            "h_s": _complex_to_pairs(self.h_s),
            "h_e": _complex_to_pairs(self.h_e),
            "h_int": _complex_to_pairs(self.h_int),
            "psi": _complex_to_pairs(self.psi),
            "delta": self.delta,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "CoupledSystem":
        ds, de = int(data["dim_s"]), int(data["dim_e"])
        return cls(
            h_s=_pairs_to_complex(data["h_s"], (ds, ds)),
            h_e=_pairs_to_complex(data["h_e"], (de, de)),
            h_int=_pairs_to_complex(data["h_int"], (ds * de, ds * de)),
            psi=_pairs_to_complex(data["psi"], (ds * de,)),
            delta=float(data["delta"]),
        )


def _complex_to_pairs(arr: np.ndarray):
    def pair(z):
        return [float(z.real), float(z.imag)]
    if arr.ndim == 1:
        return [pair(z) for z in arr]
    return [[pair(z) for z in row] for row in arr]


def _pairs_to_complex(data, shape) -> np.ndarray:
    flat = np.asarray(data, dtype=float)
    if flat.shape != shape + (2,):
        raise ValueError(f"expected complex data of shape {shape}, got {flat.shape[:-1]}")
    return flat[..., 0] + 1j * flat[..., 1]


@dataclass(frozen=True)
class SubsystemBasis:
    """Eigenbasis of the isolated sub-system plus its overlap with psi.

    ``env_components`` row l is the surroundings vector <phi_sl|psi>;
    ``env_norms`` holds the squared norms C_l, which resolve the identity
    against a unit psi (their sum is 1).
    """

    energies: np.ndarray
    vectors: np.ndarray          # columns are the eigenvectors
    env_components: np.ndarray   # (dim_s, dim_e)
    env_norms: np.ndarray


def diagonalize_subsystem(system: CoupledSystem) -> SubsystemBasis:
    """Diagonalize h_s and project psi on each eigenvector."""
    energies, vectors = hermitian_eigendecomposition(system.h_s)
    psi_mat = system.psi.reshape(system.dim_s, system.dim_e)
    env = vectors.conj().T @ psi_mat
    norms = np.real(np.sum(env.conj() * env, axis=1))
    return SubsystemBasis(energies=energies, vectors=vectors,
                          env_components=env, env_norms=norms)


@dataclass(frozen=True)
class HTensor:
    """Projected Hamiltonian tensor h[l, m, p, q].

    h[l, m, p, q] = <psi|phi_sl> <phi_sm|H|phi_sq> <phi_sp|psi> where the
    middle factor acts on the surroundings.  Hermiticity of H makes
    h[l, m, p, q] equal conj(h[p, q, l, m]).
    """

    entries: np.ndarray
    step_fraction: float


def _env_operator(op: np.ndarray, vectors: np.ndarray, ds: int, de: int) -> np.ndarray:
    """<phi_m| op |phi_q> as surroundings operators, shape (ds, ds, de, de)."""
    op4 = op.reshape(ds, de, ds, de)
    return np.einsum("sm,setf,tq->mqef", vectors.conj(), op4, vectors, optimize=True)


def _h_tensor_parts(system: CoupledSystem, basis: SubsystemBasis):
    """Split the projected tensor into the static part (h_s + h_e) and the
    full-interaction part (delta * h_int)."""
    ds, de = system.dim_s, system.dim_e
    env = basis.env_components
    g0 = env.conj() @ env.T
    ge = env.conj() @ system.h_e @ env.T
    static = np.zeros((ds, ds, ds, ds), dtype=complex)
    idx = np.arange(ds)
    # delta_mq (E_m g0[l, p] + ge[l, p])
    for m in idx:
        static[:, m, :, m] = basis.energies[m] * g0 + ge
    w_int = _env_operator(system.delta * system.h_int, basis.vectors, ds, de)
    interaction = np.einsum("le,mqef,pf->lmpq", env.conj(), w_int, env,
                            optimize=True)
    return static, interaction


def build_h_tensor(system: CoupledSystem, basis: SubsystemBasis,
                   n: int, n_steps: int) -> HTensor:
    """Projected tensor for the partially switched-on Hamiltonian
    H_s + (n/N) delta H_int + H_e."""
    if not 0 <= n <= n_steps:
        raise ValueError(f"step index {n} outside [0, {n_steps}]")
    static, interaction = _h_tensor_parts(system, basis)
    frac = n / n_steps
    return HTensor(entries=static + frac * interaction, step_fraction=frac)


@dataclass
class PreferredBasisSolution:
    """Coefficient rows, energies, and observable eigenvalues of a solve."""

    a: np.ndarray
    e: np.ndarray
    o_s: np.ndarray
    steps_used: int
    residual_ortho: float
    residual_offdiag: float
    converged: bool = False

    def to_json_dict(self) -> dict:
        return {
            "a": _complex_to_pairs(self.a),
            "e": [float(x) for x in self.e],
            "o_s": [float(x) for x in self.o_s],
            "steps_used": int(self.steps_used),
            "residual_ortho": float(self.residual_ortho),
            "residual_offdiag": float(self.residual_offdiag),
            "converged": bool(self.converged),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "PreferredBasisSolution":
        e = np.asarray(data["e"], dtype=float)
        ds = e.size
        return cls(
            a=_pairs_to_complex(data["a"], (ds, ds)),
            e=e,
            o_s=np.asarray(data["o_s"], dtype=float),
            steps_used=int(data["steps_used"]),
            residual_ortho=float(data["residual_ortho"]),
            residual_offdiag=float(data["residual_offdiag"]),
            converged=bool(data["converged"]),
        )


@dataclass(frozen=True)
class ContinuationConfig:
    n_steps: int = 1000
    ortho_tol: float = 1e-8
    offdiag_tol: float = 1e-7
    degenerate_rank_tol: float = 1e-9

    def __post_init__(self) -> None:
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        if min(self.ortho_tol, self.offdiag_tol, self.degenerate_rank_tol) <= 0:
            raise ValueError("tolerances must be positive")


def init_solution(system: CoupledSystem, basis: SubsystemBasis) -> PreferredBasisSolution:
    """Starting point of the continuation: identity coefficients and the
    zero-interaction energies h[j,j,j,j] / C_j (zero for unoccupied rows)."""
    ds = system.dim_s
    static, _ = _h_tensor_parts(system, basis)
    e = np.zeros(ds)
    occupied = basis.env_norms > OCCUPIED_THRESHOLD
    diag = np.real(np.einsum("jjjj->j", static))
    e[occupied] = diag[occupied] / basis.env_norms[occupied]
    return PreferredBasisSolution(
        a=np.eye(ds, dtype=complex), e=e, o_s=np.zeros(ds),
        steps_used=0, residual_ortho=0.0, residual_offdiag=0.0)


# ---------------------------------------------------------------------------
# Linearized continuation step
# ---------------------------------------------------------------------------

def _constraint_indices(ds: int):
    """Precomputed (j, k) index lists for the constraint rows."""
    j9, k9 = zip(*((j, k) for j in range(ds) for k in range(j, ds)))
    pairs = [(j, k) for j in range(ds) for k in range(j + 1, ds)] or []
    if pairs:
        j10, k10 = zip(*pairs)
    else:
        j10, k10 = (), ()
    return (np.array(j9), np.array(k9), np.array(j10, dtype=int),
            np.array(k10, dtype=int))


_INDEX_CACHE: dict[int, tuple] = {}


def _indices(ds: int):
    if ds not in _INDEX_CACHE:
        _INDEX_CACHE[ds] = _constraint_indices(ds)
    return _INDEX_CACHE[ds]


def _contractions(a: np.ndarray, h: np.ndarray):
    """Value and coefficient tensors of the projected-energy form.

    F[j, k] = sum a_jl a*_jm h_lmpq a*_kp a_kq, plus the four directional
    coefficient tensors T1..T4 with T1[j, k, s] multiplying da_js,
    T2 multiplying conj(da_js), T3 da_ks, and T4 conj(da_ks).
    """
    ds = a.shape[0]
    b = a.conj()
    hmat = h.reshape(ds * ds, ds * ds)
    z = (b[:, :, None] * a[:, None, :]).reshape(ds, ds * ds)    # z_k[(p,q)]
    zz = (a[:, :, None] * b[:, None, :]).reshape(ds, ds * ds)   # zz_j[(l,m)]
    y = hmat @ z.T                                              # [(l,m), k]
    v = zz @ hmat                                               # [j, (p,q)]
    f = zz @ y                                                  # [j, k]
    y3 = y.reshape(ds, ds, ds)                                  # [l, m, k]
    v3 = v.reshape(ds, ds, ds)                                  # [j, p, q]
    t1 = (b @ y3.transpose(1, 0, 2).reshape(ds, ds * ds)).reshape(
        ds, ds, ds).transpose(0, 2, 1)                          # [j, k, s]
    t2 = (a @ y3.reshape(ds, ds * ds)).reshape(ds, ds, ds).transpose(0, 2, 1)
    t3 = np.matmul(b, v3)                                       # [j, k, s]
    t4 = np.matmul(v3, a.T).transpose(0, 2, 1)                  # [j, k, s]
    return f, t1, t2, t3, t4


class _StepWorkspace:
    """Preallocated buffers and index maps for one sub-system dimension."""

    def __init__(self, ds: int):
        self.ds = ds
        j9, k9, j10, k10 = _constraint_indices(ds)
        self.j9, self.k9, self.j10, self.k10 = j9, k9, j10, k10
        self.nc9, self.nc10 = j9.size, j10.size
        nc = self.nc9 + self.nc10
        self.nc = nc
        self.rows9 = np.arange(self.nc9)
        self.rows10 = self.nc9 + np.arange(self.nc10)
        self.keep_im = np.concatenate(
            [j9 != k9, np.ones(self.nc10, dtype=bool)])
        self.n_rows = nc + int(np.count_nonzero(self.keep_im))
        self.p = np.zeros((nc, ds, ds), dtype=complex)
        self.q = np.zeros((nc, ds, ds), dtype=complex)
        self.rhs = np.empty(nc, dtype=complex)
        self.m = np.empty((self.n_rows, 2 * ds * ds))
        self.r = np.empty(self.n_rows)
        self.eye = np.eye(ds)
        self.diag_idx = np.arange(ds)


_WORKSPACES: dict[int, _StepWorkspace] = {}


def _workspace(ds: int) -> _StepWorkspace:
    if ds not in _WORKSPACES:
        _WORKSPACES[ds] = _StepWorkspace(ds)
    return _WORKSPACES[ds]


def _linear_step(a, e, h, c_weights, cfg, n_steps, ws: _StepWorkspace | None = None):
    """One linearized correction (da, de) at the current interaction level."""
    ds = a.shape[0]
    if ws is None:
        ws = _workspace(ds)
    b = a.conj()

    f, t1, t2, t3, t4 = _contractions(a, h)

    overlap = b @ a.T          # [j, k] = sum_l a*_jl a_kl
    rhs9 = ws.eye - overlap
    ortho_entry = float(np.abs(rhs9).max())

    p, q, rhs = ws.p, ws.q, ws.rhs
    p[ws.rows9, ws.k9, :] = b[ws.j9, :]
    q[ws.rows9, ws.j9, :] = a[ws.k9, :]
    rhs[:ws.nc9] = rhs9[ws.j9, ws.k9]
    if ws.nc10:
        p[ws.rows10, ws.j10, :] = t1[ws.j10, ws.k10, :]
        p[ws.rows10, ws.k10, :] = t3[ws.j10, ws.k10, :]
        q[ws.rows10, ws.j10, :] = t2[ws.j10, ws.k10, :]
        q[ws.rows10, ws.k10, :] = t4[ws.j10, ws.k10, :]
        rhs[ws.nc9:] = -f[ws.j10, ws.k10]

    n2 = ds * ds
    pf = p.reshape(ws.nc, n2)
    qf = q.reshape(ws.nc, n2)
    plus = pf + qf
    minus = qf - pf
    m, r = ws.m, ws.r
    m[:ws.nc, :n2] = plus.real
    m[:ws.nc, n2:] = minus.imag
    m[ws.nc:, :n2] = plus.imag[ws.keep_im]
    m[ws.nc:, n2:] = -minus.real[ws.keep_im]
    r[:ws.nc] = rhs.real
    r[ws.nc:] = rhs.imag[ws.keep_im]

    x, rank = _min_norm_solve(m, r, cfg.degenerate_rank_tol)
    da = (x[:n2] + 1j * x[n2:]).reshape(ds, ds)

    # Energy increments from the diagonal rows; unoccupied rows stay at 0.
    c_j = (np.abs(a) ** 2) @ c_weights
    occupied = c_j > OCCUPIED_THRESHOLD
    dj = ws.diag_idx
    t13 = t1[dj, dj, :] + t3[dj, dj, :]
    t24 = t2[dj, dj, :] + t4[dj, dj, :]
    df_diag = (t13 * da + t24 * da.conj()).sum(axis=1).real
    dc = 2.0 * (b * da * c_weights[None, :]).sum(axis=1).real
    f_diag = np.diagonal(f).real
    e_new = np.zeros(ds)
    e_new[occupied] = e[occupied] + (
        f_diag[occupied] + df_diag[occupied]
        - c_j[occupied] * e[occupied] - dc[occupied] * e[occupied]
    ) / c_j[occupied]

    a_new = a + da
    return a_new, e_new, rank, ortho_entry


def _maybe_renormalize(a, ortho_now, ortho_prev, cfg, n_steps):
    """Project the rows back onto the unitary manifold when one step
    increased the orthogonality residual beyond the per-step budget."""
    if ortho_now - ortho_prev > _RENORM_FACTOR * cfg.ortho_tol / n_steps:
        u, _, vh = np.linalg.svd(a)
        logger.debug("re-orthonormalized coefficient rows (residual %.3e)",
                     ortho_now)
        return u @ vh, True
    return a, False


def _min_norm_solve(m: np.ndarray, r: np.ndarray, rank_tol: float):
    """Minimum-norm solution of the (possibly rank-deficient) row system.

    Fast path: normal equations on the rows, solved by Cholesky; for a
    full-row-rank system x = m^T (m m^T)^{-1} r is exactly the minimum-norm
    solution.  Dependent constraints (detected through the Cholesky pivots
    at ``rank_tol``) fall back to a rank-revealing least-squares solve.
    """
    rows = m.shape[0]
    g = m @ m.T
    factor, info = _dposv_factor(g)
    if info == 0:
        pivots = np.abs(np.diagonal(factor))
        if pivots.min() >= rank_tol * pivots.max():
            y = _cho_solve((factor, True), r, check_finite=False)
            return m.T @ y, rows
    # Dependent constraints: rank-revealing minimum-norm solve.
    x, _, rank, _ = np.linalg.lstsq(m, r, rcond=rank_tol)
    residual = float(np.abs(m @ x - r).max())
    scale = max(float(np.abs(r).max()), 1e-300)
    if residual > 1e-6 * max(1.0, scale):
        raise StepError(
            f"linearized step inconsistent (rank {rank}, residual {residual:.3e})",
            rank=int(rank), residual=residual)
    return x, int(rank)


def continuation_step(system: CoupledSystem, basis: SubsystemBasis,
                      state: PreferredBasisSolution, n: int, n_steps: int,
                      cfg: ContinuationConfig,
                      _parts=None) -> PreferredBasisSolution:
    """Advance the solution from interaction level (n-1)/N to n/N."""
    if _parts is None:
        _parts = _h_tensor_parts(system, basis)
    static, interaction = _parts
    h = static + (n / n_steps) * interaction
    a_new, e_new, _, ortho_entry = _linear_step(state.a, state.e, h,
                                                basis.env_norms, cfg, n_steps)
    ortho = float(np.abs(a_new.conj() @ a_new.T - np.eye(system.dim_s)).max())
    a_new, _ = _maybe_renormalize(a_new, ortho, ortho_entry, cfg, n_steps)
    f, *_ = _contractions(a_new, h)
    offdiag = _relative_offdiag(f, a_new, basis, system, level_scale=None)
    return PreferredBasisSolution(
        a=a_new, e=e_new, o_s=np.zeros(system.dim_s), steps_used=n,
        residual_ortho=ortho, residual_offdiag=offdiag)


def _relative_offdiag(f, a, basis, system, level_scale):
    """Largest normalized off-diagonal projected element, relative to ||H||."""
    ds = a.shape[0]
    w = a.conj() @ basis.env_components
    norms = np.sqrt(np.real(np.sum(w.conj() * w, axis=1)))
    occ = norms > np.sqrt(OCCUPIED_THRESHOLD)
    if level_scale is None:
        level_scale = float(np.linalg.norm(system.full_hamiltonian(), 2))
    worst = 0.0
    for j in range(ds):
        if not occ[j]:
            continue
        for k in range(j + 1, ds):
            if not occ[k]:
                continue
            worst = max(worst, abs(f[j, k]) / (norms[j] * norms[k]))
    return worst / level_scale if level_scale > 0 else worst


def phase_gauge_rows(a: np.ndarray) -> np.ndarray:
    """Fix row phases so each row's largest-magnitude entry is real positive."""
    out = a.copy()
    for j in range(out.shape[0]):
        idx = int(np.argmax(np.abs(out[j])))
        pivot = out[j, idx]
        if np.abs(pivot) > 0:
            out[j] *= np.conj(pivot) / np.abs(pivot)
    return out


def solve_preferred_basis(system: CoupledSystem,
                          cfg: ContinuationConfig) -> PreferredBasisSolution:
    """Run the full continuation and finalize energies and residuals.

    The interaction is added in ``cfg.n_steps`` equal increments; each step
    solves the linearized orthogonality/diagonality constraints for the
    coefficient increments.  On success the returned solution satisfies
    both residual tolerances; otherwise :class:`ContinuationError` is
    raised with the non-converged solution attached so the caller can retry
    with more steps.
    """
    basis = diagonalize_subsystem(system)
    parts = _h_tensor_parts(system, basis)
    static, interaction = parts
    state = init_solution(system, basis)
    a, e = state.a, state.e
    n_steps = cfg.n_steps
    ws = _workspace(system.dim_s)
    c_weights = basis.env_norms
    renorm_count = 0
    ortho_prev = 0.0
    for n in range(1, n_steps + 1):
        h = static + (n / n_steps) * interaction
        a, e, _, ortho_entry = _linear_step(a, e, h, c_weights, cfg, n_steps, ws)
        a, renormed = _maybe_renormalize(a, ortho_entry, ortho_prev, cfg, n_steps)
        ortho_prev = ortho_entry
        renorm_count += renormed
    if renorm_count:
        logger.info("continuation applied %d row re-orthonormalizations", renorm_count)

    a = phase_gauge_rows(a)
    sol = _finalize(system, basis, a, static + interaction, n_steps,
                    ortho_tol=cfg.ortho_tol, offdiag_tol=cfg.offdiag_tol)
    if not sol.converged:
        raise ContinuationError(
            f"residuals above tolerance after {n_steps} steps: "
            f"ortho={sol.residual_ortho:.3e} (tol {cfg.ortho_tol}), "
            f"offdiag={sol.residual_offdiag:.3e} (tol {cfg.offdiag_tol})",
            solution=sol)
    return sol


def _finalize(system, basis, a, h_full, steps_used,
              ortho_tol=None, offdiag_tol=None) -> PreferredBasisSolution:
    """Exact energies, observable eigenvalues, and residuals for fixed rows."""
    ds = system.dim_s
    f, *_ = _contractions(a, h_full)
    w = a.conj() @ basis.env_components
    norms2 = np.real(np.sum(w.conj() * w, axis=1))
    occ = norms2 > OCCUPIED_THRESHOLD
    e = np.zeros(ds)
    e[occ] = np.real(np.diagonal(f))[occ] / norms2[occ]
    env_diag = np.real(np.sum(w.conj() * (w @ system.h_e.T), axis=1))
    o_s = np.zeros(ds)
    o_s[occ] = e[occ] - env_diag[occ] / norms2[occ]

    h_norm = float(np.linalg.norm(system.full_hamiltonian(), 2))
    ortho = float(np.max(np.abs(a.conj().T @ a - np.eye(ds))))
    offdiag = 0.0
    sqrt_norms = np.sqrt(norms2)
    for j in range(ds):
        if not occ[j]:
            continue
        for k in range(j + 1, ds):
            if occ[k]:
                offdiag = max(offdiag, abs(f[j, k]) / (sqrt_norms[j] * sqrt_norms[k]))
    offdiag_rel = offdiag / h_norm if h_norm > 0 else offdiag

    sol = PreferredBasisSolution(
        a=a, e=e, o_s=o_s, steps_used=steps_used,
        residual_ortho=ortho, residual_offdiag=offdiag_rel)
    # Convergence is judged against the defaults unless a caller overrides.
    cfg_ortho = ortho_tol if ortho_tol is not None else ContinuationConfig().ortho_tol
    cfg_off = offdiag_tol if offdiag_tol is not None else ContinuationConfig().offdiag_tol
    sol.converged = ortho <= cfg_ortho and offdiag_rel <= cfg_off
    return sol


def solution_residuals(system: CoupledSystem, basis: SubsystemBasis,
                       sol: PreferredBasisSolution) -> tuple[float, float]:
    """Recompute both residuals of a solution from scratch (pure diagnostic)."""
    if sol.a.shape != (system.dim_s, system.dim_s):
        raise ValueError("solution does not match the system dimensions")
    static, interaction = _h_tensor_parts(system, basis)
    f, *_ = _contractions(sol.a, static + interaction)
    ortho = float(np.max(np.abs(sol.a.conj().T @ sol.a - np.eye(system.dim_s))))
    offdiag = _relative_offdiag(f, sol.a, basis, system, level_scale=None)
    return ortho, offdiag


def observable_spectrum(system: CoupledSystem, basis: SubsystemBasis,
                        sol: PreferredBasisSolution):
    """Observable eigenvalues O_j = E_j - <psi_j|I (x) H_e|psi_j> and the
    effective sub-system interaction matrix in the solved basis."""
    if not sol.converged:
        raise ValueError("observable spectrum requires a converged solution")
    a = sol.a
    ds = system.dim_s
    w = a.conj() @ basis.env_components
    norms2 = np.real(np.sum(w.conj() * w, axis=1))
    occ = norms2 > OCCUPIED_THRESHOLD
    env_diag = np.real(np.sum(w.conj() * (w @ system.h_e.T), axis=1))
    o_s = np.zeros(ds)
    o_s[occ] = sol.e[occ] - env_diag[occ] / norms2[occ]

    _, interaction = _h_tensor_parts(system, basis)
    f_int, *_ = _contractions(a, interaction)
    scale = np.where(occ, np.sqrt(np.where(occ, norms2, 1.0)), 1.0)
    m_eff = f_int / np.outer(scale, scale)
    m_eff[~occ, :] = 0.0
    m_eff[:, ~occ] = 0.0
    return o_s, m_eff


@dataclass(frozen=True)
class FirstOrderShifts:
    """Leading-order observable and energy shifts for a near-product state."""

    o_shift: np.ndarray
    e_first_order: np.ndarray
    entangled: bool
    dominant_weight: float


def first_order_shifts(system: CoupledSystem, basis: SubsystemBasis,
                       product_tol: float = 1e-9) -> FirstOrderShifts:
    """Leading-order shifts computed from the dominant product component.

    For psi = phi_s (x) phi_e the observable shift of state j is
    <phi_e|<phi_sj| delta h_int |phi_sj>|phi_e> and the first-order energy
    adds the isolated energies on top.  Entangled states are handled with
    the dominant Schmidt component and flagged.
    """
    ds, de = system.dim_s, system.dim_e
    psi_mat = system.psi.reshape(ds, de)
    _, s, vh = np.linalg.svd(psi_mat)
    weight = float(s[0] ** 2)
    entangled = weight < 1.0 - product_tol
    if entangled:
        logger.warning("state is entangled (dominant weight %.6f); "
                       "first-order shifts use the leading product component",
                       weight)
    phi_e = vh[0]

    h4 = (system.delta * system.h_int).reshape(ds, de, ds, de)
    w_diag = np.einsum("sj,setf,tj->jef", basis.vectors.conj(), h4,
                       basis.vectors, optimize=True)
    o_shift = np.real(np.einsum("e,jef,f->j", phi_e.conj(), w_diag, phi_e,
                                optimize=True))
    env_energy = float(np.real(phi_e.conj() @ system.h_e @ phi_e))
    e_first = basis.energies + o_shift + env_energy
    return FirstOrderShifts(o_shift=o_shift, e_first_order=e_first,
                            entangled=entangled, dominant_weight=weight)


# ---------------------------------------------------------------------------
# Brute-force oracle (dim_s = 2)
# ---------------------------------------------------------------------------

def _basis_rows(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Orthonormal row pairs parametrized by two angles (phases fixed).

    Row 1 = (cos t, e^{i p} sin t), row 2 = (-e^{-i p} sin t, cos t);
    stacked shape (..., 2, 2).
    """
    ct, st = np.cos(theta), np.sin(theta)
    ep = np.exp(1j * phi)
    a = np.empty(np.broadcast(theta, phi).shape + (2, 2), dtype=complex)
    a[..., 0, 0] = ct
    a[..., 0, 1] = ep * st
    a[..., 1, 0] = -st / ep
    a[..., 1, 1] = ct
    return a


def brute_force_preferred_basis(system: CoupledSystem,
                                grid: tuple[int, int] = (96, 192),
                                start: tuple[float, float] | None = None
                                ) -> PreferredBasisSolution:
    """Two-angle scan plus Newton refinement for dim_s = 2 sub-systems.

    Scans the full family of orthonormal bases, picks the candidate with the
    smallest normalized off-diagonal element of the projected Hamiltonian,
    and polishes it with a damped 2-D Newton iteration on the complex
    off-diagonal value.  Serves as an independent oracle for the
    continuation solver; rejects sub-systems of any other dimension.
    """
    if system.dim_s != 2:
        raise ValueError("brute-force scan requires dim_s = 2")
    basis = diagonalize_subsystem(system)
    static, interaction = _h_tensor_parts(system, basis)
    h = static + interaction
    env = basis.env_components

    def offdiag_value(theta: float, phi: float) -> complex:
        a = _basis_rows(np.asarray(theta), np.asarray(phi))
        f, *_ = _contractions(a, h)
        return f[0, 1]

    if start is None:
        nt, np_ = grid
        thetas = np.linspace(0.0, np.pi / 2, nt)
        phis = np.linspace(0.0, 2 * np.pi, np_, endpoint=False)
        tt, pp = np.meshgrid(thetas, phis, indexing="ij")
        aa = _basis_rows(tt, pp)
        w = aa.conj() @ env                       # (..., 2, de)
        f01 = np.einsum("...l,...m,lmpq,...p,...q->...",
                        aa[..., 0, :], aa[..., 0, :].conj(), h,
                        aa[..., 1, :].conj(), aa[..., 1, :], optimize=True)
        norms = np.sqrt(np.real(np.sum(w.conj() * w, axis=-1)))
        denom = norms[..., 0] * norms[..., 1]
        score = np.abs(f01) / np.where(denom > 1e-12, denom, np.inf)
        it, ip = np.unravel_index(int(np.argmin(score)), score.shape)
        theta, phi = float(tt[it, ip]), float(pp[it, ip])
    else:
        theta, phi = start

    # Newton iteration on (Re, Im) of the off-diagonal element.
    step = 1e-7
    for _ in range(60):
        f0 = offdiag_value(theta, phi)
        if abs(f0) < 1e-16 * max(1.0, float(np.max(np.abs(h)))):
            break
        d_t = (offdiag_value(theta + step, phi) - f0) / step
        d_p = (offdiag_value(theta, phi + step) - f0) / step
        jac = np.array([[d_t.real, d_p.real], [d_t.imag, d_p.imag]])
        try:
            delta = np.linalg.solve(jac, np.array([f0.real, f0.imag]))
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(delta)):
            break
        limit = 0.2
        norm = float(np.max(np.abs(delta)))
        if norm > limit:
            delta *= limit / norm
        theta -= delta[0]
        phi -= delta[1]

    a = phase_gauge_rows(_basis_rows(np.asarray(theta), np.asarray(phi)))
    return _finalize(system, basis, a, h, steps_used=0)


def align_solution(sol: PreferredBasisSolution,
                   reference: PreferredBasisSolution) -> PreferredBasisSolution:
    """Permute and re-phase solution rows to best match a reference.

    The row order of a solved basis is a labeling convention; this picks
    the permutation maximizing total row overlap with the reference and then
    phases each row to minimize its distance to the reference row.
    """
    a, ref = sol.a, reference.a
    ds = a.shape[0]
    overlaps = np.abs(ref.conj() @ a.T)          # [ref_row, row]
    best_perm, best_score = None, -1.0
    for perm in permutations(range(ds)):
        score = sum(overlaps[i, perm[i]] for i in range(ds))
        if score > best_score:
            best_score, best_perm = score, perm
    perm = list(best_perm)
    a2 = a[perm].copy()
    e2 = sol.e[perm].copy()
    o2 = sol.o_s[perm].copy()
    for i in range(ds):
        inner = np.sum(a2[i] * ref[i].conj())
        if np.abs(inner) > 0:
            a2[i] *= np.conj(inner) / np.abs(inner)
    return PreferredBasisSolution(
        a=a2, e=e2, o_s=o2, steps_used=sol.steps_used,
        residual_ortho=sol.residual_ortho,
        residual_offdiag=sol.residual_offdiag, converged=sol.converged)
