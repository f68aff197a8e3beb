"""Calculus for real-valued functions of complex matrices.

Real-valued maps of complex variables are nowhere holomorphic, so the
usual derivative does not exist.  Treating z and its conjugate as
independent coordinates restores a workable calculus: gradients,
Jacobians, and Hessians come in (d/dz, d/dz*) pairs, definiteness is
tested on structured stacked vectors vec([Y, Y*]), and the inner
product Re tr(A^H B) plays the role of the Euclidean one.

Everything here is matrix-shaped and column-major: vec() stacks
columns, and the commutation matrix converts between vec(Z) and
vec(Z^T) orderings inside Kronecker identities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CONJUGACY_TOL = 1e-10


def _vec(Z) -> np.ndarray:
    return np.asarray(Z).reshape(-1, order="F")


def inner_product(A, B) -> float:
    """Re tr(A^H B); induces the Frobenius norm."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    return float(np.real(np.sum(np.conj(A) * B)))


@dataclass
class WirtingerPair:
    """Formal derivatives with respect to z and z*, same shape.

    For real-valued scalar functions the two are conjugates of each
    other; construction does not enforce that (matrix-valued maps
    break it), consistency checks live with the callers.
    """

    d_z: np.ndarray
    d_zstar: np.ndarray

    def __post_init__(self):
        self.d_z = np.asarray(self.d_z, dtype=complex)
        self.d_zstar = np.asarray(self.d_zstar, dtype=complex)
        if self.d_z.shape != self.d_zstar.shape:
            raise ValueError("derivative pair shapes differ")


def numeric_wirtinger(f, Z, h: float = 1e-6) -> WirtingerPair:
    """Central-difference derivative pair of a scalar function.

    Perturbs the real and imaginary part of every entry separately;
    d/dz = (d/dx - j d/dy)/2 and d/dz* = (d/dx + j d/dy)/2.  The step
    is relative to the entry magnitude.
    """
    Z = np.asarray(Z, dtype=complex)
    dx = np.zeros(Z.shape, dtype=complex)
    dy = np.zeros(Z.shape, dtype=complex)
    it = np.nditer(np.zeros(Z.shape), flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        step = h * max(1.0, abs(Z[idx]))
        for unit, out in ((1.0, dx), (1.0j, dy)):
            up = Z.copy()
            dn = Z.copy()
            up[idx] += step * unit
            dn[idx] -= step * unit
            val = (f(up) - f(dn)) / (2.0 * step)
            if not np.isfinite(val):
                raise ValueError(f"oracle returned a non-finite value "
                                 f"near index {idx}")
            out[idx] = val
    return WirtingerPair(d_z=0.5 * (dx - 1.0j * dy),
                         d_zstar=0.5 * (dx + 1.0j * dy))


def logdet_cograd(H, R_n, Z) -> np.ndarray:
    """Conjugate gradient of the log-det rate term at Z.

    Closed form H^H (R_n + H Z^H H^H)^{-1} H; the argument matrix must
    be nonsingular (it always is for Hermitian PSD Z and R_n > 0).
    """
    H = np.asarray(H, dtype=complex)
    R_n = np.asarray(R_n, dtype=complex)
    Z = np.asarray(Z, dtype=complex)
    total = R_n + H @ Z.conj().T @ H.conj().T
    try:
        inv = np.linalg.inv(total)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance argument is singular") from exc
    return H.conj().T @ inv @ H


def commutation_matrix(n: int, m: int) -> np.ndarray:
    """Permutation K with vec(Z^T) = K vec(Z) for n x m matrices Z."""
    if n < 1 or m < 1:
        raise ValueError("dimensions must be positive")
    K = np.zeros((n * m, n * m))
    for i in range(n):
        for j in range(m):
            # column-major: Z[i, j] sits at i + j*n, Z^T[j, i] at j + i*m
            K[j + i * m, i + j * n] = 1.0
    return K


@dataclass
class AugmentedJacobian:
    """Doubled-coordinate Jacobian, stored by its two top blocks.

    a = D_Z F and b = D_{Z*} F; the bottom row is determined by
    conjugacy, so matrix() assembles  1/2 [[a, b], [b*, a*]].  Passing
    the bottom blocks explicitly turns on a consistency check.
    """

    a: np.ndarray
    b: np.ndarray
    a_conj: np.ndarray | None = None
    b_conj: np.ndarray | None = None

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=complex)
        self.b = np.asarray(self.b, dtype=complex)
        if self.a.shape != self.b.shape or self.a.ndim != 2:
            raise ValueError("blocks must be two matching matrices")
        if self.a.shape[0] != self.a.shape[1]:
            raise ValueError("blocks must be square")
        for name, given, ref in (("D_Z F*", self.b_conj, self.b),
                                 ("D_Z* F*", self.a_conj, self.a)):
            if given is None:
                continue
            given = np.asarray(given, dtype=complex)
            if not np.allclose(given, np.conj(ref), atol=CONJUGACY_TOL,
                               rtol=0.0):
                raise ValueError(f"{name} breaks block conjugacy beyond "
                                 f"{CONJUGACY_TOL}")

    @property
    def dim(self) -> int:
        return 2 * self.a.shape[0]

    def matrix(self) -> np.ndarray:
        top = np.hstack([self.a, self.b])
        bot = np.hstack([np.conj(self.b), np.conj(self.a)])
        return 0.5 * np.vstack([top, bot])

    def quadratic_form(self, Y) -> complex:
        """vec([Y, Y*])^H J vec([Y, Y*]); real on structured vectors."""
        v = np.concatenate([_vec(Y), np.conj(_vec(Y))])
        return complex(np.conj(v) @ self.matrix() @ v)


def augmented_jacobian_numeric(F, Z, h: float = 1e-6) -> AugmentedJacobian:
    """Finite-difference augmented Jacobian of a matrix-valued map.

    Columns follow vec(Z) order; both derivative blocks come from the
    same real/imaginary perturbations, so the conjugate blocks are
    exact conjugates by construction.
    """
    Z = np.asarray(Z, dtype=complex)
    f0 = np.asarray(F(Z), dtype=complex)
    nm = Z.size
    out_dim = f0.size
    if out_dim != nm:
        raise ValueError("map must preserve total dimension for a "
                         "square augmented Jacobian")
    dR = np.zeros((out_dim, nm), dtype=complex)
    dI = np.zeros((out_dim, nm), dtype=complex)
    cols = [(i, j) for j in range(Z.shape[1]) for i in range(Z.shape[0])]
    for col, idx in enumerate(cols):
        step = h * max(1.0, abs(Z[idx]))
        for unit, out in ((1.0, dR), (1.0j, dI)):
            up = Z.copy()
            dn = Z.copy()
            up[idx] += step * unit
            dn[idx] -= step * unit
            diff = (np.asarray(F(up), dtype=complex)
                    - np.asarray(F(dn), dtype=complex)) / (2.0 * step)
            if not np.all(np.isfinite(diff)):
                raise ValueError("oracle returned non-finite values")
            out[:, col] = _vec(diff)
    a = 0.5 * (dR - 1.0j * dI)
    b = 0.5 * (dR + 1.0j * dI)
    return AugmentedJacobian(a=a, b=b)


def augmented_hessian_logdet(H, R_n, Z) -> AugmentedJacobian:
    """Closed-form augmented Hessian of the log-det term.

    The diagonal blocks vanish identically; the off-diagonal block is
    -(G^T kron G) K with G the conjugate gradient at Z and K the
    commutation matrix.
    """
    G = logdet_cograd(H, R_n, Z)
    n = G.shape[0]
    if G.shape[0] != G.shape[1]:
        raise ValueError("augmented Hessian needs a square gradient "
                         "block (square Z)")
    K = commutation_matrix(n, n)
    b = -np.kron(G.T, G) @ K
    return AugmentedJacobian(a=np.zeros_like(b), b=b)


@dataclass
class SubspaceSampler:
    """Draws directions inside the affine-hull subspace of a feasible set.

    kind 'hermitian' spans the Hermitian matrices (the hull of any
    PSD-cone constraint set), 'full' spans everything, 'custom' takes
    an explicit real-linear basis.  Each basis is also the hook for the
    deterministic eigenvalue mode of is_augmented_psd.
    """

    kind: str = "hermitian"
    n: int | None = None
    basis: list | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("hermitian", "full", "custom"):
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if self.kind == "custom":
            if not self.basis:
                raise ValueError("custom sampler needs a basis")
            self.basis = [np.asarray(B, dtype=complex) for B in self.basis]
            shapes = {B.shape for B in self.basis}
            if len(shapes) != 1:
                raise ValueError("basis shapes differ")
        elif self.n is None:
            raise ValueError("square sampler kinds need n")

    def basis_matrices(self) -> list:
        """Real-linear basis of the subspace."""
        if self.kind == "custom":
            return list(self.basis)
        n = int(self.n)
        out = []
        if self.kind == "hermitian":
            for i in range(n):
                E = np.zeros((n, n), dtype=complex)
                E[i, i] = 1.0
                out.append(E)
            r = 1.0 / np.sqrt(2.0)
            for i in range(n):
                for j in range(i + 1, n):
                    E = np.zeros((n, n), dtype=complex)
                    E[i, j] = r
                    E[j, i] = r
                    out.append(E)
                    E = np.zeros((n, n), dtype=complex)
                    E[i, j] = 1.0j * r
                    E[j, i] = -1.0j * r
                    out.append(E)
        else:
            for i in range(n):
                for j in range(n):
                    E = np.zeros((n, n), dtype=complex)
                    E[i, j] = 1.0
                    out.append(E)
                    out.append(1.0j * E)
        return out

    def draw(self, count: int) -> list:
        rng = np.random.default_rng(self.seed)
        basis = self.basis_matrices()
        out = []
        for _ in range(count):
            coef = rng.standard_normal(len(basis))
            Y = sum(c * B for c, B in zip(coef, basis))
            out.append(Y)
        return out


def is_augmented_psd(aj: AugmentedJacobian, sampler: SubspaceSampler,
                     samples: int = 500, exact: bool = False,
                     diagnostics: dict | None = None) -> bool:
    """Positive semidefiniteness on structured vectors over a subspace.

    The sampled mode is a Monte-Carlo certificate: it can only ever
    refute.  exact=True restricts the symmetrized form to the
    sampler's basis (the subspace is a real vector space, so real
    coefficients suffice) and decides by its smallest eigenvalue.
    """
    basis = sampler.basis_matrices()
    if basis[0].size * 2 != aj.dim:
        raise ValueError("sampler dimension does not match the Jacobian")
    if exact:
        J = aj.matrix()
        V = np.stack([np.concatenate([_vec(B), np.conj(_vec(B))])
                      for B in basis], axis=1)
        M = np.conj(V.T) @ J @ V
        S = 0.5 * np.real(M + np.conj(M.T))
        lam = float(np.min(np.linalg.eigvalsh(S)))
        if diagnostics is not None:
            diagnostics["min_eig"] = lam
        return lam >= -1e-9
    worst = np.inf
    witness = None
    for Y in sampler.draw(samples):
        q = aj.quadratic_form(Y)
        if abs(q.imag) > 1e-10 * max(1.0, abs(q.real)):
            raise ValueError("quadratic form is not real on a "
                             "structured vector; malformed Jacobian")
        if q.real < worst:
            worst = q.real
            witness = Y
    if diagnostics is not None:
        diagnostics["min_value"] = worst
        diagnostics["witness"] = None if worst >= -1e-9 else witness
    return bool(worst >= -1e-9)


def minimum_principle_residual(cograd, project, Z, samples: int = 200,
                               seed: int = 0, radius: float = 1.0) -> float:
    """Sampled first-order stationarity certificate at a feasible Z.

    Evaluates <Y - Z, cograd(Z)> over feasible points Y obtained by
    projecting random perturbations of Z.  Values at or above a small
    negative tolerance certify stationarity on the sample; clearly
    negative values expose a feasible improvement direction.
    """
    Z = np.asarray(Z, dtype=complex)
    G = np.asarray(cograd(Z), dtype=complex)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        step = (rng.standard_normal(Z.shape)
                + 1.0j * rng.standard_normal(Z.shape))
        Y = np.asarray(project(Z + radius * step), dtype=complex)
        worst = min(worst, inner_product(Y - Z, G))
    return float(worst)
