"""Two four-level ions sharing one cavity mode: master-equation model of the
virtual-photon-exchange CZ gate, with optional post-selection on no detected
cavity emission.

Basis per ion is ``(up, down, e, e')``; ``up-e`` and ``down-e'`` both couple to
the cavity. Composite index is ``(level_A * 4 + level_B) * (n_max + 1) + n``.
Density operators are plain ``numpy`` arrays; superoperators act on the
row-major vectorisation ``rho.reshape(-1)``, for which
``vec(A X B) = kron(A, B.T) vec(X)``.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .params import CavityParams, IonParams, ParameterError

UP, DOWN, EXC, EXC2 = 0, 1, 2, 3
LEVEL_NAMES = ("up", "down", "e", "e'")
TRANSITIONS = {"up-e": (UP, EXC), "down-e'": (DOWN, EXC2)}
DEPHASING_CONVENTIONS = ("fwhm", "rate")

# CZ = -|up up><up up| + ..., followed by Z on ion A: the single-ion dispersive
# phase pi picked up by the excited control is a fixed frame correction.
CZ = np.diag([-1.0, 1.0, 1.0, 1.0]).astype(complex)
Z_A = np.diag([1.0, 1.0, -1.0, -1.0]).astype(complex)
TARGET_GATE = Z_A @ CZ

TRUNCATION_TOL = 1e-6


class PropagationError(RuntimeError):
    pass


class TruncationWarning(UserWarning):
    pass


class BoundaryOptimumWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CompositeSpace:
    n_max: int = 2
    ion_levels: int = 4

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ParameterError("n_max must be an integer >= 1")

    @property
    def n_photon(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return self.ion_levels ** 2 * self.n_photon

    def index(self, a: int, b: int, n: int) -> int:
        if not (0 <= a < 4 and 0 <= b < 4 and 0 <= n <= self.n_max):
            raise IndexError((a, b, n))
        return (a * 4 + b) * self.n_photon + n

    def labels(self, i: int):
        ab, n = divmod(i, self.n_photon)
        a, b = divmod(ab, 4)
        return a, b, n

    def basis(self, a: int, b: int, n: int = 0) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index(a, b, n)] = 1.0
        return v

    def ion_op(self, ion: str, op4) -> sp.csr_matrix:
        I4 = sp.identity(4, format="csr")
        Ic = sp.identity(self.n_photon, format="csr")
        op4 = sp.csr_matrix(op4)
        if ion == "A":
            return sp.kron(sp.kron(op4, I4), Ic, format="csr")
        if ion == "B":
            return sp.kron(sp.kron(I4, op4), Ic, format="csr")
        raise ValueError(f"ion must be 'A' or 'B', got {ion!r}")

    def destroy(self) -> sp.csr_matrix:
        a = sp.diags(np.sqrt(np.arange(1, self.n_photon)), 1, format="csr")
        return sp.kron(sp.identity(16, format="csr"), a, format="csr")

    def qubit_state(self, psi2) -> np.ndarray:
        """Embed a two-qubit vector over (up up, up down, down up, down down) with an empty cavity."""
        psi2 = np.asarray(psi2, dtype=complex)
        v = np.zeros(self.dim, dtype=complex)
        for k, (a, b) in enumerate(((UP, UP), (UP, DOWN), (DOWN, UP), (DOWN, DOWN))):
            v[self.index(a, b, 0)] = psi2[k]
        return v

    def qubit_block(self, rho) -> np.ndarray:
        """Trace out the cavity and keep the ground-level (qubit) block of both ions."""
        r = np.asarray(rho).reshape(4, 4, self.n_photon, 4, 4, self.n_photon)
        red = np.einsum("abncdn->abcd", r)
        return red[:2, :2, :2, :2].reshape(4, 4)

    def photon_population(self, rho, n: int) -> float:
        idx = [self.index(a, b, n) for a in range(4) for b in range(4)]
        return float(np.real(np.diag(rho)[idx].sum()))


def _proj(i, j=None):
    m = np.zeros((4, 4))
    m[i, i if j is None else j] = 1.0
    return m


def _lowering(branch):
    ground, excited = TRANSITIONS[branch]
    return _proj(ground, excited)


def build_hamiltonian(space: CompositeSpace, ion_A: IonParams, ion_B: IonParams,
                      cavity: CavityParams, frame: str = "cavity", delta_w: float = 0.0,
                      couplings: Optional[dict] = None) -> sp.csr_matrix:
    """Two ions plus one cavity mode with Jaynes-Cummings coupling on both optical branches.

    ``cavity.delta`` is the detuning of ion A's up-e line from the cavity, ion B
    sits a further ``delta_w`` away. Frames:

    * ``cavity``: rotating at the cavity frequency; the ground splitting is also
      rotated out so e' sits ``delta_eg`` above e.
    * ``ion``: rotating at ion A's up-e frequency (the frame of the driving pulses).
    * ``lab``: bare energies; needs ``cavity.optical_frequency`` and ``omega_e``/``omega_g``.

    ``couplings`` maps ``(ion, branch)`` such as ``("A", "down-e'")`` to a rate;
    unspecified couplings equal ``cavity.g``.
    """
    Delta = cavity.delta
    a = space.destroy()
    num = a.T @ a
    H = sp.csr_matrix((space.dim, space.dim), dtype=complex)
    if frame == "lab":
        if cavity.optical_frequency is None:
            raise ParameterError("lab frame requires cavity.optical_frequency")
        wc = cavity.optical_frequency
        H = H + wc * num
    elif frame not in ("cavity", "ion"):
        raise ParameterError(f"unknown frame {frame!r}")
    shift = Delta if frame == "ion" else 0.0
    if shift:
        H = H - shift * num
    couplings = couplings or {}
    for name, ion, offset in (("A", ion_A, 0.0), ("B", ion_B, delta_w)):
        det = Delta + offset
        if frame == "lab":
            E_e, E_ep, E_dn = wc + det, wc + det + ion.omega_e, ion.omega_g
        else:
            E_e, E_ep, E_dn = det - shift, det - shift + ion.delta_eg, 0.0
        H = H + space.ion_op(name, np.diag([0.0, E_dn, E_e, E_ep]))
        for branch in TRANSITIONS:
            g = couplings.get((name, branch), cavity.g)
            if g == 0:
                continue
            raise_op = space.ion_op(name, _lowering(branch).T) @ a
            H = H + g * (raise_op + raise_op.getH())
    H = sp.csr_matrix(H)
    H.eliminate_zeros()
    return H


@dataclass
class Superoperator:
    matrix: sp.csr_matrix
    space: CompositeSpace

    def apply(self, rho) -> np.ndarray:
        d = self.space.dim
        return (self.matrix @ np.asarray(rho, dtype=complex).reshape(-1)).reshape(d, d)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def dissipator(c) -> sp.csr_matrix:
    """Superoperator of D(c) rho = c rho c^dag - {c^dag c, rho}/2."""
    c = sp.csr_matrix(c)
    d = c.shape[0]
    I = sp.identity(d, format="csr")
    cdc = c.getH() @ c
    return sp.kron(c, c.conj()) - 0.5 * sp.kron(cdc, I) - 0.5 * sp.kron(I, cdc.T)


def collapse_operators(space: CompositeSpace, ion_A: IonParams, ion_B: IonParams,
                       cavity: CavityParams, dephasing_convention: str = "fwhm"):
    """Rate-weighted jump operators: cavity loss, spontaneous decay of both
    excited levels of each ion, and pure dephasing of the excited manifold.

    ``fwhm``: dephasing operator weight 2 gamma*, so optical coherences decay at
    gamma/2 + gamma* and the zero-phonon line has FWHM gamma + 2 gamma*.
    ``rate``: weight gamma*, i.e. coherences lose only gamma*/2 to dephasing.
    """
    if dephasing_convention not in DEPHASING_CONVENTIONS:
        raise ParameterError(f"dephasing_convention must be one of {DEPHASING_CONVENTIONS}")
    ops = [math.sqrt(cavity.kappa) * space.destroy()]
    for name, ion in (("A", ion_A), ("B", ion_B)):
        for branch in TRANSITIONS:
            if ion.gamma > 0:
                ops.append(math.sqrt(ion.gamma) * space.ion_op(name, _lowering(branch)))
        if ion.gamma_star > 0:
            weight = 2.0 * ion.gamma_star if dephasing_convention == "fwhm" else ion.gamma_star
            ops.append(math.sqrt(weight) * space.ion_op(name, _proj(EXC) + _proj(EXC2)))
    return ops


def build_liouvillian(H, space: CompositeSpace, ions, cavity: CavityParams,
                      dephasing_convention: str = "fwhm") -> Superoperator:
    H = sp.csr_matrix(H)
    if H.shape != (space.dim, space.dim):
        raise ParameterError(f"Hamiltonian shape {H.shape} does not match space dim {space.dim}")
    ion_A, ion_B = ions
    I = sp.identity(space.dim, format="csr")
    L = -1j * (sp.kron(H, I) - sp.kron(I, H.T))
    for c in collapse_operators(space, ion_A, ion_B, cavity, dephasing_convention):
        L = L + dissipator(c)
    L = sp.csr_matrix(L)
    L.eliminate_zeros()
    return Superoperator(L, space)


def emission_superoperator(space: CompositeSpace) -> sp.csr_matrix:
    """S rho = a rho a^dag."""
    a = space.destroy()
    return sp.kron(a, a.conj(), format="csr")


def conditioned_generator(L: Superoperator, p_eta_d: float, kappa: float) -> sp.csr_matrix:
    if not 0.0 <= p_eta_d <= 1.0:
        raise ParameterError("p_eta_d must lie in [0, 1]")
    M = L.matrix
    if p_eta_d > 0:
        M = M - (p_eta_d * kappa) * emission_superoperator(L.space)
    return sp.csr_matrix(M)


def reachable_indices(M: sp.csr_matrix, support) -> np.ndarray:
    """Smallest index set containing ``support`` and closed under the sparsity pattern of M."""
    pattern = sp.csr_matrix((np.ones(M.nnz), M.indices, M.indptr), shape=M.shape)
    mask = np.zeros(M.shape[0], dtype=bool)
    mask[np.asarray(support)] = True
    while True:
        grown = mask | ((pattern @ mask.astype(float)) > 0)
        if grown.sum() == mask.sum():
            return np.flatnonzero(mask)
        mask = grown


class _ReducedPropagator:
    """exp(t M) restricted to the invariant block reachable from a set of initial vectors."""

    def __init__(self, M: sp.csr_matrix, vectors):
        support = np.flatnonzero(np.any(np.abs(np.atleast_2d(vectors)) > 0, axis=0))
        self.idx = reachable_indices(M, support)
        self.block = M[self.idx][:, self.idx].toarray()
        self.n = M.shape[0]

    def expm(self, t):
        E = sla.expm(self.block * t)
        if not np.all(np.isfinite(E)):
            raise PropagationError(f"matrix exponential did not converge (t={t})")
        return E

    def apply(self, E, v):
        out = np.zeros(self.n, dtype=complex)
        out[self.idx] = E @ v[self.idx]
        return out


def conditional_propagate(L: Superoperator, p_eta_d: float, kappa: float, rho0, t,
                          method: str = "expm"):
    """Unnormalised state given no detected cavity photon: exp(t (L - p eta_d kappa S)) rho0.

    ``t`` may be a scalar or an increasing sequence starting at >= 0 (a list of
    states is returned then). ``method='ode'`` integrates with an adaptive
    backward-differentiation scheme instead of the matrix exponential, as a
    cross-check.
    """
    d = L.space.dim
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (d, d):
        raise ParameterError(f"rho0 must be {d}x{d}")
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ParameterError("times must be >= 0 and nondecreasing")
    M = conditioned_generator(L, p_eta_d, kappa)
    v0 = rho0.reshape(-1)
    prop = _ReducedPropagator(M, v0)
    out = []
    if method == "expm":
        v, t_prev = v0, 0.0
        for tk in times:
            v = prop.apply(prop.expm(tk - t_prev), v) if tk > t_prev else v
            t_prev = tk
            out.append(v.reshape(d, d))
    elif method == "ode":
        A = prop.block
        y0 = v0[prop.idx]
        if times[-1] == 0:
            sol_y = np.repeat(y0[:, None], len(times), axis=1)
        else:
            sol = solve_ivp(lambda _t, y: A @ y, (0.0, times[-1]), y0, method="BDF",
                            t_eval=times, rtol=1e-10, atol=1e-12, jac=A)
            if not sol.success:
                raise PropagationError(sol.message)
            sol_y = sol.y
        for k in range(len(times)):
            v = np.zeros(d * d, dtype=complex)
            v[prop.idx] = sol_y[:, k]
            out.append(v.reshape(d, d))
    else:
        raise ParameterError(f"unknown method {method!r}")
    return out[0] if np.ndim(t) == 0 else out


def pi_pulse_unitary(space: CompositeSpace, ion: str, transition: str = "up-e") -> sp.csr_matrix:
    lo, hi = TRANSITIONS[transition]
    swap = np.eye(4)
    swap[[lo, hi]] = swap[[hi, lo]]
    return space.ion_op(ion, swap)


def apply_pi_pulse(rho, space: CompositeSpace, ion: str, transition: str = "up-e") -> np.ndarray:
    """Instantaneous ideal population swap on one optical transition of one ion."""
    return _conjugate(pi_pulse_unitary(space, ion, transition), rho)


def _conjugate(U, rho) -> np.ndarray:
    """U rho U^dag for sparse U and dense rho."""
    return np.asarray(U @ np.asarray(U @ np.asarray(rho)).conj().T).conj().T


# ---------------------------------------------------------------------------
# the CZ protocol

_PRODUCT_STATES = (
    np.array([1.0, 0.0]),
    np.array([0.0, 1.0]),
    np.array([1.0, 1.0]) / math.sqrt(2.0),
    np.array([1.0, 1.0j]) / math.sqrt(2.0),
)


def input_states(selector):
    """Two-qubit input vectors for a fidelity estimate."""
    if isinstance(selector, str):
        if selector == "uniform":
            return [np.full(4, 0.5, dtype=complex)]
        if selector == "average16":
            return [np.kron(x, y).astype(complex) for x in _PRODUCT_STATES for y in _PRODUCT_STATES]
        raise ParameterError(f"unknown input selector {selector!r}")
    psi = np.asarray(selector, dtype=complex)
    if psi.shape != (4,):
        raise ParameterError("explicit input must be a 4-vector")
    return [psi / np.linalg.norm(psi)]


@dataclass(frozen=True)
class GateProtocol:
    delta: float
    p_eta_d: float = 0.0
    T_gate: Optional[float] = None
    input_state: object = "uniform"
    couplings: Optional[dict] = None
    delta_w: float = 0.0
    dephasing_convention: str = "fwhm"

    def __post_init__(self):
        if not 0.0 <= self.p_eta_d <= 1.0:
            raise ParameterError("p_eta_d must lie in [0, 1]")
        if self.T_gate is not None and not self.T_gate > 0:
            raise ParameterError("T_gate must be > 0")

    def gate_time(self, g: float) -> float:
        if self.T_gate is not None:
            return self.T_gate
        if not g > 0 or not self.delta > 0:
            raise ParameterError("default gate time pi*Delta/g^2 needs g > 0 and Delta > 0")
        return math.pi * self.delta / g ** 2


@dataclass
class GateSimResult:
    fidelity: float
    p_gate: float
    p_gate_excited: float
    T_gate: float
    rho: Optional[np.ndarray]
    params: dict
    truncation_population: float = 0.0
    per_input: list = field(default_factory=list)


def run_cz_protocol(space: CompositeSpace, ions, cavity: CavityParams,
                    protocol: GateProtocol, frame: str = "ion") -> GateSimResult:
    """pi pulse on A (up-e), conditioned evolution for T_gate, pi pulse on A, then
    fidelity of the qubit block against the target gate.

    ``p_gate`` is the no-detection probability for the chosen input;
    ``p_gate_excited`` is the same for the up-up input, i.e. when the control
    ion is certainly excited during the gate.
    """
    ion_A, ion_B = ions
    cav = replace(cavity, delta=protocol.delta)
    T = protocol.gate_time(cav.g)
    H = build_hamiltonian(space, ion_A, ion_B, cav, frame=frame, delta_w=protocol.delta_w,
                          couplings=protocol.couplings)
    L = build_liouvillian(H, space, (ion_A, ion_B), cav, protocol.dephasing_convention)
    M = conditioned_generator(L, protocol.p_eta_d, cav.kappa)
    P = pi_pulse_unitary(space, "A", "up-e")

    psis = input_states(protocol.input_state)
    psis_all = psis + [np.array([1.0, 0, 0, 0], dtype=complex)]
    vecs = []
    for psi in psis_all:
        v = P @ space.qubit_state(psi)
        vecs.append(np.outer(v, v.conj()).reshape(-1))
    prop = _ReducedPropagator(M, np.array(vecs))
    E = prop.expm(T)

    d = space.dim
    per_input = []
    trunc = 0.0
    rho_keep = None
    for k, (psi, v) in enumerate(zip(psis_all, vecs)):
        r = _conjugate(P, prop.apply(E, v).reshape(d, d))
        p =float(np.real(np.trace(r)))
        if k < len(psis):
            trunc = max(trunc, space.photon_population(r, space.n_max) / max(p, 1e-300))
            tgt = TARGET_GATE @ psi
            F = float(np.real(tgt.conj() @ space.qubit_block(r) @ tgt)) / p
            per_input.append((F, p))
            if len(psis) == 1:
                rho_keep = r / p
        else:
            p_exc = p
    if trunc > TRUNCATION_TOL:
        warnings.warn(f"photon population at n_max={space.n_max} is {trunc:.2e}", TruncationWarning,
                      stacklevel=2)
    F = float(np.mean([f for f, _ in per_input]))
    p_gate = float(np.mean([p for _, p in per_input]))
    params = {
        "delta": protocol.delta, "p_eta_d": protocol.p_eta_d, "T_gate": T,
        "g": cav.g, "kappa": cav.kappa, "gamma": ion_A.gamma, "gamma_star": ion_A.gamma_star,
        "delta_eg": ion_A.delta_eg, "delta_w": protocol.delta_w, "n_max": space.n_max,
        "dephasing_convention": protocol.dephasing_convention, "frame": frame,
    }
    return GateSimResult(fidelity=F, p_gate=p_gate, p_gate_excited=p_exc, T_gate=T, rho=rho_keep,
                         params=params, truncation_population=trunc, per_input=per_input)


# ---------------------------------------------------------------------------
# parametric model in units of kappa

@dataclass(frozen=True)
class ExchangeGateModel:
    """Bad-cavity exchange-gate setting parameterised by g/kappa and C = 4 g^2 / (kappa gamma)."""

    g_over_kappa: float = 0.1
    cooperativity: float = 9.0e4
    gamma_star_over_gamma: float = 2.3
    delta_eg_over_kappa: float = 6.25
    delta_w_over_kappa: float = 0.0
    n_max: int = 2
    dephasing_convention: str = "rate"
    kappa: float = 1.0
    input_state: object = "uniform"

    @classmethod
    def from_ion(cls, ion: IonParams, kappa: float, cooperativity: float, **kw):
        """Fix g from the ion's own decay rate: g = sqrt(C kappa gamma / 4)."""
        g = math.sqrt(cooperativity * kappa * ion.gamma / 4.0)
        return cls(g_over_kappa=g / kappa, cooperativity=cooperativity,
                   gamma_star_over_gamma=ion.gamma_star / ion.gamma,
                   delta_eg_over_kappa=ion.delta_eg / kappa, kappa=kappa, **kw)

    @classmethod
    def from_section(cls, section: dict, **kw):
        names = {f for f in cls.__dataclass_fields__}
        args = {k: v for k, v in section.items() if k in names}
        if "n_max" in args:
            args["n_max"] = int(args["n_max"])
        args.update(kw)
        return cls(**args)

    @property
    def g(self) -> float:
        return self.g_over_kappa * self.kappa

    @property
    def gamma(self) -> float:
        return 4.0 * self.g ** 2 / (self.cooperativity * self.kappa)

    @property
    def gamma_star(self) -> float:
        return self.gamma_star_over_gamma * self.gamma

    def ion(self) -> IonParams:
        return IonParams(gamma_r=self.gamma, gamma_nr=0.0, gamma_star=self.gamma_star,
                         delta_eg=self.delta_eg_over_kappa * self.kappa)

    def cavity(self, delta_over_kappa: float = 0.0) -> CavityParams:
        return CavityParams(g=self.g, kappa=self.kappa, delta=delta_over_kappa * self.kappa,
                            n_max=self.n_max)

    def gate_time(self, delta_over_kappa: float) -> float:
        return math.pi * delta_over_kappa * self.kappa / self.g ** 2

    def simulate(self, delta_over_kappa: float, p_eta_d: float = 0.0, **kw) -> GateSimResult:
        ion = self.ion()
        protocol = GateProtocol(delta=delta_over_kappa * self.kappa, p_eta_d=p_eta_d,
                                input_state=kw.pop("input_state", self.input_state),
                                delta_w=self.delta_w_over_kappa * self.kappa,
                                dephasing_convention=self.dephasing_convention, **kw)
        return run_cz_protocol(CompositeSpace(self.n_max), (ion, ion), self.cavity(delta_over_kappa),
                               protocol)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_state"] = d["input_state"] if isinstance(d["input_state"], str) else "explicit"
        return d


@dataclass(frozen=True)
class SweepPoint:
    delta_over_kappa: float
    p_eta_d: float
    fidelity: float
    p_gate: float
    p_gate_excited: float
    gate_time: float


@dataclass
class SweepResult:
    curves: dict
    optima: dict
    warnings: list = field(default_factory=list)


def _simulate_point(args):
    model, delta, ped = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        res = model.simulate(delta, ped)
    return SweepPoint(delta, ped, res.fidelity, res.p_gate, res.p_gate_excited, res.T_gate)


def map_points(model, tasks, jobs: int = 1):
    """Simulate (delta/kappa, p_eta_d) points; output order follows ``tasks``."""
    items = [(model, d, p) for d, p in tasks]
    if jobs and jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_simulate_point, items))
    return [_simulate_point(it) for it in items]


def optimize_detuning(model: ExchangeGateModel, p_eta_d: float, lo: float, hi: float,
                      xatol: float = 1e-4) -> SweepPoint:
    """Bounded golden-section search for the fidelity peak over log(delta/kappa) in [lo, hi]."""
    res = minimize_scalar(lambda x: -_simulate_point((model, math.exp(x), p_eta_d)).fidelity,
                          bounds=(math.log(lo), math.log(hi)), method="bounded",
                          options={"xatol": xatol})
    return _simulate_point((model, float(math.exp(res.x)), p_eta_d))


def sweep_and_optimize(model: ExchangeGateModel, delta_range: Sequence[float],
                       p_eta_d_list: Sequence[float], refine: bool = True, jobs: int = 1,
                       precomputed: Optional[dict] = None) -> SweepResult:
    """Fidelity/success/gate-time curves over the cavity detuning grid, one per p_eta_d,
    and the refined argmax of each curve.

    ``precomputed`` maps ``(delta, p_eta_d)`` to finished :class:`SweepPoint` s so
    interrupted sweeps can resume.
    """
    grid = sorted(float(d) for d in delta_range)
    precomputed = dict(precomputed or {})
    tasks = [(d, float(p)) for p in p_eta_d_list for d in grid if (d, float(p)) not in precomputed]
    for pt in map_points(model, tasks, jobs):
        precomputed[(pt.delta_over_kappa, pt.p_eta_d)] = pt
    curves, optima, notes = {}, {}, []
    for p in p_eta_d_list:
        p = float(p)
        curve = [precomputed[(d, p)] for d in grid]
        curves[p] = curve
        k = int(np.argmax([c.fidelity for c in curve]))
        best = curve[k]
        if k in (0, len(curve) - 1):
            msg = f"fidelity optimum for p_eta_d={p} lies on the sweep boundary ({best.delta_over_kappa})"
            warnings.warn(msg, BoundaryOptimumWarning, stacklevel=2)
            notes.append(msg)
        elif refine:
            best = optimize_detuning(model, p, grid[k - 1], grid[k + 1])
            if best.fidelity < curve[k].fidelity:
                best = curve[k]
        optima[p] = best
    return SweepResult(curves=curves, optima=optima, warnings=notes)


# ---------------------------------------------------------------------------
# re-estimating the analytic dephasing coefficients

@dataclass(frozen=True)
class PeakRecord:
    gamma_star_over_gamma: float
    delta_over_kappa: float
    fidelity: float
    cooperativity: float


def _no_dephasing_fidelity(delta_over_kappa, C):
    return 0.25 * (math.exp(-2 * math.pi * delta_over_kappa / C - math.pi / (2 * delta_over_kappa)) + 1) ** 2


def fit_dephasing_coefficients(records: Sequence[PeakRecord]):
    """Least-squares estimates of the dephasing slope c1 (F = F0 - c1 gamma* T) and
    of c2 in C* = C gamma / (gamma + c2 gamma*), from simulated fidelity peaks at
    p_eta_d = 0. Both fits pass through the origin.
    """
    recs = [r for r in records if r.gamma_star_over_gamma > 0]
    if len(records) < 4:
        raise ValueError(f"need at least 4 dephasing values, got {len(records)}")
    if len(recs) < 2:
        raise ValueError("fit is degenerate: no nonzero dephasing samples")
    x2, y2, x1, y1 = [], [], [], []
    for r in recs:
        C = r.cooperativity
        C_star = (2 * math.pi / (1.0 - r.fidelity)) ** 2
        x2.append(r.gamma_star_over_gamma)
        y2.append(C / C_star - 1.0)
        # gamma* T_gate in units where T = pi Delta / g^2 and gamma = 4 g^2 / (C kappa)
        x1.append(r.gamma_star_over_gamma * 4 * math.pi * r.delta_over_kappa / C)
        y1.append(_no_dephasing_fidelity(r.delta_over_kappa, C) - r.fidelity)
    x1, y1, x2, y2 = map(np.asarray, (x1, y1, x2, y2))
    return float(x1 @ y1 / (x1 @ x1)), float(x2 @ y2 / (x2 @ x2))


def refit_dephasing_coefficients(model: ExchangeGateModel, ratios: Sequence[float],
                                 lo: float = 20.0, hi: float = 400.0, jobs: int = 1):
    """Simulate the p_eta_d = 0 peak for each gamma*/gamma ratio and fit (c1, c2)."""
    models = [replace(model, gamma_star_over_gamma=float(r)) for r in ratios]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            peaks = list(ex.map(_peak_for_model, models, [lo] * len(models), [hi] * len(models)))
    else:
        peaks = [_peak_for_model(m, lo, hi) for m in models]
    records = [PeakRecord(m.gamma_star_over_gamma, pk.delta_over_kappa, pk.fidelity, m.cooperativity)
               for m, pk in zip(models, peaks)]
    return fit_dephasing_coefficients(records), records


def _peak_for_model(model, lo, hi):
    return optimize_detuning(model, 0.0, lo, hi)


# ---------------------------------------------------------------------------
# state checks used by the property suites

def hermiticity_error(rho) -> float:
    rho = np.asarray(rho)
    return float(np.max(np.abs(rho - rho.conj().T)))


def min_eigenvalue(rho) -> float:
    rho = np.asarray(rho)
    return float(np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))))
