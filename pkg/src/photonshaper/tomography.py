"""Heterodyne moment tomography of the emitted photon mode.

The measurement chain sees V = A + h^dag: the photon-mode annihilator A plus
the creation operator of an independent thermal noise mode h (occupation N of
order 10 for a typical amplifier chain). Repeated shots of the complex
heterodyne voltage V build a 2D histogram; moments of V are deconvolved into
normally ordered moments of A using the thermal statistics of h, and a
maximum-likelihood fit turns the A moments into a physical density matrix.

Sampling distribution: a shot of V follows the Husimi Q function of the
signal mode convolved with a thermal Gaussian of variance N. For a signal
density matrix rho (Fock basis, n_max levels) the closed form is

  P(v) = sum_{n,m} rho_nm / sqrt(n! m!) * I_nm(v)
  I_nm(v) = exp(-|v|^2/(N+1)) / (pi (N+1))
            * sum_k n! m! N^k conj(v)^(n-k) v^(m-k)
              / (k! (n-k)! (m-k)! (N+1)^(n+m-k))

which reduces to the bare Q function at N = 0 and integrates to 1 for any
valid rho. P is evaluated on a square grid (auto-expanded until less than
1e-4 of the mass lies outside) and sampled by inverse CDF over grid cells
with uniform in-cell jitter, in chunks with independently seeded streams so
histograms merge associatively.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

# ---------------------------------------------------------------------------
# noise model and moment tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseModel:
    """Thermal occupation of the detection-chain noise mode."""

    n_thermal: float = 10.0

    def __post_init__(self):
        if self.n_thermal < 0:
            raise ValueError("thermal occupation must be >= 0")


@dataclass
class MomentSet:
    """Table of <(X^dag)^n X^m> for n + m <= max_order.

    values[n, m] holds the moment, errors[n, m] its statistical standard
    error (0 for analytically supplied tables). Entries with n + m beyond
    max_order are NaN. operator_label records which field the table
    describes ("V", "h" or "A").
    """

    operator_label: str
    max_order: int
    values: np.ndarray          # complex, (max_order+1, max_order+1)
    errors: np.ndarray          # float, same shape
    n_shots: int = 0

    def __post_init__(self):
        k = self.max_order + 1
        if self.values.shape != (k, k) or self.errors.shape != (k, k):
            raise ValueError("moment table shape does not match max_order")

    def moment(self, n_dagger: int, n_plain: int) -> complex:
        if n_dagger + n_plain > self.max_order:
            raise ValueError("moment order exceeds table")
        return complex(self.values[n_dagger, n_plain])

    def error(self, n_dagger: int, n_plain: int) -> float:
        return float(self.errors[n_dagger, n_plain])

    def orders(self):
        """All (n, m) index pairs stored in the table."""
        return [(n, m) for n in range(self.max_order + 1)
                for m in range(self.max_order + 1 - n)]

    def check_hermitian(self, n_sigma: float = 3.0) -> float:
        """Largest |values[n,m] - conj(values[m,n])| in units of sigma."""
        worst = 0.0
        for n, m in self.orders():
            if m < n:
                continue
            resid = abs(self.values[n, m] - np.conj(self.values[m, n]))
            sig = max(self.errors[n, m] + self.errors[m, n], 1e-300)
            worst = max(worst, resid / sig)
        if worst > n_sigma:
            warnings.warn(f"moment table breaks Hermitian symmetry at "
                          f"{worst:.1f} sigma")
        return worst

    def to_json(self) -> str:
        rows = []
        for n, m in self.orders():
            rows.append({"dagger_power": n, "power": m,
                         "re": float(self.values[n, m].real),
                         "im": float(self.values[n, m].imag),
                         "std_error": float(self.errors[n, m])})
        doc = {"schema_version": 1, "operator": self.operator_label,
               "max_order": self.max_order, "n_shots": self.n_shots,
               "moments": rows}
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MomentSet":
        doc = json.loads(text)
        k = doc["max_order"] + 1
        values = np.full((k, k), np.nan, dtype=complex)
        errors = np.full((k, k), np.nan)
        for row in doc["moments"]:
            n, m = row["dagger_power"], row["power"]
            values[n, m] = row["re"] + 1j * row["im"]
            errors[n, m] = row["std_error"]
        return cls(doc["operator"], doc["max_order"], values, errors,
                   doc["n_shots"])


def moments_from_state(rho: np.ndarray, max_order: int = 4,
                       label: str = "A") -> MomentSet:
    """Exact normally ordered moments <(a^dag)^n a^m> of a Fock-basis rho."""
    rho = np.asarray(rho, dtype=complex)
    dim = rho.shape[0]
    a = np.diag(np.sqrt(np.arange(1, dim)), 1).astype(complex)
    k = max_order + 1
    values = np.full((k, k), np.nan, dtype=complex)
    errors = np.full((k, k), np.nan)
    a_pow = [np.eye(dim, dtype=complex)]
    for _ in range(max_order):
        a_pow.append(a_pow[-1] @ a)
    for n in range(k):
        for m in range(k - n):
            op = a_pow[n].conj().T @ a_pow[m]
            values[n, m] = np.trace(rho @ op)
            errors[n, m] = 0.0
    return MomentSet(label, max_order, values, errors)


def coherent_density_matrix(beta: complex, n_max: int = 3) -> np.ndarray:
    """Truncated, renormalized coherent state |beta><beta|."""
    n = np.arange(n_max)
    amps = beta ** n / np.sqrt([math.factorial(int(j)) for j in n])
    amps = amps * np.exp(-abs(beta) ** 2 / 2)
    amps = amps / np.linalg.norm(amps)
    return np.outer(amps, amps.conj())


def mode_density_matrix(photon_number: float, mean_amplitude: complex,
                        n_max: int = 3) -> np.ndarray:
    """Photon-mode density matrix from first moments of the emitted field.

    The emission protocol populates at most one photon in the matched mode
    (two-photon moment consistent with zero), so the state is pinned by the
    photon number p1 = <A^dag A> and the mean field <A> = rho_10. Positivity
    requires |<A>|^2 <= p0 p1; a violation means the inputs are not moments
    of any one-photon-manifold state.
    """
    if not 0.0 <= photon_number <= 1.0:
        raise ValueError("photon number must lie in [0, 1]")
    p1 = float(photon_number)
    p0 = 1.0 - p1
    if abs(mean_amplitude) ** 2 > p0 * p1 + 1e-12:
        raise ValueError("mean field too large for the photon number")
    rho = np.zeros((n_max, n_max), dtype=complex)
    rho[0, 0] = p0
    rho[1, 1] = p1
    rho[1, 0] = mean_amplitude
    rho[0, 1] = np.conj(mean_amplitude)
    return rho


def fock_target(n: int, n_max: int = 3) -> np.ndarray:
    vec = np.zeros(n_max, dtype=complex)
    vec[n] = 1.0
    return vec


def superposition_target(n_max: int = 3) -> np.ndarray:
    vec = np.zeros(n_max, dtype=complex)
    vec[0] = vec[1] = 1.0 / np.sqrt(2.0)
    return vec


# ---------------------------------------------------------------------------
# smoothed-Q sampling
# ---------------------------------------------------------------------------


@dataclass
class Histogram:
    """2D histogram of complex heterodyne shots on a uniform square grid."""

    re_edges: np.ndarray
    im_edges: np.ndarray
    counts: np.ndarray          # (n_re, n_im) int64
    n_shots: int
    seed: int | None = None

    @property
    def re_centers(self) -> np.ndarray:
        return 0.5 * (self.re_edges[:-1] + self.re_edges[1:])

    @property
    def im_centers(self) -> np.ndarray:
        return 0.5 * (self.im_edges[:-1] + self.im_edges[1:])

    def to_csv(self, path) -> None:
        rc, ic = self.re_centers, self.im_centers
        ii, jj = np.nonzero(self.counts)
        with open(path, "w") as fh:
            fh.write("re,im,count\n")
            for i, j in zip(ii, jj):
                fh.write(f"{rc[i]:.6f},{ic[j]:.6f},{self.counts[i, j]}\n")

    @classmethod
    def from_csv(cls, path) -> "Histogram":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        re, im, cnt = data[:, 0], data[:, 1], data[:, 2]
        dx = np.min(np.diff(np.unique(re))) if len(np.unique(re)) > 1 else 1.0
        rc = np.unique(re)
        ic = np.unique(im)
        counts = np.zeros((len(rc), len(ic)), dtype=np.int64)
        i = np.searchsorted(rc, re)
        j = np.searchsorted(ic, im)
        counts[i, j] = cnt.astype(np.int64)
        re_edges = np.concatenate([rc - dx / 2, [rc[-1] + dx / 2]])
        im_edges = np.concatenate([ic - dx / 2, [ic[-1] + dx / 2]])
        return cls(re_edges, im_edges, counts, int(cnt.sum()))


def smoothed_q_function(rho: np.ndarray, noise: NoiseModel,
                        re: np.ndarray, im: np.ndarray) -> np.ndarray:
    """P(v) of V = A + h^dag on the grid re x im (see module docstring)."""
    rho = np.asarray(rho, dtype=complex)
    dim = rho.shape[0]
    big_n = float(noise.n_thermal)
    v = re[:, None] + 1j * im[None, :]
    vc = np.conj(v)
    gauss = np.exp(-np.abs(v) ** 2 / (big_n + 1)) / (np.pi * (big_n + 1))
    total = np.zeros_like(v, dtype=complex)
    fact = [math.factorial(k) for k in range(dim)]
    for n in range(dim):
        for m in range(dim):
            if rho[n, m] == 0:
                continue
            poly = np.zeros_like(v, dtype=complex)
            for k in range(min(n, m) + 1):
                coef = (fact[n] * fact[m] * big_n ** k
                        / (fact[k] * fact[n - k] * fact[m - k]
                           * (big_n + 1) ** (n + m - k)))
                poly = poly + coef * vc ** (n - k) * v ** (m - k)
            total = total + rho[n, m] / np.sqrt(fact[n] * fact[m]) * poly
    p = np.real(total) * gauss
    # cancellation in the coherence terms can leave tiny negatives
    if p.min() < -1e-10 * max(p.max(), 1e-300):
        raise ValueError("sampling distribution came out negative; "
                         "input rho is not a valid density matrix")
    return np.clip(p, 0.0, None)


def simulate_shots(rho_signal: np.ndarray, noise: NoiseModel, n_shots: int,
                   *, seed: int | None = None, resolution: float = 0.05,
                   chunk_size: int = 200_000) -> Histogram:
    """Draw heterodyne shots of V = A + h^dag and histogram them.

    The smoothed Q function is tabulated on a square grid of the given
    resolution, expanded until the probability mass outside is below 1e-4,
    and sampled by inverse CDF over cells; the histogram shares the sampling
    grid, so a cell count is exactly the number of shots drawn from it.
    Shots are generated in chunks with independently spawned substreams;
    chunk counts merge by plain addition, so parallel generation is
    order-independent. The histogram is reproducible bit for bit for a
    given (seed, chunk_size) pair.
    """
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    if resolution > 0.1:
        raise ValueError("grid resolution must be <= 0.1")
    rho_signal = np.asarray(rho_signal, dtype=complex)
    tr = np.trace(rho_signal)
    if abs(tr - 1.0) > 1e-8:
        raise ValueError("rho_signal must have unit trace")

    big_n = noise.n_thermal
    centroid = moments_from_state(rho_signal, 1).moment(0, 1)
    # thermal tail exp(-R^2/(N+1)): R^2 = 14(N+1) leaves ~1e-5 outside
    radius = abs(centroid) + np.sqrt(14.0 * (big_n + 1) + 2 * rho_signal.shape[0])
    for _ in range(8):
        n_cells = int(np.ceil(2 * radius / resolution))
        edges = np.linspace(-radius, radius, n_cells + 1)
        centers = 0.5 * (edges[:-1] + edges[1:])
        pdf = smoothed_q_function(rho_signal, noise, centers, centers)
        mass = pdf.sum() * resolution ** 2
        if 1.0 - mass < 1e-4:
            break
        radius *= 1.5
    else:
        raise RuntimeError("sampling grid failed to capture the distribution")

    cell_prob = (pdf / pdf.sum()).ravel()
    cdf = np.cumsum(cell_prob)
    cdf[-1] = 1.0

    counts = np.zeros(pdf.size, dtype=np.int64)
    n_chunks = (n_shots + chunk_size - 1) // chunk_size
    streams = np.random.SeedSequence(seed).spawn(n_chunks)
    left = n_shots
    for ss in streams:
        rng = np.random.default_rng(ss)
        k = min(chunk_size, left)
        left -= k
        cells = np.searchsorted(cdf, rng.random(k), side="right")
        counts += np.bincount(cells, minlength=pdf.size)
    counts = counts.reshape(pdf.shape)
    return Histogram(edges.copy(), edges.copy(), counts, n_shots, seed)


def moments_from_histogram(hist: Histogram, max_order: int = 4,
                           label: str = "V") -> MomentSet:
    """Bin-center weighted moments <(V*)^n V^m> with shot-noise errors."""
    if hist.counts.sum() == 0:
        raise ValueError("histogram is empty")
    v = hist.re_centers[:, None] + 1j * hist.im_centers[None, :]
    w = hist.counts / hist.counts.sum()
    shots = hist.n_shots
    k = max_order + 1
    values = np.full((k, k), np.nan, dtype=complex)
    errors = np.full((k, k), np.nan)
    vc = np.conj(v)
    for n in range(k):
        for m in range(k - n):
            z = vc ** n * v ** m
            mean = np.sum(w * z)
            second = np.sum(w * np.abs(z) ** 2)
            var = max(second - abs(mean) ** 2, 0.0)
            values[n, m] = mean
            errors[n, m] = np.sqrt(var / shots)
    return MomentSet(label, max_order, values, errors, shots)


# ---------------------------------------------------------------------------
# thermal-noise deconvolution
# ---------------------------------------------------------------------------


def thermal_antinormal_moment(p: int, q: int, big_n: float) -> float:
    """<h^p (h^dag)^q> of a thermal state: delta_pq p! (N+1)^p."""
    return math.factorial(p) * (big_n + 1.0) ** p if p == q else 0.0


def forward_convolve(a_moments: MomentSet, big_n: float) -> MomentSet:
    """Moments of V = A + h^dag from signal moments and thermal N.

    <(V^dag)^n V^m> = sum_{i<=n, j<=m} C(n,i) C(m,j) <(A^dag)^i A^j>
                      * <h^(n-i) (h^dag)^(m-j)>
    """
    k = a_moments.max_order + 1
    values = np.full((k, k), np.nan, dtype=complex)
    errors = np.full((k, k), np.nan)
    for n in range(k):
        for m in range(k - n):
            acc = 0.0 + 0.0j
            var = 0.0
            for i in range(n + 1):
                for j in range(m + 1):
                    hmom = thermal_antinormal_moment(n - i, m - j, big_n)
                    if hmom == 0.0:
                        continue
                    coef = math.comb(n, i) * math.comb(m, j) * hmom
                    acc += coef * a_moments.values[i, j]
                    var += (coef * a_moments.errors[i, j]) ** 2
            values[n, m] = acc
            errors[n, m] = np.sqrt(var)
    return MomentSet("V", a_moments.max_order, values, errors,
                     a_moments.n_shots)


def _deconvolve_with_n(v_moments: MomentSet, big_n: float) -> np.ndarray:
    """Invert the V = A + h^dag convolution at fixed thermal N."""
    k = v_moments.max_order + 1
    a_vals = np.full((k, k), np.nan, dtype=complex)
    for order in range(2 * (k - 1) + 1):
        for n in range(k):
            m = order - n
            if m < 0 or m >= k - n:
                continue
            acc = v_moments.values[n, m]
            for i in range(n + 1):
                for j in range(m + 1):
                    if i == n and j == m:
                        continue
                    hmom = thermal_antinormal_moment(n - i, m - j, big_n)
                    if hmom == 0.0:
                        continue
                    acc -= math.comb(n, i) * math.comb(m, j) * hmom \
                        * a_vals[i, j]
            a_vals[n, m] = acc
    return a_vals


def estimate_noise_number(reference: MomentSet) -> tuple[float, float]:
    """Thermal N and its standard error from a vacuum-input reference.

    With vacuum at the signal port, <V^dag V> = N + 1.
    """
    big_n = float(np.real(reference.values[1, 1])) - 1.0
    err = reference.error(1, 1)
    if big_n < -max(5.0 * err, 1e-9):
        raise ValueError("reference <V^dag V> below vacuum level; not a "
                         "valid noise calibration")
    return max(big_n, 0.0), err


def deconvolve_moments(v_moments: MomentSet,
                       noise_moments: MomentSet) -> MomentSet:
    """Recover signal moments <(A^dag)^i A^j> from measured V moments.

    noise_moments must come from a vacuum-input reference run through the
    same chain; the thermal occupation is read off its <V^dag V> - 1 and the
    rest of the reference table is checked against the thermal model (a
    deviation beyond 5 sigma warns but does not abort). Errors propagate
    through the linear inversion and, via central differences, through the
    uncertainty of N itself.
    """
    big_n, n_err = estimate_noise_number(noise_moments)

    # vacuum reference should satisfy <(V^dag)^n V^m> = delta_nm n! (N+1)^n
    for n, m in noise_moments.orders():
        expect = thermal_antinormal_moment(n, m, big_n)
        resid = abs(noise_moments.values[n, m] - expect)
        sig = max(noise_moments.errors[n, m], 1e-300)
        if n + m > 0 and resid > 5.0 * sig:
            warnings.warn(
                f"noise reference moment ({n},{m}) deviates from the "
                f"thermal model by {resid / sig:.1f} sigma")

    a_vals = _deconvolve_with_n(v_moments, big_n)

    # statistical error: linear propagation through the recursion at fixed N
    k = v_moments.max_order + 1
    a_var = np.full((k, k), np.nan)
    for order in range(2 * (k - 1) + 1):
        for n in range(k):
            m = order - n
            if m < 0 or m >= k - n:
                continue
            var = v_moments.errors[n, m] ** 2
            for i in range(n + 1):
                for j in range(m + 1):
                    if i == n and j == m:
                        continue
                    hmom = thermal_antinormal_moment(n - i, m - j, big_n)
                    if hmom == 0.0:
                        continue
                    coef = math.comb(n, i) * math.comb(m, j) * hmom
                    var += coef ** 2 * a_var[i, j]
            a_var[n, m] = var

    # N-uncertainty contribution by central difference of the inversion
    if n_err > 0:
        step = max(n_err, 1e-6)
        hi = _deconvolve_with_n(v_moments, big_n + step)
        lo = _deconvolve_with_n(v_moments, max(big_n - step, 0.0))
        dn = np.abs(hi - lo) / (2 * step) * n_err
        a_var = a_var + dn ** 2

    return MomentSet("A", v_moments.max_order, a_vals, np.sqrt(a_var),
                     v_moments.n_shots)


# ---------------------------------------------------------------------------
# fourth-order coherence
# ---------------------------------------------------------------------------


class UndefinedG2Error(ValueError):
    """Raised when <A^dag A> is too small for a meaningful g2."""


def g2_from_moments(a_moments: MomentSet,
                    threshold: float = 0.05) -> tuple[float, float]:
    """g2(0) = <A^dag A^dag A A> / <A^dag A>^2 with propagated error."""
    n1 = float(np.real(a_moments.values[1, 1]))
    if n1 <= threshold:
        raise UndefinedG2Error(
            f"<A^dag A> = {n1:.4f} below threshold {threshold}")
    n2 = float(np.real(a_moments.values[2, 2]))
    s1 = a_moments.error(1, 1)
    s2 = a_moments.error(2, 2)
    value = n2 / n1 ** 2
    err = np.hypot(s2 / n1 ** 2, 2.0 * n2 * s1 / n1 ** 3)
    return value, float(err)


# ---------------------------------------------------------------------------
# maximum-likelihood density matrix
# ---------------------------------------------------------------------------


@dataclass
class DensityMatrixEstimate:
    """Physical density matrix fitted to measured field moments."""

    n_max: int
    rho: np.ndarray
    fidelity: float | None
    g2: float | None
    g2_error: float | None
    residual: float
    converged: bool
    n_shots: int = 0

    def to_json(self) -> str:
        doc = {"schema_version": 1, "n_max": self.n_max,
               "rho_re": np.real(self.rho).tolist(),
               "rho_im": np.imag(self.rho).tolist(),
               "fidelity": self.fidelity, "g2": self.g2,
               "g2_error": self.g2_error, "residual": self.residual,
               "converged": self.converged, "n_shots": self.n_shots}
        return json.dumps(doc, indent=2, sort_keys=True)


def _unpack_lower(theta: np.ndarray, dim: int) -> np.ndarray:
    """Real parameter vector -> lower-triangular complex L (real diagonal)."""
    low = np.zeros((dim, dim), dtype=complex)
    low[np.diag_indices(dim)] = theta[:dim]
    k = dim
    for i in range(1, dim):
        for j in range(i):
            low[i, j] = theta[k] + 1j * theta[k + 1]
            k += 2
    return low


def _moment_operators(dim: int, max_order: int):
    """List of ((n, m), matrix of a^dag^n a^m) for 0 < n + m <= max_order."""
    a = np.diag(np.sqrt(np.arange(1, dim)), 1).astype(complex)
    a_pow = [np.eye(dim, dtype=complex)]
    for _ in range(max_order):
        a_pow.append(a_pow[-1] @ a)
    ops = []
    for n in range(max_order + 1):
        for m in range(max_order + 1 - n):
            if n == m == 0:
                continue
            ops.append(((n, m), a_pow[n].conj().T @ a_pow[m]))
    return ops


def mle_density_matrix(a_moments: MomentSet, n_max: int = 3,
                       target: np.ndarray | None = None,
                       *, g2_threshold: float = 0.05,
                       max_iterations: int = 2000) -> DensityMatrixEstimate:
    """Weighted least-squares fit of rho = L^dag L / Tr(L^dag L) to moments.

    The lower-triangular parametrization keeps rho positive semidefinite
    with unit trace by construction. Residuals are weighted by the inverse
    squared moment errors (floored so exact tables reduce to an unweighted
    fit); the optimizer runs L-BFGS-B with analytic gradients.

    Moment tomography at noise occupations around 10 needs on the order of
    1e6 shots: a 3-level rho is exactly identified by the moments through
    order 4, and the order-3/4 entries carry shot noise amplified by
    (N+1)^2. Well below that shot count those entries stop constraining the
    fit, and the returned matrix is one point of a statistically degenerate
    family (always physical, but its fine structure is noise).
    """
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    if a_moments.max_order < 4:
        raise ValueError("need moments through order 4")
    dim = n_max
    ops = _moment_operators(dim, a_moments.max_order)
    y = np.array([a_moments.values[nm] for nm, _ in ops])
    sig = np.array([max(a_moments.errors[nm], 1e-9) for nm, _ in ops])
    w = 1.0 / sig ** 2
    mats = np.array([op for _, op in ops])

    def cost_grad(theta):
        low = _unpack_lower(theta, dim)
        s = low.conj().T @ low
        t = np.real(np.trace(s))
        preds = np.einsum("ij,kji->k", s, mats) / t
        resid = preds - y
        cost = float(np.sum(w * np.abs(resid) ** 2))
        # d cost / d conj(L): Tr(L^dag L M) differentiates to (L M)
        grad_l = np.zeros((dim, dim), dtype=complex)
        for kk in range(len(ops)):
            m = mats[kk]
            dpred = (low @ m) / t - preds[kk] * low / t
            dpred_c = (low @ m.conj().T) / t - np.conj(preds[kk]) * low / t
            grad_l += w[kk] * (np.conj(resid[kk]) * dpred
                               + resid[kk] * dpred_c)
        grad = np.zeros_like(theta)
        grad[:dim] = 2.0 * np.real(np.diag(grad_l))
        k = dim
        for i in range(1, dim):
            for j in range(i):
                grad[k] = 2.0 * np.real(grad_l[i, j])
                grad[k + 1] = 2.0 * np.imag(grad_l[i, j])
                k += 2
        return cost, grad

    # start from the maximally mixed state nudged toward the measured
    # diagonal so the optimizer does not sit on a symmetry point
    theta0 = np.zeros(dim * dim)
    p1 = float(np.clip(np.real(a_moments.values[1, 1]), 0.0, 1.0))
    guess = np.sqrt(np.clip([1.0 - p1, p1] + [0.05] * (dim - 2), 0.02, None))
    theta0[:dim] = guess
    res = minimize(cost_grad, theta0, jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iterations, "ftol": 1e-14,
                            "gtol": 1e-12})
    if not res.success:
        warnings.warn(f"moment fit did not converge: {res.message}; "
                      f"residual {res.fun:.3e}")
    low = _unpack_lower(res.x, dim)
    s = low.conj().T @ low
    rho = s / np.real(np.trace(s))
    rho = 0.5 * (rho + rho.conj().T)

    fid = None
    if target is not None:
        target = np.asarray(target, dtype=complex)
        fid = float(np.real(target.conj() @ rho @ target))
    try:
        g2_val, g2_err = g2_from_moments(a_moments, g2_threshold)
    except UndefinedG2Error:
        g2_val = g2_err = None
    return DensityMatrixEstimate(n_max, rho, fid, g2_val, g2_err,
                                 float(res.fun), bool(res.success),
                                 a_moments.n_shots)


# ---------------------------------------------------------------------------
# end-to-end pipeline
# ---------------------------------------------------------------------------


@dataclass
class TomographyResult:
    """Everything produced by one simulated tomography run."""

    signal_histogram: Histogram
    reference_histogram: Histogram
    v_moments: MomentSet
    reference_moments: MomentSet
    a_moments: MomentSet
    noise_number: float
    estimate: DensityMatrixEstimate
    seed: int | None = None

    def summary_json(self) -> str:
        doc = {"schema_version": 1, "seed": self.seed,
               "n_shots": self.signal_histogram.n_shots,
               "noise_number": self.noise_number,
               "estimate": json.loads(self.estimate.to_json()),
               "signal_moments": json.loads(self.a_moments.to_json()),
               "v_moments": json.loads(self.v_moments.to_json()),
               "reference_moments":
                   json.loads(self.reference_moments.to_json())}
        return json.dumps(doc, indent=2, sort_keys=True)


def run_tomography(rho_signal: np.ndarray, noise: NoiseModel, n_shots: int,
                   *, seed: int | None = None, n_max: int = 3,
                   max_order: int = 4,
                   target: np.ndarray | None = None) -> TomographyResult:
    """Simulate the full chain: shots, reference shots, moments, MLE.

    The vacuum reference run uses an independent substream of the same seed,
    mirroring a separate calibration acquisition with the signal blocked.
    """
    root = np.random.SeedSequence(seed)
    sig_seed, ref_seed = [int(s.generate_state(1)[0]) for s in root.spawn(2)]
    vac = np.zeros((n_max, n_max), dtype=complex)
    vac[0, 0] = 1.0
    hist_sig = simulate_shots(rho_signal, noise, n_shots, seed=sig_seed)
    hist_ref = simulate_shots(vac, noise, n_shots, seed=ref_seed)
    v_mom = moments_from_histogram(hist_sig, max_order)
    ref_mom = moments_from_histogram(hist_ref, max_order)
    v_mom.check_hermitian()
    a_mom = deconvolve_moments(v_mom, ref_mom)
    big_n, _ = estimate_noise_number(ref_mom)
    est = mle_density_matrix(a_mom, n_max, target)
    return TomographyResult(hist_sig, hist_ref, v_mom, ref_mom, a_mom,
                            big_n, est, seed)
