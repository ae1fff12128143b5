"""Fixed-step RK4 integrators for the Lindblad equation, dense and small.

Two implementations of each kernel live here: a numba-jitted loop version
(the default) and a vectorized numpy twin used when numba is unavailable or
when PHOTONSHAPER_FORCE_NUMPY=1 is set. A test pins their trajectories
against each other.

Conventions shared by both:
  - rho is a dense complex (dim, dim) density matrix.
  - The coherent + damping drift enters through m(t) = m0 + u(t) a1m + v(t) a2m
    with rhs(rho) = m rho + (m rho)^dag + sum_k c_k rho c_k^dag; m0 already
    contains -i H_static - 1/2 sum rate_k c_k^dag c_k and the drive
    quadratures u, v are Re/Im of Omega(t) in GHz (the 2 pi lives in a1m/a2m).
    The Hermitian-conjugate trick for rho M^dag relies on rho staying
    Hermitian, which the Lindblad flow guarantees for every RK4 stage input.
  - Jump terms are sparse triplets: operator k owns rows jptr[k]:jptr[k+1] of
    (jdst, jsrc, jw) with c[jdst[p], jsrc[p]] = jw[p], applied pairwise.
  - u, v (and the mode function in the regression kernel) are sampled on the
    half-step grid t0 + j dt/2, j = 0 .. 2 n_steps, so every RK4 stage time
    is a sample point.
  - Time integrals (emitted photon number, drive excitation exchange, mode
    overlaps) are accumulated inside the step loop with the RK4 stage states
    and Simpson weights, consistent with the integrator's order.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["rk4_lindblad", "rk4_regression", "using_numba"]

_FORCE_NUMPY = os.environ.get("PHOTONSHAPER_FORCE_NUMPY", "") == "1"

try:  # pragma: no cover - import guard
    if _FORCE_NUMPY:
        raise ImportError("numpy twin forced by environment")
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


def using_numba() -> bool:
    return _HAVE_NUMBA


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _rhs_nb(m, rho, jdst, jsrc, jw, jptr, out):
        mr = np.dot(m, rho)
        dim = rho.shape[0]
        for i in range(dim):
            for j in range(dim):
                out[i, j] = mr[i, j] + np.conj(mr[j, i])
        for k in range(jptr.shape[0] - 1):
            for p in range(jptr[k], jptr[k + 1]):
                wp = jw[p]
                dp = jdst[p]
                sp = jsrc[p]
                for q in range(jptr[k], jptr[k + 1]):
                    out[dp, jdst[q]] += wp * np.conj(jw[q]) * rho[sp, jsrc[q]]

    @njit(cache=True, nogil=True)
    def _trace_sparse_nb(row, col, w, rho):
        # Tr(O rho) for O given as triplets O[row, col] = w
        acc = 0.0 + 0.0j
        for p in range(row.shape[0]):
            acc += w[p] * rho[col[p], row[p]]
        return acc

    @njit(cache=True, nogil=True)
    def _rk4_lindblad_nb(rho0, m0, a1m, a2m, u, v,
                         jdst, jsrc, jw, jptr,
                         arow, acol, aw, brow, bcol, bw,
                         pnum, kappa, dt, n_steps, stride, snap_steps):
        dim = rho0.shape[0]
        n_rec = n_steps // stride + 1
        aout = np.zeros(n_rec, np.complex128)
        bmean = np.zeros(n_rec, np.complex128)
        photon = np.zeros(n_rec, np.float64)
        diag = np.zeros((n_rec, dim), np.float64)
        n_snap = snap_steps.shape[0]
        snaps = np.zeros((n_snap, dim, dim), np.complex128)

        rho = rho0.copy()
        m = np.empty((dim, dim), np.complex128)
        y = np.empty((dim, dim), np.complex128)
        k1 = np.empty((dim, dim), np.complex128)
        k2 = np.empty((dim, dim), np.complex128)
        k3 = np.empty((dim, dim), np.complex128)
        k4 = np.empty((dim, dim), np.complex128)

        emitted = 0.0
        exchange = 0.0
        two_pi = 2.0 * np.pi
        rec = 0
        snap_i = 0

        for step in range(n_steps + 1):
            if step % stride == 0:
                aout[rec] = _trace_sparse_nb(arow, acol, aw, rho)
                bmean[rec] = _trace_sparse_nb(brow, bcol, bw, rho)
                ph = 0.0
                for d in range(dim):
                    diag[rec, d] = rho[d, d].real
                    ph += pnum[d] * rho[d, d].real
                photon[rec] = ph
                rec += 1
            while snap_i < n_snap and snap_steps[snap_i] == step:
                snaps[snap_i] = rho
                snap_i += 1
            if step == n_steps:
                break

            h = 2 * step  # half-grid index of the step start
            ph_acc = 0.0
            ex_acc = 0.0
            # stage 1 at t
            uu = u[h]
            vv = v[h]
            for i in range(dim):
                for j in range(dim):
                    m[i, j] = m0[i, j] + uu * a1m[i, j] + vv * a2m[i, j]
            _rhs_nb(m, rho, jdst, jsrc, jw, jptr, k1)
            ph = 0.0
            for d in range(dim):
                ph += pnum[d] * rho[d, d].real
            bm = _trace_sparse_nb(brow, bcol, bw, rho)
            ph_acc += ph
            ex_acc += -two_pi * (uu * bm.imag - vv * bm.real)
            # stages 2 and 3 at t + dt/2
            uu = u[h + 1]
            vv = v[h + 1]
            for i in range(dim):
                for j in range(dim):
                    m[i, j] = m0[i, j] + uu * a1m[i, j] + vv * a2m[i, j]
            for i in range(dim):
                for j in range(dim):
                    y[i, j] = rho[i, j] + 0.5 * dt * k1[i, j]
            _rhs_nb(m, y, jdst, jsrc, jw, jptr, k2)
            ph = 0.0
            for d in range(dim):
                ph += pnum[d] * y[d, d].real
            bm = _trace_sparse_nb(brow, bcol, bw, y)
            ph_acc += 2.0 * ph
            ex_acc += 2.0 * (-two_pi * (uu * bm.imag - vv * bm.real))
            for i in range(dim):
                for j in range(dim):
                    y[i, j] = rho[i, j] + 0.5 * dt * k2[i, j]
            _rhs_nb(m, y, jdst, jsrc, jw, jptr, k3)
            ph = 0.0
            for d in range(dim):
                ph += pnum[d] * y[d, d].real
            bm = _trace_sparse_nb(brow, bcol, bw, y)
            ph_acc += 2.0 * ph
            ex_acc += 2.0 * (-two_pi * (uu * bm.imag - vv * bm.real))
            # stage 4 at t + dt
            uu = u[h + 2]
            vv = v[h + 2]
            for i in range(dim):
                for j in range(dim):
                    m[i, j] = m0[i, j] + uu * a1m[i, j] + vv * a2m[i, j]
            for i in range(dim):
                for j in range(dim):
                    y[i, j] = rho[i, j] + dt * k3[i, j]
            _rhs_nb(m, y, jdst, jsrc, jw, jptr, k4)
            ph = 0.0
            for d in range(dim):
                ph += pnum[d] * y[d, d].real
            bm = _trace_sparse_nb(brow, bcol, bw, y)
            ph_acc += ph
            ex_acc += -two_pi * (uu * bm.imag - vv * bm.real)

            sixth = dt / 6.0
            for i in range(dim):
                for j in range(dim):
                    rho[i, j] += sixth * (k1[i, j] + 2.0 * k2[i, j]
                                          + 2.0 * k3[i, j] + k4[i, j])
            emitted += sixth * kappa * ph_acc
            exchange += sixth * ex_acc

        return aout, bmean, photon, diag, snaps, emitted, exchange, rho

    @njit(cache=True, nogil=True)
    def _rk4_regression_nb(rho0, m0, a1m, a2m, u, v, psi,
                           jdst, jsrc, jw, jptr,
                           arow, acol, aw,
                           sqkappa, dt, n_steps):
        # evolves rho together with the regression accumulator
        #   dS/dt = L(t) S + sqkappa psi(t) rho a^dag
        # and the overlap integrals
        #   overlap   = int sqkappa conj(psi) Tr(a S) dt      (-> <A^dag A> = 2 Re)
        #   mean_amp  = int sqkappa conj(psi) Tr(a rho) dt    (-> <A>)
        dim = rho0.shape[0]
        rho = rho0.copy()
        s = np.zeros((dim, dim), np.complex128)
        m = np.empty((dim, dim), np.complex128)
        mdag = np.empty((dim, dim), np.complex128)
        yr = np.empty((dim, dim), np.complex128)
        ys = np.empty((dim, dim), np.complex128)
        kr = [np.empty((dim, dim), np.complex128) for _ in range(4)]
        ks = [np.empty((dim, dim), np.complex128) for _ in range(4)]
        overlap = 0.0 + 0.0j
        mean_amp = 0.0 + 0.0j
        weights = (1.0, 2.0, 2.0, 1.0)

        for step in range(n_steps):
            h = 2 * step
            ov_acc = 0.0 + 0.0j
            am_acc = 0.0 + 0.0j
            for stage in range(4):
                if stage == 0:
                    hh = h
                    for i in range(dim):
                        for j in range(dim):
                            yr[i, j] = rho[i, j]
                            ys[i, j] = s[i, j]
                elif stage == 1:
                    hh = h + 1
                    for i in range(dim):
                        for j in range(dim):
                            yr[i, j] = rho[i, j] + 0.5 * dt * kr[0][i, j]
                            ys[i, j] = s[i, j] + 0.5 * dt * ks[0][i, j]
                elif stage == 2:
                    hh = h + 1
                    for i in range(dim):
                        for j in range(dim):
                            yr[i, j] = rho[i, j] + 0.5 * dt * kr[1][i, j]
                            ys[i, j] = s[i, j] + 0.5 * dt * ks[1][i, j]
                else:
                    hh = h + 2
                    for i in range(dim):
                        for j in range(dim):
                            yr[i, j] = rho[i, j] + dt * kr[2][i, j]
                            ys[i, j] = s[i, j] + dt * ks[2][i, j]
                uu = u[hh]
                vv = v[hh]
                pp = psi[hh]
                for i in range(dim):
                    for j in range(dim):
                        mm = m0[i, j] + uu * a1m[i, j] + vv * a2m[i, j]
                        m[i, j] = mm
                for i in range(dim):
                    for j in range(dim):
                        mdag[i, j] = np.conj(m[j, i])
                # rho stage derivative (Hermitian shortcut applies)
                _rhs_nb(m, yr, jdst, jsrc, jw, jptr, kr[stage])
                # S stage derivative: full m S + S mdag + jumps + source
                ms = np.dot(m, ys)
                smd = np.dot(ys, mdag)
                kk = ks[stage]
                for i in range(dim):
                    for j in range(dim):
                        kk[i, j] = ms[i, j] + smd[i, j]
                for k in range(jptr.shape[0] - 1):
                    for p in range(jptr[k], jptr[k + 1]):
                        wp = jw[p]
                        dp = jdst[p]
                        sp = jsrc[p]
                        for q in range(jptr[k], jptr[k + 1]):
                            kk[dp, jdst[q]] += wp * np.conj(jw[q]) * ys[sp, jsrc[q]]
                # source term sqkappa psi (yr a^dag)
                coeff = sqkappa * pp
                for p in range(arow.shape[0]):
                    wc = np.conj(aw[p])
                    jcol = arow[p]
                    scol = acol[p]
                    for i in range(dim):
                        kk[i, jcol] += coeff * yr[i, scol] * wc
                # overlap integrands
                tr_as = _trace_sparse_nb(arow, acol, aw, ys)
                tr_ar = _trace_sparse_nb(arow, acol, aw, yr)
                wgt = weights[stage]
                ov_acc += wgt * sqkappa * np.conj(pp) * tr_as
                am_acc += wgt * sqkappa * np.conj(pp) * tr_ar

            sixth = dt / 6.0
            for i in range(dim):
                for j in range(dim):
                    rho[i, j] += sixth * (kr[0][i, j] + 2.0 * kr[1][i, j]
                                          + 2.0 * kr[2][i, j] + kr[3][i, j])
                    s[i, j] += sixth * (ks[0][i, j] + 2.0 * ks[1][i, j]
                                        + 2.0 * ks[2][i, j] + ks[3][i, j])
            overlap += sixth * ov_acc
            mean_amp += sixth * am_acc

        return overlap, mean_amp, rho


# ---------------------------------------------------------------------------
# numpy twins
# ---------------------------------------------------------------------------

def _jump_terms(jdst, jsrc, jw, jptr):
    """Per-operator (dst-grid, src-grid, weight-matrix) for vectorized jumps."""
    terms = []
    for k in range(len(jptr) - 1):
        sl = slice(jptr[k], jptr[k + 1])
        d, s, w = jdst[sl], jsrc[sl], jw[sl]
        terms.append((np.ix_(d, d), np.ix_(s, s), np.outer(w, w.conj())))
    return terms


def _rhs_np(m, rho, terms):
    mr = m @ rho
    out = mr + mr.conj().T
    for ixd, ixs, w in terms:
        out[ixd] += w * rho[ixs]
    return out


def _rk4_lindblad_np(rho0, m0, a1m, a2m, u, v,
                     jdst, jsrc, jw, jptr,
                     arow, acol, aw, brow, bcol, bw,
                     pnum, kappa, dt, n_steps, stride, snap_steps):
    dim = rho0.shape[0]
    terms = _jump_terms(jdst, jsrc, jw, jptr)
    n_rec = n_steps // stride + 1
    aout = np.zeros(n_rec, np.complex128)
    bmean = np.zeros(n_rec, np.complex128)
    photon = np.zeros(n_rec, np.float64)
    diag = np.zeros((n_rec, dim), np.float64)
    snaps = np.zeros((len(snap_steps), dim, dim), np.complex128)

    def tr_sparse(row, col, w, r):
        return np.sum(w * r[col, row])

    rho = rho0.copy()
    emitted = 0.0
    exchange = 0.0
    two_pi = 2.0 * np.pi
    rec = 0
    snap_i = 0
    for step in range(n_steps + 1):
        if step % stride == 0:
            aout[rec] = tr_sparse(arow, acol, aw, rho)
            bmean[rec] = tr_sparse(brow, bcol, bw, rho)
            d = rho.diagonal().real
            diag[rec] = d
            photon[rec] = pnum @ d
            rec += 1
        while snap_i < len(snap_steps) and snap_steps[snap_i] == step:
            snaps[snap_i] = rho
            snap_i += 1
        if step == n_steps:
            break

        h = 2 * step
        ph_acc = 0.0
        ex_acc = 0.0
        stages = []
        y = rho
        for stage, (hh, wgt) in enumerate(((h, 1.0), (h + 1, 2.0), (h + 1, 2.0), (h + 2, 1.0))):
            if stage == 1:
                y = rho + 0.5 * dt * stages[0]
            elif stage == 2:
                y = rho + 0.5 * dt * stages[1]
            elif stage == 3:
                y = rho + dt * stages[2]
            m = m0 + u[hh] * a1m + v[hh] * a2m
            stages.append(_rhs_np(m, y, terms))
            ph_acc += wgt * (pnum @ y.diagonal().real)
            bm = tr_sparse(brow, bcol, bw, y)
            ex_acc += wgt * (-two_pi * (u[hh] * bm.imag - v[hh] * bm.real))
        rho = rho + (dt / 6.0) * (stages[0] + 2 * stages[1] + 2 * stages[2] + stages[3])
        emitted += (dt / 6.0) * kappa * ph_acc
        exchange += (dt / 6.0) * ex_acc

    return aout, bmean, photon, diag, snaps, emitted, exchange, rho


def _rk4_regression_np(rho0, m0, a1m, a2m, u, v, psi,
                       jdst, jsrc, jw, jptr,
                       arow, acol, aw,
                       sqkappa, dt, n_steps):
    dim = rho0.shape[0]
    terms = _jump_terms(jdst, jsrc, jw, jptr)
    adag = np.zeros((dim, dim), np.complex128)
    adag[acol, arow] = np.conj(aw)

    def tr_a(r):
        return np.sum(aw * r[acol, arow])

    rho = rho0.copy()
    s = np.zeros((dim, dim), np.complex128)
    overlap = 0.0 + 0.0j
    mean_amp = 0.0 + 0.0j
    for step in range(n_steps):
        h = 2 * step
        kr = []
        ks = []
        ov_acc = 0.0 + 0.0j
        am_acc = 0.0 + 0.0j
        for stage, (hh, wgt) in enumerate(((h, 1.0), (h + 1, 2.0), (h + 1, 2.0), (h + 2, 1.0))):
            if stage == 0:
                yr, ys = rho, s
            elif stage == 3:
                yr = rho + dt * kr[2]
                ys = s + dt * ks[2]
            else:
                yr = rho + 0.5 * dt * kr[stage - 1]
                ys = s + 0.5 * dt * ks[stage - 1]
            m = m0 + u[hh] * a1m + v[hh] * a2m
            kr.append(_rhs_np(m, yr, terms))
            ds = m @ ys + ys @ m.conj().T
            for ixd, ixs, w in terms:
                ds[ixd] += w * ys[ixs]
            ds += (sqkappa * psi[hh]) * (yr @ adag)
            ks.append(ds)
            ov_acc += wgt * sqkappa * np.conj(psi[hh]) * tr_a(ys)
            am_acc += wgt * sqkappa * np.conj(psi[hh]) * tr_a(yr)
        rho = rho + (dt / 6.0) * (kr[0] + 2 * kr[1] + 2 * kr[2] + kr[3])
        s = s + (dt / 6.0) * (ks[0] + 2 * ks[1] + 2 * ks[2] + ks[3])
        overlap += (dt / 6.0) * ov_acc
        mean_amp += (dt / 6.0) * am_acc
    return overlap, mean_amp, rho


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def rk4_lindblad(rho0, m0, a1m, a2m, u, v, jdst, jsrc, jw, jptr,
                 arow, acol, aw, brow, bcol, bw,
                 pnum, kappa, dt, n_steps, stride, snap_steps):
    """Propagate rho over n_steps of dt, recording every `stride` steps.

    Returns (aout, bmean, photon, diag, snaps, emitted, exchange, rho_final)
    where aout/bmean are <a>/<b> series, photon is <a^dag a>, diag the basis
    populations, snaps the density matrices at snap_steps, emitted the
    kappa-weighted time integral of <a^dag a> and exchange the net excitation
    the drive exchanged with the system.
    """
    impl = _rk4_lindblad_nb if _HAVE_NUMBA else _rk4_lindblad_np
    return impl(rho0, m0, a1m, a2m, u, v, jdst, jsrc, jw, jptr,
                arow, acol, aw, brow, bcol, bw,
                pnum, kappa, dt, n_steps, stride, snap_steps)


def rk4_regression(rho0, m0, a1m, a2m, u, v, psi, jdst, jsrc, jw, jptr,
                   arow, acol, aw, sqkappa, dt, n_steps):
    """Two-time-correlation pass for a temporal mode psi (half-grid samples).

    Implements the quantum regression theorem for the filtered output mode
    A = int conj(psi) sqrt(kappa) a(t) dt: evolves the accumulator
    S(t) = int_0^t psi(t') E(t,t')[rho(t') a^dag] dt' alongside rho and
    returns (overlap, mean_amp, rho_final) with <A^dag A> = 2 Re(overlap)
    and <A> = mean_amp. psi must be expressed in the same rotating frame as
    the simulation and normalized to unit square integral.
    """
    impl = _rk4_regression_nb if _HAVE_NUMBA else _rk4_regression_np
    return impl(rho0, m0, a1m, a2m, u, v, psi, jdst, jsrc, jw, jptr,
                arow, acol, aw, sqkappa, dt, n_steps)
