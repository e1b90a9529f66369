"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def laplacian(v, hx, hy, out):
    ihx2 = 1.0 / (hx * hx)
    ihy2 = 1.0 / (hy * hy)
    p = np.pad(v, 1, mode="edge")
    tx = (p[2:, 1:-1] - 2.0 * v) + p[:-2, 1:-1]
    ty = (p[1:-1, 2:] - 2.0 * v) + p[1:-1, :-2]
    np.add(tx * ihx2, ty * ihy2, out=out)
    return out


def fitzhugh_advance(u, v, beta, sigma, delta, rho, gamma, dt, hx, hy, nsteps,
                     u_ref, v_ref, du_out, dv_out, blowup):
    track = du_out.shape[0] > 0
    lap = np.empty_like(v)
    for k in range(nsteps):
        laplacian(v, hx, hy, lap)
        fu = u * (1.0 - u) * (u - beta) - v
        gv = (sigma * u - delta * v) - rho
        un = u + dt * fu
        vn = v + dt * (gamma * lap + gv)
        bad = ~(np.isfinite(un) & np.isfinite(vn)) | (np.abs(un) > blowup) | (np.abs(vn) > blowup)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            return k, int(i), int(j)
        u[...] = un
        v[...] = vn
        if track:
            du_out[k] = np.max(np.abs(u - u_ref))
            dv_out[k] = np.max(np.abs(v - v_ref))
    return nsteps, -1, -1
