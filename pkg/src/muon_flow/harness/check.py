"""Fast oracle checks behind ``muon-flow check``."""

import numpy as np

from .. import diagnostics, dynamics, spectral
from ..objectives import GatedMoE, MeanMatch, TeacherStudent, fd_force_check
from ..product import Ensemble


def _fenchel(rng):
    worst = 0.0
    for shape in ((2, 2), (8, 4), (16, 8)):
        P = rng.standard_normal((20,) + shape)
        for eps in (0.1, 1.0, 4.0):
            lhs = spectral.psi_eps(P, eps) + spectral.phi_eps(spectral.orth_eps(P, eps), eps)
            worst = max(worst, float(np.max(np.abs(lhs - spectral.dissipation_density(P, eps)))))
    return worst, worst <= 1e-9


def _svd_oracle(rng):
    P = rng.standard_normal((50, 8, 5))
    s = spectral.singular_values(P)
    ref = np.linalg.svd(P, compute_uv=False)
    err = float(np.max(np.abs(s - ref)))
    return err, err <= 1e-12


def _forces(rng):
    errs = []
    obj = MeanMatch(rng.standard_normal((4, 3)))
    errs.append(fd_force_check(obj, (rng.standard_normal((3, 4, 3)),)))
    X = rng.standard_normal((12, 5))
    ts = TeacherStudent.from_teacher(rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 4, 5)), X)
    errs.append(fd_force_check(ts, (rng.standard_normal((3, 3, 4)), rng.standard_normal((3, 4, 5)))))
    moe = GatedMoE(rng.standard_normal((10, 4)), rng.integers(0, 3, 10), 3)
    errs.append(fd_force_check(moe, (rng.standard_normal((3, 4, 3)), 0.3 * rng.standard_normal((3, 4, 1)))))
    worst = max(errs)
    return worst, worst <= 1e-6


def _dissipation(rng):
    obj = MeanMatch(rng.standard_normal((6, 4)) / 2.0)
    th = rng.standard_normal((5, 6, 4)) / 2.0
    ens = Ensemble((th,), (np.zeros_like(th),))
    traj = dynamics.integrate_rk4(obj, ens, 1.0, 1.0, 1e-3, 0.5)
    recs = [diagnostics.energies(obj, e, 1.0, 1.0) for e in traj]
    res = diagnostics.dissipation_residual(recs, 1.0)
    return res, res <= 1e-4 * max(1.0, abs(recs[0].H))


CHECKS = {
    "fenchel_equality": _fenchel,
    "jacobi_svd_vs_lapack": _svd_oracle,
    "force_finite_differences": _forces,
    "dissipation_identity": _dissipation,
}


def run_checks(seed=0, out=print):
    """Run every check; returns True when all pass."""
    ok = True
    for name, fn in CHECKS.items():
        value, passed = fn(np.random.default_rng(seed))
        ok &= bool(passed)
        out(f"{'PASS' if passed else 'FAIL'} {name}: {value:.3e}")
    return ok
