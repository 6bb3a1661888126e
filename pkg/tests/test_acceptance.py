"""Acceptance criteria, one test and one PASS/FAIL line per criterion.

Run ``pytest tests/test_acceptance.py -v`` (lines are printed even when
output is captured) or ``python tests/test_acceptance.py``.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg as la
from scipy import stats

from substruct.cli import cmd_bench
from substruct.cms_cb import cb_assemble, cb_couple, cb_eigenvalues, cb_reduce
from substruct.cms_dcb import dcb_assemble, dcb_couple, dcb_eigenvalues, dcb_reduce, generalized_inverse
from substruct.config import ExperimentConfig
from substruct.modal import generalized_eig, mac_matrix, match_modes
from substruct.model import apply_damage, build_tower_model, damaged_full_model, full_assemble, global_layout
from substruct.spectral import count_rigid_modes
from substruct.updating import (
    GaussianPrior,
    LikelihoodSpec,
    ModalLikelihood,
    PriorSpec,
    TmcmcConfig,
    posterior_summary,
    synthesize_data,
    tmcmc,
)

# criterion 1 regression bounds, frozen from the first oracle run
# (measured 3.118e-3 and 2.283e-4 maximum first-10 eigenvalue error)
CB_EIG_REGRESSION = 3.2e-3
DCB_EIG_REGRESSION = 2.35e-4


class Report:
    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.checks = []

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))

    def emit(self, capsys=None):
        failed = [c for c in self.checks if not c[1]]
        status = "FAIL" if failed else "PASS"
        details = "; ".join(f"{n} {d}".strip() + ("" if ok else " [fail]") for n, ok, d in self.checks)
        line = f"criterion {self.number} {status}: {self.title} | {details}"
        if capsys is not None:
            with capsys.disabled():
                print("\n" + line)
        else:
            print(line)
        assert not failed, line


@pytest.fixture(scope="module")
def tower():
    return build_tower_model()


@pytest.fixture(scope="module")
def full(tower):
    M, K = full_assemble(*tower)
    return generalized_eig(K, M, 10, global_layout(*tower).dof_labels)


def rel(a, b):
    return np.abs(np.asarray(a) - np.asarray(b)) / np.abs(np.asarray(b))


def criterion_1(tower, full):
    r = Report(1, "reduction fidelity, 10+10 modes vs 240-DOF model")
    start = time.perf_counter()
    lower, upper, interface = tower
    err, mac = {}, {}
    for name, assembly in (
        ("CB", cb_couple(cb_reduce(lower, 10), cb_reduce(upper, 10), interface)),
        ("DCB", dcb_couple(dcb_reduce(lower, 10), dcb_reduce(upper, 10), interface)),
    ):
        modes = assembly.at((1.0, 1.0)).physical_modes(14)
        modes = modes.take(match_modes(full, modes).permutation)
        err[name] = rel(modes.eigenvalues, full.eigenvalues)
        mac[name] = np.diag(mac_matrix(modes.mode_shapes, full.mode_shapes))
    elapsed = time.perf_counter() - start
    r.check("CB max eig err <= 1e-3:", err["CB"].max() <= 1e-3, f"{err['CB'].max():.3e}")
    r.check("DCB max eig err <= 1e-4:", err["DCB"].max() <= 1e-4, f"{err['DCB'].max():.3e}")
    r.check("min MAC >= 0.999:", min(mac["CB"].min(), mac["DCB"].min()) >= 0.999,
            f"CB {mac['CB'].min():.6f}, DCB {mac['DCB'].min():.6f}")
    r.check("DCB <= CB every mode:", np.all(err["DCB"] <= err["CB"]))
    r.check("regression CB <= 3.2e-3, DCB <= 2.35e-4:",
            err["CB"].max() <= CB_EIG_REGRESSION and err["DCB"].max() <= DCB_EIG_REGRESSION)
    r.check("runtime < 10 s:", elapsed < 10, f"{elapsed:.2f} s")
    return r


def criterion_2(tower):
    r = Report(2, "theta-parameterised assembly vs from-scratch reduction")
    start = time.perf_counter()
    lower, upper, interface = tower
    cb = cb_couple(cb_reduce(lower, 10), cb_reduce(upper, 10), interface)
    dcb = dcb_couple(dcb_reduce(lower, 10), dcb_reduce(upper, 10), interface)
    grid = (0.5, 0.75, 1.0, 1.25)
    worst = {"CB": 0.0, "DCB": 0.0}
    n_checks = 0
    for t1 in grid:
        for t2 in grid:
            d1, d2 = apply_damage(lower, t1), apply_damage(upper, t2)
            fresh = cb_eigenvalues(cb_assemble(cb_reduce(d1, 10), cb_reduce(d2, 10), interface, (1, 1)), 10)
            got = cb.at((t1, t2)).eigenpairs(10)
            worst["CB"] = max(worst["CB"], rel(got.eigenvalues, fresh.eigenvalues).max())
            fresh = dcb_eigenvalues(dcb_assemble(dcb_reduce(d1, 10), dcb_reduce(d2, 10), interface, (1, 1)), 10)
            got = dcb.at((t1, t2)).eigenpairs(10)
            worst["DCB"] = max(worst["DCB"], rel(got.eigenvalues, fresh.eigenvalues).max())
            n_checks += 2
    elapsed = time.perf_counter() - start
    r.check("CB <= 1e-10:", worst["CB"] <= 1e-10, f"{worst['CB']:.2e}")
    r.check("DCB <= 1e-8:", worst["DCB"] <= 1e-8, f"{worst['DCB']:.2e}")
    r.check("checks:", n_checks == 32, str(n_checks))
    r.check("runtime < 30 s:", elapsed < 30, f"{elapsed:.2f} s")
    return r


def criterion_3(tower):
    r = Report(3, "(theta K)^+ = K^+ / theta, spectral")
    worst = 0.0
    for sub in tower[:2]:
        base = generalized_inverse(sub.stiffness, sub.mass)
        for theta in (0.5, 2.0):
            scaled = generalized_inverse(theta * sub.stiffness, sub.mass)
            worst = max(worst, la.norm(scaled - base / theta) / la.norm(base / theta))
    r.check("max relative difference <= 1e-10:", worst <= 1e-10, f"{worst:.2e}")
    return r


def criterion_4(tower):
    r = Report(4, "identification of three damage states, CB and DCB, 1000 samples/stage")
    start = time.perf_counter()
    lower, upper, interface = tower
    assemblies = {
        "CB": cb_couple(cb_reduce(lower, 10), cb_reduce(upper, 10), interface),
        "DCB": dcb_couple(dcb_reduce(lower, 10), dcb_reduce(upper, 10), interface),
    }
    config = TmcmcConfig(n_samples=1000, seed=ExperimentConfig().seed)
    for truth in ((1.0, 0.75), (0.75, 1.0), (0.75, 0.75)):
        data = synthesize_data(lower, upper, interface, truth, 10)
        for name, assembly in assemblies.items():
            like = ModalLikelihood(LikelihoodSpec(data, reduction_method=name), assembly)
            result = tmcmc(PriorSpec(), like, config)
            summary = posterior_summary(result.final)
            j_map = like.objective(summary.map)
            mean = summary.mean
            r.check(f"{name} {truth}: mean within 0.05 and J_MAP <= 1e-3:",
                    np.all(np.abs(mean - truth) <= 0.05) and j_map <= 1e-3,
                    f"({mean[0]:.4f}, {mean[1]:.4f}), {j_map:.1e}")
    elapsed = time.perf_counter() - start
    r.check("runtime < 15 min:", elapsed < 900, f"{elapsed:.1f} s")
    return r


def criterion_5():
    r = Report(5, "TMCMC correctness")
    start = time.perf_counter()
    m0, s0 = np.zeros(2), np.array([[4.0, 1.0], [1.0, 3.0]])
    d, sl = np.array([2.0, 1.5]), np.array([[0.09, 0.03], [0.03, 0.16]])
    sl_inv = np.linalg.inv(sl)
    log_norm = -0.5 * np.log(np.linalg.det(2 * np.pi * sl))

    def log_like(theta):
        res = np.asarray(theta) - d
        return float(-0.5 * res @ sl_inv @ res + log_norm)

    cov = np.linalg.inv(np.linalg.inv(s0) + sl_inv)
    mean = cov @ (np.linalg.solve(s0, m0) + sl_inv @ d)
    log_z = stats.multivariate_normal(m0, s0 + sl).logpdf(d)
    result = tmcmc(GaussianPrior(tuple(m0), tuple(map(tuple, s0))), log_like, TmcmcConfig(n_samples=5000, seed=0))
    theta = result.final.theta
    mean_err = np.max(np.abs(theta.mean(axis=0) / mean - 1))
    cov_err = la.norm(np.cov(theta.T) - cov) / la.norm(cov)
    z_err = abs(result.log_evidence - log_z)
    r.check("Gaussian mean <= 5%:", mean_err <= 0.05, f"{mean_err:.3%}")
    r.check("covariance <= 10%:", cov_err <= 0.10, f"{cov_err:.2%}")
    r.check("log evidence <= 0.1:", z_err <= 0.1, f"{z_err:.3f}")

    flat = tmcmc(PriorSpec(), lambda t: -3.0, TmcmcConfig(n_samples=1000, seed=0))
    cdf = stats.lognorm(s=0.5, scale=math.exp(-0.125)).cdf
    ks = max(stats.kstest(flat.final.theta[:, k], cdf).statistic for k in range(2))
    r.check("constant likelihood KS < 0.05:", ks < 0.05, f"{ks:.4f}")
    elapsed = time.perf_counter() - start
    r.check("runtime < 1 min:", elapsed < 60, f"{elapsed:.1f} s")
    return r


def criterion_6(tower, full):
    r = Report(6, "exactness suite")
    lower, upper, interface = tower
    M, K = damaged_full_model(lower, upper, interface, (0.75, 0.75))
    scaled = generalized_eig(K, M, 10).eigenvalues
    worst_full = rel(scaled, 0.75 * full.eigenvalues).max()
    r.check("uniform damage, full model <= 1e-10:", worst_full <= 1e-10, f"{worst_full:.2e}")
    cb = cb_couple(cb_reduce(lower, 10), cb_reduce(upper, 10), interface)
    dcb = dcb_couple(dcb_reduce(lower, 10), dcb_reduce(upper, 10), interface)
    worst_red = max(
        rel(a.at((0.75, 0.75)).eigenpairs(10).eigenvalues, 0.75 * a.at((1, 1)).eigenpairs(10).eigenvalues).max()
        for a in (cb, dcb)
    )
    r.check("uniform damage, CB and DCB <= 1e-10:", worst_red <= 1e-10, f"{worst_red:.2e}")

    phi = full.mode_shapes
    inv = max(np.abs(np.diag(mac_matrix(phi, c * phi)) - 1).max() for c in (-1.0, -2.0, 3.7, 1e-3))
    r.check("MAC scale/sign invariance <= 1e-12:", inv <= 1e-12, f"{inv:.1e}")

    worst_lossless = 0.0
    for a in (cb_couple(cb_reduce(lower, 114), cb_reduce(upper, 120), interface),
              dcb_couple(dcb_reduce(lower, 120), dcb_reduce(upper, 120), interface)):
        lam = a.at((1.0, 1.0)).eigenpairs(10).eigenvalues
        worst_lossless = max(worst_lossless, rel(lam, full.eigenvalues).max())
    r.check("lossless CB and DCB <= 1e-9:", worst_lossless <= 1e-9, f"{worst_lossless:.2e}")

    n_rbm = count_rigid_modes(la.eigh(upper.stiffness, upper.mass, eigvals_only=True))
    r.check("free-free rigid modes = 6:", n_rbm == 6, str(n_rbm))
    return r


def criterion_7(tmp_path):
    r = Report(7, "benchmark sanity")
    config = ExperimentConfig(output_dir=str(tmp_path))
    report = cmd_bench(config, iterations=20)
    for name, entry in report["methods"].items():
        r.check(f"{name} speedup > 1:", entry["speedup"] > 1, f"{entry['speedup']}")
    return r


def test_criterion_1_fidelity(tower, full, capsys):
    criterion_1(tower, full).emit(capsys)


def test_criterion_2_theta_invariance(tower, capsys):
    criterion_2(tower).emit(capsys)


def test_criterion_3_inverse_scaling(tower, capsys):
    criterion_3(tower).emit(capsys)


def test_criterion_4_identification(tower, capsys):
    criterion_4(tower).emit(capsys)


def test_criterion_5_tmcmc(capsys):
    criterion_5().emit(capsys)


def test_criterion_6_exactness(tower, full, capsys):
    criterion_6(tower, full).emit(capsys)


def test_criterion_7_benchmark(tmp_path, capsys):
    criterion_7(tmp_path).emit(capsys)


if __name__ == "__main__":
    import tempfile

    model = build_tower_model()
    M, K = full_assemble(*model)
    reference = generalized_eig(K, M, 10, global_layout(*model).dof_labels)
    runs = [
        lambda: criterion_1(model, reference),
        lambda: criterion_2(model),
        lambda: criterion_3(model),
        lambda: criterion_4(model),
        criterion_5,
        lambda: criterion_6(model, reference),
        lambda: criterion_7(Path(tempfile.mkdtemp())),
    ]
    failures = 0
    for run in runs:
        try:
            run().emit()
        except AssertionError:
            failures += 1
    sys.exit(1 if failures else 0)
