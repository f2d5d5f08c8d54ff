import numpy as np
import pytest

from vprd import _kernels

ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


def record(criterion: str, ok: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS[criterion] = (bool(ok), detail)
    print(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


KERNEL_PAIRS = {
    "smooth_reflect": (_kernels.smooth_reflect_nb, _kernels.smooth_reflect_np),
    "otsu_best_edge": (_kernels.otsu_best_edge_nb, _kernels.otsu_best_edge_np),
    "signed_rank_counts": (_kernels.signed_rank_counts_nb, _kernels.signed_rank_counts_np),
}


@pytest.fixture(params=["numba", "numpy"])
def kernel_backend(request, monkeypatch):
    """Run a test once with each kernel implementation wired in."""
    idx = 0 if request.param == "numba" else 1
    for name, pair in KERNEL_PAIRS.items():
        monkeypatch.setattr(_kernels, name, pair[idx])
    return request.param
