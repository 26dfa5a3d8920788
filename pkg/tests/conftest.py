import numpy as np
import pytest

from longitrack.records import CaseRecord, LesionPrompt
from longitrack.volgrid import Volume3


def make_case(shape=(32, 32, 32), lesions=((1, (16, 16, 16), (16, 16, 16)),), spacing=(1.0, 1.0, 1.0),
              radius=3, pid="0123456789", background=-1000.0, lesion_hu=100.0):
    """Noise-free case with spherical lesions of ``radius`` around each center."""
    zz, yy, xx = np.ogrid[: shape[0], : shape[1], : shape[2]]
    gt_bl = np.zeros(shape, np.uint16)
    gt_fu = np.zeros(shape, np.uint16)
    prompts = []
    for lid, cb, cf in lesions:
        for gt, c in ((gt_bl, cb), (gt_fu, cf)):
            ball = (zz - c[0]) ** 2 + (yy - c[1]) ** 2 + (xx - c[2]) ** 2 <= radius ** 2
            gt[ball] = lid
        prompts.append(LesionPrompt(lid, cb, cf))
    img_bl = np.where(gt_bl > 0, lesion_hu, background).astype(np.float32)
    img_fu = np.where(gt_fu > 0, lesion_hu, background).astype(np.float32)
    return CaseRecord(pid, Volume3(img_bl, spacing), Volume3(img_fu, spacing), prompts,
                      Volume3(gt_bl, spacing), Volume3(gt_fu, spacing))


@pytest.fixture
def case():
    return make_case()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def report(criterion, ok, detail):
    """Record one acceptance line; the terminal summary prints them all."""
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    print(ACCEPTANCE_LINES[-1])
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
