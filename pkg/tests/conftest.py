import os

import numpy as np
import pytest
import torch

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_pr_points(scores, labels):
    """Operating points by direct counting at every distinct score (O(n^2))."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels) != 0
    n_pos = labels.sum()
    pts = []
    for t in sorted(set(scores.tolist()), reverse=True):
        flagged = scores >= t
        tp = np.sum(flagged & labels)
        fp = np.sum(flagged & ~labels)
        pts.append((tp / n_pos, tp / (tp + fp)))
    return pts


def brute_pr_auc(scores, labels):
    pts = brute_pr_points(scores, labels)
    r_prev, p_prev = 0.0, pts[0][1]
    area = 0.0
    for r, p in pts:
        area += (r - r_prev) * (p + p_prev) / 2
        r_prev, p_prev = r, p
    return area


def brute_macro_f1(pred, labels):
    pred = np.asarray(pred) != 0
    labels = np.asarray(labels) != 0

    def f1(p, y):
        tp = np.sum(p & y)
        den = 2 * tp + np.sum(p & ~y) + np.sum(~p & y)
        return 0.0 if den == 0 else 2 * tp / den

    return (f1(pred, labels) + f1(~pred, ~labels)) / 2


def brute_best_threshold(scores, labels):
    """Sweep every candidate (distinct-score midpoints and +/-inf) directly."""
    s = sorted(set(np.asarray(scores, dtype=float).tolist()))
    cands = [np.inf] + [(a + b) / 2 for a, b in zip(s[1:][::-1], s[:-1][::-1])] + [-np.inf]
    best_t, best_f = None, -1.0
    for t in cands:  # descending, so strict > keeps the larger threshold on ties
        f = brute_macro_f1(np.asarray(scores) > t, labels)
        if f > best_f:
            best_t, best_f = t, f
    return best_t, best_f


def fast_mode():
    return os.environ.get("GRAPHIDS_FAST_TESTS", "") == "1"


# --- acceptance reporting ----------------------------------------------------
# Tests marked ``criterion(n, title)`` get one PASS/FAIL line in the terminal
# summary; a test may attach a short detail via ``record_property("detail", ...)``.

_CRITERIA = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else "error"
    _CRITERIA.append((mark.args[0], mark.args[1], "PASS" if rep.passed else "FAIL", detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n, title, status, detail in sorted(_CRITERIA):
        terminalreporter.write_line(f"criterion {n} {status}: {title}" + (f" ({detail})" if detail else ""))
