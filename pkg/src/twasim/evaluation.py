"""Logistic baseline, leave-one-subject-out testing, ROC metrics and tests."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import NamedTuple

import numpy as np
from scipy import stats
from scipy.special import expit

from .errors import DegenerateLabels, InvalidArgument, UndefinedMetric

log = logging.getLogger(__name__)

DEFAULT_L2 = 1e-3
L2_GRID = (1e-3, 1e-2, 1e-1, 1.0, 10.0)


@dataclass(frozen=True, eq=False)
class LogisticModel:
    weights: np.ndarray
    intercept: float
    converged: bool
    n_iter: int

    def decision(self, X):
        return np.asarray(X, dtype=np.float64) @ self.weights + self.intercept

    def predict_proba(self, X):
        return expit(self.decision(X))

    def predict(self, X):
        return self.predict_proba(X) >= 0.5


def _nll(theta, A, y, sw, l2):
    z = A @ theta
    # log(1 + e^z) - y z, computed stably
    return float(sw @ (np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * theta[1:] @ theta[1:])


def balanced_weights(labels):
    """Per-sample weights giving both classes equal total weight (mean 1)."""
    y = np.asarray(labels, dtype=bool)
    n_pos = np.count_nonzero(y)
    n_neg = y.size - n_pos
    return np.where(y, y.size / (2.0 * n_pos), y.size / (2.0 * n_neg))


def logistic_fit(features, labels, l2=DEFAULT_L2, max_iter=100, tol=1e-8, sample_weight=None):
    """L2-regularised logistic regression by Newton / IRLS with backtracking.

    The intercept is not penalised.  Converged when the max-norm of the
    gradient drops below ``tol``.  ``sample_weight`` may be an array or
    ``"balanced"``.
    """
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if X.shape[0] != np.size(labels):
        X = X.T if X.shape[1] == np.size(labels) else X
    y = np.asarray(labels, dtype=bool).astype(np.float64)
    if X.shape[0] != y.size:
        raise InvalidArgument("features and labels disagree in length")
    if not np.all(np.isfinite(X)):
        raise InvalidArgument("features must be finite")
    if y.min() == y.max():
        raise DegenerateLabels("logistic regression needs both classes")

    n, d = X.shape
    if sample_weight is None:
        sw = np.ones(n)
    elif isinstance(sample_weight, str):
        if sample_weight != "balanced":
            raise InvalidArgument("sample_weight must be an array or 'balanced'")
        sw = balanced_weights(y)
    else:
        sw = np.asarray(sample_weight, dtype=np.float64)
        if sw.shape != (n,) or np.any(sw < 0):
            raise InvalidArgument("sample_weight must be n non-negative values")
    A = np.hstack([np.ones((n, 1)), X])
    prior = (sw @ y) / sw.sum()
    theta = np.zeros(d + 1)
    theta[0] = np.log(prior / (1.0 - prior))
    reg = np.full(d + 1, l2)
    reg[0] = 0.0
    loss = _nll(theta, A, y, sw, l2)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(A @ theta)
        g = A.T @ (sw * (p - y)) + reg * theta
        if np.max(np.abs(g)) < tol:
            converged = True
            break
        w = sw * p * (1.0 - p)
        H = (A * w[:, None]).T @ A + np.diag(reg + 1e-12)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        while t > 1e-10:
            cand = theta - t * step
            new = _nll(cand, A, y, sw, l2)
            if new <= loss:
                break
            t *= 0.5
        else:
            converged = np.max(np.abs(g)) < np.sqrt(tol)
            break
        theta, loss = cand, new
    else:
        p = expit(A @ theta)
        converged = np.max(np.abs(A.T @ (sw * (p - y)) + reg * theta)) < tol
    return LogisticModel(theta[1:].copy(), float(theta[0]), bool(converged), it)


# -- leave-one-subject-out -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Subject:
    subject_id: str
    windows: np.ndarray
    label: bool

    def __post_init__(self):
        w = np.asarray(self.windows, dtype=np.float64)
        if w.ndim == 1:
            w = w[None, :] if w.size else w.reshape(0, 0)
        object.__setattr__(self, "windows", w)

    @property
    def n_windows(self):
        return self.windows.shape[0]


@dataclass(frozen=True)
class SubjectScore:
    subject_id: str
    score: float
    label: bool


@dataclass
class FoldTrace:
    held_out: str
    train_ids: list = field(default_factory=list)
    train_labels: list = field(default_factory=list)


def cohort_balance(subjects):
    """(majority label, fraction of windows each majority subject keeps).

    The fraction is the minority/majority subject ratio of the whole cohort,
    so a 12 vs 24 cohort keeps 25 of 50 windows.  Deriving it from the cohort
    rather than from each fold keeps the held-out subject's label from
    deciding which class gets thinned.
    """
    n_pos = sum(1 for s in subjects if s.label)
    n_neg = len(subjects) - n_pos
    if n_pos == n_neg or min(n_pos, n_neg) == 0:
        return None, 1.0
    return n_pos > n_neg, min(n_pos, n_neg) / max(n_pos, n_neg)


def _training_rows(train, rng, majority, keep_frac):
    rows, ids, labels = [], [], []
    for s in train:
        w = s.windows
        if majority is not None and s.label == majority and s.n_windows > 1:
            keep = int(np.ceil(keep_frac * s.n_windows))
            w = w[np.sort(rng.choice(s.n_windows, keep, replace=False))]
        rows.append(w)
        ids.extend([s.subject_id] * w.shape[0])
        labels.extend([s.label] * w.shape[0])
    return np.vstack(rows), np.array(labels, dtype=bool), ids


def _score(model, windows, how):
    p = model.predict_proba(windows)
    return float(np.mean(p)) if how == "probability" else float(np.mean(p >= 0.5))


def _log_loss(model, X, y):
    p = np.clip(model.predict_proba(X), 1e-12, 1 - 1e-12)
    return float(-np.mean(np.where(y, np.log(p), np.log1p(-p))))


def loot(subjects, trainer=None, score="fraction", balance=True, seed=0, mode="loot",
         val_frac=None, l2_grid=L2_GRID, workers=1, trace=None):
    """Leave-one-subject-out scores.

    Each subject is held out in turn; the model is trained on the others
    and the held-out score is the fraction of its windows classified
    positive (``score="probability"`` uses the mean predicted probability).
    When the cohort is class-imbalanced, every majority-class training
    subject contributes a random subset of its windows sized by the
    minority/majority ratio (see ``cohort_balance``).  The built-in trainer
    also weights the two classes equally within each fold, which removes
    the intercept tilt against the held-out subject's class.

    ``mode="loocv"`` picks the L2 weight from ``l2_grid`` by the log-loss on
    the held-out subject itself before scoring it, mirroring model selection
    on a validation subject; this is optimistic by construction.
    ``val_frac`` instead holds out that fraction of every training subject's
    windows for the same L2 selection.
    """
    if score not in ("fraction", "probability"):
        raise InvalidArgument("score must be 'fraction' or 'probability'")
    if mode not in ("loot", "loocv"):
        raise InvalidArgument("mode must be 'loot' or 'loocv'")
    kept = []
    for s in subjects:
        if s.n_windows == 0:
            log.warning("subject %s has no windows; excluded", s.subject_id)
        else:
            kept.append(s)
    if len(kept) < 2:
        raise InvalidArgument("LOOT needs at least two subjects with windows")
    if len({s.label for s in kept}) < 2:
        raise DegenerateLabels("LOOT needs both classes")
    selecting = mode == "loocv" or val_frac is not None
    if selecting and trainer is not None:
        raise InvalidArgument("L2 selection is only available with the built-in trainer")
    fit = partial(logistic_fit, sample_weight="balanced")
    trainer = trainer or partial(fit, l2=DEFAULT_L2)
    balance_rule = cohort_balance(kept) if balance else (None, 1.0)

    def fold(i):
        held = kept[i]
        rng = np.random.default_rng([seed, i])
        train = kept[:i] + kept[i + 1:]
        X, y, ids = _training_rows(train, rng, *balance_rule)
        if len(set(y.tolist())) < 2:
            raise DegenerateLabels(f"training fold without {held.subject_id} has one class")
        if mode == "loocv":
            models = [fit(X, y, l2=l2) for l2 in l2_grid]
            yh = np.full(held.n_windows, held.label)
            model = min(models, key=lambda m: _log_loss(m, held.windows, yh))
        elif val_frac is not None:
            val = np.zeros(y.size, dtype=bool)
            start = 0
            for s in train:
                n_rows = ids.count(s.subject_id)
                k = int(np.floor(val_frac * n_rows))
                if k:
                    val[start + rng.choice(n_rows, k, replace=False)] = True
                start += n_rows
            if val.any() and len(set(y[~val].tolist())) == 2:
                models = [fit(X[~val], y[~val], l2=l2) for l2 in l2_grid]
                best = min(range(len(models)), key=lambda j: _log_loss(models[j], X[val], y[val]))
                model = fit(X[~val], y[~val], l2=l2_grid[best])
            else:
                model = fit(X, y)
        else:
            model = trainer(X, y)
        ft = FoldTrace(held.subject_id, ids, y.tolist())
        return SubjectScore(held.subject_id, _score(model, held.windows, score), held.label), ft

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(fold, range(len(kept))))
    else:
        results = [fold(i) for i in range(len(kept))]
    if trace is not None:
        trace.extend(ft for _, ft in results)
    return [sc for sc, _ in results]


# -- ROC and metrics -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RocCurve:
    points: np.ndarray
    thresholds: np.ndarray
    auc: float

    @property
    def fpr(self):
        return self.points[:, 0]

    @property
    def tpr(self):
        return self.points[:, 1]


def _arrays(scores):
    s = np.array([x.score for x in scores], dtype=np.float64)
    y = np.array([x.label for x in scores], dtype=bool)
    return s, y


def roc_auc(scores):
    """ROC from a sweep over the distinct scores; trapezoidal area.

    A subject is called positive when its score is >= the threshold, so tied
    scores move both rates together and contribute half a pair each.
    """
    s, y = _arrays(scores)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("ROC needs both classes")
    thr = np.unique(s)[::-1]
    tp = np.array([np.count_nonzero(y & (s >= t)) for t in thr])
    fp = np.array([np.count_nonzero(~y & (s >= t)) for t in thr])
    fp0 = np.concatenate([[0], fp])
    tp0 = np.concatenate([[0], tp])
    # trapezoids in integer counts, one division at the end
    twice_area = int(np.sum(np.diff(fp0) * (tp0[1:] + tp0[:-1])))
    auc = twice_area / (2 * n_pos * n_neg)
    fpr, tpr = fp0 / n_neg, tp0 / n_pos
    return RocCurve(np.column_stack([fpr, tpr]), np.concatenate([[np.inf], thr]), auc)


class OperatingPoint(NamedTuple):
    fpr: float
    tpr: float
    threshold: float


def optimal_operating_point(roc):
    """Point where a slope-1 line lowered from (0, 1) first meets the curve.

    That is the point of largest tpr - fpr; ties go to the higher tpr.  When
    no point beats the diagonal the (0, 0) corner is returned, i.e. the
    all-negative classifier.
    """
    j = roc.tpr - roc.fpr
    best = j.max()
    if best <= 0:
        k = 0
    else:
        tied = np.flatnonzero(j == best)
        k = tied[np.argmax(roc.tpr[tied])]
    return OperatingPoint(float(roc.fpr[k]), float(roc.tpr[k]), float(roc.thresholds[k]))


@dataclass(frozen=True)
class Metrics:
    auc: float
    accuracy: float
    f1: float
    balanced_accuracy: float
    sensitivity: float
    specificity: float
    threshold: float = np.inf
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0


def summarize(scores, point):
    s, y = _arrays(scores)
    pred = s >= point.threshold
    tp = int(np.count_nonzero(pred & y))
    fp = int(np.count_nonzero(pred & ~y))
    tn = int(np.count_nonzero(~pred & ~y))
    fn = int(np.count_nonzero(~pred & y))
    sens = tp / (tp + fn) if tp + fn else 0.0
    spec = tn / (tn + fp) if tn + fp else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    auc = roc_auc(scores).auc if 0 < y.sum() < y.size else float("nan")
    return Metrics(auc, (tp + tn) / y.size, f1, (sens + spec) / 2.0, sens, spec,
                   float(point.threshold), tp, fp, tn, fn)


def evaluate_scores(scores):
    roc = roc_auc(scores)
    point = optimal_operating_point(roc)
    return roc, point, summarize(scores, point)


# -- statistical tests ---------------------------------------------------------


class PermutationResult(NamedTuple):
    observed: float
    null: np.ndarray
    p_value: float


def loot_auc(subjects, **kwargs):
    return roc_auc(loot(subjects, **kwargs)).auc


def permutation_significance(subjects, n_reps=100, rng=None, pipeline=loot_auc):
    """Observed AUC against AUCs obtained after assigning a random half of the
    subjects to the positive class, ``n_reps`` times."""
    if n_reps < 1:
        raise InvalidArgument("n_reps must be >= 1")
    subjects = list(subjects)
    n = len(subjects)
    if n < 2 or n % 2:
        raise InvalidArgument("an even split needs an even number (>= 2) of subjects")
    rng = np.random.default_rng(rng)
    observed = pipeline(subjects)
    null = np.empty(n_reps)
    for r in range(n_reps):
        pos = set(rng.choice(n, n // 2, replace=False).tolist())
        relabeled = [Subject(s.subject_id, s.windows, i in pos) for i, s in enumerate(subjects)]
        null[r] = pipeline(relabeled)
    return PermutationResult(observed, null, float(np.mean(null >= observed)))


class Chi2Result(NamedTuple):
    statistic: float
    p_value: float
    n: int


def chi2_independence(table):
    """Pearson chi-square test on a 2x2 table (no continuity correction)."""
    t = np.asarray(table, dtype=np.float64)
    if t.shape != (2, 2):
        raise InvalidArgument("need a 2x2 table")
    if np.any(t < 0):
        raise InvalidArgument("counts must be non-negative")
    rows, cols = t.sum(axis=1), t.sum(axis=0)
    if np.any(rows == 0) or np.any(cols == 0):
        raise InvalidArgument("all marginals must be > 0")
    n = t.sum()
    expected = np.outer(rows, cols) / n
    stat = float(np.sum((t - expected) ** 2 / expected))
    return Chi2Result(stat, float(stats.chi2.sf(stat, 1)), int(n))


def confusion_table(predicted, truth):
    """2x2 counts [[TP, FN], [FP, TN]] with rows = truth."""
    p = np.asarray(predicted, dtype=bool)
    t = np.asarray(truth, dtype=bool)
    return np.array([[np.sum(p & t), np.sum(~p & t)], [np.sum(p & ~t), np.sum(~p & ~t)]])
