"""Robustness measures and attack-quality rates.

Four views of robustness, from exact-ish to cheap:
  * empirical radius bracket (bisection over a PGD falsifier),
  * linearized per-sample radius (logit gap over dual-norm gradient gap),
  * adversarial accuracy at a fixed budget (PGD),
  * a distributional gap/gradient ratio over a whole dataset.

Rates compare a base net against an attacked one: the fraction of clean
accuracy retained times the fraction of robustness destroyed, with an attack
declared failed when it costs too much accuracy.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .attack import PgdConfig, pgd_flips_batch
from .data import LabeledDataset
from .mlp import ModelParams, classify_batch, forward, input_jacobian

INF_SENTINEL_TOL = 1e-12  # gradient-gap norms below this count as "no gradient"


def accuracy(params: ModelParams, ds: LabeledDataset) -> float:
    return float((classify_batch(params, ds.X) == ds.y).mean())


def adversarial_accuracy(params: ModelParams, ds: LabeledDataset, pgd: PgdConfig, seed=0) -> float:
    """Fraction of samples that are clean-correct and survive PGD at pgd.eps.

    A sample counts as robust only if no PGD iterate (the clean point
    included) changes its label, so eps = 0 reproduces clean accuracy.
    """
    flipped = pgd_flips_batch(params, ds.X, ds.y, pgd, seed=seed)
    correct = classify_batch(params, ds.X) == ds.y
    return float((correct & ~flipped).mean())


def robust_radius_bracket(params: ModelParams, x: np.ndarray, label: int,
                          pgd_steps: int = 40, tol: float = 1e-3, seed=0) -> tuple[float, float]:
    """Empirical bracket (lo, hi) on the L-infinity robustness radius.

    Bisects the budget with a PGD falsifier: hi is a radius where a label
    flip was found, lo one where the search failed.  Since inputs live in
    [0,1]^n, the search caps at radius 1; if even that finds nothing the
    bracket is (1.0, inf).  A misclassified x gives (0.0, 0.0).  The lower
    end is heuristic (PGD can miss), the upper end is a certificate.
    """
    x = np.asarray(x, dtype=np.float64)
    X1, y1 = x[None, :], np.array([label])

    def flips(eps):
        cfg = PgdConfig(eps=eps, steps=pgd_steps)
        return bool(pgd_flips_batch(params, X1, y1, cfg, seed=seed)[0])

    if flips(0.0):  # clean point already mislabeled
        return 0.0, 0.0
    if not flips(1.0):
        return 1.0, math.inf
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if flips(mid):
            hi = mid
        else:
            lo = mid
    return lo, hi


def _dual_exponent(p: float) -> float:
    if p == math.inf:
        return 1.0
    if p == 1.0:
        return math.inf
    if p <= 1.0:
        raise ValueError("p must be in [1, inf]")
    return p / (p - 1.0)


def approx_radius(params: ModelParams, x: np.ndarray, label: int, p: float = math.inf) -> float:
    """First-order robustness radius for an L_p input adversary.

    min over other classes of (logit gap) / (dual-norm gradient gap), gated
    to 0 when the gap is not positive; a misclassified sample scores 0.  A
    vanishing gradient gap with a positive logit gap returns inf (the
    linearization sees no way to flip that class).
    """
    x = np.asarray(x, dtype=np.float64)
    tr = forward(params, x)
    F = tr.logits
    if int(np.argmax(F)) != label:
        return 0.0
    q = _dual_exponent(p)
    jac = input_jacobian(params, x).jacobian
    best = math.inf
    for l in range(params.output_dim):
        if l == label:
            continue
        gap = F[label] - F[l]
        if gap <= 0.0:
            return 0.0
        gd = jac[label] - jac[l]
        denom = float(np.linalg.norm(gd, ord=q)) if q != math.inf else float(np.abs(gd).max())
        if denom < INF_SENTINEL_TOL:
            continue  # this class is unreachable to first order
        best = min(best, gap / denom)
    return best


def margin_measure(params: ModelParams, x: np.ndarray, label: int) -> float:
    """Squared first-order margin: min over classes of gap^2 / ||grad gap||_2^2."""
    r = approx_radius(params, x, label, p=2.0)
    return r * r if math.isfinite(r) else math.inf


def radius_profile(params: ModelParams, ds: LabeledDataset, p: float = math.inf):
    """Per-sample linearized radii plus the count of inf sentinels."""
    radii = np.array([approx_radius(params, x, int(y), p=p) for x, y in zip(ds.X, ds.y)])
    n_inf = int(np.isinf(radii).sum())
    return radii, n_inf


def avg_approx_radius(params: ModelParams, ds: LabeledDataset, p: float = math.inf) -> float:
    """Mean linearized radius; misclassified samples contribute 0, inf
    sentinels are left out of the mean (inf if every sample is a sentinel)."""
    radii, n_inf = radius_profile(params, ds, p=p)
    finite = radii[np.isfinite(radii)]
    if finite.size == 0:
        return math.inf
    return float(finite.mean())


def dist_robust_measure(params: ModelParams, ds: LabeledDataset) -> float:
    """Distributional robustness: mean gated squared margin over mean squared
    worst-case gradient gap (ratio of means; nan when the denominator is 0)."""
    nums, dens = [], []
    for x, label in zip(ds.X, ds.y):
        tr = forward(params, x)
        F = tr.logits
        jac = input_jacobian(params, x).jacobian
        terms, gnorms = [], []
        for l in range(params.output_dim):
            if l == int(label):
                continue
            gap = F[label] - F[l]
            terms.append(gap * gap if gap > 0 else 0.0)
            gd = jac[label] - jac[l]
            gnorms.append(float(gd @ gd))
        nums.append(min(terms))
        dens.append(max(gnorms))
    den = float(np.mean(dens))
    if den == 0.0:
        return math.nan
    return float(np.mean(nums)) / den


# ---------------------------------------------------------------------------
# rates


@dataclass
class RateInputs:
    """Accuracy/robustness of the base net and its attacked counterpart.

    ``att_aux`` carries the third ratio of the targeted rates: adversarial
    accuracy on the target label (label attack) or clean accuracy on the
    target label (direct attack).
    """

    base_acc: float
    base_rob: float
    att_acc: float
    att_rob: float
    att_aux: float | None = None
    gamma_low: float = 0.9


@dataclass
class RateResult:
    value: float
    gamma1: float
    gamma2: float
    gamma3: float | None
    failed: bool
    defined: bool


def _capped(x: float) -> float:
    return min(x, 1.0)


def adversarial_rate(ri: RateInputs) -> RateResult:
    """Untargeted attack rate: retained accuracy times destroyed robustness.

    rate = min(acc_ratio, 1) * (1 - min(rob_ratio, 1)); the attack is flagged
    failed when acc_ratio < gamma_low.  Undefined (nan) when the base net has
    zero accuracy or zero robustness.
    """
    if ri.base_acc <= 0.0 or ri.base_rob <= 0.0 or not (
        math.isfinite(ri.base_acc) and math.isfinite(ri.base_rob)
    ):
        return RateResult(math.nan, math.nan, math.nan, None, failed=True, defined=False)
    g1 = ri.att_acc / ri.base_acc
    g2 = ri.att_rob / ri.base_rob
    value = _capped(g1) * (1.0 - _capped(g2))
    return RateResult(value, g1, g2, None, failed=g1 < ri.gamma_low, defined=True)


def targeted_rate(kind: str, ri: RateInputs) -> RateResult:
    """Rates for the targeted attacks.

    kind "label":  gamma1 = overall acc ratio, gamma2 = off-target robustness
    ratio, gamma3 = on-target robustness ratio (both against the base net's
    overall robustness); rate = g1*g2*(1-g3), capped at 1 termwise.
    kind "direct": gamma2 as above, gamma1 = off-target acc ratio and
    gamma3 = on-target acc ratio against the base net's overall accuracy.
    kind "single": rate = 1 - min(att_rob/base_rob, 1) on the per-sample
    radius (gamma2 carries the ratio).
    """
    if kind == "single":
        if not (ri.base_rob > 0.0) or not math.isfinite(ri.base_rob):
            return RateResult(math.nan, math.nan, math.nan, None, failed=True, defined=False)
        g = ri.att_rob / ri.base_rob
        value = 1.0 - _capped(g)
        return RateResult(value, 1.0, g, None, failed=False, defined=True)
    if kind not in ("label", "direct"):
        raise ValueError(f"unknown targeted rate kind {kind!r}")
    if ri.att_aux is None:
        raise ValueError(f"{kind} rate needs att_aux")
    if ri.base_acc <= 0.0 or ri.base_rob <= 0.0:
        return RateResult(math.nan, math.nan, math.nan, math.nan, failed=True, defined=False)
    g1 = ri.att_acc / ri.base_acc
    g2 = ri.att_rob / ri.base_rob
    g3 = ri.att_aux / (ri.base_rob if kind == "label" else ri.base_acc)
    value = _capped(g1) * _capped(g2) * (1.0 - _capped(g3))
    return RateResult(value, g1, g2, g3, failed=g1 < ri.gamma_low, defined=True)


# ---------------------------------------------------------------------------
# dataset-level report


REPORT_COLUMNS = ["dataset", "n_samples", "acc", "adv_acc", "eps", "avg_r2", "dist_measure", "seed"]


@dataclass
class RobustnessReport:
    dataset: str
    n_samples: int
    acc: float
    adv_acc: float
    eps: float
    avg_r2: float
    dist_measure: float
    seed: int
    per_sample_radius: np.ndarray = field(repr=False, default=None)
    n_radius_inf: int = 0

    def csv_row(self) -> list[str]:
        return [self.dataset, str(self.n_samples), repr(self.acc), repr(self.adv_acc),
                repr(self.eps), repr(self.avg_r2), repr(self.dist_measure), str(self.seed)]

    def text_summary(self) -> str:
        lines = [
            f"dataset            {self.dataset} ({self.n_samples} samples)",
            f"clean accuracy     {self.acc:.4f}",
            f"adv accuracy       {self.adv_acc:.4f}  (eps={self.eps:g})",
            f"avg approx radius  {self.avg_r2:.6g}"
            + (f"  ({self.n_radius_inf} inf sentinels excluded)" if self.n_radius_inf else ""),
            f"dist measure       {self.dist_measure:.6g}",
            f"seed               {self.seed}",
        ]
        return "\n".join(lines)


def robustness_report(params: ModelParams, ds: LabeledDataset, pgd: PgdConfig,
                      seed: int = 0, name: str | None = None) -> RobustnessReport:
    radii, n_inf = radius_profile(params, ds)
    finite = radii[np.isfinite(radii)]
    avg_r2 = float(finite.mean()) if finite.size else math.inf
    return RobustnessReport(
        dataset=name if name is not None else (ds.name or "dataset"),
        n_samples=len(ds),
        acc=accuracy(params, ds),
        adv_acc=adversarial_accuracy(params, ds, pgd, seed=seed),
        eps=pgd.eps,
        avg_r2=avg_r2,
        dist_measure=dist_robust_measure(params, ds),
        seed=seed,
        per_sample_radius=radii,
        n_radius_inf=n_inf,
    )


def reports_to_csv(reports: list[RobustnessReport], path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow(r.csv_row())
