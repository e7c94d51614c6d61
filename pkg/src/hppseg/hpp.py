"""Discrete scenarios for learning from highly probable positive (HPP) samples.

A scenario describes a world with true positive/negative classes E+ and E-,
a selected "corrupted positive" set S and class-conditional sample
distributions over a finite support. If

    H1: p(E+) < q < p(E-)
    H2: p(E+|S) > q > p(E-|S)
    H3: p(x|E+), p(x|E-) do not depend on S

then p(x|S) > p(x|not S) exactly when p(x|E+) > p(x|E-): a classifier that
contrasts S against its complement takes the same decisions as one trained
on the true labels. This module checks that statement exhaustively on given
scenarios and by sampling.
"""

from dataclasses import dataclass, field

import numpy as np

SUM_TOL = 1e-12


@dataclass(frozen=True)
class HPPScenario:
    cond_pos: np.ndarray  # p(x|E+) over the support
    cond_neg: np.ndarray  # p(x|E-)
    prior_pos: float  # p(E+)
    q: float
    sel_prob_pos: float  # p(E+|S)
    sel_mass: float  # p(S)
    support: tuple = field(default=None)

    def __post_init__(self):
        pos = np.asarray(self.cond_pos, dtype=np.float64)
        neg = np.asarray(self.cond_neg, dtype=np.float64)
        object.__setattr__(self, "cond_pos", pos)
        object.__setattr__(self, "cond_neg", neg)
        if self.support is None:
            object.__setattr__(self, "support", tuple(range(len(pos))))
        if pos.shape != neg.shape or pos.ndim != 1 or len(self.support) != len(pos):
            raise ValueError("cond_pos, cond_neg and support must have the same length")
        for name, dist in (("cond_pos", pos), ("cond_neg", neg)):
            if np.any(dist < 0) or abs(dist.sum() - 1.0) > SUM_TOL:
                raise ValueError(f"{name} is not a probability distribution")
        for name in ("prior_pos", "q", "sel_mass"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if not 0.0 <= self.sel_prob_pos <= 1.0:
            raise ValueError("sel_prob_pos must lie in [0, 1]")
        # sum rule: p(E+|not S) must be a probability
        if not -1e-12 <= self.notsel_prob_pos <= 1.0 + 1e-12:
            raise ValueError(
                f"inconsistent scenario: derived p(E+|not S) = {self.notsel_prob_pos:.6g}"
            )

    @property
    def prior_neg(self):
        return 1.0 - self.prior_pos

    @property
    def sel_prob_neg(self):
        return 1.0 - self.sel_prob_pos

    @property
    def notsel_prob_neg(self):
        """p(E-|not S) = (p(E-) - p(E-|S) p(S)) / (1 - p(S))."""
        return (self.prior_neg - self.sel_prob_neg * self.sel_mass) / (1.0 - self.sel_mass)

    @property
    def notsel_prob_pos(self):
        return (self.prior_pos - self.sel_prob_pos * self.sel_mass) / (1.0 - self.sel_mass)

    def index_of(self, x):
        try:
            return self.support.index(x)
        except ValueError:
            raise KeyError(f"{x!r} is not in the scenario support") from None


def check_hypotheses(s):
    return {
        "H1": s.prior_pos < s.q < s.prior_neg,
        "H2": s.sel_prob_pos > s.q > s.sel_prob_neg,
        # class-conditionals are parameters of the scenario, never functions of S
        "H3": True,
    }


def intermediate_inequalities(s):
    """The chain p(E-|not S) > q > p(E+|not S) and p(E+|S) > p(E+|not S)."""
    return {
        "neg_outside_above_q": s.notsel_prob_neg > s.q,
        "pos_outside_below_q": s.notsel_prob_pos < s.q,
        "pos_inside_above_outside": s.sel_prob_pos > s.notsel_prob_pos,
    }


def _mixtures(s):
    a, b = s.sel_prob_pos, s.notsel_prob_pos
    p_s = a * s.cond_pos + (1.0 - a) * s.cond_neg
    p_not = b * s.cond_pos + (1.0 - b) * s.cond_neg
    return p_s, p_not


def mixture_likelihoods(s, x):
    """``(p(x|S), p(x|not S))`` for one support point."""
    i = s.index_of(x)
    p_s, p_not = _mixtures(s)
    return float(p_s[i]), float(p_not[i])


def verify_proposition(s):
    """Compare the S-vs-not-S decision with the true-class decision on every point.

    A point is a counterexample only when both comparisons are strict and
    point in opposite directions; ties mean "no decision".
    """
    p_s, p_not = _mixtures(s)
    dec_sel = np.sign(p_s - p_not)
    dec_true = np.sign(s.cond_pos - s.cond_neg)
    bad = np.flatnonzero(dec_sel * dec_true < 0)
    counterexamples = [s.support[i] for i in bad]
    return {"holds": not counterexamples, "counterexamples": counterexamples}


def joint_table(s):
    """Brute-force joint p(class, in_S, x) as a (2, 2, K) array.

    Axis 0 is the class (0 = E+, 1 = E-), axis 1 is S membership (0 = S,
    1 = not S). x is drawn from the class-conditional, independently of S.
    """
    p_in_given_pos = s.sel_prob_pos * s.sel_mass / s.prior_pos
    p_in_given_neg = s.sel_prob_neg * s.sel_mass / s.prior_neg
    table = np.empty((2, 2, len(s.cond_pos)))
    for c, (prior, p_in, cond) in enumerate(
        ((s.prior_pos, p_in_given_pos, s.cond_pos), (s.prior_neg, p_in_given_neg, s.cond_neg))
    ):
        table[c, 0] = prior * p_in * cond
        table[c, 1] = prior * (1.0 - p_in) * cond
    return table


def random_scenario(rng, support_size=8, satisfy=True, concentration=1.0):
    """Draw a scenario.

    With ``satisfy`` the draw obeys H1-H3: p(E+) in [0.05, 0.45], q uniform in
    (p(E+), p(E-)), p(E+|S) uniform above max(q, 1 - q) and p(S) uniform in
    the range the sum rule permits. Conditionals are Dirichlet samples.
    Without ``satisfy`` H2 is broken by taking p(E+|S) below p(E+), which
    puts it below p(E+|not S); p(S) is then capped so p(E+|not S) <= 1.
    """
    alpha = np.full(support_size, concentration)
    cond_pos = rng.dirichlet(alpha)
    cond_neg = rng.dirichlet(alpha)
    # renormalize in float64 so the sum check sees exact-ish unit mass
    cond_pos /= cond_pos.sum()
    cond_neg /= cond_neg.sum()
    prior = rng.uniform(0.05, 0.45)
    q = rng.uniform(prior, 1.0 - prior)
    if satisfy:
        lo = max(q, 1.0 - q)
        sel_pos = rng.uniform(lo, 1.0)
        while sel_pos <= lo:
            sel_pos = rng.uniform(lo, 1.0)
        mass_hi = prior / sel_pos
        sel_mass = rng.uniform(0.0, mass_hi)
        while sel_mass <= 0.0:
            sel_mass = rng.uniform(0.0, mass_hi)
    else:
        sel_pos = rng.uniform(0.0, prior)
        sel_mass = rng.uniform(0.05, 0.95) * (1.0 - prior) / (1.0 - sel_pos)
    return HPPScenario(cond_pos, cond_neg, prior, q, sel_pos, sel_mass)


def simulate_empirical(s, n_samples, seed=None):
    """Fraction of support points where count-based likelihoods of S and not S
    yield the true-class decision, from ``n_samples`` draws of the joint."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    table = joint_table(s)
    cell_probs = table.sum(axis=2).reshape(-1)
    cell_counts = rng.multinomial(n_samples, cell_probs / cell_probs.sum())
    counts = np.zeros((4, len(s.cond_pos)), dtype=np.int64)
    for cell, n in enumerate(cell_counts):
        cond = s.cond_pos if cell < 2 else s.cond_neg
        counts[cell] = rng.multinomial(n, cond)
    in_s = counts[0] + counts[2]
    out_s = counts[1] + counts[3]
    p_s = in_s / max(in_s.sum(), 1)
    p_not = out_s / max(out_s.sum(), 1)
    agree = np.sign(p_s - p_not) == np.sign(s.cond_pos - s.cond_neg)
    return float(agree.mean())


def run_suite(n_scenarios, support_size=8, seed=0, satisfy=True):
    """Check many random scenarios; returns a JSON-ready report."""
    rng = np.random.default_rng(seed)
    holds = 0
    chain_ok = 0
    details = []
    for i in range(n_scenarios):
        s = random_scenario(rng, support_size, satisfy=satisfy)
        res = verify_proposition(s)
        if res["holds"]:
            holds += 1
        if all(intermediate_inequalities(s).values()):
            chain_ok += 1
        if not res["holds"]:
            details.append({
                "scenario": i,
                "hypotheses": check_hypotheses(s),
                "prior_pos": s.prior_pos,
                "q": s.q,
                "sel_prob_pos": s.sel_prob_pos,
                "notsel_prob_pos": s.notsel_prob_pos,
                "counterexamples": [int(x) for x in res["counterexamples"]],
            })
    return {
        "scenarios": n_scenarios,
        "support_size": support_size,
        "seed": seed,
        "satisfy_hypotheses": satisfy,
        "holds_count": holds,
        "intermediate_ok_count": chain_ok,
        "counterexample_details": details,
    }
