#!/usr/bin/env python3
"""Primal optimum of the four-token linear-logit duality instance, via cvxpy.

Instance: logits for context token p are a free row z_p in R^4.
  retain: for every p in 0..4, answers (p+1, p+1, p+1, p+2, p+3, p) mod 4
  forget: for p in 0..3, answers (p+1) and (p+2) mod 4 after the prompt [3, p]
The reference model fits all 30 examples, so each row is the empirical answer
distribution of its context; the budget is 1.05 times its retain loss.

  minimize   mean over forget examples of (max z_p - mean z_p)^2
  subject to mean over retain examples of CE(z_p, y) <= budget
"""
import math

import cvxpy as cp
import numpy as np

V = 4
RETAIN = [(p, (p + k) % V) for p in range(V) for k in (1, 1, 1, 2, 3, 0)]
FORGET = [(p, (p + k) % V) for p in range(3) for k in (1, 2)]


def reference_retain_loss():
    total = 0.0
    for p, y in RETAIN:
        answers = [a for q, a in RETAIN + FORGET if q == p]
        total -= math.log(answers.count(y) / len(answers))
    return total / len(RETAIN)


def symmetric_reduction(budget):
    """At the optimum each forgotten row is (a, 0, 0, 0) up to shift and
    permutation, and row 3 keeps its retain fit; solve retain(a) = budget."""
    h3 = -(0.5 * math.log(0.5) + 0.5 * math.log(1 / 6))

    def retain(a):
        return (3 * (6 * math.log(math.exp(a) + 3) - 3 * a) + 6 * h3) / len(RETAIN)

    lo, hi = 0.0, math.log(3)  # retain(a) decreases up to its fit at log 3
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if retain(mid) > budget else (lo, mid)
    a = 0.5 * (lo + hi)
    return 9 / 16 * a * a


def main():
    base = reference_retain_loss()
    budget = 1.05 * base
    z = cp.Variable((V, V))
    gap = cp.Variable(V)
    cons = [gap >= 0] + [gap[p] >= cp.max(z[p]) - cp.sum(z[p]) / V for p in range(V)]
    retain = sum(cp.log_sum_exp(z[p]) - z[p][y] for p, y in RETAIN) / len(RETAIN)
    forget = sum(cp.square(gap[p]) for p, _ in FORGET) / len(FORGET)
    limit = retain <= budget
    problem = cp.Problem(cp.Minimize(forget), cons + [limit])
    problem.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    print(f"reference_retain_loss = {base!r}")
    print(f"budget = {budget!r}")
    print(f"primal_optimum = {problem.value!r}")
    print(f"multiplier = {float(limit.dual_value)!r}")
    print(f"status = {problem.status}")
    print(f"primal_optimum_reduced = {symmetric_reduction(budget)!r}")
    np.set_printoptions(precision=6, suppress=True)
    print(z.value - z.value.mean(axis=1, keepdims=True))


if __name__ == "__main__":
    main()
