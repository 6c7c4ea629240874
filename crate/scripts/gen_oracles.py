"""Generate frozen reference values for the estimator and statistics tests.

Estimators are evaluated with mpmath at 50 significant digits directly from
their closed forms; statistics come from scipy. Outputs land in
crates/core/tests/data/ and are checked in.
"""
import json
import random
import re
import string

import mpmath as mp
import numpy as np
from scipy import stats

mp.mp.dps = 50
OUT = "crates/core/tests/data/"


def softmax(ps):
    ps = [mp.mpf(p) for p in ps]
    m = max(ps)
    ex = [mp.e ** (p - m) for p in ps]
    s = mp.fsum(ex)
    return [e / s for e in ex]


def free_form(ps):
    z = softmax(ps)
    n = len(z)
    return {
        "minimum": -mp.log(min(z)),
        "average": -mp.log(mp.fsum(z) / n),
        "normalised_product": -mp.log(mp.fprod(z)) / n,
        "log_sum": -mp.fsum(mp.log(v) for v in z),
        "entropy": -mp.fsum(v * mp.log(v) for v in z),
    }


def squad_normalize(s):
    s = s.lower()
    s = "".join(ch for ch in s if ch not in set(string.punctuation))
    s = re.sub(r"\b(a|an|the)\b", " ", s)
    return " ".join(s.split())


def f(x):
    return float(mp.nstr(x, 25))


rng = random.Random(20240117)
cases = []
for _ in range(1000):
    n = rng.randint(1, 16)
    ps = [-rng.uniform(0.0, 9.0) for _ in range(n)]
    vals = free_form(ps)
    single = abs(mp.mpf(ps[0]))
    cases.append({
        "logprobs": ps,
        "softmax": [f(v) for v in softmax(ps)],
        **{k: f(v) for k, v in vals.items()},
        "single_token": f(single),
    })

labels = ["Paris", "paris.", "The Paris", "London", "london!", "Rome", "a Rome", "Berlin"]
multi = []
for _ in range(1000):
    k = rng.randint(1, 12)
    primary = rng.choice(labels)
    samples = [rng.choice(labels) for _ in range(k)]
    disagree = sum(1 for s in samples if squad_normalize(s) != squad_normalize(primary))
    multi.append({"primary": primary, "samples": samples,
                  "value": f(mp.mpf(disagree) / k)})

fixed = {
    "softmax_two": [mp.nstr(v, 20) for v in softmax([-0.1, -2.3])],
    "five_methods": {k: mp.nstr(v, 20) for k, v in free_form([-0.2, -1.0, -3.0]).items()},
}

with open(OUT + "estimator_oracle.json", "w") as fh:
    json.dump({"free_form": cases, "multi_inference": multi, "fixed": fixed}, fh)

# Welch t-test / pooled Cohen's d reference values.
nrng = np.random.default_rng(7)
groups = []
for (mc, sc, nc, mi, si, ni) in [
    (0.8, 0.5, 40, 1.5, 0.9, 25),
    (0.2, 0.1, 120, 0.45, 0.2, 60),
    (2.0, 1.0, 12, 2.1, 1.2, 15),
    (1.0, 0.3, 30, 1.0, 0.3, 30),
]:
    c = [round(float(v), 6) for v in nrng.normal(mc, sc, nc)]
    i = [round(float(v), 6) for v in nrng.normal(mi, si, ni)]
    t, p = stats.ttest_ind(i, c, equal_var=False)
    n1, n2 = len(c), len(i)
    s1, s2 = np.var(c, ddof=1), np.var(i, ddof=1)
    pooled = np.sqrt(((n1 - 1) * s1 + (n2 - 1) * s2) / (n1 + n2 - 2))
    d = (np.mean(i) - np.mean(c)) / pooled
    groups.append({"correct": c, "incorrect": i, "mean_diff": float(np.mean(i) - np.mean(c)),
                   "t": float(t), "p": float(p), "d": float(d)})
with open(OUT + "stats_oracle.json", "w") as fh:
    json.dump(groups, fh, indent=1)

print(fixed)
print("quantile [1..10] q=0.9:", np.quantile(np.arange(1, 11), 0.9))
