"""
======================================
When an abstraction reaches mechanisms
======================================

``W -> Z -> {X, Y}`` abstracts to ``W -> {X, Y}``. The query-level
abstraction holds, but the shared vertex ``Z`` decides whether each high
mechanism has its own low sub-network.
"""
from causabs.abstraction import check_constructive
from causabs.fixtures import notsimple
from causabs.mechlevel import check_mechanism_level, classify_partition

low, high, va = notsimple()
print("constructive:", check_constructive(low, high, va).holds)

c = classify_partition(low, high, va)
for x, m in sorted(c.M_sets.items()):
    print(f"  M({x}) = {sorted(m)}")
print("strong:", c.strong, " extra strong:", c.extra_strong)

for st in ("markov", "cartesian"):
    v = check_mechanism_level(low, high, va, st)
    print(f"mechanism level under {st}: {v.holds}")
    if not v.holds:
        print("   ", v.witnesses[0].label)

# Sending W to {W, Z} gives Z to a single mechanism.
low, high, va = notsimple(extra_strong=True)
print("with pi(W) = {W, Z}, markov:", check_mechanism_level(low, high, va, "markov").holds)
