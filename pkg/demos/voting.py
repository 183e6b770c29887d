"""
==================
Grouping the votes
==================

Nine voters are split into three groups. The high model keeps one count
per group and a verdict; the low model keeps every voter. We check that
opening any set of high variables commutes with the translation.
"""
from causabs.abstraction import check_constructive
from causabs.fixtures import voting

low, high, va = voting(n_voters=9, n_groups=3, threshold=4)
print("low variables: ", len(low.names))
print("high variables:", len(high.names))

v = check_constructive(low, high, va)
print("constructive:", v.holds, "over", v.info["subsets"], "Do subsets")

# A translation that uses the wrong cut-off for the verdict breaks it.
low, high, va = voting(tau_threshold=3)
v = check_constructive(low, high, va)
print("wrong cut-off:", v.holds)
print("first witness:", v.witnesses[0].label)
