"""
=====================
Distributed variables
=====================

A four-bit model is rotated by an XOR isomorphism. The high model reads
variables that only exist after the rotation, so its interventions pull
back to interventions spread over several low variables.
"""
from causabs import stoch
from causabs.distributed import check_iso_cca, ddo_composite, distributed_do
from causabs.fixtures import xor_pipeline
from causabs.model import apply_intervention, induce_model, parallel_mechanism

M1, iso, M3, va = xor_pipeline()
M2 = induce_model(M1, iso)
print("M1:", M1.names, " M2:", M2.names)

d = distributed_do(M1, iso, {"P": 1}, M2)
print("Do(P = 1) on M2 touches", sorted(d.realized.targets), "on M1")
lhs = parallel_mechanism(apply_intervention(M1, d.realized)).channel
print("matches the conjugated Do:", stoch.channels_equal(lhs, ddo_composite(M1, iso, {"P": 1})))

v = check_iso_cca(M1, iso, M3, va)
print("pipeline holds:", v.holds, f"({v.checked} comparisons)")

v = check_iso_cca(*xor_pipeline(perturb=True))
print("perturbed pipeline:", v.holds, "-", v.witnesses[0].label)
