"""
===================================
A qubit circuit against a bit model
===================================

A one-qubit circuit is measured at each wire and compared with a classical
chain. Queries get richer from input-output, to interchange, to opening
single wires.
"""
from causabs.qabs import check_qc_abstraction, hadamard_fixture, not_fixture

for name, fixture in (("NOT", not_fixture), ("Hadamard", hadamard_fixture)):
    ML, MH, taus = fixture()
    for tier in ("io", "interchange", "opening"):
        v = check_qc_abstraction(ML, MH, taus, tier, tol=1e-9)
        print(f"{name:9s} {tier:12s} holds={v.holds!s:5s} deviation={v.max_deviation:.3f}")
