"""Token-tracking protocol laboratory.

Endogenous (UTXO) and oblivious (USO) token tracking over a simulated
quorum-certified ledger, with blind issuance, proofs of provenance and an
analysis harness.
"""

from tokenlab.errors import Rejected, Rejection

__all__ = ["Rejected", "Rejection"]
__version__ = "0.1.0"
