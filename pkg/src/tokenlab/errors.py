from __future__ import annotations

import enum


class Rejection(str, enum.Enum):
    """Named rejection codes shared by every ledger-facing operation."""

    NO_QUORUM = "REJECTED_NO_QUORUM"
    INVALID = "REJECTED_INVALID"
    UNKNOWN_PARTY = "REJECTED_UNKNOWN_PARTY"
    INSUFFICIENT_FUNDS = "REJECTED_INSUFFICIENT_FUNDS"
    UNAUTHORISED_ISSUE = "REJECTED_UNAUTHORISED_ISSUE"
    DOUBLE_SPEND = "REJECTED_DOUBLE_SPEND"
    UNKNOWN_TOKEN = "REJECTED_UNKNOWN_TOKEN"
    VALUE_MISMATCH = "REJECTED_VALUE_MISMATCH"
    BAD_SIGNATURE = "REJECTED_BAD_SIGNATURE"
    BAD_DENOMINATION = "REJECTED_BAD_DENOMINATION"
    NOT_TRACEABLE = "NOT_TRACEABLE"
    DUPLICATE_IN_EPOCH = "REJECTED_DUPLICATE_IN_EPOCH"
    DUPLICATE_EPOCH = "REJECTED_DUPLICATE_EPOCH"
    EPOCH_OPEN = "REJECTED_EPOCH_OPEN"

    def __str__(self) -> str:
        return self.value


class Rejected(Exception):
    """Raised when an operation is refused; no state has been changed."""

    def __init__(self, code: Rejection, detail: str = ""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code.value}: {detail}" if detail else code.value)
