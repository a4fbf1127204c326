"""Scenario files: loading, static validation and sequential execution.

A scenario is a JSON object naming one cell of the taxonomy (system,
centralisation, privacy and, for USO, equivocation mitigation), a seed and
a script of actions.  Every action may carry ``expect``; a step whose
outcome differs is reported as unexpected.
"""

from __future__ import annotations

import json
import logging
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from tokenlab import analysis, crypto, dlt, utxo, uso
from tokenlab.dlt import Network, PeerBehaviour
from tokenlab.encoding import canonical_json, read_jsonl, write_jsonl
from tokenlab.errors import Rejected, Rejection

log = logging.getLogger(__name__)

BUNDLED_DIR = Path(__file__).parent / "scenarios"

QUADRANTS = {
    ("utxo", "centralised", "transparent"): "endogenous / centralised / transparent (electronic vouchers)",
    ("utxo", "decentralised", "transparent"): "endogenous / decentralised / transparent (UTXO cryptocurrency)",
    ("utxo", "centralised", "private"): "endogenous / centralised / private (Chaumian ecash)",
    ("uso", "centralised", "transparent"): "oblivious / centralised / transparent (standard USO assets)",
    ("uso", "decentralised", "transparent"): "oblivious / decentralised / transparent (USO with equivocation mitigation)",
    ("uso", "centralised", "private"): "oblivious / centralised / private (fungible USO assets)",
    ("uso", "decentralised", "private"): "oblivious / decentralised / private (fungible USO with equivocation mitigation)",
    ("accounts", "centralised", "transparent"): "account-based / centralised",
    ("accounts", "decentralised", "transparent"): "account-based / decentralised",
}
OUT_OF_SCOPE = {
    ("utxo", "decentralised", "private"): "decentralised private UTXO needs ring signatures or zero-knowledge proofs, which are not implemented",
}

_INT = "int"
_STR = "str"
_LIST = "list"

# action -> required fields, optional fields
ACTIONS: Dict[Tuple[str, str], Dict[str, Tuple[Dict[str, str], Dict[str, str]]]] = {
    ("utxo", "transparent"): {
        "mint": ({"id": _STR, "outputs": _LIST}, {"signer": _STR}),
        "spend": ({"id": _STR, "inputs": _LIST, "outputs": _LIST}, {"signers": _LIST}),
        "trace": ({"token": _STR}, {}),
        "audit": ({}, {}),
    },
    ("utxo", "private"): {
        "issue_private": ({"id": _STR, "holder": _STR, "value": _INT}, {}),
        "spend_private": ({"id": _STR, "token": _STR, "to": _STR, "into": _LIST}, {}),
        "audit": ({}, {}),
    },
    ("uso", "*"): {
        "issue": ({"id": _STR, "owner": _STR, "denomination": _INT}, {}),
        "transfer": ({"asset": _STR, "from": _STR, "to": _STR}, {}),
        "close_epoch": ({}, {}),
        "verify": ({"asset": _STR, "holder": _STR}, {}),
        "equivocate": ({"asset": _STR, "epoch": _INT, "from": _STR, "to": _STR}, {}),
        "audit": ({}, {}),
    },
    ("accounts", "*"): {
        "register": ({"parties": _LIST}, {}),
        "evidence": ({"fiduciaries": _LIST, "tx": _STR}, {}),
        "interledger": ({"from": _STR, "to": _STR, "amount": _INT}, {}),
        "issue": ({"to": _STR, "amount": _INT}, {}),
        "transfer": ({"from": _STR, "to": _STR, "amount": _INT}, {}),
        "audit": ({}, {}),
    },
}

DEFAULT_EXPECT = {"verify": "VALID", "audit": "CLEAN"}
TRANSACTION_ACTIONS = {"mint", "spend", "issue_private", "spend_private", "issue", "transfer", "evidence", "interledger"}


class ScenarioError(Exception):
    """Static validation failure; ``violations`` lists every problem found."""

    def __init__(self, violations: List[str]):
        self.violations = violations
        super().__init__("; ".join(violations))


def _type_ok(value: Any, kind: str) -> bool:
    if kind == _INT:
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == _STR:
        return isinstance(value, str) and bool(value)
    return isinstance(value, list)


def actions_for(system: str, privacy: str) -> Dict[str, Tuple[Dict[str, str], Dict[str, str]]]:
    return ACTIONS.get((system, privacy)) or ACTIONS.get((system, "*"), {})


def effective_mitigation(scenario: Mapping[str, Any]) -> Optional[str]:
    if scenario.get("system") != "uso":
        return None
    default = "dlt" if scenario.get("centralisation") == "decentralised" else "self-attested"
    return scenario.get("mitigation", default)


def validate_scenario(scenario: Any) -> List[str]:
    """Return every violation in a parsed scenario; empty means valid."""
    if not isinstance(scenario, dict):
        return ["scenario must be a JSON object"]
    out: List[str] = []
    system = scenario.get("system")
    cent = scenario.get("centralisation")
    privacy = scenario.get("privacy", "transparent")
    if system not in ("utxo", "uso", "accounts"):
        out.append(f"system must be utxo, uso or accounts (got {system!r})")
    if cent not in ("centralised", "decentralised"):
        out.append(f"centralisation must be centralised or decentralised (got {cent!r})")
    if privacy not in ("transparent", "private"):
        out.append(f"privacy must be transparent or private (got {privacy!r})")
    if "seed" not in scenario:
        out.append("seed required")
    elif not _type_ok(scenario["seed"], _INT) or not 0 <= scenario["seed"] < 2**64:
        out.append("seed must be a 64-bit non-negative integer")
    if out:
        return out

    cell = (system, cent, privacy)
    if cell in OUT_OF_SCOPE:
        out.append(f"out-of-scope quadrant {system}/{cent}/{privacy}: {OUT_OF_SCOPE[cell]}")
    elif cell not in QUADRANTS:
        out.append(f"invalid quadrant {system}/{cent}/{privacy}")

    if "mitigation" in scenario:
        if system != "uso":
            out.append("mitigation applies to uso scenarios only")
        elif scenario["mitigation"] not in ("dlt", "self-attested"):
            out.append("mitigation must be dlt or self-attested")
        elif (scenario["mitigation"] == "dlt") != (cent == "decentralised"):
            out.append("uso mitigation must be dlt when decentralised and self-attested when centralised")

    peers = scenario.get("peers", 1 if cent == "centralised" else 4)
    if not _type_ok(peers, _INT) or peers < 1:
        out.append("peers must be a positive integer")
        peers = 1
    if cent == "centralised" and peers != 1:
        out.append("a centralised ledger has exactly one peer")
    faults = scenario.get("faults", {})
    if not isinstance(faults, dict) or set(faults) - {"silent", "equivocating"}:
        out.append("faults may only list silent and equivocating peer ids")
    else:
        ids = [p for v in faults.values() for p in (v if isinstance(v, list) else [None])]
        if any(not _type_ok(p, _INT) or not 0 <= p < peers for p in ids) or len(ids) != len(set(ids)):
            out.append(f"fault ids must be distinct peer ids in 0..{peers - 1}")
        if cent == "centralised" and ids:
            out.append("a centralised ledger has no fault configuration")

    denoms = scenario.get("denominations", list(utxo.DEFAULT_DENOMINATIONS))
    if not isinstance(denoms, list) or not denoms or not all(_type_ok(d, _INT) and d > 0 for d in denoms):
        out.append("denominations must be a non-empty list of positive integers")

    script = scenario.get("script")
    if not isinstance(script, list):
        out.append("script must be a list of actions")
        return out
    table = actions_for(system, privacy)
    for i, step in enumerate(script, start=1):
        where = f"script step {i}"
        if not isinstance(step, dict) or "action" not in step:
            out.append(f"{where}: each step is an object with an action")
            continue
        action = step["action"]
        if action not in table:
            out.append(f"{where}: unknown action {action!r} for {system}/{privacy}")
            continue
        required, optional = table[action]
        for name, kind in required.items():
            if name not in step:
                out.append(f"{where} ({action}): missing field {name!r}")
            elif not _type_ok(step[name], kind):
                out.append(f"{where} ({action}): field {name!r} must be {kind}")
        for name, kind in optional.items():
            if name in step and not _type_ok(step[name], kind):
                out.append(f"{where} ({action}): field {name!r} must be {kind}")
        extra = set(step) - set(required) - set(optional) - {"action", "expect", "note"}
        if extra:
            out.append(f"{where} ({action}): unexpected fields {sorted(extra)}")
        if "expect" in step and not _type_ok(step["expect"], _STR):
            out.append(f"{where} ({action}): expect must be a string")
        for name in ("outputs",):
            if name in step and isinstance(step[name], list):
                for o in step[name]:
                    if not (isinstance(o, dict) and _type_ok(o.get("owner"), _STR) and _type_ok(o.get("value"), _INT)):
                        out.append(f"{where} ({action}): outputs are objects with owner and value")
                        break
        for name in ("inputs", "signers", "parties", "fiduciaries"):
            if name in step and isinstance(step[name], list):
                if not all(_type_ok(x, _STR) for x in step[name]):
                    out.append(f"{where} ({action}): {name} must list strings")
        if action == "evidence" and isinstance(step.get("fiduciaries"), list) and len(step["fiduciaries"]) != 2:
            out.append(f"{where} (evidence): exactly two fiduciaries")
        if "into" in step and isinstance(step["into"], list) and not all(_type_ok(x, _INT) for x in step["into"]):
            out.append(f"{where} ({action}): into must list integers")
    return out


def load_scenario(path: Union[str, Path]) -> Dict[str, Any]:
    """Parse and validate; raises ScenarioError listing violations."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        scenario = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}"]) from None
    violations = validate_scenario(scenario)
    if violations:
        raise ScenarioError(violations)
    return scenario


def bundled_scenarios() -> List[Path]:
    return sorted(BUNDLED_DIR.glob("*.json"))


# --- execution -------------------------------------------------------------


@dataclass
class StepResult:
    step: int
    action: str
    expect: str
    outcome: str
    detail: Dict[str, Any] = field(default_factory=dict)

    @property
    def as_expected(self) -> bool:
        return self.outcome == self.expect

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "action": self.action,
            "expect": self.expect,
            "outcome": self.outcome,
            "as_expected": self.as_expected,
            "detail": self.detail,
        }


class Runner:
    """Executes one scenario's script against freshly built, seeded components."""

    def __init__(self, scenario: Mapping[str, Any], seed: Optional[int] = None):
        self.scenario = dict(scenario)
        self.seed = int(scenario["seed"] if seed is None else seed)
        self.scenario["seed"] = self.seed
        self.system = scenario["system"]
        self.privacy = scenario.get("privacy", "transparent")
        self.centralisation = scenario["centralisation"]
        self.mitigation = effective_mitigation(scenario)
        self.denominations = tuple(scenario.get("denominations", utxo.DEFAULT_DENOMINATIONS))
        self.rng = random.Random(self.seed)
        faults = {}
        for behaviour, ids in scenario.get("faults", {}).items():
            for pid in ids:
                faults[pid] = PeerBehaviour(behaviour)
        peers = scenario.get("peers", 1 if self.centralisation == "centralised" else 4)
        self.network = Network(peers, self.rng, faults)
        self._keys: Dict[str, crypto.KeyPair] = {}
        self.results: List[StepResult] = []
        self.proofs: List[Dict[str, Any]] = []
        self.growth: List[Tuple[int, int, int]] = []
        self._setup()

    def key(self, name: str) -> crypto.KeyPair:
        if name not in self._keys:
            self._keys[name] = crypto.generate_keypair(random.Random(f"{self.seed}/holder/{name}"))
        return self._keys[name]

    def _setup(self) -> None:
        if self.system == "utxo":
            if self.privacy == "private":
                self.issuer = utxo.BlindIssuer.generate(self.rng, self.denominations)
                self.ledger = utxo.UtxoLedger(
                    self.network, mode=utxo.Mode.PRIVATE, issuer=self.issuer, denominations=self.denominations
                )
                self.private_tokens: Dict[str, Tuple[str, utxo.PrivateToken]] = {}
            else:
                self.ledger = utxo.UtxoLedger(self.network, self.key("authority").public)
                self.txs: Dict[str, utxo.UtxoTransaction] = {}
                self.owner_of: Dict[str, str] = {}
        elif self.system == "uso":
            self.operator = uso.Operator(
                "operator-0", crypto.generate_keypair(self.rng), mitigation=self.mitigation, network=self.network
            )
            self.uso_issuer = uso.UsoIssuer.generate(self.rng, self.denominations)
            self.copies: Dict[Tuple[str, str], uso.UsoAsset] = {}
            self.victims: set = set()
        else:
            self.accounts = dlt.AccountState()

    # -- dispatch

    def run(self) -> List[StepResult]:
        tx_count = 0
        for i, step in enumerate(self.scenario["script"], start=1):
            action = step["action"]
            expect = step.get("expect", DEFAULT_EXPECT.get(action, "ok"))
            try:
                outcome, detail = getattr(self, f"_do_{self.system}_{action}", None)(step)
            except Rejected as exc:
                outcome, detail = exc.code.value, {"reason": exc.detail}
            result = StepResult(i, action, expect, outcome, detail)
            self.results.append(result)
            if action in TRANSACTION_ACTIONS and outcome == "ok":
                tx_count += 1
            self.growth.append((i, tx_count, len(self.network.entries)))
            if not result.as_expected:
                log.warning("step %d (%s): expected %s, got %s", i, action, expect, outcome)
        return self.results

    def audit_outcome(self) -> Tuple[str, Dict[str, Any]]:
        report = self.network.audit()
        return ("CLEAN" if report.clean else "VIOLATION"), {"ledger_audit": str(report)}

    # -- utxo, transparent

    def _ref(self, label: str) -> utxo.OutputRef:
        name, _, idx = label.rpartition(":")
        tx = self.txs.get(name)
        if tx is None or not idx.isdigit():
            # never created: the ledger answers UNKNOWN_TOKEN
            return utxo.OutputRef(crypto.tagged_digest("tokenlab/unknown-label", label), 0)
        return utxo.OutputRef(tx.tx_id, int(idx))

    def _outputs(self, step) -> List[Tuple[int, bytes]]:
        return [(o["value"], self.key(o["owner"]).public) for o in step["outputs"]]

    def _do_utxo_mint(self, step):
        signer = self.key(step.get("signer", "authority"))
        tx = self.ledger.mint(signer, self._outputs(step))
        self.txs[step["id"]] = tx
        for i, o in enumerate(step["outputs"]):
            self.owner_of[f"{step['id']}:{i}"] = o["owner"]
        return "ok", {"tx_id": tx.tx_id.hex()}

    def _do_utxo_spend(self, step):
        refs = [self._ref(label) for label in step["inputs"]]
        signers = step.get("signers") or [self.owner_of.get(label, "nobody") for label in step["inputs"]]
        tx = utxo.make_spend(refs, [self.key(s).secret for s in signers], self._outputs(step))
        entry = self.ledger.spend(tx)
        self.txs[step["id"]] = tx
        for i, o in enumerate(step["outputs"]):
            self.owner_of[f"{step['id']}:{i}"] = o["owner"]
        return "ok", {"tx_id": tx.tx_id.hex(), "entry": entry.index}

    def _do_utxo_trace(self, step):
        if self.privacy == "private":
            raise Rejected(Rejection.NOT_TRACEABLE, "private tokens carry no ledger history")
        path = self.ledger.trace(self._ref(step["token"]))
        return "ok", {"path": [self.ledger.entry_of[t.tx_id] for t in path], "length": len(path)}

    def _do_utxo_audit(self, step):
        return self.audit_outcome()

    # -- utxo, private

    def _do_utxo_issue_private(self, step):
        req = utxo.request_serial(self.issuer.public_keys, step["value"], self.rng)
        token = self.ledger.issue_private(self.issuer, step["value"], req)
        self.private_tokens[step["id"]] = (step["holder"], token)
        return "ok", {"denomination": token.value}

    def _do_utxo_spend_private(self, step):
        held = self.private_tokens.get(step["token"])
        if held is None:
            raise Rejected(Rejection.UNKNOWN_TOKEN, f"no token labelled {step['token']!r}")
        _, token = held
        reqs = [utxo.request_serial(self.issuer.public_keys, v, self.rng) for v in step["into"]]
        new = self.ledger.spend_private(token, reqs)
        for i, t in enumerate(new):
            self.private_tokens[f"{step['id']}:{i}"] = (step["to"], t)
        return "ok", {"reissued": [t.value for t in new]}

    # -- uso

    def _copy(self, holder: str, label: str) -> uso.UsoAsset:
        asset = self.copies.get((holder, label))
        if asset is None:
            raise Rejected(Rejection.UNKNOWN_TOKEN, f"{holder} holds no copy of {label!r}")
        return asset

    def _do_uso_issue(self, step):
        mode = uso.Privacy.BLIND if self.privacy == "private" else uso.Privacy.TRANSPARENT
        asset = uso.issue_asset(
            self.operator, self.uso_issuer, step["denomination"], self.key(step["owner"]).public, mode, self.rng
        )
        self.copies[(step["owner"], step["id"])] = asset
        return "ok", {"asset_id": asset.asset_id.hex(), "epoch": self.operator.epoch}

    def _do_uso_transfer(self, step):
        asset = self._copy(step["from"], step["asset"])
        receipt = uso.transfer(asset, self.key(step["from"]).secret, self.key(step["to"]).public, self.operator)
        self.copies[(step["to"], step["asset"])] = receipt.asset
        return "ok", {"counter": receipt.update.counter, "epoch": receipt.epoch}

    def _do_uso_close_epoch(self, step):
        c = self.operator.close_epoch()
        detail = {"epoch": c.epoch, "root": c.root.hex()}
        if self.operator.closed[-1].ledger_index is not None:
            detail["ledger_index"] = self.operator.closed[-1].ledger_index
        return "ok", detail

    def _do_uso_verify(self, step):
        holder, label = step["holder"], step["asset"]
        asset = self._copy(holder, label)
        epochs = self.operator.asset_epochs.get(asset.asset_id)
        if not epochs:
            raise Rejected(Rejection.EPOCH_OPEN, "asset not yet in any closed epoch")
        view = self.operator.alternates if (holder, label) in self.victims else None
        proof = self.operator.prove_provenance(asset.asset_id, epochs[0], self.operator.last_closed, view=view)
        asset = replace(asset, proof=proof)
        self.copies[(holder, label)] = asset
        network = self.network if self.mitigation == "dlt" else None
        verdict = uso.verify_asset(asset, network, issuers=self.uso_issuer.trusted_keys())
        self.proofs.append({"holder": holder, "asset": label, "verdict": verdict.value, "proof": proof.to_json()})
        return verdict.value, {"epochs": proof.epochs, "inclusions": proof.inclusion_epochs}

    def _do_uso_equivocate(self, step):
        label, epoch = step["asset"], step["epoch"]
        sender = self._copy(step["from"], label)
        update = uso.StateUpdate(sender.asset_id, len(sender.updates) + 1, sender.head_digest, self.key(step["to"]).public)
        update = replace(update, signature=crypto.sign(self.key(step["from"]).secret, update.message))
        if not 0 <= epoch <= self.operator.last_closed:
            raise Rejected(Rejection.EPOCH_OPEN, f"epoch {epoch} is not closed")
        leaves = self.operator.leaves(epoch)
        leaves[sender.asset_id] = update.digest
        alternate = self.operator.equivocate(epoch, leaves)
        self.copies[(step["to"], label)] = replace(sender, updates=sender.updates + (update,))
        self.victims.add((step["to"], label))
        detail = {"epoch": epoch, "alternate_root": alternate.root.hex()}
        if self.mitigation == "dlt":
            self.operator.publish(alternate)  # refused: one commitment per epoch
        return "ok", detail

    def _do_uso_audit(self, step):
        collected = [uso.ProofOfProvenance.from_json(p["proof"]) for p in self.proofs]
        audit = analysis.equivocation_audit(self.network.entries, collected)
        return audit.status, {"findings": len(audit.findings), "ledger_audit": str(self.network.audit())}

    # -- accounts

    def _do_accounts_register(self, step):
        self.network.register_party(*step["parties"])
        return "ok", {}

    def _do_accounts_evidence(self, step):
        a, b = step["fiduciaries"]
        entry = dlt.record_external_evidence(self.network, (a, b), crypto.digest(step["tx"].encode()))
        return "ok", {"entry": entry.index}

    def _do_accounts_interledger(self, step):
        entry = dlt.record_interledger_transfer(self.network, step["from"], step["to"], step["amount"])
        return "ok", {"entry": entry.index}

    def _do_accounts_issue(self, step):
        entry, self.accounts = dlt.issue_balance(self.network, self.accounts, step["to"], step["amount"])
        return "ok", {"entry": entry.index}

    def _do_accounts_transfer(self, step):
        entry, self.accounts = dlt.apply_balance_transfer(
            self.network, self.accounts, step["from"], step["to"], step["amount"]
        )
        return "ok", {"entry": entry.index}

    def _do_accounts_audit(self, step):
        return self.audit_outcome()

    # -- artefacts

    @property
    def unexpected(self) -> List[StepResult]:
        return [r for r in self.results if not r.as_expected]

    def issuer_observations(self) -> List[analysis.IssuanceObservation]:
        mode = self.mode_label
        if self.system == "utxo" and self.privacy == "private":
            return list(analysis.issuer_transcript(mode, self.issuer.transcript).records)
        if self.system == "utxo":
            return list(analysis.utxo_mint_transcript(mode, self.network.entries).records)
        if self.system == "uso":
            return list(analysis.issuer_transcript(mode, self.uso_issuer.transcript).records)
        return []

    @property
    def mode_label(self) -> str:
        return mode_label(self.scenario)

    def final_state(self) -> Dict[str, Any]:
        if self.system == "accounts":
            return {"balances": dict(sorted(self.accounts.balances.items()))}
        if self.system == "utxo":
            snap = self.ledger.snapshot()
            return {
                "live": sorted([str(r), v, o.hex()] for r, (v, o) in snap.live.items()),
                "spent": sorted(s.hex() for s in snap.spent),
                "outstanding": {str(d): n for d, n in sorted(snap.outstanding.items())},
                "live_value": self.ledger.live_value,
                "minted": self.ledger.minted,
            }
        return {
            "operator": self.operator.operator_id,
            "closed_epochs": self.operator.epoch,
            "assets_tracked": len(self.operator.asset_epochs),
        }

    def write(self, out_dir: Union[str, Path]) -> int:
        out = Path(out_dir)
        (out / "transcripts").mkdir(parents=True, exist_ok=True)
        (out / "reports").mkdir(parents=True, exist_ok=True)
        (out / "scenario.json").write_text(canonical_json(self.scenario) + "\n", encoding="utf-8")
        self.network.export_log(out / "ledger.log")
        write_jsonl(out / "transcripts" / "events.jsonl", [r.to_json() for r in self.results])
        write_jsonl(
            out / "transcripts" / "issuer.jsonl",
            [{"visible": o.visible.hex(), "token_ids": [t.hex() for t in o.token_ids]} for o in self.issuer_observations()],
        )
        if self.system == "uso":
            write_jsonl(out / "transcripts" / "operator.jsonl", [{"received": c.hex()} for c in self.operator.received])
            write_jsonl(
                out / "transcripts" / "commitments.jsonl",
                [ce.commitment.to_payload() for ce in self.operator.closed],
            )
            write_jsonl(out / "transcripts" / "proofs.jsonl", self.proofs)
            write_jsonl(
                out / "transcripts" / "assets.jsonl",
                [{"holder": h, "label": lbl, "asset": a.to_json()} for (h, lbl), a in sorted(self.copies.items())],
            )
        outcomes: Dict[str, Counter] = {}
        for r in self.results:
            outcomes.setdefault(r.action, Counter())[r.outcome] += 1
        exit_code = 3 if self.unexpected else 0
        summary = {
            "scenario": self.scenario.get("name", ""),
            "quadrant": QUADRANTS[(self.system, self.centralisation, self.privacy)],
            "mitigation": self.mitigation,
            "seed": self.seed,
            "peers": self.network.size,
            "steps": len(self.results),
            "outcomes": {a: dict(sorted(c.items())) for a, c in sorted(outcomes.items())},
            "unexpected": [f"step {r.step} ({r.action}): expected {r.expect}, got {r.outcome}" for r in self.unexpected],
            "ledger_entries": len(self.network.entries),
            "final_state": self.final_state(),
            "exit_code": exit_code,
        }
        (out / "reports" / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        with open(out / "reports" / "growth.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("step,transactions,ledger_entries\n")
            for step, n, e in self.growth:
                fh.write(f"{step},{n},{e}\n")
        emit_reports(out)
        return exit_code


def mode_label(scenario: Mapping[str, Any]) -> str:
    parts = [scenario["system"], scenario["centralisation"], scenario.get("privacy", "transparent")]
    mitigation = effective_mitigation(scenario)
    if mitigation:
        parts.append(mitigation)
    return "/".join(parts)


def emit_reports(out_dir: Union[str, Path]) -> Dict[str, Any]:
    """(Re)compute the analyses of a run directory from its files alone."""
    out = Path(out_dir)
    scenario = json.loads((out / "scenario.json").read_text(encoding="utf-8"))
    entries, peer_keys, threshold = dlt.import_log(out / "ledger.log")
    reports: Dict[str, Any] = {"ledger_audit": {"result": str(dlt.audit_entries(entries, peer_keys, threshold))}}
    mode = mode_label(scenario)
    issuance = analysis.IssuanceTranscript(
        mode,
        tuple(
            analysis.IssuanceObservation(bytes.fromhex(r["visible"]), tuple(bytes.fromhex(t) for t in r["token_ids"]))
            for r in read_jsonl(out / "transcripts" / "issuer.jsonl")
        ),
    )
    if scenario["system"] == "utxo":
        ledger_view = analysis.utxo_ledger_transcript(mode, entries)
        reports["linkage"] = analysis.linkage_analysis(ledger_view, issuance).to_json()
    elif scenario["system"] == "uso":
        stream = [bytes.fromhex(r["received"]) for r in read_jsonl(out / "transcripts" / "operator.jsonl")]
        reports["linkage"] = analysis.linkage_analysis(
            analysis.operator_stream_transcript(mode, stream), issuance
        ).to_json()
        proofs = [uso.ProofOfProvenance.from_json(r["proof"]) for r in read_jsonl(out / "transcripts" / "proofs.jsonl")]
        reports["equivocation_audit"] = analysis.equivocation_audit(entries, proofs).to_json()
    for name, body in reports.items():
        (out / "reports" / f"{name}.json").write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return reports


def run_scenario(path: Union[str, Path], out_dir: Union[str, Path], seed: Optional[int] = None) -> Tuple[int, Runner]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        scenario = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}"]) from None
    if seed is not None and isinstance(scenario, dict):
        scenario["seed"] = seed
    violations = validate_scenario(scenario)
    if violations:
        raise ScenarioError(violations)
    runner = Runner(scenario)
    runner.run()
    return runner.write(out_dir), runner
