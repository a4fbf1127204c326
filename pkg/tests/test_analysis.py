import random
from dataclasses import fields

import pytest

from tokenlab import analysis, crypto, uso, utxo
from tokenlab.analysis import IssuanceTranscript, LedgerTranscript, TxObservation
from tokenlab.dlt import Network
from tokenlab.errors import Rejected, Rejection
from tokenlab.utxo import Mode, OutputRef, UtxoLedger


def transparent_pairs(n, seed=0):
    r = random.Random(seed)
    auth = crypto.generate_keypair(r)
    holders = [crypto.generate_keypair(r) for _ in range(3)]
    led = UtxoLedger(Network.centralised(r), auth.public)
    for i in range(n):
        owner = holders[i % 3]
        tx = led.mint(auth, [(1, owner.public)])
        led.spend(utxo.make_spend([OutputRef(tx.tx_id, 0)], [owner.secret], [(1, holders[(i + 1) % 3].public)]))
    mode = "utxo/transparent"
    return analysis.utxo_ledger_transcript(mode, led.network.entries), analysis.utxo_mint_transcript(mode, led.network.entries)


def private_pairs(n, issuer, seed=0):
    r = random.Random(seed)
    led = UtxoLedger(Network.centralised(r), mode=Mode.PRIVATE, issuer=issuer, denominations=(1, 5, 10))
    serials = []
    for _ in range(n):
        t = led.issue_private(issuer, 1, utxo.request_serial(issuer.public_keys, 1, r))
        serials.append(t.serial)
        led.spend_private(t, [utxo.request_serial(issuer.public_keys, 1, r)])
    mode = "utxo/private"
    return (
        analysis.utxo_ledger_transcript(mode, led.network.entries),
        analysis.issuer_transcript(mode, issuer.transcript),
        serials,
    )


def independent_recount(ledger: LedgerTranscript, issuance: IssuanceTranscript) -> int:
    """Forward closure: a token is linked once any input of its creator is."""
    blob = b"".join(r.visible for r in issuance.records)
    every = {t for tx in ledger.transactions for t in tx.inputs + tx.outputs}
    known = {t for r in issuance.records for t in r.token_ids} | {t for t in every if t in blob}
    changed = True
    while changed:
        changed = False
        for tx in ledger.transactions:
            if any(i in known for i in tx.inputs) and not set(tx.outputs) <= known:
                known |= set(tx.outputs)
                changed = True
    return sum(1 for tx in ledger.transactions if tx.kind == "spend" for i in tx.inputs if i in known)


def test_transparent_links_every_pair():
    led, iss = transparent_pairs(100)
    report = analysis.linkage_analysis(led, iss)
    assert (report.pairs_total, report.pairs_linked) == (100, 100)
    assert report.pairs_linked == independent_recount(led, iss)


def test_private_links_nothing(blind_issuer):
    led, iss, _ = private_pairs(30, utxo.BlindIssuer(blind_issuer.keys))
    report = analysis.linkage_analysis(led, iss)
    assert (report.pairs_total, report.pairs_linked) == (30, 0)
    assert report.pairs_linked == independent_recount(led, iss)


def test_empty_scenario():
    r = analysis.linkage_analysis(LedgerTranscript("m"), IssuanceTranscript("m"))
    assert (r.pairs_total, r.pairs_linked) == (0, 0)


def test_mismatched_transcripts():
    with pytest.raises(Rejected) as exc:
        analysis.linkage_analysis(LedgerTranscript("a"), IssuanceTranscript("b"))
    assert exc.value.code is Rejection.INVALID


def test_linkage_is_deterministic():
    led, iss = transparent_pairs(20)
    assert analysis.linkage_analysis(led, iss) == analysis.linkage_analysis(led, iss)


def test_linkage_follows_multi_hop_paths():
    a, b, c = b"a" * 36, b"b" * 36, b"c" * 36
    led = LedgerTranscript("m", (
        TxObservation(b"1", "issue", (), (a,)),
        TxObservation(b"2", "spend", (a,), (b,)),
        TxObservation(b"3", "spend", (b,), (c,)),
        TxObservation(b"4", "spend", (c,), ()),
    ))
    iss = IssuanceTranscript("m", (analysis.IssuanceObservation(b"x", (a,)),))
    assert analysis.linkage_analysis(led, iss).pairs_linked == 3


def test_observer_schema_excludes_secrets():
    names = {f.name for cls in (TxObservation, analysis.IssuanceObservation) for f in fields(cls)}
    assert names == {"event_id", "kind", "inputs", "outputs", "visible", "token_ids"}


def test_growth_series():
    g = analysis.growth_analysis((10, 100, 1000))
    assert [e for _, e in g.series["uso"]] == [1, 1, 1]
    # one mint plus n spends
    assert g.series["utxo"] == [(10, 11), (100, 101), (1000, 1001)]
    assert g.slope("utxo") == 1.0 and g.slope("uso") == 0.0
    assert g.to_csv().splitlines()[0] == "mode,transactions,ledger_entries"


def test_idle_epochs():
    assert analysis.growth_analysis((0,), epochs=3).series["uso"] == [(0, 3)]


def _equivocation_world(mitigation):
    r = random.Random(3)
    net = Network(4, r)
    op = uso.Operator("op-7", crypto.generate_keypair(r), mitigation=mitigation, network=net)
    issuer = uso.UsoIssuer(crypto.generate_keypair(r))
    alice, bob, carol = (crypto.generate_keypair(r) for _ in range(3))
    a = uso.issue_asset(op, issuer, 1, alice.public, "transparent", r)
    op.close_epoch()
    uso.transfer(a, alice.secret, bob.public, op)
    op.close_epoch()
    honest = op.prove_provenance(a.asset_id, 0, 1)
    leaves = op.leaves(1)
    leaves[a.asset_id] = crypto.digest(b"conflicting update")
    op.equivocate(1, leaves)
    forged = op.prove_provenance(a.asset_id, 0, 1, view=op.alternates)
    return net, honest, forged


def test_audit_honest_has_no_findings():
    net, honest, _ = _equivocation_world("dlt")
    report = analysis.equivocation_audit(net.entries, [honest])
    assert report.status == "CLEAN" and report.findings == ()


def test_audit_finds_dlt_equivocation():
    net, honest, forged = _equivocation_world("dlt")
    report = analysis.equivocation_audit(net.entries, [honest, forged])
    assert report.status == "FINDINGS" and len(report.findings) == 1
    f = report.findings[0]
    assert (f.operator_id, f.epoch) == ("op-7", 1)


def test_audit_unmitigated_is_undetectable():
    net, honest, forged = _equivocation_world("self-attested")
    report = analysis.equivocation_audit(net.entries, [honest, forged])
    assert net.entries == [] and report.status == "UNDETECTABLE"
