//! Acceptance gate: one line per criterion, then a nonzero exit if any failed.
//!
//! Each check recomputes what it needs from public outputs (ledger log,
//! channel log, report) with code of its own instead of trusting the
//! library's bookkeeping.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::Value;
use sha2::{Digest, Sha256};

use tumbler::groupcrypto::{
    derive_sig_keypair, derive_sig_pk, keygen, pke_decrypt, pke_encrypt, sign, verify,
    GroupElement, KeyPair, Scalar, Signature,
};
use tumbler::harness::{run_scenario, Outcome, ScenarioConfig, ScenarioRun};
use tumbler::ledger::{
    payout_message_bytes, AccountId, Ledger, LedgerError, PayoutMessage, RejectReason, Transaction,
};
use tumbler::onion::{build_onion, order_participants, peel_stage, Destination, StageItems};
use tumbler::participant::BlameReason;

const DENOM: u64 = 100;
const GAS: u64 = 1;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run(cfg: &ScenarioConfig) -> Result<ScenarioRun, String> {
    run_scenario(cfg).map_err(|e| e.to_string())
}

/// Balance changes and gas rebuilt from the ledger log with plain JSON.
fn replay(log: &str) -> (BTreeMap<String, i128>, i128) {
    let mut deltas: BTreeMap<String, i128> = BTreeMap::new();
    let mut gas = 0i128;
    for line in log.lines() {
        let v: Value = serde_json::from_str(line).expect("ledger line is json");
        let num = |k: &str| v[k].as_u64().unwrap_or(0) as i128;
        let s = |k: &str| v[k].as_str().unwrap_or_default().to_string();
        match v["kind"].as_str() {
            Some("Deposit") => {
                *deltas.entry(s("from")).or_default() -= num("amount") + num("gas");
                *deltas.entry(s("escrow")).or_default() += num("amount");
                gas += num("gas");
            }
            Some("Withdraw") => {
                *deltas.entry(s("from")).or_default() += num("amount");
                *deltas.entry(s("escrow")).or_default() -= num("amount");
            }
            Some("Payout") => {
                for d in v["destinations"].as_array().unwrap() {
                    *deltas.entry(d.as_str().unwrap().to_string()).or_default() += num("amount");
                    *deltas.entry(s("escrow")).or_default() -= num("amount");
                }
            }
            _ => {}
        }
    }
    (deltas, gas)
}

/// Conservation from the log alone, and agreement with the report.
fn conserved(r: &ScenarioRun) -> Result<(), String> {
    let (deltas, gas) = replay(&r.ledger_log);
    let sum: i128 = deltas.values().sum();
    ensure(sum + gas == 0, || {
        format!("log deltas sum {sum} with gas {gas}")
    })?;
    let claimed: BTreeMap<String, i128> = r
        .report
        .balance_deltas
        .iter()
        .map(|(k, v)| (k.clone(), *v as i128))
        .collect();
    let nonzero: BTreeMap<String, i128> = deltas.into_iter().filter(|(_, v)| *v != 0).collect();
    ensure(nonzero == claimed, || {
        "report deltas differ from log replay".into()
    })?;
    ensure(r.report.gas_collected as i128 == gas, || {
        "report gas differs from log".into()
    })
}

/// Every honest participant ends within its own gas of where it started.
fn honest_kept_principal(r: &ScenarioRun) -> Result<(), String> {
    let (deltas, _) = replay(&r.ledger_log);
    for p in r.report.participants.iter().filter(|p| p.honest) {
        let held = deltas.get(&p.account).copied().unwrap_or(0)
            + deltas.get(&p.destination).copied().unwrap_or(0);
        let gas_paid = (GAS * p.deposits as u64) as i128;
        ensure(held >= -gas_paid, || {
            format!("honest {} holds {held}, gas paid {gas_paid}", p.account)
        })?;
    }
    Ok(())
}

fn c1_happy_path() -> Check {
    let mut slowest = Duration::ZERO;
    for k in [2, 3, 5, 8, 16, 32] {
        let start = Instant::now();
        let r = run(&ScenarioConfig::honest(k, 1000 + k as u64))?;
        let took = start.elapsed();
        slowest = slowest.max(took);
        ensure(r.report.outcome == Outcome::Completed, || {
            format!("k={k}: {:?}", r.report.outcome)
        })?;
        conserved(&r).map_err(|e| format!("k={k}: {e}"))?;
        let (deltas, _) = replay(&r.ledger_log);
        for p in &r.report.participants {
            ensure(deltas.get(&p.destination) == Some(&(DENOM as i128)), || {
                format!(
                    "k={k}: destination {} credited {:?}",
                    p.destination,
                    deltas.get(&p.destination)
                )
            })?;
            ensure(
                deltas.get(&p.account) == Some(&-((DENOM + GAS) as i128)),
                || {
                    format!(
                        "k={k}: payer {} moved {:?}",
                        p.account,
                        deltas.get(&p.account)
                    )
                },
            )?;
        }
        if k == 32 {
            ensure(took < Duration::from_secs(5), || {
                format!("k=32 took {took:?}")
            })?;
        }
    }
    Ok(format!(
        "k in 2,3,5,8,16,32 completed; slowest run {:.2}s",
        slowest.as_secs_f64()
    ))
}

fn c2_contract_checks() -> Check {
    let mut cases = 0;
    for k in [2usize, 3, 5] {
        let mut rng = ChaCha20Rng::seed_from_u64(k as u64);
        let mut ledger = Ledger::new(k as u64);
        let escrow = ledger
            .new_escrow(DENOM, k, GAS)
            .map_err(|e| e.to_string())?;
        let channel = ledger.escrow(&escrow).unwrap().channel_id;
        let mut sig_keys = Vec::new();
        for i in 0..k {
            let account = AccountId([i as u8 + 1; 20]);
            ledger.fund(account, 10 * DENOM);
            let kp: KeyPair = keygen(&mut rng);
            ledger
                .apply(Transaction::Deposit {
                    escrow,
                    from: account,
                    pk_enc: kp.pk.clone(),
                })
                .map_err(|e| e.to_string())?;
            sig_keys.push(derive_sig_keypair(&channel, &kp));
        }
        let round = ledger.escrow(&escrow).unwrap().round;
        let dests: Vec<Destination> = (0..k).map(|i| Destination([0x80 + i as u8; 20])).collect();
        let bytes = payout_message_bytes(&dests, &escrow, round);
        let good = PayoutMessage {
            destinations: dests.clone(),
            signer_pks: sig_keys.iter().map(|s| s.pk.clone()).collect(),
            sigs: sig_keys.iter().map(|s| sign(&s.sk, &bytes)).collect(),
        };
        let stranger: KeyPair = keygen(&mut rng);
        let last = k - 1;

        let mut short = good.clone();
        short.sigs.pop();
        let mut dup = good.clone();
        dup.signer_pks[last] = dup.signer_pks[0].clone();
        dup.sigs[last] = dup.sigs[0].clone();
        let mut bad = good.clone();
        bad.sigs[last] = sign(&sig_keys[last].sk, b"something else");
        let mut unknown = good.clone();
        unknown.signer_pks[last] = stranger.pk.clone();
        unknown.sigs[last] = sign(&stranger.sk, &bytes);

        for (msg, want) in [
            (short, RejectReason::CountMismatch),
            (dup, RejectReason::DuplicateSigner(last)),
            (bad, RejectReason::BadSignature(last)),
            (unknown, RejectReason::UnknownSigner(last)),
        ] {
            let escrow_before = ledger.escrow(&escrow).cloned();
            let accounts_before = ledger.accounts().clone();
            let got = ledger.apply(Transaction::Payout {
                escrow,
                submitter: AccountId([1; 20]),
                msg,
            });
            ensure(got == Err(LedgerError::Rejected(want)), || {
                format!("k={k}: wanted {want:?}, got {got:?}")
            })?;
            ensure(ledger.escrow(&escrow).cloned() == escrow_before, || {
                format!("k={k}: escrow changed on {want:?}")
            })?;
            ensure(*ledger.accounts() == accounts_before, || {
                format!("k={k}: balances changed on {want:?}")
            })?;
            cases += 1;
        }
        ledger
            .apply(Transaction::Payout {
                escrow,
                submitter: AccountId([1; 20]),
                msg: good,
            })
            .map_err(|e| format!("k={k}: valid payout refused: {e}"))?;
    }
    Ok(format!(
        "{cases} malformed payouts rejected with matching reasons, state untouched"
    ))
}

fn expected(kind: &str, p: u16, k: usize) -> (BTreeSet<u16>, Option<BlameReason>) {
    let t = p.clamp(2, k as u16 - 1);
    match kind {
        "dropper" | "modifier" => ([p].into(), Some(BlameReason::BadPeel)),
        "silent" => ([p].into(), Some(BlameReason::Silent)),
        "nonsigner" => ([p].into(), Some(BlameReason::Timeout)),
        "false-accuser" => ([t - 1, t + 1].into(), Some(BlameReason::FalseAccusation)),
        _ => ([t - 1, t, t + 1].into(), None),
    }
}

fn c3_blame_matrix() -> Check {
    let mut cases = 0;
    for k in [3usize, 4, 5] {
        for p in 1..=k as u16 {
            for kind in [
                "silent",
                "dropper",
                "modifier",
                "nonsigner",
                "false-accuser",
                "false-accuser-noproof",
            ] {
                let spec = match kind {
                    "false-accuser-noproof" => format!("false-accuser@{p}:noproof"),
                    _ => format!("{kind}@{p}"),
                };
                let r = run(&ScenarioConfig::honest(k, 77 + p as u64).with_adversary(&spec))?;
                let tag = format!("k={k} {spec}");
                honest_kept_principal(&r).map_err(|e| format!("{tag}: {e}"))?;
                conserved(&r).map_err(|e| format!("{tag}: {e}"))?;
                let (want, reason) = expected(kind, p, k);
                let got: BTreeSet<u16> = r.report.ejections.positions.iter().copied().collect();
                ensure(got == want, || {
                    format!("{tag}: ejected {got:?}, expected {want:?}")
                })?;
                if let Some(reason) = reason {
                    for (pos, why) in &r.report.ejections.reasons {
                        ensure(*why == reason, || {
                            format!("{tag}: {pos} ejected for {why:?}")
                        })?;
                    }
                }
                cases += 1;
            }
        }
    }
    Ok(format!(
        "{cases} adversary placements ejected as expected, no honest principal lost"
    ))
}

fn c4_anonymity() -> Check {
    for k in 2..=5usize {
        let r = run(&ScenarioConfig::honest(k, 400 + k as u64))?;
        let a = r.report.anonymity.clone().ok_or("no anonymity result")?;
        let fact: u64 = (1..=k as u64).product();
        ensure(
            a.set_size == k && a.consistent_assignments == Some(fact) && !a.reduced,
            || format!("k={k}: {a:?}, expected {fact}"),
        )?;
    }
    let r = run(&ScenarioConfig::honest(5, 9).with_adversary("modifier@3"))?;
    let a = r
        .report
        .anonymity
        .clone()
        .ok_or("no anonymity result after blame")?;
    let fact: u64 = (1..=a.set_size as u64).product();
    ensure(
        a.reduced && a.consistent_assignments.is_some_and(|c| c < fact),
        || format!("after blame: {a:?}"),
    )?;
    Ok(format!(
        "honest k=2..5 give k! exactly; after a key-revealing blame {} of {fact} remain",
        a.consistent_assignments.unwrap()
    ))
}

fn c5_crypto() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for i in 0..1000 {
        let kp: KeyPair = keygen(&mut rng);
        let len = rng.gen_range(0..100);
        let msg: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let ct = pke_encrypt(&kp.pk, &msg, &mut rng).map_err(|e| e.to_string())?;
        ensure(pke_decrypt(&kp.sk, &ct).as_deref() == Ok(&msg[..]), || {
            format!("pke case {i}")
        })?;
        let sig = sign(&kp.sk, &msg);
        let back = Signature::from_bytes(&sig.to_bytes()).ok_or("signature encoding")?;
        ensure(verify(&kp.pk, &msg, &back), || {
            format!("signature case {i}")
        })?;
        let mut other = msg.clone();
        other.push(1);
        ensure(!verify(&kp.pk, &other, &sig), || {
            format!("signature forgery case {i}")
        })?;

        let channel: [u8; 32] = rng.gen();
        let digest: [u8; 32] = Sha256::new()
            .chain_update(b"tumbler/r")
            .chain_update(channel)
            .chain_update(kp.pk.to_bytes())
            .finalize()
            .into();
        let r = Scalar::reduce(&digest);
        ensure(
            derive_sig_pk(&channel, &kp.pk) == kp.pk.mul(&GroupElement::base_pow(&r)),
            || format!("derived key case {i}"),
        )?;
    }
    for k in 2..=8usize {
        for trial in 0..200 {
            let keys: Vec<KeyPair> = (0..k).map(|_| keygen(&mut rng)).collect();
            let pks: Vec<_> = keys.iter().map(|kp| kp.pk.clone()).collect();
            let order =
                order_participants(&pks, &rng.gen::<[u8; 32]>()).map_err(|e| e.to_string())?;
            let mut dests: Vec<Destination> = (0..k).map(|_| Destination(rng.gen())).collect();
            let mut onions: Vec<_> = dests
                .iter()
                .map(|d| build_onion(d, &order, &mut rng))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            let mut out = None;
            for e in order.entries() {
                let sk = keys.iter().find(|kp| kp.pk == e.pk_enc).unwrap().sk;
                match peel_stage(&sk, e.position, &onions, &mut rng)
                    .map_err(|e| e.to_string())?
                    .items
                {
                    StageItems::Onions(next) => onions = next,
                    StageItems::Destinations(list) => out = Some(list),
                }
            }
            let mut out = out.ok_or("pipeline produced no list")?;
            out.sort();
            dests.sort();
            ensure(out == dests, || format!("pipeline k={k} trial {trial}"))?;
        }
    }
    Ok("1000 pke, signature and derived-key cases; 200 pipelines for each k in 2..8".into())
}

fn c6_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg_path = dir.path().join("scenario.toml");
    std::fs::write(
        &cfg_path,
        "k = 5\ngas_fee = 1\nadversaries = [\"dropper@2\"]\n",
    )
    .map_err(|e| e.to_string())?;
    let mut digests = Vec::new();
    for attempt in ["a", "b"] {
        let out = dir.path().join(attempt);
        let args = [
            "tumblesim",
            "run",
            "--config",
            cfg_path.to_str().unwrap(),
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ];
        let code = tumbler::harness::cli::run_cli(args, &mut std::io::sink(), &mut std::io::sink());
        ensure(code == 0, || format!("run exited {code}"))?;
        let mut h = Vec::new();
        for f in ["ledger.jsonl", "channel.jsonl", "report.json"] {
            let bytes = std::fs::read(out.join(f)).map_err(|e| e.to_string())?;
            h.push(hex::encode(Sha256::digest(&bytes)));
        }
        digests.push(h);
    }
    ensure(digests[0] == digests[1], || format!("{digests:?}"))?;
    Ok(format!(
        "ledger {} / channel {} identical across runs",
        &digests[0][0][..12],
        &digests[0][1][..12]
    ))
}

fn c7_withdraw_anywhere() -> Check {
    let mut cases = 0;
    let mut scenarios: Vec<(ScenarioConfig, u16)> = Vec::new();
    for phase in [
        "Deposited",
        "Announced",
        "Ordered",
        "Shuffling",
        "Checking",
        "Signing",
    ] {
        for p in 1..=3u16 {
            let mut cfg = ScenarioConfig::honest(3, 31);
            cfg.withdrawals.push(format!("{p}:{phase}"));
            scenarios.push((cfg, p));
        }
    }
    // Blaming only happens once someone deviates.
    for (dropper, p) in [(1u16, 2u16), (2, 3), (3, 1)] {
        let mut cfg = ScenarioConfig::honest(3, 31).with_adversary(&format!("dropper@{dropper}"));
        cfg.withdrawals.push(format!("{p}:Blaming"));
        scenarios.push((cfg, p));
    }
    for (cfg, p) in scenarios {
        let tag = format!("{:?}", cfg.withdrawals);
        let r = run(&cfg)?;
        conserved(&r).map_err(|e| format!("{tag}: {e}"))?;
        honest_kept_principal(&r).map_err(|e| format!("{tag}: {e}"))?;
        let leaver = r
            .report
            .participants
            .iter()
            .find(|x| x.first_position == Some(p))
            .unwrap();
        let refunds: Vec<u64> = r
            .ledger_log
            .lines()
            .map(|l| serde_json::from_str::<Value>(l).unwrap())
            .filter(|v| v["kind"] == "Withdraw" && v["from"] == leaver.account.as_str())
            .map(|v| v["amount"].as_u64().unwrap())
            .collect();
        ensure(
            !refunds.is_empty() && refunds.iter().all(|a| *a == DENOM),
            || format!("{tag}: refunds {refunds:?}"),
        )?;
        let (deltas, _) = replay(&r.ledger_log);
        let own = deltas.get(&leaver.account).copied().unwrap_or(0);
        ensure(own == -((GAS * leaver.deposits as u64) as i128), || {
            format!("{tag}: leaver moved {own}")
        })?;
        cases += 1;
    }
    Ok(format!(
        "{cases} scripted exits across seven phases refunded in full"
    ))
}

fn main() {
    type Criterion = (u8, &'static str, fn() -> Check);
    let criteria: [Criterion; 7] = [
        (1, "happy path", c1_happy_path),
        (2, "contract checks", c2_contract_checks),
        (3, "blame matrix", c3_blame_matrix),
        (4, "anonymity oracle", c4_anonymity),
        (5, "crypto properties", c5_crypto),
        (6, "determinism", c6_determinism),
        (7, "withdraw anywhere", c7_withdraw_anywhere),
    ];
    // The first criterion is timed, so it runs alone; the rest share cores.
    let mut results = vec![c1_happy_path()];
    results.extend(std::thread::scope(|s| {
        let handles: Vec<_> = criteria[1..].iter().map(|(_, _, f)| s.spawn(f)).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err("panicked".into())))
            .collect::<Vec<_>>()
    }));
    let mut failed = Vec::new();
    for ((n, name, _), result) in criteria.iter().zip(&results) {
        match result {
            Ok(detail) => println!("criterion {n} PASS {name}: {detail}"),
            Err(why) => {
                println!("criterion {n} FAIL {name}: {why}");
                failed.push(*n);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
