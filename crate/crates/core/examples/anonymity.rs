//! Counts payer-to-address assignments an observer cannot rule out.

use tumbler::harness::{analyze_anonymity, run_scenario, ScenarioConfig};

fn main() {
    for (label, cfg) in [
        ("honest k=4", ScenarioConfig::honest(4, 8)),
        (
            "k=4 after blame",
            ScenarioConfig::honest(4, 8).with_adversary("modifier@2"),
        ),
    ] {
        let run = run_scenario(&cfg).unwrap();
        let a = analyze_anonymity(&run.ledger_log, &run.transcript).unwrap();
        println!(
            "{label}: {} of {} assignments consistent, {} payers linked",
            a.consistent, a.total, a.links
        );
    }
}
