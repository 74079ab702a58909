//! Runs a scenario file, or a five-member group with a modifier at position 3.
//!
//!     cargo run --example run_scenario -- scenarios/pool_and_leaver.toml

use tumbler::harness::{run_scenario, ScenarioConfig};

fn main() {
    let cfg = match std::env::args().nth(1) {
        Some(path) => ScenarioConfig::load(path.as_ref()).unwrap(),
        None => ScenarioConfig::honest(5, 7).with_adversary("modifier@3"),
    };
    let run = run_scenario(&cfg).unwrap();
    let r = &run.report;
    println!(
        "{:?} after {} round(s), {} ticks",
        r.outcome, r.rounds_used, r.ticks
    );
    println!(
        "ejected {:?} {:?}",
        r.ejections.positions, r.ejections.reasons
    );
    for p in &r.participants {
        println!(
            "{} pos {:?} honest {} {:?} delta {}",
            &p.account[..8],
            p.first_position,
            p.honest,
            p.phase,
            p.holdings_delta
        );
    }
    println!("conserved: {}", r.is_conserved());
}
