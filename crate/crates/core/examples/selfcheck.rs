//! Gradient and invariant self-checks for every differentiable operator and
//! model block, the same suite `ptts selfcheck` runs.

fn main() -> pilot_tts::Result<()> {
    let seed = std::env::args().nth(1).map(|a| a.parse().expect("seed")).unwrap_or(0);
    let outcomes = pilot_tts::selfcheck::run_all(seed)?;
    for o in &outcomes {
        println!("{} {:24} {}", if o.passed { "ok  " } else { "FAIL" }, o.name, o.detail);
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} checks, {failed} failed", outcomes.len());
    std::process::exit(if failed == 0 { 0 } else { 1 });
}
