//! Runs the built-in invariant checks on a configuration file, or on the
//! defaults when no path is given.

use tissue::cli::invariant_suite;
use tissue::config::RunConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => RunConfig::load(path.as_ref())?,
        None => RunConfig::default(),
    };
    let checks = invariant_suite(&cfg).map_err(|e| e.message)?;
    for c in &checks {
        println!("{} {:<28} {:.2e} (tol {:.0e}) {}", if c.pass { "ok  " } else { "FAIL" }, c.name, c.value, c.tolerance, c.note);
    }
    println!("{}/{} passed", checks.iter().filter(|c| c.pass).count(), checks.len());
    Ok(())
}
