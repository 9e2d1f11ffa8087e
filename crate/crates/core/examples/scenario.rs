//! Runs a scenario from an inline config and lists what it wrote.

use qbound::scenarios::{parse_config, run_scenario_in};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = parse_config(r#"{"scenario": "spectrum", "domain": {"intervals": [[0, 1], [0, 1]]}, "bc": {"preset": "two_interval_u2"}, "k": 6}"#)?;
    let dir = std::env::temp_dir().join("qbound-example");
    let report = run_scenario_in(&cfg, &dir)?;
    println!("{} -> {}", cfg.scenario.name(), dir.display());
    for c in &report.checks {
        println!("  [{}] {} = {:.3e}", if c.pass { "ok" } else { "FAIL" }, c.name, c.value);
    }
    for entry in std::fs::read_dir(&dir)? {
        println!("  {}", entry?.file_name().to_string_lossy());
    }
    Ok(())
}
