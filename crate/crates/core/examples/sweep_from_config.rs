//! Drives a sweep from a JSON document, as the command-line tool does, and
//! shows the cache making the second run skip the offline phase.
//!
//! ```text
//! cargo run --release --example sweep_from_config -- [config.json]
//! ```

use signcem::experiments::{run, ExperimentConfig};

const DEFAULT: &str = r#"{
  "model": "square",
  "fine_n": 80,
  "coarse_n": [10, 20],
  "layers": [1, 2, 3],
  "l_star": 3,
  "sigma_plus": 1.0,
  "sigma_minus": 0.1,
  "baseline": true,
  "decay": { "coarse_n": 10, "element": [1, 4], "layers": [1, 2, 3], "m_ref": 8 },
  "out": "target/sweep-example"
}"#;

fn main() -> signcem::Result<()> {
    let config = match std::env::args().nth(1) {
        Some(p) => ExperimentConfig::load(p.as_ref())?,
        None => ExperimentConfig::from_json(DEFAULT)?,
    };
    for pass in ["cold", "warm"] {
        let s = run(&config)?;
        let offline: f64 = s.errors.iter().map(|r| r.offline_ms).sum();
        println!("{pass} run: {} points, {} failed, offline {offline:.0} ms", s.points(), s.failures());
    }
    println!("outputs in {}", config.out.display());
    Ok(())
}
