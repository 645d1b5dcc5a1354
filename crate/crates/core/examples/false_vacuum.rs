//! Classical decay threshold, then short two-packet runs on the false
//! vacuum: stable, decaying after the collision, and gone before the ramp
//! ends.

use std::f64::consts::PI;

use ttn_scatter::runner::{
    bubble_energy, classical_threshold, classify_run, critical_radius, load_series, run_false_vacuum, ExperimentConfig,
};

const CONFIG: &str = r#"
[geometry]
lx = 8

[model]
g = 1.5

[[packets]]
center = [2, 2]
k_over_pi = [0.5, 0.5]
sigma = 1.0

[[packets]]
center = [6, 6]
k_over_pi = [-0.5, -0.5]
sigma = 1.0

[evolution]
dt = 0.1
tau_prep = 3.0
t_max = 15.0
measure_every = 2
chi = 4

[observables]
energy_density = false
composite = false
long_range = false

[classifier]
window_after_collision = 2.0
"#;

fn main() -> ttn_scatter::Result<()> {
    let h_star = classical_threshold(1.0);
    let r = critical_radius(1.0, h_star, 2.0 * PI, PI)?;
    println!("h* = {h_star:.5}, r* = {r:.4}, E(r*) = {:.4}", bubble_energy(r, 1.0, h_star, 2.0 * PI, PI)?);

    for h in [0.05, 0.5, 1.2] {
        let dir = std::env::temp_dir().join(format!("ttn-fv-{h}"));
        let cfg = ExperimentConfig::from_toml_with_overrides(
            CONFIG,
            &[format!("model.h={h}"), format!("output.dir='{}'", dir.display())],
        )?;
        let run = run_false_vacuum(&cfg)?;
        let series = load_series(&run.series)?;
        match classify_run(&cfg, &series) {
            Ok((class, slope)) => println!("h = {h}: {class:?} (slope {slope:.4})"),
            Err(e) => println!("h = {h}: {e}"),
        }
    }
    Ok(())
}
