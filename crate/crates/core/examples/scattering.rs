//! Short two-magnon collision on a 12x12 torus at low bond dimension,
//! driven through the experiment runner. Prints the c_A trace.

use ttn_scatter::runner::{collision_time, load_series, run_scattering, scalar_series, ExperimentConfig};

const CONFIG: &str = r#"
[geometry]
lx = 12

[model]
g = 1.0

[evolution]
dt = 0.1
tau_prep = 4.0
t_max = 12.0
measure_every = 5
chi = 4

[observables]
energy_density = false
composite = false
"#;

fn main() -> ttn_scatter::Result<()> {
    let dir = std::env::temp_dir().join("ttn-scatter-example");
    let cfg = ExperimentConfig::from_toml_with_overrides(CONFIG, &[format!("output.dir='{}'", dir.display())])?;
    println!("packets {:?}", cfg.packets()?);
    println!("expected collision at t = {:.2}", collision_time(&cfg)?);
    let summary = run_scattering(&cfg)?;
    let series = load_series(&summary.series)?;
    for (t, v) in scalar_series(&series, "c_a") {
        println!("{t:6.2} {v:+.3e}");
    }
    println!("final state in {}", summary.snapshot.expect("completed").display());
    Ok(())
}
