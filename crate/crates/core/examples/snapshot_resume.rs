//! Interrupt a run, resume it from its checkpoint and read the final
//! snapshot back.

use ttn_scatter::runner::{resume, run, ExperimentConfig, RunMode};
use ttn_scatter::snapshot::load_snapshot;

const CONFIG: &str = r#"
[geometry]
lx = 6

[[packets]]
center = [2, 2]
k_over_pi = [0.0, 0.0]

[evolution]
dt = 0.05
tau_prep = 1.0
t_max = 3.0
measure_every = 5
chi = 4

[output]
checkpoint_every = 20
"#;

fn main() -> ttn_scatter::Result<()> {
    let dir = std::env::temp_dir().join("ttn-resume-example");
    let cfg = ExperimentConfig::from_toml_with_overrides(CONFIG, &[format!("output.dir='{}'", dir.display())])?;
    let part = run(&cfg, RunMode::Scatter, Some(30))?;
    println!("stopped at step {} (t = {:.2}), completed: {}", part.steps, part.t, part.completed);
    let done = resume(&dir, None)?;
    println!("resumed to step {} (t = {:.2})", done.steps, done.t);
    let (state, meta) = load_snapshot(&done.snapshot.expect("completed"))?;
    println!("snapshot: t = {}, g = {}, chi = {}, norm = {:.12}", meta.t, meta.g, meta.chi, state.norm());
    Ok(())
}
