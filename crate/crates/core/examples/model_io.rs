//! Model files, traces and policies on disk.
//!
//! Writes a synthetic model in the binary and JSON formats, reads both back,
//! solves it and stores the trace and final policy as CSV.
//!
//! ```text
//! cargo run --release --example model_io -- [output-dir]
//! ```

use std::path::Path;

use qnpg::io::{write_policy, write_trace_with, TraceCsvOptions};
use qnpg::{
    generate_synthetic, read_model, solve, write_model, Family, Policy, RegularizerSpec,
    SolverConfig, SynthSpec,
};

/// Returns whether both formats round-tripped exactly.
pub fn run_example(dir: &Path, spec: &SynthSpec) -> qnpg::Result<bool> {
    std::fs::create_dir_all(dir)?;
    let model = generate_synthetic(spec)?;
    let bin = dir.join("model.mdp");
    let json = dir.join("model.json");
    write_model(&model, &bin)?;
    write_model(&model, &json)?;
    let from_bin = read_model(&bin)?;
    let from_json = read_model(&json)?;
    let exact = from_bin == model && from_json == model;
    println!(
        "binary {} bytes, json {} bytes, round trip exact: {exact}",
        std::fs::metadata(&bin)?.len(),
        std::fs::metadata(&json)?.len()
    );

    let (ns, na) = (model.num_states, model.num_actions);
    let reg = RegularizerSpec::uniform(Family::ReverseKl, ns, na);
    let config = SolverConfig {
        record_snapshots: true,
        ..SolverConfig::default()
    };
    let (policy, trace) = solve(&from_bin, &reg, &config, &Policy::uniform(ns, na))?;
    let opts = TraceCsvOptions {
        timing: false,
        reference: Some(&policy),
    };
    write_trace_with(&trace, dir.join("trace.csv"), &opts)?;
    write_policy(&policy, dir.join("policy.csv"))?;
    println!(
        "{} iterations; trace and policy written to {}",
        trace.iterations(),
        dir.display()
    );
    Ok(exact)
}

#[allow(dead_code)]
fn main() -> qnpg::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "qnpg-out".into());
    run_example(Path::new(&dir), &SynthSpec::default())?;
    Ok(())
}
