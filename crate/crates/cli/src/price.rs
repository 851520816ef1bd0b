use hazard_core::{bond_price_0, pre_default_value, pre_default_value_mc};

use crate::config::RunConfig;
use crate::CliError;

/// Agreement threshold between the closed form and the simulation.
const PRICE_SE: f64 = 3.0;

pub fn run(cfg: &RunConfig) -> Result<u8, CliError> {
    let p = &cfg.params;
    let closed = bond_price_0(p)?.value;
    let quad = pre_default_value(0.0, 0.0, p)?;
    let mc = pre_default_value_mc(0.0, 0.0, p, cfg.steps, cfg.n_paths, cfg.seed)?;
    let delta = mc.value - closed;
    let ok = delta == 0.0 || delta.abs() <= PRICE_SE * mc.std_error;
    println!("D(0,T) closed form  {closed:.10}");
    println!("D(0,T) quadrature   {quad:.10}");
    println!(
        "D(0,T) Monte Carlo  {:.10} (SE {:.3e}, {} paths, {} steps, seed {})",
        mc.value, mc.std_error, cfg.n_paths, cfg.steps, cfg.seed
    );
    let z = if mc.std_error > 0.0 { delta / mc.std_error } else { 0.0 };
    println!("delta               {delta:+.3e} ({z:+.2} SE)");
    println!(
        "{}",
        if ok {
            "consistent within 3 SE"
        } else {
            "INCONSISTENT: more than 3 SE apart"
        }
    );
    Ok(if ok { 0 } else { 1 })
}
