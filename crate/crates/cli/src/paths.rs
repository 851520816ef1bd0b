use std::io::Write;
use std::path::Path;

use hazard_core::engine::{draw_path, par_map, RngStream, TauCoupling};
use hazard_core::{pre_default_value, TimeGrid};

use crate::config::RunConfig;
use crate::output::{io_err, num, open};
use crate::CliError;

pub const HEADER: &str = "path_id,t,w,c,envelope_lo,envelope_hi,g,regime";

pub fn run(cfg: &RunConfig, count: usize, out: Option<&Path>) -> Result<u8, CliError> {
    if count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let p = cfg.params;
    let grid = TimeGrid::new(p.maturity, cfg.steps)?;
    let mut sink = open(out)?;
    // Rows are built in parallel, one block per path, and written in order.
    let blocks = par_map(count, |k| -> Result<String, CliError> {
        let draw = draw_path(&RngStream::new(cfg.seed, k), &p, &grid, TauCoupling::Independent)?;
        let mut block = String::new();
        for i in 0..=grid.steps() {
            let (t, w) = (grid.t(i), draw.w.w[i]);
            let c = pre_default_value(t, w, &p)?;
            let (lo, hi) = p.envelope(t);
            let regime = if w >= 0.0 { "plus" } else { "minus" };
            block.push_str(&format!(
                "{k},{},{},{},{},{},{},{regime}\n",
                num(t),
                num(w),
                num(c),
                num(lo),
                num(hi),
                num(draw.survival.g[i])
            ));
        }
        Ok(block)
    });
    writeln!(sink, "{HEADER}").map_err(io_err)?;
    for block in blocks {
        sink.write_all(block?.as_bytes()).map_err(io_err)?;
    }
    sink.flush().map_err(io_err)?;
    drop(sink);
    if let Some(path) = out {
        println!("wrote {count} paths x {} nodes to {}", grid.len(), path.display());
    }
    Ok(0)
}
