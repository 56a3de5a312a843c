use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::Result;

use super::convergence::ErrorTable;

pub const ERRORS_CSV: &str = "errors.csv";
pub const METADATA_JSON: &str = "metadata.json";
pub const PLOT_SCRIPT: &str = "errors.gp";

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// `H,ell,variant,error,order,seconds,coarse_level,dt,steps,cache_hit,failure`.
pub fn write_error_csv<W: Write>(table: &ErrorTable, mut w: W) -> std::io::Result<()> {
    writeln!(w, "H,ell,variant,error,order,seconds,coarse_level,dt,steps,cache_hit,failure")?;
    for r in &table.rows {
        let failure = r.failure.as_deref().unwrap_or("").replace(['"', '\n'], " ");
        writeln!(
            w,
            "{},{},{},{},{},{:.3},{},{},{},{},\"{}\"",
            r.mesh_size,
            opt(r.layers),
            r.variant.name(),
            opt(r.error),
            opt(r.order),
            r.seconds,
            r.coarse_level,
            r.dt,
            r.steps,
            r.cache_hit,
            failure
        )?;
    }
    Ok(())
}

/// Gnuplot script drawing error against `H` on log-log axes, one curve per series.
pub fn plot_script(table: &ErrorTable) -> String {
    let mut series: Vec<(String, String)> = Vec::new();
    for r in &table.rows {
        let title = match r.layers {
            Some(l) => format!("{} ell={l}", r.variant.name()),
            None => r.variant.name().to_string(),
        };
        let filter = match r.layers {
            Some(l) => format!("strcol(3) eq '{}' && strcol(2) eq '{l}'", r.variant.name()),
            None => format!("strcol(3) eq '{}'", r.variant.name()),
        };
        if !series.iter().any(|(t, _)| *t == title) {
            series.push((title, filter));
        }
    }
    let mut s = String::from(
        "set datafile separator ','\nset logscale xy\nset xlabel 'H'\nset ylabel 'error'\nset key left top\nset terminal pngcairo size 800,600\nset output 'errors.png'\n",
    );
    let plots: Vec<String> = series
        .iter()
        .map(|(title, filter)| format!("'{ERRORS_CSV}' skip 1 using 1:(({filter}) ? $4 : 1/0) with linespoints title '{title}'"))
        .collect();
    s.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    s
}

/// Writes the error CSV, the JSON metadata and the plot script into `dir`.
pub fn write_study_outputs(table: &ErrorTable, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let csv = dir.join(ERRORS_CSV);
    let mut w = BufWriter::new(fs::File::create(&csv)?);
    write_error_csv(table, &mut w)?;
    w.flush()?;
    let meta = dir.join(METADATA_JSON);
    let mut doc = serde_json::to_value(table)?;
    doc["environment"] = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "os": std::env::consts::OS,
        "arch": std::env::consts::ARCH,
        "threads": rayon::current_num_threads(),
    });
    fs::write(&meta, serde_json::to_string_pretty(&doc)?)?;
    let plot = dir.join(PLOT_SCRIPT);
    fs::write(&plot, plot_script(table))?;
    Ok(vec![csv, meta, plot])
}
