use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::run::{Aggregate, RunOutcome};
use super::ScenarioError;

pub const RECORDS_HEADER: &str = "slot,alice_bit,alice_basis,intensity_class,bob_basis,outcome,bob_bit,sifted,sampled,error";

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), ScenarioError> {
    let wrap = |source| ScenarioError::Output {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(wrap)?);
    body(&mut w).map_err(wrap)?;
    w.flush().map_err(wrap)
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `records.csv`, `summary.json` and `clicks.csv`, plus
/// `qber_timeseries.csv`, `series.csv` and `warnings.log` when there is
/// something to put in them.
pub fn write_outputs(dir: &Path, outcome: &RunOutcome) -> Result<(), ScenarioError> {
    std::fs::create_dir_all(dir).map_err(|source| ScenarioError::Output {
        path: dir.display().to_string(),
        source,
    })?;
    write_file(&dir.join("records.csv"), |w| {
        writeln!(w, "{RECORDS_HEADER}")?;
        for r in &outcome.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.slot,
                r.alice_bit,
                r.alice_basis.as_str(),
                r.intensity_class.as_str(),
                r.bob_basis.as_str(),
                r.outcome.as_str(),
                opt(r.bob_bit),
                r.sifted as u8,
                r.sampled as u8,
                r.error as u8
            )?;
        }
        Ok(())
    })?;
    write_file(&dir.join("summary.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &outcome.summary)?;
        writeln!(w)
    })?;
    write_file(&dir.join("clicks.csv"), |w| {
        writeln!(w, "time_ps,detector_path,gate_index")?;
        for c in &outcome.clicks {
            writeln!(w, "{},{},{}", c.time_ps, c.detector_path, c.gate_index)?;
        }
        Ok(())
    })?;
    if !outcome.windows.is_empty() {
        write_file(&dir.join("qber_timeseries.csv"), |w| {
            writeln!(w, "window_start_s,window_end_s,sifted,errors,qber")?;
            for win in &outcome.windows {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    win.start_s,
                    win.end_s,
                    win.sifted,
                    win.errors,
                    opt(win.qber())
                )?;
            }
            Ok(())
        })?;
    }
    if !outcome.recorder.series().is_empty() {
        write_file(&dir.join("series.csv"), |w| {
            writeln!(w, "series,time_s,value")?;
            for (name, points) in outcome.recorder.series() {
                for (t, v) in points {
                    writeln!(w, "{name},{t},{v}")?;
                }
            }
            Ok(())
        })?;
    }
    if !outcome.warnings.is_empty() {
        write_file(&dir.join("warnings.log"), |w| {
            for line in &outcome.warnings {
                writeln!(w, "{line}")?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

pub fn write_aggregate(path: &Path, agg: &Aggregate) -> Result<(), ScenarioError> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, agg)?;
        writeln!(w)
    })
}
