use std::path::{Path, PathBuf};

use nhext_core::integrate::Trajectory;
use nhext_core::System;
use serde_json::Value;

use crate::{CliError, CliResult};

pub fn to_json(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<PathBuf> {
    std::fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    Ok(path.to_path_buf())
}

/// One row per sample: `t`, coordinates, quasi-velocities, energy and
/// `max |v^i|`.
pub fn write_trajectory_csv(path: &Path, sys: &System, tr: &Trajectory) -> CliResult<PathBuf> {
    let err = |e: csv::Error| CliError::io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let mut header = vec!["t".to_string()];
    header.extend(sys.spec.coordinates.iter().cloned());
    header.extend((0..sys.n()).map(|b| format!("v_{}", sys.spec.frame_label(b))));
    header.push("energy".into());
    header.push("constraint_norm".into());
    w.write_record(&header).map_err(err)?;
    for (i, st) in tr.states.iter().enumerate() {
        let mut row = vec![tr.t[i].to_string()];
        row.extend(st.q.iter().map(|x| x.to_string()));
        row.extend(st.v.iter().map(|x| x.to_string()));
        row.push(tr.energy[i].to_string());
        row.push(tr.constraint_norm[i].to_string());
        w.write_record(&row).map_err(err)?;
    }
    w.flush()
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    Ok(path.to_path_buf())
}
