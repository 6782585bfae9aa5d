//! CSV tables and the metadata sidecar.
//!
//! Floats use Rust's shortest round-trip formatting, so files are
//! locale-independent and parse back to the same bits.

use std::io::{self, Write};

use crate::engine::{Sample, SweepRow};

pub const SERIES_HEADER: &str = "t,na,nc,nloop,norm,na_cond,nc_cond,P_eplus";
pub const SWEEP_HEADER: &str = "x,na_mean,na_se,nc_mean,nc_se";

pub fn write_series<W: Write>(mut w: W, times: &[f64], samples: &[Sample]) -> io::Result<()> {
    writeln!(w, "{SERIES_HEADER}")?;
    for (t, s) in times.iter().zip(samples) {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            t, s.n_a, s.n_c, s.n_loop, s.norm, s.n_a_cond, s.n_c_cond, s.p_eplus
        )?;
    }
    Ok(())
}

pub fn write_sweep<W: Write>(mut w: W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.x, r.na_mean, r.na_se, r.nc_mean, r.nc_se)?;
    }
    Ok(())
}

/// First-jump log: one line per trajectory that jumped.
pub fn write_jumps<W: Write>(mut w: W, jumps: &[(usize, crate::jumps::JumpEvent)]) -> io::Result<()> {
    writeln!(w, "traj,t,kind")?;
    for (i, ev) in jumps {
        writeln!(w, "{},{},{}", i, ev.t, ev.kind.name())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
    pub extra: Vec<(String, String)>,
}

/// `key = value` lines, in the same format as the config file.
pub fn write_metadata<W: Write>(mut w: W, m: &Metadata) -> io::Result<()> {
    writeln!(w, "command = {}", m.command)?;
    writeln!(w, "seed = {}", m.seed)?;
    writeln!(w, "config_hash = {}", m.config_hash)?;
    writeln!(w, "version = {}", m.version)?;
    for (k, v) in &m.extra {
        writeln!(w, "{k} = {v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_layout() {
        let s = Sample {
            n_a: 0.25,
            n_c: 0.5,
            n_loop: 0.0,
            norm: 1.0,
            n_a_cond: 0.1,
            n_c_cond: 1e-20,
            p_eplus: 0.3,
        };
        let mut buf = Vec::new();
        write_series(&mut buf, &[0.0, 0.01], &[s, s]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SERIES_HEADER);
        assert_eq!(lines[1], "0,0.25,0.5,0,1,0.1,0.00000000000000000001,0.3");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn sweep_layout() {
        let mut buf = Vec::new();
        let r = SweepRow {
            x: -1.5,
            na_mean: 0.5,
            na_se: 0.01,
            nc_mean: 0.25,
            nc_se: 0.0,
        };
        write_sweep(&mut buf, &[r]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{SWEEP_HEADER}\n-1.5,0.5,0.01,0.25,0\n"));
    }
}
