//! CSV writers and readers, and the run manifest.
//!
//! Every float is printed as `{:.16e}` (17 significant digits), which
//! round-trips an `f64` exactly. Data files carry no timestamps, so the same
//! inputs give byte-identical files.

use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use crate::analysis::l2_norm;
use crate::error::{Error, Result};
use crate::grid::TriangleGrid;
use crate::kernels::{GainSet, KernelFamily, KernelField, SolveSummary};
use crate::sim::Trajectory;
use crate::verify::Check;

pub const KERNEL_HEADER: &str = "x,y,Kuu,Kuv,Kvu,Kvv";
pub const FEEDBACK_HEADER: &str = "y,Kuu,Kuv,Kvu,Kvv";
pub const INJECTION_HEADER: &str = "x,p1,p2";
pub const REPORT_HEADER: &str = "name,value,bound,pass";

#[inline]
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn row(out: &mut impl Write, values: &[f64]) -> std::io::Result<()> {
    let cells: Vec<String> = values.iter().map(|&v| fmt_real(v)).collect();
    writeln!(out, "{}", cells.join(","))
}

/// One row per stored triangle node, `x` major. The collocated kernel is
/// written in its stored (swapped) orientation.
pub fn write_kernel_csv(out: &mut impl Write, kf: &KernelField) -> Result<()> {
    writeln!(out, "{KERNEL_HEADER}")?;
    let h = 1.0 / kf.n as f64;
    for i in 0..=kf.n {
        for j in 0..=i {
            let m = kf.node(i, j);
            row(out, &[i as f64 * h, j as f64 * h, m[0][0], m[0][1], m[1][0], m[1][1]])?;
        }
    }
    Ok(())
}

/// Inverse of [`write_kernel_csv`]; `n` is recovered from the row count.
pub fn read_kernel_csv(
    input: impl BufRead,
    family: KernelFamily,
    lambda1: f64,
    lambda2: f64,
) -> Result<KernelField> {
    let rows = read_rows(input, KERNEL_HEADER, 6)?;
    let n = triangle_side(rows.len()).ok_or_else(|| Error::Parse {
        line: rows.len() + 1,
        msg: format!("{} rows do not fill a triangle", rows.len()),
    })?;
    let grid = |c: usize| {
        let mut it = rows.iter().map(|r| r[c]);
        TriangleGrid::from_fn(n, |_, _| it.next().unwrap_or(f64::NAN))
    };
    Ok(KernelField {
        n,
        kuu: grid(2),
        kuv: grid(3),
        kvu: grid(4),
        kvv: grid(5),
        family,
        lambda1,
        lambda2,
        solves: [SolveSummary {
            iterations: 0,
            final_increment: f64::NAN,
        }; 2],
    })
}

fn triangle_side(len: usize) -> Option<usize> {
    let n = ((((8 * len + 1) as f64).sqrt() - 3.0) / 2.0).round() as usize;
    ((n + 1) * (n + 2) / 2 == len && n > 0).then_some(n)
}

fn read_rows(input: impl BufRead, header: &str, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if idx == 0 {
            if line.trim() != header {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected header `{header}`"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: lineno,
                msg: e.to_string(),
            })?;
        if vals.len() != width {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {width} fields, found {}", vals.len()),
            });
        }
        rows.push(vals);
    }
    Ok(rows)
}

/// Feedback gain curves `K(1, y)`.
pub fn write_feedback_csv(out: &mut impl Write, gains: &GainSet) -> Result<()> {
    writeln!(out, "{FEEDBACK_HEADER}")?;
    let n = gains.nx();
    for (j, m) in gains.feedback_row.iter().enumerate() {
        row(out, &[j as f64 / n as f64, m[0][0], m[0][1], m[1][0], m[1][1]])?;
    }
    Ok(())
}

/// Feedback curves read back as `(y, K(1,y))` rows.
pub fn read_feedback_csv(input: impl BufRead) -> Result<Vec<[f64; 5]>> {
    Ok(read_rows(input, FEEDBACK_HEADER, 5)?
        .into_iter()
        .map(|r| [r[0], r[1], r[2], r[3], r[4]])
        .collect())
}

/// Output-injection gains `p₁(x), p₂(x)`.
pub fn write_injection_csv(out: &mut impl Write, gains: &GainSet) -> Result<()> {
    writeln!(out, "{INJECTION_HEADER}")?;
    let n = gains.p1.len() - 1;
    for (j, (a, b)) in gains.p1.iter().zip(&gains.p2).enumerate() {
        row(out, &[j as f64 / n as f64, *a, *b])?;
    }
    Ok(())
}

pub fn read_injection_csv(input: impl BufRead) -> Result<Vec<[f64; 3]>> {
    Ok(read_rows(input, INJECTION_HEADER, 3)?
        .into_iter()
        .map(|r| [r[0], r[1], r[2]])
        .collect())
}

/// `t,x,u,v[,uhat,vhat]`, one row per snapshot and grid node.
pub fn write_snapshots_csv(out: &mut impl Write, traj: &Trajectory) -> Result<()> {
    let with_obs = traj.observer.is_some();
    writeln!(out, "t,x,u,v{}", if with_obs { ",uhat,vhat" } else { "" })?;
    let h = 1.0 / traj.nx as f64;
    let mut buf = Vec::with_capacity(6);
    for (k, (t, w)) in traj.times.iter().zip(&traj.plant).enumerate() {
        for j in 0..=traj.nx {
            buf.clear();
            buf.extend([*t, j as f64 * h, w.u[j], w.v[j]]);
            if let Some(obs) = &traj.observer {
                buf.extend([obs[k].u[j], obs[k].v[j]]);
            }
            row(out, &buf)?;
        }
    }
    Ok(())
}

/// `t,l2_u,l2_v,l2_w,l2_err[,V_lyap]`. Without an observer `l2_err` is `NaN`.
pub fn write_norms_csv(out: &mut impl Write, traj: &Trajectory, lyapunov: Option<&[f64]>) -> Result<()> {
    writeln!(out, "t,l2_u,l2_v,l2_w,l2_err{}", if lyapunov.is_some() { ",V_lyap" } else { "" })?;
    let errors = traj.errors();
    let h = 1.0 / traj.nx as f64;
    let comp = |xs: &[f64]| crate::grid::trapezoid(&xs.iter().map(|x| x * x).collect::<Vec<_>>(), h).sqrt();
    for (k, (t, w)) in traj.times.iter().zip(&traj.plant).enumerate() {
        let err = errors.as_ref().map_or(f64::NAN, |e| l2_norm(&e[k]));
        let mut vals = vec![*t, comp(&w.u), comp(&w.v), l2_norm(w), err];
        if let Some(v) = lyapunov {
            vals.push(v[k]);
        }
        row(out, &vals)?;
    }
    Ok(())
}

/// `name,value,bound,pass`, one row per check.
pub fn write_report_csv(out: &mut impl Write, checks: &[Check]) -> Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for c in checks {
        writeln!(
            out,
            "{},{},{},{}",
            c.name,
            fmt_real(c.value),
            fmt_real(c.bound),
            if c.pass { "pass" } else { "fail" }
        )?;
    }
    Ok(())
}

/// Creates `dir/name` and fills it through `fill`.
pub fn write_file(
    dir: &Path,
    name: &str,
    fill: impl FnOnce(&mut std::io::BufWriter<fs::File>) -> Result<()>,
) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut w = std::io::BufWriter::new(fs::File::create(&path)?);
    fill(&mut w)?;
    w.flush()?;
    Ok(path)
}

/// Metadata of one CLI run. Written last; its presence marks a complete run.
#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    pub command: String,
    pub config: String,
    pub version: String,
    /// `(label, iterations, final increment)` per kernel pair solve.
    pub kernel_solves: Vec<(String, usize, f64)>,
    pub files: Vec<PathBuf>,
    /// `(stage, seconds)`.
    pub timings: Vec<(String, f64)>,
}

impl RunManifest {
    pub fn new(command: &str, config: String) -> Self {
        Self {
            command: command.to_string(),
            config,
            version: env!("CARGO_PKG_VERSION").to_string(),
            ..Self::default()
        }
    }

    pub fn record_kernel(&mut self, kf: &KernelField) {
        for (k, s) in kf.solves.iter().enumerate() {
            self.kernel_solves
                .push((format!("{}[{k}]", kf.family.name()), s.iterations, s.final_increment));
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("command = {}\nversion = {}\n\n[config]\n", self.command, self.version);
        s.push_str(&self.config);
        s.push_str("\n[kernels]\n");
        for (label, it, inc) in &self.kernel_solves {
            s.push_str(&format!("{label} iterations = {it} final_increment = {inc:e}\n"));
        }
        s.push_str("\n[files]\n");
        for f in &self.files {
            s.push_str(&format!("{}\n", f.display()));
        }
        s.push_str("\n[timings]\n");
        for (stage, secs) in &self.timings {
            s.push_str(&format!("{stage} = {secs:.3} s\n"));
        }
        s
    }

    /// Writes `manifest.txt` through a temporary file and a rename.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let tmp = dir.join(".manifest.txt.tmp");
        let path = dir.join("manifest.txt");
        fs::write(&tmp, self.to_text())?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }
}
