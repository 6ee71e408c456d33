//! Flat-file outputs: the results CSV and a matplotlib script that
//! renders the two standard panels (success rate vs r, log bits vs r)
//! from it.
//!
//! The CSV is locale-free: `.` decimals, comma separators, one header
//! line. Floats are written with Rust's shortest round-trip formatting,
//! so `parse_csv(csv_string(rows))` reproduces the rows bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use super::ResultsRow;
use crate::{Error, Result};

pub const CSV_HEADER: &str = "algorithm,d,M,K,L,r,m_eff,tau,trials,success_rate,\
mean_total_bits,std_total_bits,r_necessary,r_sufficient,feasible";

impl ResultsRow {
    pub fn csv_line(&self) -> String {
        let opt_usize = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        let opt_f64 = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.algorithm,
            self.d,
            self.m,
            self.k,
            opt_usize(self.l),
            self.r,
            self.m_eff,
            opt_f64(self.tau),
            self.trials,
            self.success_rate,
            self.mean_total_bits,
            self.std_total_bits,
            self.r_necessary,
            self.r_sufficient,
            self.feasible
        )
    }
}

pub fn csv_string(rows: &[ResultsRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Config("no rows to write".into()));
    }
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv_line());
        out.push('\n');
    }
    Ok(out)
}

pub fn emit_csv(rows: &[ResultsRow], path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(rows)?)?;
    Ok(())
}

fn bad_csv(lineno: usize, what: impl std::fmt::Display) -> Error {
    Error::Config(format!("csv line {lineno}: {what}"))
}

fn field<T: std::str::FromStr>(s: &str, name: &str, lineno: usize) -> Result<T> {
    s.parse()
        .map_err(|_| bad_csv(lineno, format!("bad {name} '{s}'")))
}

fn opt_field<T: std::str::FromStr>(s: &str, name: &str, lineno: usize) -> Result<Option<T>> {
    if s.is_empty() {
        Ok(None)
    } else {
        field(s, name, lineno).map(Some)
    }
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(Error::Config(format!(
                "unexpected csv header {:?}",
                other.unwrap_or("")
            )));
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 15 {
            return Err(bad_csv(lineno, format!("expected 15 fields, got {}", f.len())));
        }
        rows.push(ResultsRow {
            algorithm: f[0].to_string(),
            d: field(f[1], "d", lineno)?,
            m: field(f[2], "M", lineno)?,
            k: field(f[3], "K", lineno)?,
            l: opt_field(f[4], "L", lineno)?,
            r: field(f[5], "r", lineno)?,
            m_eff: field(f[6], "m_eff", lineno)?,
            tau: opt_field(f[7], "tau", lineno)?,
            trials: field(f[8], "trials", lineno)?,
            success_rate: field(f[9], "success_rate", lineno)?,
            mean_total_bits: field(f[10], "mean_total_bits", lineno)?,
            std_total_bits: field(f[11], "std_total_bits", lineno)?,
            r_necessary: field(f[12], "r_necessary", lineno)?,
            r_sufficient: field(f[13], "r_sufficient", lineno)?,
            feasible: field(f[14], "feasible", lineno)?,
        });
    }
    Ok(rows)
}

/// Fixed per-algorithm colors so curves stay comparable across sweeps.
fn curve_color(algorithm: &str) -> &'static str {
    match algorithm {
        "topk" => "tab:blue",
        "topl" => "tab:red",
        "threshold-a" => "tab:orange",
        "threshold-b" => "tab:purple",
        "vote-one" => "tab:green",
        "vote-list" => "tab:olive",
        "threshold-small" => "tab:cyan",
        "threshold-mid" => "tab:brown",
        "threshold-large" => "tab:gray",
        _ => "tab:pink",
    }
}

/// Self-contained matplotlib program reading `csv_name` from its own
/// directory: one explicit plot block per algorithm present in `rows`,
/// a dotted sufficient-SNR vertical per algorithm in the same color, and
/// a dashed black necessary-SNR vertical shared by all.
pub fn plot_script(rows: &[ResultsRow], csv_name: &str) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Config("no rows to plot".into()));
    }
    let mut algs: Vec<(&str, f64)> = Vec::new();
    for row in rows {
        if !algs.iter().any(|(a, _)| *a == row.algorithm) {
            algs.push((&row.algorithm, row.r_sufficient));
        }
    }
    let png_name = match csv_name.rsplit_once('.') {
        Some((stem, _)) => format!("{stem}.png"),
        None => format!("{csv_name}.png"),
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        "#!/usr/bin/env python3\n\
         \"\"\"Success-probability and communication panels for {csv_name}.\"\"\"\n\
         import csv\n\n\
         import matplotlib\n\n\
         matplotlib.use(\"Agg\")\n\
         import matplotlib.pyplot as plt\n\n\
         CSV = \"{csv_name}\"\n\
         OUT = \"{png_name}\"\n\n\n\
         def series(rows, alg, col):\n\
         \x20   pts = sorted((float(r[\"r\"]), float(r[col])) for r in rows if r[\"algorithm\"] == alg)\n\
         \x20   return [p[0] for p in pts], [p[1] for p in pts]\n\n\n\
         with open(CSV, newline=\"\") as fh:\n\
         \x20   rows = list(csv.DictReader(fh))\n\n\
         fig, (ax_succ, ax_bits) = plt.subplots(1, 2, figsize=(11.0, 4.0))"
    );
    for (alg, r_sufficient) in &algs {
        let color = curve_color(alg);
        let _ = writeln!(
            s,
            "\nx, y = series(rows, \"{alg}\", \"success_rate\")\n\
             ax_succ.plot(x, y, color=\"{color}\", marker=\"o\", markersize=3, label=\"{alg}\")\n\
             x, y = series(rows, \"{alg}\", \"mean_total_bits\")\n\
             ax_bits.plot(x, y, color=\"{color}\", marker=\"o\", markersize=3, label=\"{alg}\")\n\
             ax_succ.axvline({r_sufficient}, color=\"{color}\", linestyle=\":\", linewidth=1)\n\
             ax_bits.axvline({r_sufficient}, color=\"{color}\", linestyle=\":\", linewidth=1)"
        );
    }
    let r_necessary = rows[0].r_necessary;
    let _ = writeln!(
        s,
        "\nax_succ.axvline({r_necessary}, color=\"black\", linestyle=\"--\", linewidth=1)\n\
         ax_bits.axvline({r_necessary}, color=\"black\", linestyle=\"--\", linewidth=1)\n\
         ax_succ.set_xlabel(\"r\")\n\
         ax_succ.set_ylabel(\"exact-recovery rate\")\n\
         ax_succ.set_ylim(-0.05, 1.05)\n\
         ax_bits.set_xlabel(\"r\")\n\
         ax_bits.set_ylabel(\"mean total bits\")\n\
         ax_bits.set_yscale(\"log\")\n\
         ax_succ.legend(loc=\"lower right\", fontsize=8)\n\
         fig.tight_layout()\n\
         fig.savefig(OUT, dpi=150)\n\
         print(\"wrote\", OUT)"
    );
    Ok(s)
}

/// Writes the plot script next to wherever the caller wants it; the
/// script expects the CSV in its own working directory under `csv_name`.
pub fn emit_plot_script(rows: &[ResultsRow], csv_name: &str, path: &Path) -> Result<()> {
    std::fs::write(path, plot_script(rows, csv_name)?)?;
    Ok(())
}
