//! CSV and JSON writers. Floats are written with 17 significant digits so
//! every value round-trips exactly.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use lglab::basin::{BasinGrid, BoundaryCurve};
use lglab::bifurcate::CycleBranch;
use lglab::blowup::Label;
use serde::Serialize;

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn label_name(l: Label) -> &'static str {
    match l {
        Label::Bounded => "Bounded",
        Label::BlowUp => "BlowUp",
        Label::Failure => "Failure",
    }
}

pub fn trajectory_csv(rows: &[(f64, [f64; 2])]) -> String {
    let mut out = String::from("t,X,Y\n");
    for (t, s) in rows {
        let _ = writeln!(out, "{},{},{}", num(*t), num(s[0]), num(s[1]));
    }
    out
}

pub fn basin_csv(grid: &BasinGrid) -> String {
    let mut out = String::from("x0,y0,label,t_star\n");
    for (x, y, label, t) in grid.cells() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            num(x),
            num(y),
            label_name(label),
            opt_num(t)
        );
    }
    out
}

pub fn boundary_csv(curve: &BoundaryCurve) -> String {
    let mut out = String::from("x,y,y_bounded,y_blowup,bisections\n");
    for p in &curve.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            num(p.x),
            num(p.y),
            num(p.y_bounded),
            num(p.y_blowup),
            p.bisections
        );
    }
    out
}

pub fn branch_csv(branch: &CycleBranch) -> String {
    let mut out = String::from("param,period,floquet,stable,is_lpc\n");
    for p in &branch.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            num(p.param),
            num(p.period),
            num(p.floquet),
            p.stable,
            p.is_lpc
        );
    }
    out
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write(dir: &Path, name: &str, contents: &str) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, 6.789603e-2, f64::MIN_POSITIVE, 1e300] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(0.1).split('e').next().unwrap().len(), 18);
    }

    #[test]
    fn trajectory_header() {
        let csv = trajectory_csv(&[(0.0, [1.0, 2.0])]);
        assert!(csv.starts_with("t,X,Y\n"));
        assert_eq!(csv.lines().count(), 2);
    }
}
