//! Minimal SVG plots: a label raster and polyline panels with axes.

use std::fmt::Write as _;

use lglab::basin::BasinGrid;
use lglab::blowup::Label;

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 56.0;

fn header(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

/// Red for bounded cells, blue for blow-up, grey for failures.
pub fn basin_raster(grid: &BasinGrid) -> String {
    let (nx, ny) = (grid.spec.nx, grid.spec.ny);
    let cw = (W - 2.0 * MARGIN) / nx as f64;
    let ch = (H - 2.0 * MARGIN) / ny as f64;
    let mut out = header(W, H);
    for i in 0..nx {
        for j in 0..ny {
            let fill = match grid.label(i, j) {
                Label::Bounded => "#d62728",
                Label::BlowUp => "#1f77b4",
                Label::Failure => "#7f7f7f",
            };
            let x = MARGIN + i as f64 * cw;
            let y = H - MARGIN - (j + 1) as f64 * ch;
            let _ = writeln!(
                out,
                "<rect x=\"{x:.3}\" y=\"{y:.3}\" width=\"{:.3}\" height=\"{:.3}\" fill=\"{fill}\"/>",
                cw + 0.05,
                ch + 0.05
            );
        }
    }
    let frame = Frame {
        x0: MARGIN,
        y0: MARGIN,
        w: W - 2.0 * MARGIN,
        h: H - 2.0 * MARGIN,
        x_range: grid.spec.x_range,
        y_range: grid.spec.y_range,
        log_y: false,
    };
    frame.axes(&mut out, "X(0)", "Y(0)");
    out.push_str("</svg>\n");
    out
}

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
    log_y: bool,
}

impl Frame {
    fn map_y(&self, v: f64) -> f64 {
        if self.log_y {
            v.max(f64::MIN_POSITIVE).log10()
        } else {
            v
        }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let (xa, xb) = self.x_range;
        let (ya, yb) = (self.map_y(self.y_range.0), self.map_y(self.y_range.1));
        let u = self.x0 + (x - xa) / (xb - xa) * self.w;
        let v = self.y0 + self.h - (self.map_y(y) - ya) / (yb - ya) * self.h;
        (u, v)
    }

    fn axes(&self, out: &mut String, xlabel: &str, ylabel: &str) {
        let (l, t, r, b) = (self.x0, self.y0, self.x0 + self.w, self.y0 + self.h);
        let _ = writeln!(
            out,
            "<rect x=\"{l}\" y=\"{t}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
            self.w, self.h
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = self.x_range.0 + f * (self.x_range.1 - self.x_range.0);
            let u = l + f * self.w;
            let _ = writeln!(
                out,
                "<line x1=\"{u:.2}\" y1=\"{b}\" x2=\"{u:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\
                 <text x=\"{u:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
                b + 4.0,
                b + 16.0,
                tick(xv)
            );
            let (ya, yb) = (self.map_y(self.y_range.0), self.map_y(self.y_range.1));
            let yv = ya + f * (yb - ya);
            let v = b - f * self.h;
            let text = if self.log_y {
                format!("1e{yv:.1}")
            } else {
                tick(yv)
            };
            let _ = writeln!(
                out,
                "<line x1=\"{:.2}\" y1=\"{v:.2}\" x2=\"{l}\" y2=\"{v:.2}\" stroke=\"black\"/>\
                 <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{text}</text>",
                l - 4.0,
                l - 6.0,
                v + 4.0
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">{xlabel}</text>",
            0.5 * (l + r),
            b + 32.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 {:.2} {:.2})\">{ylabel}</text>",
            l - 40.0,
            0.5 * (t + b),
            l - 40.0,
            0.5 * (t + b)
        );
    }

    fn polyline(&self, out: &mut String, xs: &[f64], ys: &[f64], color: &str) {
        let mut pts = String::new();
        for (&x, &y) in xs.iter().zip(ys) {
            if y.is_finite() && (!self.log_y || y > 0.0) {
                let (u, v) = self.px(x, y);
                let _ = write!(pts, "{u:.2},{v:.2} ");
            }
        }
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            pts.trim_end()
        );
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        format!("{}", (v * 1e4).round() / 1e4)
    } else {
        format!("{v:.1e}")
    }
}

fn range(vals: &[f64], log: bool) -> (f64, f64) {
    let finite = vals
        .iter()
        .copied()
        .filter(|v| v.is_finite() && (!log || *v > 0.0));
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi > lo {
        (lo, hi)
    } else if log {
        (lo / 10.0, lo * 10.0)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Two stacked panels, X(t) on top and Y(t) below.
pub fn time_series(ts: &[f64], xs: &[f64], ys: &[f64], log_y: bool) -> String {
    let h = 2.0 * H - MARGIN;
    let mut out = header(W, h);
    let panel_h = H - 2.0 * MARGIN;
    let t_range = range(ts, false);
    for (k, (vals, name, color)) in [(xs, "X", "#2ca02c"), (ys, "Y", "#9467bd")]
        .into_iter()
        .enumerate()
    {
        let frame = Frame {
            x0: MARGIN,
            y0: MARGIN + k as f64 * (panel_h + MARGIN),
            w: W - 2.0 * MARGIN,
            h: panel_h,
            x_range: t_range,
            y_range: range(vals, log_y),
            log_y,
        };
        frame.polyline(&mut out, ts, vals, color);
        frame.axes(&mut out, "t", name);
    }
    out.push_str("</svg>\n");
    out
}

/// Branch curve `value` against the continuation parameter, stable parts
/// solid and unstable parts dashed, folds marked.
pub fn branch(
    params: &[f64],
    values: &[f64],
    stable: &[bool],
    folds: &[(f64, f64)],
    xlabel: &str,
    ylabel: &str,
) -> String {
    let mut out = header(W, H);
    let frame = Frame {
        x0: MARGIN,
        y0: MARGIN,
        w: W - 2.0 * MARGIN,
        h: H - 2.0 * MARGIN,
        x_range: range(params, false),
        y_range: range(values, false),
        log_y: false,
    };
    let mut start = 0;
    for k in 1..=params.len() {
        if k == params.len() || stable[k] != stable[start] {
            let end = k.min(params.len() - 1);
            let dash = if stable[start] {
                ""
            } else {
                " stroke-dasharray=\"4 3\""
            };
            let mut pts = String::new();
            for i in start..=end {
                let (u, v) = frame.px(params[i], values[i]);
                let _ = write!(pts, "{u:.2},{v:.2} ");
            }
            let _ = writeln!(
                out,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"{dash}/>",
                pts.trim_end()
            );
            start = k;
        }
    }
    for &(p, v) in folds {
        let (u, w) = frame.px(p, v);
        let _ = writeln!(
            out,
            "<circle cx=\"{u:.2}\" cy=\"{w:.2}\" r=\"4\" fill=\"#d62728\"/>"
        );
    }
    frame.axes(&mut out, xlabel, ylabel);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_series_is_well_formed() {
        let s = time_series(
            &[0.0, 1.0, 2.0],
            &[1.0, 2.0, 3.0],
            &[1.0, 10.0, 100.0],
            true,
        );
        assert!(s.starts_with("<svg"));
        assert!(s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<polyline").count(), 2);
    }

    #[test]
    fn branch_splits_by_stability() {
        let s = branch(
            &[0.0, 1.0, 2.0, 3.0],
            &[1.0, 2.0, 3.0, 4.0],
            &[true, true, false, false],
            &[(1.5, 2.5)],
            "D",
            "period",
        );
        assert_eq!(s.matches("<polyline").count(), 2);
        assert_eq!(s.matches("<circle").count(), 1);
    }
}
