//! Plot data: rollout trajectories, samples of the level sets `B = alpha1`
//! and `B = alpha2`, and for two states an SVG with sets and curves.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cbc_core::synthesis::{CbcSolution, SemiAlgebraicSet};
use cbc_core::verify::{level_set_points, Rollout};

use crate::error::CliError;

const CURVE_SAMPLES: usize = 720;
const MESH_SAMPLES: usize = 40;
const CANVAS: f64 = 600.0;
const MARGIN: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PlotFiles {
    pub trajectories: PathBuf,
    pub level_sets: Vec<PathBuf>,
    pub svg: Option<PathBuf>,
    /// How the level sets were sampled, and why an SVG is missing.
    pub note: String,
}

fn header(n: usize, extra: &[&str]) -> String {
    let mut cols: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    cols.extend(extra.iter().map(|s| s.to_string()));
    cols.join(",") + "\n"
}

fn row(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub fn trajectories_csv(n: usize, rollouts: &[Rollout]) -> String {
    let mut s = header(n, &["k", "traj_id"]);
    for (id, r) in rollouts.iter().enumerate() {
        for (k, x) in r.points.iter().enumerate() {
            let _ = writeln!(s, "{},{k},{id}", row(x));
        }
    }
    s
}

pub fn level_set_csv(n: usize, points: &[Vec<f64>]) -> String {
    let mut s = header(n, &[]);
    for x in points {
        let _ = writeln!(s, "{}", row(x));
    }
    s
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn export_plot_data(
    dir: &Path,
    sol: &CbcSolution,
    rollouts: &[Rollout],
    x0: &SemiAlgebraicSet,
    xu: &SemiAlgebraicSet,
) -> Result<PlotFiles, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let n = sol.p.nrows();
    let trajectories = dir.join("trajectories.csv");
    write(&trajectories, &trajectories_csv(n, rollouts))?;

    let samples = if n == 2 { CURVE_SAMPLES } else { MESH_SAMPLES };
    let curves: Vec<Vec<Vec<f64>>> = [sol.alpha1, sol.alpha2]
        .iter()
        .map(|&a| if a > 0.0 { level_set_points(&sol.p, a, samples) } else { Vec::new() })
        .collect();
    let mut level_sets = Vec::new();
    for (name, pts) in ["level_alpha1.csv", "level_alpha2.csv"].iter().zip(&curves) {
        let path = dir.join(name);
        write(&path, &level_set_csv(n, pts))?;
        level_sets.push(path);
    }

    let (svg, note) = match n {
        2 => {
            let path = dir.join("plot.svg");
            write(&path, &svg_2d(rollouts, &curves, x0, xu))?;
            (Some(path), format!("level sets sampled at {CURVE_SAMPLES} points on each ellipse"))
        }
        3 => (
            None,
            format!("n = 3: level sets exported as {MESH_SAMPLES}x{MESH_SAMPLES} ellipsoid mesh samples; SVG omitted (would need a projection)"),
        ),
        _ => (None, format!("n = {n}: level-set sampling and SVG are only produced for 2 or 3 states")),
    };
    Ok(PlotFiles {
        trajectories,
        level_sets,
        svg,
        note,
    })
}

struct View {
    lo: [f64; 2],
    hi: [f64; 2],
}

impl View {
    fn px(&self, x: &[f64]) -> (f64, f64) {
        let w = CANVAS - 2.0 * MARGIN;
        let sx = MARGIN + (x[0] - self.lo[0]) / (self.hi[0] - self.lo[0]) * w;
        let sy = CANVAS - MARGIN - (x[1] - self.lo[1]) / (self.hi[1] - self.lo[1]) * w;
        (sx, sy)
    }

    fn rect(&self, lo: &[f64], hi: &[f64], fill: &str) -> String {
        let (x1, y1) = self.px(&[lo[0], hi[1]]);
        let (x2, y2) = self.px(&[hi[0], lo[1]]);
        format!(
            "<rect x=\"{x1:.2}\" y=\"{y1:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{fill}\" stroke=\"none\"/>\n",
            x2 - x1,
            y2 - y1
        )
    }

    fn polyline(&self, pts: &[Vec<f64>], attrs: &str) -> String {
        let coords: Vec<String> = pts
            .iter()
            .map(|p| {
                let (x, y) = self.px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        format!("<polyline points=\"{}\" fill=\"none\" {attrs}/>\n", coords.join(" "))
    }
}

fn svg_2d(rollouts: &[Rollout], curves: &[Vec<Vec<f64>>], x0: &SemiAlgebraicSet, xu: &SemiAlgebraicSet) -> String {
    // The view covers the sets and the level curves; diverging rollouts are
    // clipped to it.
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut grow = |p: &[f64]| {
        for i in 0..2 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    };
    for b in x0.boxes.iter().chain(&xu.boxes) {
        grow(&b.lo);
        grow(&b.hi);
    }
    curves.iter().flatten().for_each(|p| grow(p));
    for i in 0..2 {
        let pad = 0.05 * (hi[i] - lo[i]).max(1e-9);
        lo[i] -= pad;
        hi[i] += pad;
    }
    let view = View { lo, hi };

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{CANVAS}\" height=\"{CANVAS}\" viewBox=\"0 0 {CANVAS} {CANVAS}\">"
    );
    let inner = CANVAS - 2.0 * MARGIN;
    let _ = writeln!(
        s,
        "<defs><clipPath id=\"view\"><rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{inner}\" height=\"{inner}\"/></clipPath></defs>"
    );
    let _ = writeln!(s, "<rect width=\"{CANVAS}\" height=\"{CANVAS}\" fill=\"white\"/>");
    let _ = writeln!(s, "<g clip-path=\"url(#view)\">");
    for b in &x0.boxes {
        s.push_str(&view.rect(&b.lo, &b.hi, "#ccf2cc"));
    }
    for b in &xu.boxes {
        s.push_str(&view.rect(&b.lo, &b.hi, "#f7cccc"));
    }
    for r in rollouts {
        s.push_str(&view.polyline(&r.points, "stroke=\"#555555\" stroke-width=\"0.6\""));
    }
    for (pts, colour) in curves.iter().zip(["black", "blue"]) {
        if pts.is_empty() {
            continue;
        }
        let mut closed = pts.clone();
        closed.push(pts[0].clone());
        s.push_str(&view.polyline(
            &closed,
            &format!("stroke=\"{colour}\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\""),
        ));
    }
    s.push_str("</g>\n");
    let _ = writeln!(
        s,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{inner}\" height=\"{inner}\" fill=\"none\" stroke=\"black\"/>"
    );
    let label = |s: &mut String, x: f64, y: f64, anchor: &str, text: String| {
        let _ = writeln!(
            s,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"11\" text-anchor=\"{anchor}\" font-family=\"sans-serif\">{text}</text>"
        );
    };
    label(&mut s, MARGIN, CANVAS - MARGIN + 14.0, "start", format!("{:.3}", view.lo[0]));
    label(&mut s, CANVAS - MARGIN, CANVAS - MARGIN + 14.0, "end", format!("{:.3}", view.hi[0]));
    label(&mut s, CANVAS / 2.0, CANVAS - 8.0, "middle", "x1".into());
    label(&mut s, MARGIN - 4.0, CANVAS - MARGIN, "end", format!("{:.3}", view.lo[1]));
    label(&mut s, MARGIN - 4.0, MARGIN + 10.0, "end", format!("{:.3}", view.hi[1]));
    label(&mut s, 12.0, CANVAS / 2.0, "middle", "x2".into());
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headers() {
        assert_eq!(trajectories_csv(2, &[]), "x1,x2,k,traj_id\n");
        assert_eq!(level_set_csv(3, &[]), "x1,x2,x3\n");
    }

    #[test]
    fn trajectory_rows_carry_step_and_id() {
        let r = Rollout {
            points: vec![vec![1.0, 2.0], vec![0.5, 1.0]],
            unsafe_entry: None,
            diverged: false,
            max_increase: 0.0,
        };
        let csv = trajectories_csv(2, &[r.clone(), r]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "1,2,0,0");
        assert_eq!(lines[4], "0.5,1,1,1");
    }
}
