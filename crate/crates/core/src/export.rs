//! CSV and SVG writers.
//!
//! CSV files use LF line endings and `{:.16e}` for every real so that runs
//! with the same inputs are byte-identical. SVG output is a view only and is
//! never read back.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::extremals::ExtremalArc;
use crate::liegeometry::SweepRow;
use crate::ocp::{OcpSolution, RotationReport, Table1Outcome, TRIANGLE};
use crate::simulation::Trajectory;

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn row<W: Write>(w: &mut W, fields: &[String]) -> io::Result<()> {
    w.write_all(fields.join(",").as_bytes())?;
    w.write_all(b"\n")
}

fn trajectory_header(legs: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "x".into(), "y".into(), "phi".into()];
    h.extend((1..=legs).map(|i| format!("theta{i}")));
    h.extend((1..=legs).map(|i| format!("u{i}")));
    h
}

fn trajectory_fields(traj: &Trajectory, k: usize) -> Vec<String> {
    let mut f = vec![real(traj.times[k])];
    f.extend(traj.states[k].to_vec().into_iter().map(real));
    f.extend(traj.controls[k].0.iter().copied().map(real));
    f
}

fn legs_of(traj: &Trajectory) -> usize {
    traj.states.first().map_or(0, |q| q.dim() - 3)
}

/// `t,x,y,phi,theta1..,u1..`, one row per node.
pub fn write_trajectory_csv<W: Write>(w: &mut W, traj: &Trajectory) -> io::Result<()> {
    row(w, &trajectory_header(legs_of(traj)))?;
    for k in 0..traj.times.len() {
        row(w, &trajectory_fields(traj, k))?;
    }
    Ok(())
}

/// Trajectory columns plus the collocation residual of the interval that
/// starts at each node (empty on the final node).
pub fn write_ocp_csv<W: Write>(w: &mut W, sol: &OcpSolution) -> io::Result<()> {
    let traj = &sol.trajectory;
    let mut header = trajectory_header(legs_of(traj));
    header.push("defect".into());
    row(w, &header)?;
    for k in 0..traj.times.len() {
        let mut f = trajectory_fields(traj, k);
        f.push(sol.defects.get(k).map_or_else(String::new, |&d| real(d)));
        row(w, &f)?;
    }
    Ok(())
}

/// `t,x,y,phi,theta1,theta2,u1,u2,p1..p5,hamiltonian`.
pub fn write_extremal_csv<W: Write>(w: &mut W, arc: &ExtremalArc) -> io::Result<()> {
    let mut header = trajectory_header(2);
    header.extend((1..=5).map(|i| format!("p{i}")));
    header.push("hamiltonian".into());
    row(w, &header)?;
    for k in 0..arc.times.len() {
        let mut f = vec![real(arc.times[k])];
        f.extend(arc.states[k].iter().copied().map(real));
        f.extend(arc.controls[k].iter().copied().map(real));
        f.extend(arc.costates[k].iter().copied().map(real));
        f.push(real(arc.hamiltonian[k]));
        row(w, &f)?;
    }
    Ok(())
}

/// `psi,defect,rank1..rank5`.
pub fn write_sweep_csv<W: Write>(w: &mut W, rows: &[SweepRow]) -> io::Result<()> {
    let depth = rows.first().map_or(5, |r| r.ranks.len());
    let mut header = vec!["psi".to_string(), "defect".into()];
    header.extend((1..=depth).map(|i| format!("rank{i}")));
    row(w, &header)?;
    for r in rows {
        let mut f = vec![real(r.psi), real(r.defect)];
        f.extend(r.ranks.iter().map(|k| k.to_string()));
        row(w, &f)?;
    }
    Ok(())
}

/// One line per benchmark row; failed solves leave the numeric columns empty
/// and carry the error text in `note`.
pub fn write_table1_csv<W: Write>(w: &mut W, outcomes: &[Table1Outcome]) -> io::Result<()> {
    row(
        w,
        &[
            "label", "target_x", "target_y", "stroke", "reference_energy", "energy", "ratio", "max_defect",
            "boundary_violation", "feasible", "within_band", "note",
        ]
        .map(String::from),
    )?;
    for o in outcomes {
        let r = &o.row;
        let mut f = vec![
            r.label.to_string(),
            real(r.target[0]),
            real(r.target[1]),
            r.stroke.to_string(),
            real(r.reference_energy),
        ];
        match &o.result {
            Ok(s) => f.extend([
                real(s.energy),
                real(s.energy / r.reference_energy),
                real(s.max_defect),
                real(s.boundary_violation),
                s.feasible.to_string(),
                o.passes().to_string(),
                String::new(),
            ]),
            Err(e) => {
                f.extend(std::iter::repeat(String::new()).take(4));
                f.extend(["false".into(), "false".into(), csv_text(&e.to_string())]);
            }
        }
        row(w, &f)?;
    }
    Ok(())
}

/// `s,kappa` pairs from [`crate::ocp::path_curvature`].
pub fn write_curvature_csv<W: Write>(w: &mut W, samples: &[[f64; 2]]) -> io::Result<()> {
    row(w, &["s".into(), "kappa".into()])?;
    for p in samples {
        row(w, &[real(p[0]), real(p[1])])?;
    }
    Ok(())
}

/// Key/value summary of a rotation classification.
pub fn write_rotation_csv<W: Write>(w: &mut W, rep: &RotationReport) -> io::Result<()> {
    row(w, &["key".into(), "value".into()])?;
    let s = &rep.solution;
    let pairs = [
        ("delta_phi", real(rep.delta_phi)),
        ("energy", real(s.energy)),
        ("feasible", s.feasible.to_string()),
        ("tube_radius", real(rep.tube_radius)),
        ("tube_fraction", real(rep.tube_fraction)),
        ("hypotenuse_fraction", real(rep.hypotenuse_fraction)),
        ("traversals", real(rep.traversals)),
        ("terminal_on_hypotenuse", rep.terminal_on_hypotenuse.to_string()),
    ];
    for (k, v) in pairs {
        row(w, &[k.into(), v])?;
    }
    Ok(())
}

fn csv_text(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
}

// ---------------------------------------------------------------- SVG

const SIZE: f64 = 480.0;
const MARGIN: f64 = 48.0;

/// Maps data coordinates into the plot square, `y` pointing up.
struct Frame {
    lo: [f64; 2],
    scale: f64,
}

impl Frame {
    fn fit(lo: [f64; 2], hi: [f64; 2]) -> Frame {
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
        let pad = 0.05 * span;
        Frame {
            lo: [lo[0] - pad, lo[1] - pad],
            scale: (SIZE - 2.0 * MARGIN) / (span + 2.0 * pad),
        }
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        (
            MARGIN + (p[0] - self.lo[0]) * self.scale,
            SIZE - MARGIN - (p[1] - self.lo[1]) * self.scale,
        )
    }

    fn extent(&self) -> f64 {
        (SIZE - 2.0 * MARGIN) / self.scale
    }
}

fn polyline(out: &mut String, frame: &Frame, pts: &[[f64; 2]], style: &str) {
    out.push_str("<polyline fill=\"none\" ");
    out.push_str(style);
    out.push_str(" points=\"");
    for (i, p) in pts.iter().enumerate() {
        let (x, y) = frame.map(*p);
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{x:.2},{y:.2}");
    }
    out.push_str("\"/>\n");
}

fn axes(out: &mut String, frame: &Frame, xlabel: &str, ylabel: &str) {
    let ext = frame.extent();
    let step = nice_step(ext / 5.0);
    let (x0, y0) = (frame.lo[0], frame.lo[1]);
    let (left, bottom) = frame.map([x0, y0]);
    let (right, top) = frame.map([x0 + ext, y0 + ext]);
    let _ = writeln!(
        out,
        "<rect x=\"{left:.2}\" y=\"{top:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#999\"/>",
        right - left,
        bottom - top
    );
    let mut v = (x0 / step).ceil() * step;
    while v <= x0 + ext {
        let (x, _) = frame.map([v, y0]);
        let _ = writeln!(
            out,
            "<line x1=\"{x:.2}\" y1=\"{bottom:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#999\"/><text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
            bottom + 4.0,
            bottom + 16.0,
            tick_label(v, step)
        );
        v += step;
    }
    let mut v = (y0 / step).ceil() * step;
    while v <= y0 + ext {
        let (_, y) = frame.map([x0, v]);
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{left:.2}\" y2=\"{y:.2}\" stroke=\"#999\"/><text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"end\">{}</text>",
            left - 4.0,
            left - 6.0,
            y + 3.0,
            tick_label(v, step)
        );
        v += step;
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">{xlabel}</text>",
        SIZE / 2.0,
        SIZE - 8.0
    );
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.2})\">{ylabel}</text>",
        SIZE / 2.0,
        SIZE / 2.0
    );
}

fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let m = if r < 1.5 { 1.0 } else if r < 3.5 { 2.0 } else if r < 7.5 { 5.0 } else { 10.0 };
    m * mag
}

fn tick_label(v: f64, step: f64) -> String {
    let digits = (-step.log10().floor()).max(0.0) as usize;
    let v = if v.abs() < 0.5 * step * 1e-9 { 0.0 } else { v };
    format!("{v:.digits$}")
}

fn document(body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

fn bounds(pts: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in pts {
        for i in 0..2 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    if !lo[0].is_finite() {
        return ([0.0; 2], [1.0; 2]);
    }
    (lo, hi)
}

/// Body position path in the plane with start and end markers.
pub fn xy_path_svg(states: &[[f64; 5]]) -> String {
    let pts: Vec<[f64; 2]> = states.iter().map(|q| [q[0], q[1]]).collect();
    let (lo, hi) = bounds(&pts);
    let frame = Frame::fit(lo, hi);
    let mut body = String::new();
    axes(&mut body, &frame, "x", "y");
    polyline(&mut body, &frame, &pts, "stroke=\"#1f5fa8\" stroke-width=\"1.5\"");
    markers(&mut body, &frame, &pts);
    document(&body)
}

/// Leg-angle path with the constraint box and the triangle outlined.
pub fn theta_plane_svg(states: &[[f64; 5]]) -> String {
    use std::f64::consts::PI;
    let pts: Vec<[f64; 2]> = states.iter().map(|q| [q[3], q[4]]).collect();
    let frame = Frame::fit([0.0, PI], [PI, 2.0 * PI]);
    let mut body = String::new();
    axes(&mut body, &frame, "theta1", "theta2");
    let boxed = [[0.0, PI], [PI, PI], [PI, 2.0 * PI], [0.0, 2.0 * PI], [0.0, PI]];
    polyline(&mut body, &frame, &boxed, "stroke=\"#333\" stroke-width=\"1\"");
    let mut tri = TRIANGLE.to_vec();
    tri.push(TRIANGLE[0]);
    polyline(&mut body, &frame, &tri, "stroke=\"#bbb\" stroke-dasharray=\"4 3\"");
    polyline(&mut body, &frame, &pts, "stroke=\"#c0392b\" stroke-width=\"1.5\"");
    markers(&mut body, &frame, &pts);
    document(&body)
}

fn markers(out: &mut String, frame: &Frame, pts: &[[f64; 2]]) {
    if let (Some(a), Some(b)) = (pts.first(), pts.last()) {
        let (x, y) = frame.map(*a);
        let _ = writeln!(out, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3.5\" fill=\"#2e8b57\"/>");
        let (x, y) = frame.map(*b);
        let _ = writeln!(out, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3.5\" fill=\"#333\"/>");
    }
}
