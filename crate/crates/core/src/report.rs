//! Run artifacts: the per-step CSV log, the JSON summary record and static
//! SVG plots of the trajectory, the tracking errors and the path progress.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path as FsPath;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::lip::{LipInput, LipState};
use crate::obstacle::Obstacle;
use crate::path::Path;
use crate::scenario::Scenario;
use crate::sim::{ObstacleLog, RunRecord, RunReport, SolverLog, StepLog};

pub const STEPS_FILE: &str = "steps.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SCENARIO_FILE: &str = "scenario.toml";
pub const TRAJECTORY_SVG: &str = "trajectory.svg";
pub const ERRORS_SVG: &str = "errors.svg";
pub const PROGRESS_SVG: &str = "progress.svg";

const HEAD: [&str; 16] = [
    "step",
    "time",
    "x",
    "xdot",
    "y",
    "ydot",
    "theta",
    "ux",
    "uy",
    "utheta",
    "param_init",
    "v",
    "v_avg",
    "contour_error",
    "lag_error",
    "cartesian_error",
];

const SOLVER: [&str; 6] = [
    "solver_status",
    "solver_iterations",
    "solver_kkt",
    "solver_time",
    "impulse_x",
    "impulse_y",
];

/// Column names for a log with `obstacles` obstacles. Per-obstacle barrier
/// and clearance follow the tracking errors; stance, cold-start flag and the
/// remaining per-obstacle diagnostics close the row.
pub fn header(obstacles: usize) -> Vec<String> {
    let mut h: Vec<String> = HEAD.iter().map(|s| s.to_string()).collect();
    for i in 0..obstacles {
        h.push(format!("obstacle{i}_barrier"));
        h.push(format!("obstacle{i}_clearance"));
    }
    h.extend(SOLVER.iter().map(|s| s.to_string()));
    h.push("stance".into());
    h.push("cold_start".into());
    for i in 0..obstacles {
        h.push(format!("obstacle{i}_param"));
        h.push(format!("obstacle{i}_cbf_margin"));
    }
    h
}

fn row(log: &StepLog) -> Vec<String> {
    let s = &log.state;
    let u = &log.input;
    let mut r: Vec<String> = vec![log.step.to_string()];
    r.extend(
        [
            log.time,
            s.x,
            s.xdot,
            s.y,
            s.ydot,
            s.theta,
            u.ux,
            u.uy,
            u.utheta,
            log.param_init,
            log.v,
            log.v_avg,
            log.contour_error,
            log.lag_error,
            log.cartesian_error,
        ]
        .iter()
        .map(f64::to_string),
    );
    for o in &log.obstacles {
        r.push(o.barrier.to_string());
        r.push(o.clearance.to_string());
    }
    r.push(log.solver.status.as_str().into());
    r.push(log.solver.iterations.to_string());
    r.push(log.solver.kkt_residual.to_string());
    r.push(log.solver.solve_time.to_string());
    r.push(log.impulse[0].to_string());
    r.push(log.impulse[1].to_string());
    r.push(log.stance.as_str().into());
    r.push(log.solver.cold_start.to_string());
    for o in &log.obstacles {
        r.push(o.param.to_string());
        r.push(o.cbf_margin.to_string());
    }
    r
}

pub fn write_steps<W: Write>(out: W, logs: &[StepLog]) -> Result<()> {
    let obstacles = logs.first().map_or(0, |l| l.obstacles.len());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(obstacles))?;
    for log in logs {
        if log.obstacles.len() != obstacles {
            return Err(Error::MalformedLog(format!("step {} has a different obstacle count", log.step)));
        }
        w.write_record(row(log))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_steps<R: Read>(input: R) -> Result<Vec<StepLog>> {
    let mut reader = csv::Reader::from_reader(input);
    let found: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let obstacles = found.iter().filter(|c| c.ends_with("_barrier")).count();
    if found != header(obstacles) {
        return Err(Error::MalformedLog("unexpected header".into()));
    }
    let mut logs = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let mut fields = Fields {
            record: &record,
            next: 0,
            line: line + 2,
        };
        logs.push(fields.step_log(obstacles)?);
    }
    Ok(logs)
}

struct Fields<'a> {
    record: &'a csv::StringRecord,
    next: usize,
    line: usize,
}

impl Fields<'_> {
    fn text(&mut self) -> Result<&str> {
        let value = self
            .record
            .get(self.next)
            .ok_or_else(|| Error::MalformedLog(format!("line {}: too few columns", self.line)))?;
        self.next += 1;
        Ok(value)
    }

    fn parse<T: std::str::FromStr>(&mut self) -> Result<T> {
        let column = self.next;
        let line = self.line;
        let text = self.text()?;
        text.parse()
            .map_err(|_| Error::MalformedLog(format!("line {line}, column {column}: cannot parse `{text}`")))
    }

    fn step_log(&mut self, obstacles: usize) -> Result<StepLog> {
        let step = self.parse()?;
        let time = self.parse()?;
        let state = LipState::new(self.parse()?, self.parse()?, self.parse()?, self.parse()?, self.parse()?);
        let input = LipInput::new(self.parse()?, self.parse()?, self.parse()?);
        let param_init = self.parse()?;
        let v = self.parse()?;
        let v_avg = self.parse()?;
        let contour_error = self.parse()?;
        let lag_error = self.parse()?;
        let cartesian_error = self.parse()?;
        let mut obstacle_logs = Vec::with_capacity(obstacles);
        for _ in 0..obstacles {
            obstacle_logs.push(ObstacleLog {
                barrier: self.parse()?,
                clearance: self.parse()?,
                param: 0.0,
                cbf_margin: 0.0,
            });
        }
        let status = self.text()?.parse().map_err(Error::MalformedLog)?;
        let iterations = self.parse()?;
        let kkt_residual = self.parse()?;
        let solve_time = self.parse()?;
        let impulse = [self.parse()?, self.parse()?];
        let stance = self.text()?.parse().map_err(Error::MalformedLog)?;
        let cold_start = self.parse()?;
        for o in &mut obstacle_logs {
            o.param = self.parse()?;
            o.cbf_margin = self.parse()?;
        }
        Ok(StepLog {
            step,
            time,
            state,
            input,
            param_init,
            v,
            v_avg,
            contour_error,
            lag_error,
            cartesian_error,
            obstacles: obstacle_logs,
            solver: SolverLog {
                status,
                iterations,
                kkt_residual,
                solve_time,
                cold_start,
            },
            impulse,
            stance,
        })
    }
}

/// Writes the log, summary, scenario copy and plots into `dir`.
pub fn write_run(dir: &FsPath, scenario: &Scenario, report: &RunReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_steps(fs::File::create(dir.join(STEPS_FILE))?, &report.logs)?;
    let summary = serde_json::to_string_pretty(&report.record())?;
    fs::write(dir.join(SUMMARY_FILE), summary + "\n")?;
    fs::write(dir.join(SCENARIO_FILE), scenario.to_toml())?;
    write_plots(dir, scenario, &report.logs)
}

pub fn read_summary(dir: &FsPath) -> Result<RunRecord> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join(SUMMARY_FILE))?)?)
}

/// Reads the scenario copy and step log written by [`write_run`].
pub fn read_run(dir: &FsPath) -> Result<(Scenario, Vec<StepLog>)> {
    let scenario = Scenario::load(&dir.join(SCENARIO_FILE))?;
    let logs = read_steps(fs::File::open(dir.join(STEPS_FILE))?)?;
    Ok((scenario, logs))
}

pub fn write_plots(dir: &FsPath, scenario: &Scenario, logs: &[StepLog]) -> Result<()> {
    let path = scenario.build_path()?;
    fs::write(dir.join(TRAJECTORY_SVG), trajectory_svg(&path, &scenario.obstacles, logs))?;
    fs::write(dir.join(ERRORS_SVG), errors_svg(logs))?;
    fs::write(dir.join(PROGRESS_SVG), progress_svg(logs, scenario.mpc.v_max))?;
    Ok(())
}

const RED: &str = "#d62728";
const BLUE: &str = "#1f77b4";
const GREEN: &str = "#2ca02c";
const ORANGE: &str = "#ff7f0e";
const GRAY: &str = "#7f7f7f";
const BLACK: &str = "#000000";

/// Reference path in red, COM trace in blue, footsteps colored by foot and
/// obstacles as dashed traces with their footprint at the first and last step.
pub fn trajectory_svg(path: &Path, obstacles: &[Obstacle], logs: &[StepLog]) -> String {
    let end = path.domain_end();
    let reference = (0..=400).map(|i| path.eval(end * i as f64 / 400.0).point).map(|p| (p.x, p.y)).collect();
    let com = logs.iter().map(|l| l.com()).map(|p| (p.x, p.y)).collect();
    let mut fig = Figure::new("Trajectory", "x [m]", "y [m]");
    fig.equal_aspect = true;
    fig.line("reference path", RED, false, reference);
    fig.line("COM", BLUE, false, com);
    let (left, right): (Vec<&StepLog>, Vec<&StepLog>) = logs.iter().partition(|l| l.stance == crate::ocp::Foot::Left);
    let feet = |steps: Vec<&StepLog>| steps.iter().map(|l| l.foot()).map(|p| (p.x, p.y)).collect();
    fig.markers("left foot", GREEN, feet(left));
    fig.markers("right foot", ORANGE, feet(right));
    if let (Some(first), Some(last)) = (logs.first(), logs.last()) {
        for (i, o) in obstacles.iter().enumerate() {
            let at = |t: f64| o.position() + o.velocity() * t;
            let trace = logs.iter().map(|l| at(l.time)).map(|p| (p.x, p.y)).collect();
            fig.line(&format!("obstacle {i}"), GRAY, true, trace);
            for t in [first.time, last.time] {
                fig.circle(at(t), o.effective_radius(), GRAY);
            }
        }
    }
    fig.render()
}

pub fn errors_svg(logs: &[StepLog]) -> String {
    let series = |f: fn(&StepLog) -> f64| logs.iter().map(|l| (l.step as f64, f(l))).collect();
    let mut fig = Figure::new("Tracking errors", "step", "error [m]");
    fig.line("contour error", BLUE, false, series(|l| l.contour_error));
    fig.line("lag error", ORANGE, false, series(|l| l.lag_error));
    fig.line("Cartesian error", GREEN, false, series(|l| l.cartesian_error));
    fig.render()
}

pub fn progress_svg(logs: &[StepLog], v_max: f64) -> String {
    let mut fig = Figure::new("Average path update over the horizon", "step", "v_avg [m/step]");
    fig.line("v_avg", BLUE, false, logs.iter().map(|l| (l.step as f64, l.v_avg)).collect());
    let last = logs.last().map_or(1.0, |l| l.step as f64);
    fig.line("v_max", BLACK, true, vec![(0.0, v_max), (last, v_max)]);
    fig.y_floor = Some(0.0);
    fig.render()
}

enum Mark {
    Line { dashed: bool, points: Vec<(f64, f64)> },
    Dots(Vec<(f64, f64)>),
}

struct Series {
    label: String,
    color: &'static str,
    mark: Mark,
}

struct Figure {
    title: String,
    x_label: String,
    y_label: String,
    equal_aspect: bool,
    y_floor: Option<f64>,
    series: Vec<Series>,
    circles: Vec<(Vector2<f64>, f64, &'static str)>,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

impl Figure {
    fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            equal_aspect: false,
            y_floor: None,
            series: Vec::new(),
            circles: Vec::new(),
        }
    }

    fn line(&mut self, label: &str, color: &'static str, dashed: bool, points: Vec<(f64, f64)>) {
        self.series.push(Series {
            label: label.into(),
            color,
            mark: Mark::Line { dashed, points },
        });
    }

    fn markers(&mut self, label: &str, color: &'static str, points: Vec<(f64, f64)>) {
        self.series.push(Series {
            label: label.into(),
            color,
            mark: Mark::Dots(points),
        });
    }

    fn circle(&mut self, center: Vector2<f64>, radius: f64, color: &'static str) {
        self.circles.push((center, radius, color));
    }

    /// Axis ranges and the figure height. Equal-aspect figures size their
    /// height to the data, within limits.
    fn bounds(&self) -> ([f64; 2], [f64; 2], f64) {
        let mut x = [f64::INFINITY, f64::NEG_INFINITY];
        let mut y = x;
        let mut grow = |px: f64, py: f64| {
            if px.is_finite() && py.is_finite() {
                x = [x[0].min(px), x[1].max(px)];
                y = [y[0].min(py), y[1].max(py)];
            }
        };
        for s in &self.series {
            let points = match &s.mark {
                Mark::Line { points, .. } | Mark::Dots(points) => points,
            };
            for &(px, py) in points {
                grow(px, py);
            }
        }
        for (c, r, _) in &self.circles {
            grow(c.x - r, c.y - r);
            grow(c.x + r, c.y + r);
        }
        if let Some(floor) = self.y_floor {
            y[0] = y[0].min(floor);
        }
        if !x[0].is_finite() {
            return ([0.0, 1.0], [0.0, 1.0], HEIGHT);
        }
        let pad = |r: [f64; 2]| {
            let span = (r[1] - r[0]).max(1e-9);
            [r[0] - 0.05 * span, r[1] + 0.05 * span]
        };
        let (mut x, mut y) = (pad(x), pad(y));
        let mut height = HEIGHT;
        if self.equal_aspect {
            let pw = WIDTH - LEFT - RIGHT;
            let ph = (pw * (y[1] - y[0]) / (x[1] - x[0])).clamp(200.0, 700.0);
            height = ph + TOP + BOTTOM;
            let sx = (x[1] - x[0]) / pw;
            let sy = (y[1] - y[0]) / ph;
            let s = sx.max(sy);
            let widen = |r: [f64; 2], pixels: f64| {
                let mid = 0.5 * (r[0] + r[1]);
                [mid - 0.5 * s * pixels, mid + 0.5 * s * pixels]
            };
            x = widen(x, pw);
            y = widen(y, ph);
        }
        (x, y, height)
    }

    fn render(&self) -> String {
        let (xr, yr, height) = self.bounds();
        let pw = WIDTH - LEFT - RIGHT;
        let ph = height - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - xr[0]) / (xr[1] - xr[0]) * pw;
        let sy = |y: f64| TOP + (yr[1] - y) / (yr[1] - yr[0]) * ph;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );

        for t in ticks(xr) {
            let x = sx(t);
            let _ = writeln!(out, r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##, TOP + ph);
            let _ = writeln!(
                out,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                TOP + ph + 16.0,
                label(t)
            );
        }
        for t in ticks(yr) {
            let y = sy(t);
            let _ = writeln!(out, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##, LEFT + pw);
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                y + 4.0,
                label(t)
            );
        }
        let _ = writeln!(out, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            height - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        let scale = pw / (xr[1] - xr[0]);
        for (c, r, color) in &self.circles {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="{color}" fill-opacity="0.2" stroke="{color}"/>"#,
                sx(c.x),
                sy(c.y),
                r * scale
            );
        }
        for s in &self.series {
            match &s.mark {
                Mark::Line { dashed, points } => {
                    let coords: Vec<String> = points
                        .iter()
                        .filter(|(x, y)| x.is_finite() && y.is_finite())
                        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                        .collect();
                    let dash = if *dashed { r#" stroke-dasharray="6 4""# } else { "" };
                    let _ = writeln!(
                        out,
                        r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.6"{dash}/>"#,
                        coords.join(" "),
                        s.color
                    );
                }
                Mark::Dots(points) => {
                    for &(x, y) in points {
                        let _ = writeln!(
                            out,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}"/>"#,
                            sx(x),
                            sy(y),
                            s.color
                        );
                    }
                }
            }
        }

        for (i, s) in self.series.iter().enumerate() {
            let x = LEFT + pw + 12.0;
            let y = TOP + 12.0 + 18.0 * i as f64;
            match s.mark {
                Mark::Line { dashed, .. } => {
                    let dash = if dashed { r#" stroke-dasharray="6 4""# } else { "" };
                    let _ = writeln!(
                        out,
                        r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{}" stroke-width="2"{dash}/>"#,
                        x + 24.0,
                        s.color
                    );
                }
                Mark::Dots(_) => {
                    let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{y:.2}" r="3" fill="{}"/>"#, x + 12.0, s.color);
                }
            }
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 30.0, y + 4.0, escape(&s.label));
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Round tick positions inside `range`, at most eight of them.
fn ticks(range: [f64; 2]) -> Vec<f64> {
    let span = range[1] - range[0];
    if !(span > 0.0 && span.is_finite()) {
        return vec![range[0]];
    }
    let raw = span / 6.0;
    let magnitude = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * magnitude)
        .find(|s| span / s <= 7.0)
        .unwrap_or(10.0 * magnitude);
    let first = (range[0] / step).ceil() as i64;
    let last = (range[1] / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn label(t: f64) -> String {
    let t = if t.abs() < 1e-12 { 0.0 } else { t };
    let text = format!("{t:.4}");
    text.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
