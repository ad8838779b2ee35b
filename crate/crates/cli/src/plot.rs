//! Self-contained SVG line charts of value-error curves.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use gve_core::evalkit::{read_value_error_csv, ValueErrorCurve};
use gve_core::Result;

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// `LABEL=PATH` or a bare `value_error.csv` path (labelled by its
    /// parent directory).
    #[arg(required = true, value_name = "CURVE")]
    curves: Vec<String>,
    #[arg(long, default_value = "value_error.svg")]
    out: PathBuf,
    #[arg(long, default_value = "Value estimation error")]
    title: String,
}

pub fn run(args: PlotArgs) -> Result<()> {
    let series = args
        .curves
        .iter()
        .map(|arg| {
            let (label, path) = split_curve_arg(arg);
            Ok(Series {
                label,
                curve: read_value_error_csv(&path)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    std::fs::write(&args.out, render_svg(&series, &args.title))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn split_curve_arg(arg: &str) -> (String, PathBuf) {
    if let Some((label, path)) = arg.split_once('=') {
        return (label.to_string(), PathBuf::from(path));
    }
    let path = PathBuf::from(arg);
    let label = path
        .parent()
        .and_then(Path::file_name)
        .or_else(|| path.file_stem())
        .map_or_else(|| arg.to_string(), |s| s.to_string_lossy().into_owned());
    (label, path)
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub curve: ValueErrorCurve,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 48.0;
const TICKS: usize = 5;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Linear map from data to pixel coordinates.
struct Frame {
    t_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn fit(series: &[Series]) -> Self {
        let points = series.iter().flat_map(|s| &s.curve.points);
        let (mut t_max, mut y_min, mut y_max) = (1.0_f64, 0.0_f64, 0.0_f64);
        for p in points {
            t_max = t_max.max(p.t as f64);
            y_min = y_min.min(p.mean - p.std);
            y_max = y_max.max(p.mean + p.std);
        }
        if y_max - y_min < 1e-12 {
            y_max = y_min + 1.0;
        }
        Self { t_max, y_min, y_max }
    }

    fn x(&self, t: f64) -> f64 {
        LEFT + t / self.t_max * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - (v - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - TOP - BOTTOM)
    }
}

/// Renders one line per series with a shaded mean±std band and a legend.
/// Identical input gives byte-identical output.
pub fn render_svg(series: &[Series], title: &str) -> String {
    let f = Frame::fit(series);
    let mut s = String::new();
    // `write!` into a String cannot fail.
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(title)
    );
    axes(&mut s, &f);
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts = &ser.curve.points;
        if pts.is_empty() {
            continue;
        }
        let upper = pts.iter().map(|p| (f.x(p.t as f64), f.y(p.mean + p.std)));
        let lower = pts.iter().rev().map(|p| (f.x(p.t as f64), f.y(p.mean - p.std)));
        let band: Vec<String> = upper.chain(lower).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            s,
            r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
            band.join(" ")
        );
        let line: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", f.x(p.t as f64), f.y(p.mean)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="curve" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
    }
    legend(&mut s, series);
    s.push_str("</svg>\n");
    s
}

fn axes(s: &mut String, f: &Frame) {
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        s,
        r##"<path d="M{x0:.2},{y1:.2} V{y0:.2} H{x1:.2}" fill="none" stroke="#333"/>"##
    );
    for k in 0..=TICKS {
        let frac = k as f64 / TICKS as f64;
        let t = frac * f.t_max;
        let v = f.y_min + frac * (f.y_max - f.y_min);
        let (x, y) = (f.x(t), f.y(v));
        let _ = writeln!(
            s,
            r##"<text x="{x:.2}" y="{:.2}" text-anchor="middle" fill="#333">{t:.0}</text>"##,
            y0 + 18.0
        );
        let _ = writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="end" fill="#333">{v:.2}</text>"##,
            x0 - 6.0,
            y + 4.0
        );
        let _ = writeln!(
            s,
            r##"<line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="#ddd"/>"##
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time step</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">value error</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
}

fn legend(s: &mut String, series: &[Series]) {
    let x = WIDTH - RIGHT + 16.0;
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = TOP + 10.0 + 20.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/>"#,
            x + 20.0
        );
        let _ = writeln!(
            s,
            r#"<text class="legend" x="{:.2}" y="{:.2}">{}</text>"#,
            x + 26.0,
            y + 4.0,
            escape(&ser.label)
        );
    }
}
