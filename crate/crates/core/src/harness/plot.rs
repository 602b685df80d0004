use std::fmt::Write as _;
use std::io::{self, Write};

use super::BatchSummary;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 48.0;
const BOTTOM: f64 = 64.0;
const TICKS: usize = 5;

/// Mean cumulative regret against turn, with a shaded ±1 std band.
pub fn emit_plot_svg<W: Write>(summary: &BatchSummary, title: &str, mut out: W) -> io::Result<()> {
    if summary.turns.is_empty() {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "cannot plot an empty summary",
        ));
    }
    out.write_all(render(summary, title).as_bytes())?;
    out.flush()
}

fn render(summary: &BatchSummary, title: &str) -> String {
    let x_max = *summary.turns.last().unwrap() as f64;
    let y_max = summary
        .mean_regret
        .iter()
        .zip(&summary.std_regret)
        .map(|(m, s)| m + s)
        .fold(0.0f64, f64::max);
    let y_max = if y_max > 0.0 { y_max * 1.05 } else { 1.0 };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |turn: f64| LEFT + plot_w * turn / x_max.max(1.0);
    let py = |v: f64| TOP + plot_h * (1.0 - v / y_max);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    // band: upper edge forward, lower edge backward
    let mut band = Vec::with_capacity(2 * summary.turns.len());
    for ((&t, &m), &sd) in summary
        .turns
        .iter()
        .zip(&summary.mean_regret)
        .zip(&summary.std_regret)
    {
        band.push(format!("{:.2},{:.2}", px(t as f64), py(m + sd)));
    }
    for ((&t, &m), &sd) in summary
        .turns
        .iter()
        .zip(&summary.mean_regret)
        .zip(&summary.std_regret)
        .rev()
    {
        band.push(format!("{:.2},{:.2}", px(t as f64), py((m - sd).max(0.0))));
    }
    let _ = writeln!(
        s,
        r#"<polygon class="std-band" points="{}" fill="steelblue" fill-opacity="0.25" stroke="none"/>"#,
        band.join(" ")
    );
    let mean: Vec<String> = summary
        .turns
        .iter()
        .zip(&summary.mean_regret)
        .map(|(&t, &m)| format!("{:.2},{:.2}", px(t as f64), py(m)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline class="mean" points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        mean.join(" ")
    );

    // axes
    let (x0, y0, x1, y1) = (LEFT, TOP + plot_h, LEFT + plot_w, TOP);
    let _ = writeln!(
        s,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#
    );
    for i in 0..=TICKS {
        let frac = i as f64 / TICKS as f64;
        let tx = px(frac * x_max);
        let ty = py(frac * y_max);
        let _ = writeln!(
            s,
            r#"<line x1="{tx:.2}" y1="{y0}" x2="{tx:.2}" y2="{:.2}" stroke="black"/><text x="{tx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 5.0,
            y0 + 20.0,
            tick_label(frac * x_max)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ty:.2}" x2="{x0}" y2="{ty:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            ty + 4.0,
            tick_label(frac * y_max)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">turn</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">cumulative regret</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );
    s.push_str("</svg>\n");
    s
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e5 {
        format!("{v:.1e}")
    } else if v.abs() >= 10.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
