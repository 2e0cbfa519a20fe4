//! Minimal SVG line charts. Each chart carries its data as CSV inside an
//! XML comment so the plotted numbers can be checked without a renderer.

use std::fmt::Write;

const W: f64 = 900.0;
const H: f64 = 360.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLOURS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

/// Line chart of equally spaced hourly series, with `x_label` under the
/// hour axis.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let finite = series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    lo = lo.min(0.0);
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let x = |i: usize| LEFT + pw * i as f64 / (n.max(2) - 1) as f64;
    let y = |v: f64| TOP + ph * (1.0 - (v - lo) / (hi - lo));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    s.push_str(&data_comment(series));
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, esc(title));
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT},{TOP} V{} H{}" fill="none" stroke="black"/>"#,
        TOP + ph,
        LEFT + pw
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" x2="{}" y1="{yy:.2}" y2="{yy:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            yy + 4.0,
            tick(v)
        );
    }
    let step = if n > 72 { 24 } else { 6 };
    for i in (0..n).step_by(step) {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{i}</text>"#,
            x(i),
            TOP + ph + 16.0
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 10.0, esc(x_label));
    let _ = writeln!(
        s,
        r#"<text transform="translate(16,{}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + ph / 2.0,
        esc(y_label)
    );
    for (j, ser) in series.iter().enumerate() {
        let colour = COLOURS[j % COLOURS.len()];
        let mut d = String::new();
        let mut pen_up = true;
        for (i, &v) in ser.values.iter().enumerate() {
            if !v.is_finite() {
                pen_up = true;
                continue;
            }
            let _ = write!(d, "{}{:.2},{:.2} ", if pen_up { "M" } else { "L" }, x(i), y(v));
            pen_up = false;
        }
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#, d.trim_end());
        let ly = TOP + 14.0 * j as f64 + 4.0;
        let _ = writeln!(
            s,
            r#"<line x1="{}" x2="{}" y1="{ly}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            W - RIGHT - 150.0,
            W - RIGHT - 130.0,
            W - RIGHT - 125.0,
            ly + 4.0,
            esc(ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn data_comment(series: &[Series]) -> String {
    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let mut s = String::from("<!-- data\nhour");
    for ser in series {
        s.push(',');
        s.push_str(&ser.name.replace("--", "-"));
    }
    s.push('\n');
    for i in 0..n {
        s.push_str(&i.to_string());
        for ser in series {
            s.push(',');
            if let Some(v) = ser.values.get(i) {
                s.push_str(&format!("{v}"));
            }
        }
        s.push('\n');
    }
    s.push_str("-->\n");
    s
}

/// Parses the CSV table embedded by [`line_chart`].
#[cfg(test)]
fn embedded_data(svg: &str) -> Option<(Vec<String>, Vec<Vec<f64>>)> {
    let start = svg.find("<!-- data\n")? + "<!-- data\n".len();
    let end = start + svg[start..].find("-->")?;
    let mut lines = svg[start..end].lines();
    let header: Vec<String> = lines.next()?.split(',').skip(1).map(str::to_owned).collect();
    let mut cols = vec![Vec::new(); header.len()];
    for line in lines {
        for (j, cell) in line.split(',').skip(1).enumerate() {
            if let (Some(c), Ok(v)) = (cols.get_mut(j), cell.parse::<f64>()) {
                c.push(v);
            }
        }
    }
    Some((header, cols))
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == 0.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_round_trips_through_the_comment() {
        let a = [1.0, -2.5, 3.25];
        let b = [0.0, 0.1, f64::NAN];
        let svg = line_chart("t", "hour", "v", &[Series { name: "a", values: &a }, Series { name: "b", values: &b }]);
        let (names, cols) = embedded_data(&svg).unwrap();
        assert_eq!(names, ["a", "b"]);
        assert_eq!(cols[0], a);
        assert_eq!(cols[1][..2], b[..2]);
        let body = &svg[svg.find("<!--").unwrap() + 4..svg.find("-->").unwrap()];
        assert!(!body.contains("--"));
    }
}
