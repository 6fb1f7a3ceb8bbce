//! Static SVG rendering of daily profiles.

use std::fmt::Write as _;

use crate::fmt::sig6;
use crate::traffic::{time_of_day, TrafficProfile};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 40.0;

/// Line plot of the median profile over a shaded band of one standard
/// deviation either side, clipped at zero flow.
///
/// `config_hash`, when given, is written as a leading comment.
pub fn profile_svg(profile: &TrafficProfile, config_hash: Option<&str>) -> String {
    let n = profile.values.len();
    let upper: Vec<f64> = profile.values.iter().zip(&profile.stdev).map(|(v, s)| v + s).collect();
    let lower: Vec<f64> = profile
        .values
        .iter()
        .zip(&profile.stdev)
        .map(|(v, s)| (v - s).max(0.0))
        .collect();
    let top = upper.iter().copied().fold(0.0, f64::max);
    let y_max = if top > 0.0 { nice_ceiling(top) } else { 1.0 };

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |i: usize| LEFT + if n > 1 { plot_w * i as f64 / (n - 1) as f64 } else { 0.0 };
    let y = |v: f64| TOP + plot_h * (1.0 - v / y_max);
    let pt = |i: usize, v: f64| format!("{},{}", sig6(x(i)), sig6(y(v)));

    let mut s = String::new();
    if let Some(h) = config_hash {
        let _ = writeln!(s, "<!-- config_hash={h} -->");
    }
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = WIDTH,
        h = HEIGHT
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" font-family="sans-serif" font-size="14">{} ({}, {} days)</text>"#,
        LEFT,
        escape(&profile.sensor_id),
        profile.day_filter.as_str(),
        profile.day_count
    );

    // axes and gridlines
    let _ = writeln!(
        s,
        r##"<g stroke="#888" stroke-width="1"><line x1="{l}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{l}" y1="{t}" x2="{l}" y2="{b}"/></g>"##,
        l = LEFT,
        r = WIDTH - RIGHT,
        t = TOP,
        b = TOP + plot_h
    );
    let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="11">"#);
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            sig6(LEFT - 6.0),
            sig6(y(v) + 4.0),
            sig6(v)
        );
    }
    let hours_per_tick = 3;
    let slots_per_hour = (60 / profile.interval_min.max(1)) as usize;
    for h in (0..=24).step_by(hours_per_tick) {
        let slot = h * slots_per_hour;
        if n == 0 || slot > n - 1 && h != 24 {
            continue;
        }
        let xi = if h == 24 { LEFT + plot_w } else { x(slot) };
        let label = if h == 24 {
            "24:00".to_string()
        } else {
            time_of_day(slot, profile.interval_min)
        };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            sig6(xi),
            sig6(TOP + plot_h + 16.0),
            label
        );
    }
    let _ = writeln!(s, "</g>");

    if n > 0 {
        let mut band: Vec<String> = (0..n).map(|i| pt(i, upper[i])).collect();
        band.extend((0..n).rev().map(|i| pt(i, lower[i])));
        let _ = writeln!(
            s,
            r##"<polygon class="stdev" fill="#4a7ab5" fill-opacity="0.25" stroke="none" points="{}"/>"##,
            band.join(" ")
        );
        let line: Vec<String> = (0..n).map(|i| pt(i, profile.values[i])).collect();
        let _ = writeln!(
            s,
            r##"<polyline class="median" fill="none" stroke="#1f3f7a" stroke-width="1.5" points="{}"/>"##,
            line.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Smallest 1, 2 or 5 times a power of ten at or above `v`.
fn nice_ceiling(v: f64) -> f64 {
    let p = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * p)
        .find(|c| *c >= v)
        .unwrap_or(10.0 * p)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::DayFilter;

    fn profile(values: Vec<f64>, stdev: Vec<f64>) -> TrafficProfile {
        TrafficProfile {
            sensor_id: "S<1>".into(),
            interval_min: 15,
            values,
            stdev,
            day_filter: DayFilter::Weekdays,
            day_count: 5,
        }
    }

    fn points(svg: &str, class: &str) -> Vec<(f64, f64)> {
        let tag = svg
            .lines()
            .find(|l| l.contains(&format!(r#"class="{class}""#)))
            .unwrap();
        let start = tag.find("points=\"").unwrap() + 8;
        let end = start + tag[start..].find('"').unwrap();
        tag[start..end]
            .split(' ')
            .map(|p| {
                let (a, b) = p.split_once(',').unwrap();
                (a.parse().unwrap(), b.parse().unwrap())
            })
            .collect()
    }

    #[test]
    fn constant_profile_is_flat() {
        let svg = profile_svg(&profile(vec![40.0; 96], vec![0.0; 96]), Some("abc"));
        assert!(svg.starts_with("<!-- config_hash=abc -->"));
        assert!(svg.contains("S&lt;1&gt;"));
        let line = points(&svg, "median");
        assert_eq!(line.len(), 96);
        assert!(line.iter().all(|p| p.1 == line[0].1));
        // 40 on a 0..50 axis
        let expected = TOP + (HEIGHT - TOP - BOTTOM) * (1.0 - 40.0 / 50.0);
        assert!((line[0].1 - expected).abs() < 1e-9);
    }

    #[test]
    fn band_encloses_line() {
        let values: Vec<f64> = (0..96).map(|i| 10.0 + i as f64).collect();
        let svg = profile_svg(&profile(values, vec![5.0; 96]), None);
        let line = points(&svg, "median");
        let band = points(&svg, "stdev");
        assert_eq!(band.len(), 192);
        for i in 0..96 {
            assert!(band[i].1 <= line[i].1 && band[191 - i].1 >= line[i].1);
        }
    }

    #[test]
    fn zero_profile_renders() {
        let svg = profile_svg(&profile(vec![0.0; 96], vec![0.0; 96]), None);
        assert!(points(&svg, "median")
            .iter()
            .all(|p| p.1 == TOP + (HEIGHT - TOP - BOTTOM)));
    }

    #[test]
    fn ceilings() {
        assert_eq!(nice_ceiling(40.0), 50.0);
        assert_eq!(nice_ceiling(100.0), 100.0);
        assert_eq!(nice_ceiling(101.0), 200.0);
        assert_eq!(nice_ceiling(0.3), 0.5);
    }
}
