//! Self-contained SVG line charts from result CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::experiment::CSV_HEADER;

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Row {
    protocol: String,
    nodes: f64,
    contention: f64,
    interval: f64,
    throughput: f64,
}

fn parse(text: &str) -> Result<Vec<Row>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        Some(h) => return Err(format!("unexpected CSV header `{h}`")),
        None => return Err("empty CSV".into()),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(format!("line {}: expected 9 fields, found {}", i + 2, f.len()));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|_| format!("line {}: field {} is not a number", i + 2, k + 1));
        rows.push(Row { protocol: f[1].to_string(), nodes: num(2)?, contention: num(4)?, interval: num(5)?, throughput: num(6)? });
    }
    Ok(rows)
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 || v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Throughput against whichever of contention, node count or interval start
/// varies in the data; one series per protocol, averaged per x value.
pub fn svg_from_csv(text: &str) -> Result<String, String> {
    let rows = parse(text)?;
    let varies = |get: fn(&Row) -> f64| rows.iter().any(|r| get(r) != get(&rows[0]));
    let (label, get): (&str, fn(&Row) -> f64) = if !rows.is_empty() && varies(|r| r.contention) {
        ("contention", |r| r.contention)
    } else if !rows.is_empty() && varies(|r| r.nodes) {
        ("nodes", |r| r.nodes)
    } else {
        ("interval_start_s", |r| r.interval)
    };
    let mut order: Vec<String> = Vec::new();
    let mut series: BTreeMap<String, BTreeMap<u64, (f64, f64, u32)>> = BTreeMap::new();
    for r in &rows {
        if !order.contains(&r.protocol) {
            order.push(r.protocol.clone());
        }
        let x = get(r);
        let e = series.entry(r.protocol.clone()).or_default().entry(x.to_bits()).or_insert((x, 0.0, 0));
        e.1 += r.throughput;
        e.2 += 1;
    }
    let points: Vec<(String, Vec<(f64, f64)>)> = order
        .iter()
        .map(|p| {
            let mut pts: Vec<(f64, f64)> = series[p].values().map(|(x, s, n)| (*x, s / *n as f64)).collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            (p.clone(), pts)
        })
        .collect();

    let all = points.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y1) = (f64::MAX, f64::MIN, 0.0f64);
    for (x, y) in all {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y1 = y1.max(*y);
    }
    let empty = points.is_empty();
    if empty {
        (x0, x1, y1) = (0.0, 1.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= 0.0 {
        y1 = 1.0;
    }
    y1 *= 1.1;
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - y / y1 * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, TOP + ph, LEFT + pw, TOP + ph);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#, TOP + ph);
    for i in 0..=5 {
        let fx = x0 + (x1 - x0) * i as f64 / 5.0;
        let fy = y1 * i as f64 / 5.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, sx(fx), TOP + ph + 18.0, fmt_tick(fx));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 6.0, sy(fy) + 4.0, fmt_tick(fy));
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{0:.1}" x2="{1:.1}" y2="{0:.1}" stroke="#ddd"/>"##, sy(fy), LEFT + pw);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#, LEFT + pw / 2.0, H - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.1}" text-anchor="middle" transform="rotate(-90 20 {:.1})">throughput_ops_s</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    if empty {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" fill="gray">no data</text>"#, LEFT + pw / 2.0, TOP + ph / 2.0);
    }
    for (i, (name, pts)) in points.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{:.1},{:.1}", sx(*x), sy(*y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" "));
        for (x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, sx(*x), sy(*y));
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{0:.1}" y1="{ly:.1}" x2="{1:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, LEFT + pw + 15.0, LEFT + pw + 40.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{name}</text>"#, LEFT + pw + 46.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1_like() -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for p in ["CLM", "PDL", "LDL", "HL"] {
            for c in [0.0, 0.2, 0.4] {
                for t in [10, 11] {
                    s += &format!("fig1,{p},16,1,{c},{t},{},1.0,2.0\n", 1000.0 * (1.0 - c));
                }
            }
        }
        s
    }

    #[test]
    fn one_polyline_per_protocol() {
        let svg = svg_from_csv(&fig1_like()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert!(svg.contains(">contention</text>"));
    }

    #[test]
    fn empty_data_draws_axes_and_note() {
        let svg = svg_from_csv(&format!("{CSV_HEADER}\n")).unwrap();
        assert!(svg.contains("no data"));
        assert_eq!(svg.matches("<polyline").count(), 0);
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn deterministic_bytes() {
        assert_eq!(svg_from_csv(&fig1_like()).unwrap(), svg_from_csv(&fig1_like()).unwrap());
    }

    #[test]
    fn malformed_rejected() {
        assert!(svg_from_csv("a,b\n1,2\n").is_err());
        assert!(svg_from_csv(&format!("{CSV_HEADER}\nx,CLM,1,1,0,0,abc,1,1\n")).is_err());
        assert!(svg_from_csv(&format!("{CSV_HEADER}\nx,CLM,1\n")).is_err());
    }
}
