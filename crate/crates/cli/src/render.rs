//! Static SVG frames: obstacles, inflated obstacles, trails up to the frame,
//! starts, goals and current positions.

use std::fmt::Write;

use declos::sim::TickRecord;
use declos::{AARect, SimTrace};

const PX_PER_M: f64 = 30.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

pub fn svg(trace: &SimTrace, tick: Option<u64>) -> String {
    let h = &trace.header;
    let b = h.bounds;
    let w = b.width() * PX_PER_M;
    let ht = b.height() * PX_PER_M;
    let x = |v: f64| (v - b.xmin()) * PX_PER_M;
    let y = |v: f64| (b.ymax() - v) * PX_PER_M;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{ht:.0}" viewBox="0 0 {w:.1} {ht:.1}">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff" stroke="#000"/>"##);
    let rect = |s: &mut String, r: &AARect, style: &str| {
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" {style}/>"#,
            x(r.xmin()),
            y(r.ymax()),
            r.width() * PX_PER_M,
            r.height() * PX_PER_M
        );
    };
    for r in &h.planning_obstacles {
        rect(&mut s, r, r##"fill="none" stroke="#888" stroke-dasharray="4 3""##);
    }
    for r in &h.physical_obstacles {
        rect(&mut s, r, r##"fill="#444" stroke="#000""##);
    }
    let frames: Vec<&TickRecord> = trace.ticks().filter(|t| tick.is_none_or(|k| t.tick <= k)).collect();
    for (i, agent) in h.agents.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let pts: Vec<String> = frames.iter().map(|t| format!("{:.2},{:.2}", x(t.positions[i].x), y(t.positions[i].y))).collect();
        if !pts.is_empty() {
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#, pts.join(" "));
        }
        let (sx, sy) = (x(h.starts[i].x), y(h.starts[i].y));
        let _ = writeln!(
            s,
            r#"<path d="M{} {} L{} {} M{} {} L{} {}" stroke="{c}" stroke-width="2"/>"#,
            sx - 5.0,
            sy - 5.0,
            sx + 5.0,
            sy + 5.0,
            sx - 5.0,
            sy + 5.0,
            sx + 5.0,
            sy - 5.0
        );
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="6" fill="none" stroke="{c}" stroke-width="2"/>"#,
            x(h.goals[i].x),
            y(h.goals[i].y)
        );
        if let Some(last) = frames.last() {
            let p = last.positions[i];
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{c}"/>"#, x(p.x), y(p.y));
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-size="11" fill="{c}">{agent}</text>"#,
                x(p.x) + 6.0,
                y(p.y) - 6.0
            );
        }
    }
    if let Some(last) = frames.last() {
        let _ = writeln!(s, r#"<text x="6" y="16" font-size="13">t = {:.1} s, k = {}</text>"#, last.t, last.k);
    }
    s.push_str("</svg>\n");
    s
}
