//! Line plot of the standardized observed K̃ against its null envelope.

use convexppp::testing::TestReport;
use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const M: f64 = 50.0;

pub fn report_svg(rep: &TestReport) -> String {
    let r = &rep.observed_std.r;
    let obs = &rep.observed_std.values;
    let (lo, hi) = (&rep.envelope.lo, &rep.envelope.hi);
    let finite = |v: &f64| v.is_finite();
    let ymin = obs.iter().chain(lo).filter(|v| finite(v)).fold(0.0f64, |a, b| a.min(*b));
    let ymax = obs.iter().chain(hi).filter(|v| finite(v)).fold(0.0f64, |a, b| a.max(*b));
    let (ymin, ymax) = if ymax > ymin { (ymin, ymax) } else { (-1.0, 1.0) };
    let xmax = r.last().copied().unwrap_or(1.0).max(1e-9);
    let px = |x: f64| M + x / xmax * (W - 2.0 * M);
    let py = |y: f64| H - M - (y - ymin) / (ymax - ymin) * (H - 2.0 * M);
    let path = |ys: &[f64]| -> String {
        r.iter().zip(ys).map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect::<Vec<_>>().join(" ")
    };

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let band: Vec<String> = r
        .iter()
        .zip(hi)
        .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
        .chain(r.iter().zip(lo).rev().map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))))
        .collect();
    let _ = writeln!(s, r#"<polygon points="{}" fill="rgb(204,204,204)" stroke="none"/>"#, band.join(" "));
    let _ = writeln!(s, r#"<line x1="{}" y1="{:.2}" x2="{}" y2="{:.2}" stroke="black" stroke-dasharray="6,4"/>"#, px(0.0), py(0.0), px(xmax), py(0.0));
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1.5"/>"#, path(obs));
    // axes
    let _ = writeln!(s, r#"<line x1="{M}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, H - M, W - M, H - M);
    let _ = writeln!(s, r#"<line x1="{M}" y1="{M}" x2="{M}" y2="{}" stroke="black"/>"#, H - M);
    for k in 0..=4 {
        let x = xmax * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{:.2}</text>"#, px(x), H - M + 16.0, x);
        let y = ymin + (ymax - ymin) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{:.3}</text>"#, M - 4.0, py(y) + 4.0, y);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">r</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle">T = {:.4}, p = {:.4}</text>"#,
        W / 2.0,
        rep.observed_t,
        rep.p_value
    );
    s.push_str("</svg>\n");
    s
}
