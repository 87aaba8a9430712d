//! Minimal static bar charts.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );

    let finite: Vec<f64> = bars.iter().map(|b| b.1).filter(|v| v.is_finite()).collect();
    let hi = finite.iter().copied().fold(0.0, f64::max);
    let lo = finite.iter().copied().fold(0.0, f64::min);
    let span = if hi - lo > 0.0 { hi - lo } else { 1.0 };
    let plot_h = H - 2.0 * PAD;
    let y = |v: f64| PAD + (hi - v) / span * plot_h;
    let zero = y(0.0);
    let _ = writeln!(s, r#"<line x1="{PAD}" y1="{zero:.1}" x2="{}" y2="{zero:.1}" stroke="black"/>"#, W - PAD / 2.0);

    let slot = (W - 1.5 * PAD) / bars.len().max(1) as f64;
    for (i, (label, v)) in bars.iter().enumerate() {
        let v = if v.is_finite() { *v } else { 0.0 };
        let x = PAD + i as f64 * slot + slot * 0.15;
        let (top, h) = if v >= 0.0 { (y(v), zero - y(v)) } else { (zero, y(v) - zero) };
        let _ = writeln!(
            s,
            r##"<rect x="{x:.1}" y="{top:.1}" width="{:.1}" height="{h:.1}" fill="#4a7ab5"/>"##,
            slot * 0.7
        );
        let cx = x + slot * 0.35;
        let _ = writeln!(s, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{v:.1}</text>"#, top - 4.0);
        let _ =
            writeln!(s, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, H - PAD / 2.0, escape(label));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_rect_per_bar() {
        let svg = bar_chart("t", "%", &[("a".into(), 10.0), ("b<".into(), -5.0), ("c".into(), f64::NAN)]);
        assert_eq!(svg.matches("<rect").count(), 3);
        assert!(svg.contains("b&lt;"));
        assert!(svg.ends_with("</svg>\n"));
    }
}
