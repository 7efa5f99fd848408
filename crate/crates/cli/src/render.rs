//! Standalone SVG scatter plot of a layout, one circle per node colored by
//! cluster label.

use std::fmt::Write;

use sgne_core::graph::NodePartition;
use sgne_core::sne::Layout;

/// Palette version 1: the 20 Tableau colors. Labels cycle through it.
pub const PALETTE: [&str; 20] = [
    "#1f77b4", "#aec7e8", "#ff7f0e", "#ffbb78", "#2ca02c", "#98df8a", "#d62728", "#ff9896", "#9467bd", "#c5b0d5",
    "#8c564b", "#c49c94", "#e377c2", "#f7b6d2", "#7f7f7f", "#c7c7c7", "#bcbd22", "#dbdb8d", "#17becf", "#9edae5",
];

/// Renders `y` into a `size_px` square. Coordinates are scaled uniformly
/// (aspect preserved) into `[margin, size - margin]` and centered; a layout
/// with zero extent is drawn at the canvas center. Panics if `labels` does
/// not match the layout's length.
pub fn render_svg(y: &Layout, labels: &NodePartition, size_px: u32) -> String {
    assert_eq!(y.len(), labels.len(), "one label per node");
    let size = f64::from(size_px.max(1));
    let margin = (size * 0.02).max(1.0).min(size / 4.0);
    let radius = (size / 400.0).clamp(0.5, 4.0);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in y.points() {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let scale = if extent > 0.0 && extent.is_finite() { (size - 2.0 * margin) / extent } else { 0.0 };
    let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];

    let mut svg = String::with_capacity(64 * y.len() + 256);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size_px}" height="{size_px}" viewBox="0 0 {size_px} {size_px}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (p, &l) in y.points().iter().zip(labels.labels()) {
        let cx = 0.5 * size + (p[0] - center[0]) * scale;
        // SVG's y axis points down.
        let cy = 0.5 * size - (p[1] - center[1]) * scale;
        let _ = writeln!(
            svg,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{radius:.2}" fill="{}"/>"#,
            PALETTE[l % PALETTE.len()]
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attr(svg: &str, name: &str) -> Vec<String> {
        let pat = format!(" {name}=\"");
        svg.lines()
            .filter(|l| l.starts_with("<circle"))
            .map(|l| {
                let s = l.split(&pat).nth(1).unwrap();
                s[..s.find('"').unwrap()].to_string()
            })
            .collect()
    }

    #[test]
    fn three_nodes_two_colors() {
        let y = Layout::new(vec![[0.0, 0.0], [1.0, 2.0], [-3.0, 1.0]]).unwrap();
        let svg = render_svg(&y, &NodePartition::from_labels(&[0, 1, 0]), 200);
        assert_eq!(svg.matches("<circle").count(), 3);
        let mut fills = attr(&svg, "fill");
        fills.sort();
        fills.dedup();
        assert_eq!(fills.len(), 2);
        for v in attr(&svg, "cx").iter().chain(&attr(&svg, "cy")) {
            let v: f64 = v.parse().unwrap();
            assert!((4.0 - 1e-9..=196.0 + 1e-9).contains(&v), "{v}");
        }
    }

    #[test]
    fn degenerate_layout_centered() {
        let y = Layout::new(vec![[5.0, 5.0]; 4]).unwrap();
        let svg = render_svg(&y, &NodePartition::from_labels(&[0, 0, 0, 0]), 300);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
        assert!(attr(&svg, "cx").iter().all(|v| v == "150.00"));
        assert!(attr(&svg, "cy").iter().all(|v| v == "150.00"));
    }

    #[test]
    fn palette_cycles() {
        let y = Layout::new((0..21).map(|i| [i as f64, 0.0]).collect()).unwrap();
        let labels: Vec<usize> = (0..21).collect();
        let fills = attr(&render_svg(&y, &NodePartition::from_labels(&labels), 100), "fill");
        assert_eq!(fills[0], fills[20]);
        assert_ne!(fills[0], fills[1]);
    }
}
