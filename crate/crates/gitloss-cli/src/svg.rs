//! Dependency-free SVG emission: a scatter plot for 2-D embeddings and a
//! line chart for the loss-term curves. Output is plain text, so figures are
//! diffable and byte-stable across runs.

use std::fmt::Write as _;

/// Ten visually distinct series colors (the usual categorical palette).
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 560.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 32.0;
const MARGIN_BOTTOM: f64 = 48.0;

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    /// Data bounds padded by 5%, degenerate ranges widened to a unit span.
    fn around(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Frame {
        let min_max = |it: std::iter::Cloned<std::slice::Iter<f64>>| {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for v in it {
                min = min.min(v);
                max = max.max(v);
            }
            (min, max)
        };
        let xs: Vec<f64> = xs.collect();
        let ys: Vec<f64> = ys.collect();
        let (mut x_min, mut x_max) = min_max(xs.iter().cloned());
        let (mut y_min, mut y_max) = min_max(ys.iter().cloned());
        for (min, max) in [(&mut x_min, &mut x_max), (&mut y_min, &mut y_max)] {
            if !min.is_finite() || !max.is_finite() {
                (*min, *max) = (0.0, 1.0);
            }
            if *max - *min < 1e-12 {
                *min -= 0.5;
                *max += 0.5;
            }
            let pad = 0.05 * (*max - *min);
            *min -= pad;
            *max += pad;
        }
        Frame {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn open_document(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\">{}</text>",
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, frame: &Frame) {
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    let _ = writeln!(
        out,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        out,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>"
    );
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let xv = frame.x_min + f * (frame.x_max - frame.x_min);
        let xp = frame.px(xv);
        let _ = writeln!(
            out,
            "<line x1=\"{xp}\" y1=\"{y0}\" x2=\"{xp}\" y2=\"{}\" stroke=\"black\"/>",
            y0 + 5.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{xp}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{}</text>",
            y0 + 18.0,
            tick_label(xv)
        );
        let yv = frame.y_min + f * (frame.y_max - frame.y_min);
        let yp = frame.py(yv);
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{yp}\" x2=\"{x0}\" y2=\"{yp}\" stroke=\"black\"/>",
            x0 - 5.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{}</text>",
            x0 - 8.0,
            yp + 4.0,
            tick_label(yv)
        );
    }
}

fn legend(out: &mut String, entries: &[(String, &str)]) {
    let lx = WIDTH - MARGIN_RIGHT + 16.0;
    let mut ly = MARGIN_TOP + 8.0;
    for (label, color) in entries {
        let _ = writeln!(
            out,
            "<rect x=\"{lx}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{color}\"/>",
            ly - 10.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{ly}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            lx + 18.0,
            escape(label)
        );
        ly += 20.0;
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let av = v.abs();
    if (1e-3..1e5).contains(&av) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter plot of 2-D points grouped by class. `groups` maps a class label
/// to its points.
pub fn scatter_plot(title: &str, groups: &[(usize, Vec<(f64, f64)>)]) -> String {
    let xs: Vec<f64> = groups
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| p.0))
        .collect();
    let ys: Vec<f64> = groups
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| p.1))
        .collect();
    let frame = Frame::around(xs.iter().cloned(), ys.iter().cloned());

    let mut out = String::new();
    open_document(&mut out, title);
    axes(&mut out, &frame);
    for (class, points) in groups {
        let color = PALETTE[class % PALETTE.len()];
        for &(x, y) in points {
            let _ = writeln!(
                out,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"{color}\" fill-opacity=\"0.7\"/>",
                frame.px(x),
                frame.py(y)
            );
        }
    }
    let entries: Vec<(String, &str)> = groups
        .iter()
        .map(|(class, _)| (format!("class {class}"), PALETTE[class % PALETTE.len()]))
        .collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}

/// Line chart of one or more named series sharing the x grid.
pub fn line_chart(title: &str, x: &[f64], series: &[(String, Vec<f64>)]) -> String {
    let ys: Vec<f64> = series.iter().flat_map(|(_, v)| v.iter().cloned()).collect();
    let frame = Frame::around(x.iter().cloned(), ys.iter().cloned());

    let mut out = String::new();
    open_document(&mut out, title);
    axes(&mut out, &frame);
    for (idx, (_, values)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let mut path = String::new();
        for (i, (&xv, &yv)) in x.iter().zip(values).enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            let _ = write!(path, "{cmd}{:.2} {:.2} ", frame.px(xv), frame.py(yv));
        }
        let _ = writeln!(
            out,
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            path.trim_end()
        );
    }
    let entries: Vec<(String, &str)> = series
        .iter()
        .enumerate()
        .map(|(idx, (name, _))| (name.clone(), PALETTE[idx % PALETTE.len()]))
        .collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_emits_one_marker_per_point_and_legend_entry_per_class() {
        let groups = vec![
            (0usize, vec![(0.0, 0.0), (1.0, 1.0)]),
            (3usize, vec![(2.0, -1.0)]),
        ];
        let svg = scatter_plot("demo", &groups);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("class 0"));
        assert!(svg.contains("class 3"));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn line_chart_has_one_path_per_series() {
        let x = vec![0.0, 1.0, 2.0];
        let series = vec![
            ("a".to_string(), vec![0.0, 1.0, 4.0]),
            ("b".to_string(), vec![1.0, 0.5, 0.2]),
        ];
        let svg = line_chart("demo", &x, &series);
        assert_eq!(svg.matches("<path").count(), 2);
    }

    #[test]
    fn degenerate_ranges_still_render() {
        let groups = vec![(0usize, vec![(1.0, 1.0), (1.0, 1.0)])];
        let svg = scatter_plot("flat", &groups);
        assert!(!svg.contains("NaN"));
        assert!(!svg.contains("inf"));
    }

    #[test]
    fn output_is_deterministic() {
        let groups = vec![(0usize, vec![(0.5, -0.25), (0.125, 3.0)])];
        assert_eq!(scatter_plot("t", &groups), scatter_plot("t", &groups));
    }
}
