//! Self-contained SVG emitters for loss curves and ablation bars. No
//! plotting dependency: the output is a fixed-size viewBox with axes,
//! polylines, and a legend, formatted deterministically.

const WIDTH: f64 = 840.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Multi-series line chart (e.g. loss components per epoch).
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            xs.push(x);
            ys.push(y);
        }
    }
    let (x0, x1) = bounds(&xs, 0.0, 1.0);
    let (y0, y1) = bounds(&ys, 0.0, 1.0);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| MARGIN_T + plot_h - (y - y0) / (y1 - y0) * plot_h;

    let mut out = svg_open(title);
    out.push_str(&axes(x0, x1, y0, y1, x_label, y_label));
    for (i, s) in series.iter().enumerate() {
        if s.points.is_empty() {
            continue;
        }
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> =
            s.points.iter().map(|&(x, y)| format!("{},{}", fmt(px(x)), fmt(py(y)))).collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        let ly = MARGIN_T + 18.0 * i as f64 + 10.0;
        out.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"4\" fill=\"{color}\"/>\n",
            fmt(WIDTH - MARGIN_R + 12.0),
            fmt(ly - 2.0)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" font-family=\"sans-serif\">{}</text>\n",
            fmt(WIDTH - MARGIN_R + 30.0),
            fmt(ly + 4.0),
            escape(&s.name)
        ));
    }
    out.push_str("</svg>\n");
    out
}

pub struct Bar {
    pub label: String,
    pub value: f64,
    pub stddev: f64,
}

/// Bar chart with error whiskers (e.g. per-cell mean mIoU).
pub fn bar_chart(title: &str, y_label: &str, bars: &[Bar]) -> String {
    let ys: Vec<f64> = bars.iter().map(|b| b.value + b.stddev).chain([0.0]).collect();
    let (y0, y1) = bounds(&ys, 0.0, 1.0);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let py = |y: f64| MARGIN_T + plot_h - (y - y0) / (y1 - y0) * plot_h;
    let n = bars.len().max(1) as f64;
    let step = plot_w / n;
    let bar_w = step * 0.6;

    let mut out = svg_open(title);
    out.push_str(&axes(0.0, n, y0, y1, "", y_label));
    for (i, b) in bars.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let cx = MARGIN_L + step * (i as f64 + 0.5);
        let top = py(b.value);
        out.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{color}\" fill-opacity=\"0.75\"/>\n",
            fmt(cx - bar_w / 2.0),
            fmt(top),
            fmt(bar_w),
            fmt(py(y0) - top)
        ));
        if b.stddev > 0.0 {
            let (lo, hi) = (py(b.value - b.stddev), py(b.value + b.stddev));
            out.push_str(&format!(
                "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"#333\" stroke-width=\"1.5\"/>\n",
                fmt(lo),
                fmt(hi),
                x = fmt(cx)
            ));
        }
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" font-family=\"sans-serif\">{}</text>\n",
            fmt(cx),
            fmt(HEIGHT - MARGIN_B + 18.0),
            escape(&b.label)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\" font-family=\"sans-serif\">{}</text>\n",
            fmt(cx),
            fmt(top - 6.0),
            fmt(b.value)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn bounds(values: &[f64], fallback_lo: f64, fallback_hi: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (fallback_lo, fallback_hi);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" width=\"{WIDTH}\" height=\"{HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\" font-family=\"sans-serif\">{}</text>\n",
        fmt(WIDTH / 2.0),
        escape(title)
    )
}

fn axes(x0: f64, x1: f64, y0: f64, y1: f64, x_label: &str, y_label: &str) -> String {
    let left = MARGIN_L;
    let right = WIDTH - MARGIN_R;
    let top = MARGIN_T;
    let bottom = HEIGHT - MARGIN_B;
    let mut out = String::new();
    out.push_str(&format!(
        "<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"#222\"/>\n\
         <line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"#222\"/>\n",
        l = fmt(left),
        r = fmt(right),
        t = fmt(top),
        b = fmt(bottom)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" font-family=\"sans-serif\">{}</text>\n",
        fmt(left - 8.0 - 34.0),
        fmt(bottom + 4.0),
        fmt(y0)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" font-family=\"sans-serif\">{}</text>\n",
        fmt(left - 8.0 - 34.0),
        fmt(top + 4.0),
        fmt(y1)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\" font-family=\"sans-serif\">{}</text>\n",
        fmt(left),
        fmt(bottom + 18.0),
        fmt(x0)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\" font-family=\"sans-serif\">{}</text>\n",
        fmt(right),
        fmt(bottom + 18.0),
        fmt(x1)
    ));
    if !x_label.is_empty() {
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\">{}</text>\n",
            fmt((left + right) / 2.0),
            fmt(HEIGHT - 12.0),
            escape(x_label)
        ));
    }
    if !y_label.is_empty() {
        out.push_str(&format!(
            "<text x=\"16\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\" transform=\"rotate(-90 16 {})\">{}</text>\n",
            fmt((top + bottom) / 2.0),
            fmt((top + bottom) / 2.0),
            escape(y_label)
        ));
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_valid_deterministic_svg() {
        let series = vec![Series {
            name: "loss".into(),
            points: vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.25)],
        }];
        let a = line_chart("t", "epoch", "loss", &series);
        let b = line_chart("t", "epoch", "loss", &series);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
        assert!(a.contains("polyline"));

        let bars = vec![Bar { label: "base".into(), value: 0.5, stddev: 0.05 }];
        let c = bar_chart("t", "mIoU", &bars);
        assert!(c.contains("rect") && c.contains("base"));
    }
}
