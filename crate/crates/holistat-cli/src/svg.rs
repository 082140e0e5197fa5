//! Tiny deterministic SVG renderers. Everything is computed from the data
//! passed in — no clocks, no randomness — so repeated runs emit identical
//! bytes even though the determinism contract only content-checks figures.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 405.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 46.0;
const BOTTOM: f64 = 58.0;

const PALETTE: [&str; 7] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#17becf"];
const CLASS_COLORS: [&str; 5] = ["#deebf7", "#9ecae1", "#6baed6", "#3182bd", "#08519c"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_num(v: f64) -> String {
    let rounded = (v * 1e4).round() / 1e4;
    if rounded == 0.0 { "0".to_string() } else { rounded.to_string() }
}

/// Smallest 1/2/5 x 10^k at or above `v`; 1.0 for degenerate input.
fn nice_max(v: f64) -> f64 {
    if !(v > 0.0) {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    for mult in [1.0, 2.0, 5.0, 10.0] {
        if mult * mag >= v {
            return mult * mag;
        }
    }
    v
}

struct Canvas {
    body: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        write!(
            body,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\">\n\
             <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
             <text x=\"{:.2}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
            WIDTH / 2.0,
            esc(title),
        )
        .expect("write to String");
        Canvas { body }
    }

    fn text(&mut self, x: f64, y: f64, size: u32, anchor: &str, extra: &str, s: &str) {
        write!(
            self.body,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size}\" text-anchor=\"{anchor}\"{extra}>{}</text>\n",
            esc(s)
        )
        .expect("write to String");
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, extra: &str) {
        write!(
            self.body,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{stroke}\"{extra}/>\n"
        )
        .expect("write to String");
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, extra: &str) {
        write!(
            self.body,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\"{extra}/>\n"
        )
        .expect("write to String");
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }

    /// Axes plus y ticks for [0, y_max]; returns a y-coordinate mapper.
    fn y_axis(&mut self, y_label: &str, y_max: f64) -> impl Fn(f64) -> f64 {
        let plot_h = HEIGHT - TOP - BOTTOM;
        for i in 0..=5 {
            let v = y_max * f64::from(i) / 5.0;
            let y = HEIGHT - BOTTOM - plot_h * f64::from(i) / 5.0;
            self.line(LEFT, y, WIDTH - RIGHT, y, "#dddddd", "");
            self.text(LEFT - 6.0, y + 4.0, 11, "end", "", &fmt_num(v));
        }
        self.line(LEFT, TOP, LEFT, HEIGHT - BOTTOM, "#333333", "");
        self.line(LEFT, HEIGHT - BOTTOM, WIDTH - RIGHT, HEIGHT - BOTTOM, "#333333", "");
        self.text(
            16.0,
            HEIGHT / 2.0,
            12,
            "middle",
            &format!(" transform=\"rotate(-90 16 {:.2})\"", HEIGHT / 2.0),
            y_label,
        );
        move |v: f64| HEIGHT - BOTTOM - plot_h * (v / y_max)
    }

    fn x_label(&mut self, s: &str) {
        self.text((LEFT + WIDTH - RIGHT) / 2.0, HEIGHT - 14.0, 12, "middle", "", s);
    }
}

pub fn bar_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    bars: &[(String, f64)],
    hline: Option<(f64, &str)>,
) -> String {
    let mut c = Canvas::new(title);
    let data_max = bars
        .iter()
        .map(|(_, v)| *v)
        .chain(hline.map(|(v, _)| v))
        .fold(0.0f64, f64::max);
    let y_max = nice_max(data_max);
    let to_y = c.y_axis(y_label, y_max);
    c.x_label(x_label);

    let plot_w = WIDTH - LEFT - RIGHT;
    let n = bars.len().max(1);
    let slot = plot_w / n as f64;
    let bar_w = (slot * 0.8).min(60.0);
    let label_stride = n.div_ceil(12);
    for (i, (label, value)) in bars.iter().enumerate() {
        let x = LEFT + slot * i as f64 + (slot - bar_w) / 2.0;
        let y = to_y(value.max(0.0));
        c.rect(x, y, bar_w, HEIGHT - BOTTOM - y, PALETTE[0], "");
        if i % label_stride == 0 {
            c.text(x + bar_w / 2.0, HEIGHT - BOTTOM + 16.0, 11, "middle", "", label);
        }
    }
    if let Some((v, label)) = hline {
        let y = to_y(v.max(0.0).min(y_max));
        c.line(LEFT, y, WIDTH - RIGHT, y, PALETTE[3], " stroke-dasharray=\"6 3\"");
        c.text(WIDTH - RIGHT - 4.0, y - 6.0, 11, "end", &format!(" fill=\"{}\"", PALETTE[3]), label);
    }
    c.finish()
}

pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    lines: &[(String, Vec<(f64, f64)>)],
    hlines: &[(f64, String)],
) -> String {
    let mut c = Canvas::new(title);
    let points = lines.iter().flat_map(|(_, pts)| pts.iter());
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut data_max = hlines.iter().map(|(v, _)| v.abs()).fold(0.0f64, f64::max);
    for (x, y) in points {
        x_min = x_min.min(*x);
        x_max = x_max.max(*x);
        data_max = data_max.max(y.abs());
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
    }
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    let y_max = nice_max(data_max);
    // Symmetric range so sign-carrying traces (z-scores) stay readable.
    let has_negative = lines.iter().flat_map(|(_, p)| p).any(|&(_, y)| y < 0.0);
    let y_min = if has_negative { -y_max } else { 0.0 };

    let plot_h = HEIGHT - TOP - BOTTOM;
    let plot_w = WIDTH - LEFT - RIGHT;
    for i in 0..=5 {
        let v = y_min + (y_max - y_min) * f64::from(i) / 5.0;
        let y = HEIGHT - BOTTOM - plot_h * f64::from(i) / 5.0;
        c.line(LEFT, y, WIDTH - RIGHT, y, "#dddddd", "");
        c.text(LEFT - 6.0, y + 4.0, 11, "end", "", &fmt_num(v));
    }
    c.line(LEFT, TOP, LEFT, HEIGHT - BOTTOM, "#333333", "");
    c.line(LEFT, HEIGHT - BOTTOM, WIDTH - RIGHT, HEIGHT - BOTTOM, "#333333", "");
    c.text(
        16.0,
        HEIGHT / 2.0,
        12,
        "middle",
        &format!(" transform=\"rotate(-90 16 {:.2})\"", HEIGHT / 2.0),
        y_label,
    );
    c.x_label(x_label);
    for i in 0..=4 {
        let v = x_min + (x_max - x_min) * f64::from(i) / 4.0;
        let x = LEFT + plot_w * f64::from(i) / 4.0;
        c.text(x, HEIGHT - BOTTOM + 16.0, 11, "middle", "", &fmt_num(v));
    }

    let to_x = |x: f64| LEFT + plot_w * (x - x_min) / (x_max - x_min);
    let to_y = |y: f64| HEIGHT - BOTTOM - plot_h * (y - y_min) / (y_max - y_min);
    for (i, (name, pts)) in lines.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> =
            pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", to_x(x), to_y(y))).collect();
        write!(
            c.body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\"/>\n",
            path.join(" ")
        )
        .expect("write to String");
        c.text(
            LEFT + 8.0 + 130.0 * i as f64,
            TOP - 8.0,
            11,
            "start",
            &format!(" fill=\"{color}\""),
            name,
        );
    }
    for (v, label) in hlines {
        let y = to_y(v.clamp(y_min, y_max));
        c.line(LEFT, y, WIDTH - RIGHT, y, PALETTE[3], " stroke-dasharray=\"6 3\"");
        c.text(WIDTH - RIGHT - 4.0, y - 6.0, 11, "end", &format!(" fill=\"{}\"", PALETTE[3]), label);
    }
    c.finish()
}

pub fn stacked_bars(
    title: &str,
    x_label: &str,
    y_label: &str,
    categories: &[String],
    layers: &[(String, Vec<f64>)],
) -> String {
    let mut c = Canvas::new(title);
    let mut totals = vec![0.0f64; categories.len()];
    for (_, values) in layers {
        for (t, v) in totals.iter_mut().zip(values) {
            *t += v.max(0.0);
        }
    }
    let y_max = nice_max(totals.iter().copied().fold(0.0, f64::max));
    let to_y = c.y_axis(y_label, y_max);
    c.x_label(x_label);

    let plot_w = WIDTH - LEFT - RIGHT;
    let n = categories.len().max(1);
    let slot = plot_w / n as f64;
    let bar_w = (slot * 0.8).min(80.0);
    let mut cumulative = vec![0.0f64; categories.len()];
    for (li, (name, values)) in layers.iter().enumerate() {
        let color = PALETTE[li % PALETTE.len()];
        for (i, v) in values.iter().enumerate() {
            let v = v.max(0.0);
            if v == 0.0 {
                continue;
            }
            let x = LEFT + slot * i as f64 + (slot - bar_w) / 2.0;
            let y0 = to_y(cumulative[i]);
            let y1 = to_y(cumulative[i] + v);
            c.rect(x, y1, bar_w, y0 - y1, color, "");
            cumulative[i] += v;
        }
        c.text(
            LEFT + 8.0 + 120.0 * li as f64,
            TOP - 8.0,
            11,
            "start",
            &format!(" fill=\"{color}\""),
            name,
        );
    }
    let label_stride = n.div_ceil(12);
    for (i, label) in categories.iter().enumerate() {
        if i % label_stride == 0 {
            let x = LEFT + slot * i as f64 + slot / 2.0;
            c.text(x, HEIGHT - BOTTOM + 16.0, 11, "middle", "", label);
        }
    }
    c.finish()
}

/// Rows x columns grid of intensity classes (0..=4); `None` renders grey.
pub fn class_grid(
    title: &str,
    row_labels: &[String],
    col_labels: &[String],
    cells: &[Vec<Option<u8>>],
    legend: &[&str],
) -> String {
    let mut c = Canvas::new(title);
    let rows = row_labels.len().max(1);
    let cols = col_labels.len().max(1);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let cell_w = plot_w / cols as f64;
    let cell_h = plot_h / rows as f64;

    for (ri, row) in cells.iter().enumerate() {
        for (ci, cell) in row.iter().enumerate() {
            let color = match cell {
                Some(k) => CLASS_COLORS[usize::from(*k).min(CLASS_COLORS.len() - 1)],
                None => "#eeeeee",
            };
            c.rect(
                LEFT + cell_w * ci as f64,
                TOP + cell_h * ri as f64,
                cell_w,
                cell_h,
                color,
                " stroke=\"white\" stroke-width=\"0.5\"",
            );
        }
    }
    let row_stride = rows.div_ceil(18);
    for (ri, label) in row_labels.iter().enumerate() {
        if ri % row_stride == 0 {
            c.text(LEFT - 6.0, TOP + cell_h * (ri as f64 + 0.5) + 4.0, 10, "end", "", label);
        }
    }
    let col_stride = cols.div_ceil(12);
    for (ci, label) in col_labels.iter().enumerate() {
        if ci % col_stride == 0 {
            c.text(
                LEFT + cell_w * (ci as f64 + 0.5),
                HEIGHT - BOTTOM + 16.0,
                10,
                "middle",
                "",
                label,
            );
        }
    }
    for (i, name) in legend.iter().enumerate() {
        let x = LEFT + 110.0 * i as f64;
        c.rect(x, HEIGHT - 26.0, 10.0, 10.0, CLASS_COLORS[i.min(CLASS_COLORS.len() - 1)], "");
        c.text(x + 14.0, HEIGHT - 17.0, 10, "start", "", name);
    }
    c.finish()
}
