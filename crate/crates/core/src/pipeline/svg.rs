//! Bare-bones SVG markup for the report figures.

use std::fmt::Write;

const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#637939",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Doc {
    body: String,
    width: f64,
    height: f64,
}

impl Doc {
    fn new(width: f64, height: f64, title: &str) -> Self {
        let mut d = Doc {
            body: String::new(),
            width,
            height,
        };
        d.text(width / 2.0, 18.0, title, "middle", 14.0);
        d
    }

    fn text(&mut self, x: f64, y: f64, s: &str, anchor: &str, size: f64) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="{size}" text-anchor="{anchor}">{}</text>"#,
            escape(s)
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#
        );
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Diverging blue-white-red shade for `v` in `[-1, 1]`.
fn diverging(v: f64) -> String {
    let v = v.clamp(-1.0, 1.0);
    let (r, g, b) = if v >= 0.0 {
        (255.0, 255.0 * (1.0 - v), 255.0 * (1.0 - v))
    } else {
        (255.0 * (1.0 + v), 255.0 * (1.0 + v), 255.0)
    };
    format!("rgb({},{},{})", r as u8, g as u8, b as u8)
}

/// Side-by-side heatmaps (one per grid, rows top to bottom), shaded
/// symmetrically around zero by the largest magnitude over all grids.
pub fn heatmaps(title: &str, grids: &[(String, Vec<Vec<f64>>)], row_labels: &[String]) -> String {
    let cell = 12.0;
    let cols = grids.first().and_then(|g| g.1.first()).map_or(0, Vec::len) as f64;
    let rows = grids.first().map_or(0, |g| g.1.len()) as f64;
    let panel_w = cols * cell + 20.0;
    let left = 90.0;
    let width = left + panel_w * grids.len() as f64 + 10.0;
    let height = 60.0 + rows * cell + 30.0;
    let scale = grids
        .iter()
        .flat_map(|g| g.1.iter().flatten())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    let mut doc = Doc::new(width, height, title);
    for (r, label) in row_labels.iter().enumerate() {
        doc.text(left - 6.0, 50.0 + (r as f64 + 0.75) * cell, label, "end", 10.0);
    }
    for (p, (name, grid)) in grids.iter().enumerate() {
        let x0 = left + p as f64 * panel_w;
        doc.text(x0 + cols * cell / 2.0, 40.0, name, "middle", 11.0);
        for (r, row) in grid.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                doc.rect(x0 + c as f64 * cell, 50.0 + r as f64 * cell, cell, cell, &diverging(v / scale));
            }
        }
        for h in (0..cols as usize).step_by(6) {
            doc.text(x0 + (h as f64 + 0.5) * cell, 50.0 + rows * cell + 14.0, &h.to_string(), "middle", 9.0);
        }
    }
    doc.finish()
}

/// Categorical strip: one row per label, one cell per entry; `None` cells
/// are left blank.
pub fn strips(title: &str, rows: &[(String, Vec<Option<usize>>)], legend: &[String]) -> String {
    let cell = 16.0;
    let left = 80.0;
    let cols = rows.iter().map(|r| r.1.len()).max().unwrap_or(0) as f64;
    let width = left + cols * cell + 140.0;
    let height = 40.0 + rows.len() as f64 * (cell + 4.0) + 20.0;
    let mut doc = Doc::new(width, height.max(40.0 + legend.len() as f64 * 16.0), title);
    for (r, (label, cells)) in rows.iter().enumerate() {
        let y = 35.0 + r as f64 * (cell + 4.0);
        doc.text(left - 6.0, y + cell * 0.75, label, "end", 10.0);
        for (c, v) in cells.iter().enumerate() {
            if let Some(v) = v {
                doc.rect(left + c as f64 * cell, y, cell - 1.0, cell, color(*v));
            }
        }
    }
    for (i, name) in legend.iter().enumerate() {
        let y = 35.0 + i as f64 * 16.0;
        doc.rect(left + cols * cell + 15.0, y, 10.0, 10.0, color(i));
        doc.text(left + cols * cell + 30.0, y + 9.0, name, "start", 10.0);
    }
    doc.finish()
}

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Frame {
    fn fit(values: impl Iterator<Item = (f64, f64)>, x0: f64, y0: f64, w: f64, h: f64) -> Self {
        let (mut xr, mut yr) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
        for (x, y) in values {
            xr = (xr.0.min(x), xr.1.max(x));
            yr = (yr.0.min(y), yr.1.max(y));
        }
        let pad = |r: (f64, f64)| {
            if !r.0.is_finite() {
                (0.0, 1.0)
            } else if r.1 > r.0 {
                let p = 0.05 * (r.1 - r.0);
                (r.0 - p, r.1 + p)
            } else {
                (r.0 - 1.0, r.1 + 1.0)
            }
        };
        Frame { x0, y0, w, h, xr: pad(xr), yr: pad(yr) }
    }

    fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + self.h - (y - self.yr.0) / (self.yr.1 - self.yr.0) * self.h
    }

    fn axes(&self, doc: &mut Doc, xlabel: &str, ylabel: &str) {
        let _ = writeln!(
            doc.body,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            self.x0, self.y0, self.w, self.h
        );
        doc.text(self.x0 + self.w / 2.0, self.y0 + self.h + 28.0, xlabel, "middle", 11.0);
        doc.text(self.x0 - 40.0, self.y0 + self.h / 2.0, ylabel, "middle", 11.0);
        doc.text(self.x0, self.y0 + self.h + 14.0, &format!("{:.3}", self.xr.0), "start", 9.0);
        doc.text(self.x0 + self.w, self.y0 + self.h + 14.0, &format!("{:.3}", self.xr.1), "end", 9.0);
        doc.text(self.x0 - 4.0, self.y0 + self.h, &format!("{:.3}", self.yr.0), "end", 9.0);
        doc.text(self.x0 - 4.0, self.y0 + 8.0, &format!("{:.3}", self.yr.1), "end", 9.0);
    }

    fn polyline(&self, doc: &mut Doc, pts: &[(f64, f64)], stroke: &str) {
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        let _ = writeln!(
            doc.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
    }
}

/// Panels of line plots sharing one y-range; each panel holds named series.
pub fn line_panels(
    title: &str,
    panels: &[(String, Vec<(String, Vec<(f64, f64)>)>)],
    xlabel: &str,
    ylabel: &str,
) -> String {
    let (pw, ph) = (320.0, 200.0);
    let width = 70.0 + panels.len() as f64 * (pw + 30.0) + 120.0;
    let height = 300.0;
    let mut doc = Doc::new(width, height, title);
    let all: Vec<(f64, f64)> = panels
        .iter()
        .flat_map(|p| p.1.iter().flat_map(|s| s.1.iter().copied()))
        .collect();
    let mut names: Vec<&str> = Vec::new();
    for (p, (panel, series)) in panels.iter().enumerate() {
        let frame = Frame::fit(all.iter().copied(), 70.0 + p as f64 * (pw + 30.0), 45.0, pw, ph);
        frame.axes(&mut doc, xlabel, if p == 0 { ylabel } else { "" });
        doc.text(frame.x0 + pw / 2.0, 38.0, panel, "middle", 11.0);
        for (i, (name, pts)) in series.iter().enumerate() {
            frame.polyline(&mut doc, pts, color(i));
            if p == 0 {
                names.push(name);
            }
        }
    }
    let lx = width - 110.0;
    for (i, name) in names.iter().enumerate() {
        doc.rect(lx, 50.0 + i as f64 * 16.0, 10.0, 10.0, color(i));
        doc.text(lx + 15.0, 59.0 + i as f64 * 16.0, name, "start", 10.0);
    }
    doc.finish()
}

/// Scatter of labelled points with black centroid markers.
pub fn scatter(title: &str, points: &[(f64, f64, usize)], centroids: &[(f64, f64)], legend: &[String]) -> String {
    let (w, h) = (480.0, 420.0);
    let mut doc = Doc::new(w + 190.0, h + 80.0, title);
    let frame = Frame::fit(
        points.iter().map(|p| (p.0, p.1)).chain(centroids.iter().copied()),
        60.0,
        35.0,
        w,
        h,
    );
    frame.axes(&mut doc, "UMAP 1", "UMAP 2");
    for &(x, y, g) in points {
        let _ = writeln!(
            doc.body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" fill-opacity="0.8"/>"#,
            frame.px(x),
            frame.py(y),
            color(g)
        );
    }
    for &(x, y) in centroids {
        let _ = writeln!(
            doc.body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="6" fill="black"/>"#,
            frame.px(x),
            frame.py(y)
        );
    }
    for (i, name) in legend.iter().enumerate() {
        doc.rect(w + 80.0, 40.0 + i as f64 * 16.0, 10.0, 10.0, color(i));
        doc.text(w + 95.0, 49.0 + i as f64 * 16.0, name, "start", 10.0);
    }
    doc.finish()
}
