use crate::diff::Array;

const SIZE: f64 = 480.0;
const PAD: f64 = 16.0;

/// Scatter plot of the first two columns of `points`, scaled to fit.
pub fn scatter_svg(points: &Array, title: &str) -> String {
    let rows = points.rows();
    let xy: Vec<(f64, f64)> = (0..rows)
        .map(|i| {
            let r = points.row(i);
            (r[0], r.get(1).copied().unwrap_or(0.0))
        })
        .collect();
    let extent = xy
        .iter()
        .fold(1e-9f64, |m, &(x, y)| m.max(x.abs()).max(y.abs()));
    let scale = (SIZE / 2.0 - PAD) / extent;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" \
         viewBox=\"0 0 {SIZE} {SIZE}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"8\" y=\"14\" font-family=\"monospace\" font-size=\"11\">{}</text>\n",
        escape(title)
    );
    for (x, y) in xy {
        let cx = SIZE / 2.0 + x * scale;
        let cy = SIZE / 2.0 - y * scale;
        out.push_str(&format!(
            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"1.2\" fill=\"#1f4e79\" fill-opacity=\"0.5\"/>\n"
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
