//! Text formats: JSON with fixed significant digits, CSV fields, SVG
//! contour plots.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::estimate::ScalarField;
use crate::levels::LevelReport;

/// Significant digits of reals in JSON output.
pub const JSON_DIGITS: usize = 17;
/// Significant digits of reals in CSV output.
pub const CSV_DIGITS: usize = 9;

/// `printf("%.*g", digits, x)`.
pub fn format_g(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let p = digits.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').unwrap_or((&sci, "0"));
    let exp: i32 = exp.parse().unwrap_or(0);
    if exp < -4 || exp >= p as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Pretty JSON formatter writing floats as `%.17g`.
struct GFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl Formatter for GFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(format_g(v, JSON_DIGITS).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Pretty-printed JSON with `%.17g` reals and a trailing newline.
/// Non-finite reals become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let fmt = GFormatter {
        inner: PrettyFormatter::with_indent(b"  "),
    };
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    value
        .serialize(&mut ser)
        .expect("serializing to memory cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Field as CSV with header `x,y,value`, row-major with `x` fastest;
/// NaN nodes have an empty value cell.
pub fn field_to_csv(field: &ScalarField) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let g = |v: f64| format_g(v, CSV_DIGITS);
    w.write_record(["x", "y", "value"]).expect("in-memory write");
    for j in 0..field.ny {
        for i in 0..field.nx {
            let v = field.at(i, j);
            let cell = if v.is_nan() { String::new() } else { g(v) };
            w.write_record([g(field.x(i)), g(field.y(j)), cell])
                .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output")
}

/// Inverse of [`field_to_csv`]. The grid shape is recovered from the
/// first row of constant `y`.
pub fn field_from_csv(text: &str) -> Result<ScalarField> {
    let bad = |msg: String| Error::InvalidGrid(msg);
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().map(str::trim).collect::<Vec<_>>() != ["x", "y", "value"] {
        return Err(bad(format!("expected header x,y,value, found {}", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |k: usize| -> Result<f64> {
            let s = rec.get(k).unwrap_or("").trim();
            s.parse::<f64>()
                .map_err(|_| bad(format!("row {}: cannot parse {s:?}", line + 2)))
        };
        xs.push(num(0)?);
        ys.push(num(1)?);
        let v = rec.get(2).unwrap_or("").trim();
        values.push(if v.is_empty() { f64::NAN } else { num(2)? });
    }
    if values.is_empty() {
        return Err(Error::EmptyField);
    }
    let nx = ys.iter().take_while(|&&y| y == ys[0]).count();
    if nx < 2 || values.len() % nx != 0 {
        return Err(bad(format!("{} rows do not form a grid with {nx} columns", values.len())));
    }
    let ny = values.len() / nx;
    if ny < 2 {
        return Err(bad("a field needs at least two rows".into()));
    }
    let bbox = (xs[0], xs[nx - 1], ys[0], ys[values.len() - 1]);
    let field = ScalarField {
        bbox,
        nx,
        ny,
        values,
        stderr: Vec::new(),
        h: f64::NAN,
        seed: 0,
        n: 0,
    };
    let (hx, hy) = field.cell_size();
    if !(hx > 0.0 && hy > 0.0) {
        return Err(bad(format!("degenerate bounding box {bbox:?}")));
    }
    for (k, (&x, &y)) in xs.iter().zip(&ys).enumerate() {
        let (i, j) = (k % nx, k / nx);
        if (x - field.x(i)).abs() > 1e-6 * hx || (y - field.y(j)).abs() > 1e-6 * hy {
            return Err(bad(format!("row {} is off the regular grid", k + 2)));
        }
    }
    Ok(field)
}

/// Standalone SVG of the contours of each level, one stroke colour per
/// level, drawn over the field's bounding box.
pub fn levels_to_svg(levels: &[LevelReport], bbox: (f64, f64, f64, f64)) -> String {
    let (x0, x1, y0, y1) = bbox;
    let (w, h) = (x1 - x0, y1 - y0);
    let size = 800.0;
    let scale = size / w.max(h);
    let (pw, ph) = (w * scale, h * scale);
    let g = |v: f64| format_g(v, 7);
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        g(pw),
        g(ph),
        g(pw),
        g(ph)
    ));
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\" stroke=\"#888\"/>\n",
        g(pw),
        g(ph)
    ));
    let count = levels.len().max(1);
    for (k, lvl) in levels.iter().enumerate() {
        let hue = 240.0 * (1.0 - k as f64 / (count.max(2) - 1) as f64);
        for c in &lvl.contours {
            if c.points.is_empty() {
                continue;
            }
            let mut d = String::new();
            for (idx, p) in c.points.iter().enumerate() {
                let sx = (p[0] - x0) * scale;
                let sy = (y1 - p[1]) * scale;
                d.push_str(if idx == 0 { "M" } else { " L" });
                d.push_str(&format!("{} {}", g(sx), g(sy)));
            }
            if c.closed {
                d.push_str(" Z");
            }
            out.push_str(&format!(
                "<path data-level=\"{}\" d=\"{d}\" fill=\"none\" stroke=\"hsl({}, 80%, 40%)\" stroke-width=\"1.5\"/>\n",
                format_g(lvl.level, 9),
                g(hue)
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}
