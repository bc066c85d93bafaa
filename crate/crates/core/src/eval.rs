//! Accuracy metrics against ground truth and classification-map rendering.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::labeler::{LabelMap, IGNORE};
use crate::prep::RgbImage;

/// Rows are ground truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Array2<u64>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Array2<u64>) -> Result<Self> {
        if counts.nrows() != counts.ncols() || counts.is_empty() {
            return Err(Error::shape("confusion matrix must be square and non-empty"));
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn num_classes(&self) -> usize {
        self.counts.nrows()
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }
}

/// Tallies predictions over the pixels whose ground truth is not `IGNORE`.
pub fn confusion(pred: &LabelMap, gt: &LabelMap, num_classes: usize) -> Result<ConfusionMatrix> {
    if pred.dim() != gt.dim() {
        return Err(Error::shape(format!("prediction {:?} vs ground truth {:?}", pred.dim(), gt.dim())));
    }
    if num_classes == 0 {
        return Err(Error::invalid("need at least one class"));
    }
    let mut counts = Array2::<u64>::zeros((num_classes, num_classes));
    for (&p, &g) in pred.values().iter().zip(gt.values().iter()) {
        if g == IGNORE {
            continue;
        }
        if g as usize >= num_classes || p as usize >= num_classes {
            return Err(Error::invalid(format!("label out of range: gt {g}, prediction {p}")));
        }
        counts[[g as usize, p as usize]] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Accuracy summary; every figure is a percentage.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
    /// `None` for classes absent from the ground truth.
    pub recall: Vec<Option<f64>>,
    pub pixels: u64,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("no evaluated pixels"));
    }
    let c = &cm.counts;
    let n = total as f64;
    let trace: u64 = c.diag().sum();
    let rows = c.sum_axis(ndarray::Axis(1));
    let cols = c.sum_axis(ndarray::Axis(0));
    let recall: Vec<Option<f64>> = (0..cm.num_classes())
        .map(|k| (rows[k] > 0).then(|| 100.0 * c[[k, k]] as f64 / rows[k] as f64))
        .collect();
    let present: Vec<f64> = recall.iter().flatten().copied().collect();
    let aa = present.iter().sum::<f64>() / present.len() as f64;
    let po = trace as f64 / n;
    let pe = rows
        .iter()
        .zip(cols.iter())
        .map(|(&r, &c)| r as f64 * c as f64)
        .sum::<f64>()
        / (n * n);
    let kappa = if pe >= 1.0 {
        if trace == total {
            100.0
        } else {
            0.0
        }
    } else {
        100.0 * (po - pe) / (1.0 - pe)
    };
    Ok(MetricsReport {
        oa: 100.0 * po,
        aa,
        kappa,
        recall,
        pixels: total,
    })
}

impl MetricsReport {
    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "oa={}", self.oa).unwrap();
        writeln!(s, "aa={}", self.aa).unwrap();
        writeln!(s, "kappa={}", self.kappa).unwrap();
        writeln!(s, "pixels={}", self.pixels).unwrap();
        for (k, r) in self.recall.iter().enumerate() {
            match r {
                Some(v) => writeln!(s, "recall_{k}={v}").unwrap(),
                None => writeln!(s, "recall_{k}=").unwrap(),
            }
        }
        s
    }

    /// Header and one row: per-class recalls, then OA, AA and kappa. Absent
    /// classes are left empty.
    pub fn write_csv<W: Write>(&self, sink: W, class_names: &[String]) -> Result<()> {
        if class_names.len() != self.recall.len() {
            return Err(Error::invalid("one class name per recall entry expected"));
        }
        let mut w = csv::Writer::from_writer(sink);
        let mut header: Vec<&str> = class_names.iter().map(String::as_str).collect();
        header.extend(["OA", "AA", "kappa"]);
        w.write_record(&header)?;
        let mut row: Vec<String> = self
            .recall
            .iter()
            .map(|r| r.map(|v| v.to_string()).unwrap_or_default())
            .collect();
        row.extend([self.oa.to_string(), self.aa.to_string(), self.kappa.to_string()]);
        w.write_record(&row)?;
        w.flush()?;
        Ok(())
    }

    /// Parses a file written by [`MetricsReport::write_csv`]. The pixel count
    /// is not part of the row and comes back as 0.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Self)> {
        let mut r = csv::Reader::from_path(path.as_ref())?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let record = r
            .records()
            .next()
            .ok_or_else(|| Error::invalid("metrics csv has no data row"))??;
        if header.len() < 3 || record.len() != header.len() {
            return Err(Error::shape("metrics csv row does not match header"));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::invalid(format!("bad number {s:?}: {e}")))
        };
        let k = header.len() - 3;
        let recall = (0..k)
            .map(|i| match &record[i] {
                "" => Ok(None),
                s => parse(s).map(Some),
            })
            .collect::<Result<_>>()?;
        let report = Self {
            recall,
            oa: parse(&record[k])?,
            aa: parse(&record[k + 1])?,
            kappa: parse(&record[k + 2])?,
            pixels: 0,
        };
        Ok((header[..k].to_vec(), report))
    }
}

const BASE_PALETTE: [[u8; 3]; 10] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
];

/// Distinct colors for `k` classes; the first ten are fixed, the rest are
/// spread around the hue circle.
pub fn default_palette(k: usize) -> Vec<[u8; 3]> {
    (0..k)
        .map(|i| {
            if i < BASE_PALETTE.len() {
                return BASE_PALETTE[i];
            }
            let h = (i as f64 * 0.618_033_988_75).fract() * 6.0;
            let x = 1.0 - (h % 2.0 - 1.0).abs();
            let (r, g, b) = match h as u32 {
                0 => (1.0, x, 0.0),
                1 => (x, 1.0, 0.0),
                2 => (0.0, 1.0, x),
                3 => (0.0, x, 1.0),
                4 => (x, 0.0, 1.0),
                _ => (1.0, 0.0, x),
            };
            [(r * 220.0) as u8 + 20, (g * 220.0) as u8 + 20, (b * 220.0) as u8 + 20]
        })
        .collect()
}

/// Palette lookup per pixel; `IGNORE` is black.
pub fn colorize(labels: &LabelMap, palette: &[[u8; 3]]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(labels.values().len() * 3);
    for &l in labels.values().iter() {
        if l == IGNORE {
            out.extend([0, 0, 0]);
            continue;
        }
        let c = palette
            .get(l as usize)
            .ok_or_else(|| Error::invalid(format!("label {l} has no palette entry")))?;
        out.extend(c);
    }
    Ok(out)
}

/// Writes the colorized map as an 8-bit RGB PNG.
pub fn render_map<W: Write>(labels: &LabelMap, palette: &[[u8; 3]], sink: W) -> Result<()> {
    let (h, w) = labels.dim();
    write_png(sink, w, h, &colorize(labels, palette)?)
}

fn write_png<W: Write>(sink: W, w: usize, h: usize, data: &[u8]) -> Result<()> {
    let mut enc = png::Encoder::new(sink, w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
    writer.write_image_data(data).map_err(|e| Error::Png(e.to_string()))?;
    writer.finish().map_err(|e| Error::Png(e.to_string()))?;
    Ok(())
}

/// Writes an RGB image with channels in [0, 1] as an 8-bit PNG.
pub fn render_rgb<W: Write>(rgb: &RgbImage, sink: W) -> Result<()> {
    let data: Vec<u8> = rgb.values().iter().map(|&v| (v * 255.0).round() as u8).collect();
    write_png(sink, rgb.width(), rgb.height(), &data)
}

pub fn render_rgb_file(rgb: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    render_rgb(rgb, std::io::BufWriter::new(file))
}

pub fn render_map_file(labels: &LabelMap, palette: &[[u8; 3]], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    render_map(labels, palette, std::io::BufWriter::new(file))
}
