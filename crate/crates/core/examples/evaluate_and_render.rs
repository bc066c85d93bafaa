//! Confusion matrix, OA/AA/kappa, CSV report and a colorized label map.

use hsi_zeroshot::eval::{confusion, default_palette, metrics, render_map_file};
use hsi_zeroshot::labeler::{LabelMap, IGNORE};
use ndarray::Array2;

fn main() -> hsi_zeroshot::Result<()> {
    let gt = LabelMap::from_raw(Array2::from_shape_fn((20, 30), |(r, c)| {
        if r == 0 {
            IGNORE
        } else {
            (c / 10) as u16
        }
    }));
    // a prediction that bleeds class 1 into the left edge of class 2
    let pred = LabelMap::from_raw(Array2::from_shape_fn((20, 30), |(_, c)| {
        if (20..23).contains(&c) {
            1
        } else {
            (c / 10) as u16
        }
    }));

    let cm = confusion(&pred, &gt, 3)?;
    println!("confusion (rows truth, columns prediction):\n{}", cm.counts());
    let report = metrics(&cm)?;
    print!("{}", report.to_text());

    let names = vec!["Water".to_string(), "Trees".into(), "Soil".into()];
    let mut csv = Vec::new();
    report.write_csv(&mut csv, &names)?;
    print!("{}", String::from_utf8_lossy(&csv));

    let out = std::env::temp_dir().join("hsi_zeroshot_prediction.png");
    render_map_file(&pred, &default_palette(3), &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
