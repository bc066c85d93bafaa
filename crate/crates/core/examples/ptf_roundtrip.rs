//! Writes a probability tensor and a label map in the PTF container and
//! reads them back.

use hsi_zeroshot::ptf::{read_ptf_file, write_ptf_file, PtfTensor};
use ndarray::{Array2, Array3};

fn main() -> hsi_zeroshot::Result<()> {
    let dir = std::env::temp_dir().join("hsi_zeroshot_ptf_example");
    std::fs::create_dir_all(&dir).expect("temp dir");

    let probs = Array3::from_shape_fn((4, 5, 3), |(r, c, k)| ((r + c + k) % 3) as f32 / 3.0);
    let labels = Array2::from_shape_fn((4, 5), |(r, c)| ((r * 5 + c) % 3) as u16);

    write_ptf_file(dir.join("probs.ptf"), &PtfTensor::from_array_f32(&probs))?;
    write_ptf_file(dir.join("labels.ptf"), &PtfTensor::from_array_u16(&labels))?;

    let back = read_ptf_file(dir.join("probs.ptf"))?;
    println!("probs: dims {:?}, dtype {:?}", back.dims(), back.dtype());
    assert_eq!(back.into_array_f32()?, probs.into_dyn());

    let back = read_ptf_file(dir.join("labels.ptf"))?;
    println!("labels: dims {:?}, dtype {:?}", back.dims(), back.dtype());
    assert_eq!(back.into_array_u16()?, labels.into_dyn());
    println!("round trip exact; files in {}", dir.display());
    Ok(())
}
