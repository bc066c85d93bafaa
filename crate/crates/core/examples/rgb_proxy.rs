//! Builds the false-color proxy of a synthetic cube and saves it as PNG.

use hsi_zeroshot::eval::render_rgb_file;
use hsi_zeroshot::prep::{interpolate_rgb, normalize_spectra};
use hsi_zeroshot::synthetic::{generate_scene, SceneConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hsi_zeroshot::Result<()> {
    let scene = generate_scene(&SceneConfig::default(), &mut ChaCha8Rng::seed_from_u64(42))?;
    let cube = &scene.cube;
    println!(
        "cube {}x{}x{}, wavelengths {}..{} nm",
        cube.height(),
        cube.width(),
        cube.bands(),
        cube.wavelengths()[0],
        cube.wavelengths()[cube.bands() - 1]
    );

    let rgb = interpolate_rgb(cube)?;
    let out = std::env::temp_dir().join("hsi_zeroshot_rgb_proxy.png");
    render_rgb_file(&rgb, &out)?;
    println!("wrote {}", out.display());

    let (_, stats) = normalize_spectra(cube)?;
    println!("band 0 mean {:.3}, std {:.3}", stats.mean[0], stats.std[0]);
    Ok(())
}
