//! Simulates a shifted, blurred, decimated and noisy frame sequence from a
//! synthetic scene and writes it as a sequence directory.
//!
//! cargo run --example simulate_sequence -- [out_dir]

use srcascade::degradation::{save_sequence, simulate_sequence, Blur, DegradationSpec, ShiftMode};
use srcascade::synthetic::textured_scene;

fn main() -> srcascade::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "sequence".into());
    let hr = textured_scene(128, 128, 1);
    let spec = DegradationSpec::new(4, Blur::gaussian(1.5), 1e-3, 7)?;
    let seq = simulate_sequence(&hr, &spec, 16, ShiftMode::Grid)?;
    for (k, m) in seq.motions.iter().enumerate() {
        println!("frame {k:2}: dx {:5.2}  dy {:5.2}", m.dx, m.dy);
    }
    save_sequence(&out, &seq)?;
    println!("{} frames of {:?} written to {out}", seq.len(), seq.lr_dims());
    Ok(())
}
