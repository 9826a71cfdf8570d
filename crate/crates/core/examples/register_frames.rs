//! Estimates per-frame translations of a randomly shifted sequence and
//! compares them with the true motions.

use srcascade::degradation::{simulate_sequence, Blur, DegradationSpec, ShiftMode};
use srcascade::registration::{register_sequence, RegistrationMode};
use srcascade::synthetic::textured_scene;

fn main() -> srcascade::Result<()> {
    let hr = textured_scene(128, 128, 3);
    let spec = DegradationSpec::new(2, Blur::gaussian(1.0), 0.0, 11)?;
    let seq = simulate_sequence(&hr, &spec, 8, ShiftMode::Random)?;
    let est = register_sequence(&seq, RegistrationMode::Estimate)?;
    let (r, q) = (seq.motions[seq.reference_index], est.motions[est.reference_index]);
    println!("frame   true dx   true dy    est dx    est dy");
    for (k, (t, e)) in seq.motions.iter().zip(&est.motions).enumerate() {
        // estimates are relative to the reference frame
        println!("{k:5} {:9.3} {:9.3} {:9.3} {:9.3}", t.dx - r.dx, t.dy - r.dy, e.dx - q.dx, e.dy - q.dy);
    }
    Ok(())
}
