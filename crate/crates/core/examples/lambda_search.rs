//! Scores every candidate regularization weight on a noisy sequence.

use srcascade::degradation::{simulate_sequence, Blur, DegradationSpec, ShiftMode};
use srcascade::lorig::{grid_search_lambda, LorigConfig};
use srcascade::synthetic::textured_scene;

fn main() -> srcascade::Result<()> {
    let hr = textured_scene(64, 64, 9);
    let spec = DegradationSpec::new(2, Blur::gaussian(1.0), 2e-3, 3)?;
    let seq = simulate_sequence(&hr, &spec, 8, ShiftMode::Grid)?;
    let cfg = LorigConfig { max_outer: 10, ..LorigConfig::default() };
    let (rows, best) = grid_search_lambda(&seq, &hr, &cfg, 2)?;
    for (i, (lambda, p)) in rows.iter().enumerate() {
        println!("{lambda:10.3e}  {p:7.3} dB{}", if i == best { "  <- best" } else { "" });
    }
    Ok(())
}
