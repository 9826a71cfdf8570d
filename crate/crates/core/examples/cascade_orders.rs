//! Runs both cascade orders on a 4x sequence with a quickly trained 2x
//! network and prints their scores next to bicubic.

use srcascade::cascade::{run_cascade, CascadeOrder, CascadePlan};
use srcascade::degradation::{simulate_sequence, Blur, DegradationSpec, ShiftMode};
use srcascade::erbpn::{bicubic_pairs, train, ErbpnConfig, TrainConfig};
use srcascade::lorig::LorigConfig;
use srcascade::metrics::{aligned_bicubic, psnr};
use srcascade::synthetic::textured_scene;

fn main() -> srcascade::Result<()> {
    let images: Vec<_> = (0..4).map(|i| textured_scene(96, 96, 50 + i)).collect();
    let cfg = TrainConfig {
        network: ErbpnConfig { scale: 2, units: 2, n_f: 8, n0: 16, n_l: 1 },
        epochs: 6,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    };
    let model = train(&bicubic_pairs(&images, 2, 32, 16, 1)?, &cfg)?.model;

    let hr = textured_scene(128, 128, 77);
    let spec = DegradationSpec::new(4, Blur::gaussian(1.5), 0.0, 2)?;
    let seq = simulate_sequence(&hr, &spec, 16, ShiftMode::Grid)?;
    println!("bicubic x4  {:.3} dB", psnr(&hr, &aligned_bicubic(&seq, hr.dims())?, 1.0)?);
    for order in [CascadeOrder::Mfsf, CascadeOrder::Sfmf] {
        let plan = CascadePlan::new(order, LorigConfig::default(), model.clone());
        let res = run_cascade(&seq, &plan)?;
        println!(
            "{order}        {:.3} dB  ({} network pass(es), {} reconstruction(s))",
            psnr(&hr, &res.image, 1.0)?,
            res.network_inferences,
            res.reconstructions
        );
    }
    Ok(())
}
