//! Trains a small 2x network on bicubic-degraded patches of synthetic
//! scenes, saves it, and scores it on an unseen scene.
//!
//! cargo run --release --example train_network -- [weights_path]

use srcascade::erbpn::{bicubic_pairs, erbpn_forward, train, ErbpnConfig, ErbpnModel, TrainConfig};
use srcascade::imaging::resize_bicubic;
use srcascade::metrics::psnr;
use srcascade::synthetic::textured_scene;

fn main() -> srcascade::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "x2.erbpn".into());
    let images: Vec<_> = (0..6).map(|i| textured_scene(96, 96, 100 + i)).collect();
    let pairs = bicubic_pairs(&images, 2, 32, 16, 0)?;
    let cfg = TrainConfig {
        network: ErbpnConfig { scale: 2, units: 2, n_f: 8, n0: 16, n_l: 1 },
        epochs: 8,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    };
    let outcome = train(&pairs, &cfg)?;
    let first = outcome.losses.first().map_or(0.0, |r| r.loss);
    let last = outcome.losses.last().map_or(0.0, |r| r.loss);
    println!("{} steps, batch loss {first:.4e} -> {last:.4e}", outcome.losses.len());
    outcome.model.save(path.as_ref())?;

    let model = ErbpnModel::load(path.as_ref())?;
    let hr = textured_scene(96, 96, 999);
    let lr = resize_bicubic(&hr, 0.5)?;
    let up = resize_bicubic(&lr, 2.0)?.clipped(0.0, 1.0);
    println!("bicubic {:.3} dB, network {:.3} dB", psnr(&hr, &up, 1.0)?, psnr(&hr, &erbpn_forward(&lr, &model)?, 1.0)?);
    Ok(())
}
