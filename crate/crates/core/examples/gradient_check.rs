//! Compares the network's backpropagated gradient with central finite
//! differences on a few parameters of a tiny model.

use srcascade::erbpn::{mse_loss, ErbpnConfig, ErbpnModel, Tensor4};
use srcascade::synthetic::textured_scene;

fn main() -> srcascade::Result<()> {
    let model = ErbpnModel::new(ErbpnConfig::tiny(2), 1)?;
    let lr = Tensor4::from_plane(&textured_scene(8, 8, 2));
    let hr = Tensor4::from_plane(&textured_scene(16, 16, 3));
    let (pred, tape) = model.forward_train(&lr)?;
    let (_, g) = mse_loss(&pred, &hr)?;
    let grads = model.backward(&tape, &g)?.params_flat();
    let params = model.params_flat();

    let loss = |p: &[f64]| -> srcascade::Result<f64> {
        let mut m = model.clone();
        m.set_params_flat(p)?;
        Ok(mse_loss(&m.forward_unclipped(&lr)?, &hr)?.0)
    };
    let h = 1e-5;
    println!("param      analytic     numerical");
    for i in (0..params.len()).step_by(params.len() / 12) {
        let mut p = params.clone();
        p[i] += h;
        let up = loss(&p)?;
        p[i] -= 2.0 * h;
        let down = loss(&p)?;
        println!("{i:5} {:13.6e} {:13.6e}", grads[i], (up - down) / (2.0 * h));
    }
    Ok(())
}
