use super::ImagePlane;
use crate::error::Result;

const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;

/// Full-range BT.601 conversion; chroma planes are centered on 0.5.
pub fn rgb_to_ycbcr(
    r: &ImagePlane,
    g: &ImagePlane,
    b: &ImagePlane,
) -> Result<(ImagePlane, ImagePlane, ImagePlane)> {
    r.check_same_dims(g, "rgb planes")?;
    r.check_same_dims(b, "rgb planes")?;
    let (h, w) = r.dims();
    let mut y = ImagePlane::zeros(h, w);
    let mut cb = ImagePlane::zeros(h, w);
    let mut cr = ImagePlane::zeros(h, w);
    for i in 0..r.len() {
        let (rv, gv, bv) = (r.data()[i], g.data()[i], b.data()[i]);
        let yv = KR * rv + KG * gv + KB * bv;
        y.data_mut()[i] = yv;
        cb.data_mut()[i] = 0.5 + (bv - yv) / (2.0 * (1.0 - KB));
        cr.data_mut()[i] = 0.5 + (rv - yv) / (2.0 * (1.0 - KR));
    }
    Ok((y, cb, cr))
}

/// Inverse of [`rgb_to_ycbcr`].
pub fn ycbcr_to_rgb(
    y: &ImagePlane,
    cb: &ImagePlane,
    cr: &ImagePlane,
) -> Result<(ImagePlane, ImagePlane, ImagePlane)> {
    y.check_same_dims(cb, "ycbcr planes")?;
    y.check_same_dims(cr, "ycbcr planes")?;
    let (h, w) = y.dims();
    let mut r = ImagePlane::zeros(h, w);
    let mut g = ImagePlane::zeros(h, w);
    let mut b = ImagePlane::zeros(h, w);
    for i in 0..y.len() {
        let yv = y.data()[i];
        let rv = yv + 2.0 * (1.0 - KR) * (cr.data()[i] - 0.5);
        let bv = yv + 2.0 * (1.0 - KB) * (cb.data()[i] - 0.5);
        let gv = (yv - KR * rv - KB * bv) / KG;
        r.data_mut()[i] = rv;
        g.data_mut()[i] = gv;
        b.data_mut()[i] = bv;
    }
    Ok((r, g, b))
}
