use crate::error::{param, Error, Result};
use crate::imaging::ImagePlane;

/// Dense `(batch, channels, height, width)` array in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn new(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() {
            return param(format!("tensor data length {} does not match {:?}", data.len(), dims));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self { dims, data: vec![0.0; dims.iter().product()] }
    }

    pub fn from_planes(planes: &[ImagePlane]) -> Result<Self> {
        let Some(first) = planes.first() else { return param("no planes given") };
        let (h, w) = first.dims();
        let mut data = Vec::with_capacity(planes.len() * h * w);
        for p in planes {
            first.check_same_dims(p, "tensor batch")?;
            data.extend_from_slice(p.data());
        }
        Ok(Self { dims: [planes.len(), 1, h, w], data })
    }

    pub fn from_plane(plane: &ImagePlane) -> Self {
        let (h, w) = plane.dims();
        Self { dims: [1, 1, h, w], data: plane.data().to_vec() }
    }

    /// Channel `c` of sample `n` as an image.
    pub fn plane(&self, n: usize, c: usize) -> ImagePlane {
        let hw = self.dims[2] * self.dims[3];
        let off = (n * self.dims[1] + c) * hw;
        ImagePlane::new(self.dims[2], self.dims[3], self.data[off..off + hw].to_vec())
            .expect("plane size is consistent")
    }

    #[inline]
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }
    #[inline]
    pub fn batch(&self) -> usize {
        self.dims[0]
    }
    #[inline]
    pub fn channels(&self) -> usize {
        self.dims[1]
    }
    #[inline]
    pub fn height(&self) -> usize {
        self.dims[2]
    }
    #[inline]
    pub fn width(&self) -> usize {
        self.dims[3]
    }
    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.dims[1] * self.dims[2] * self.dims[3]
    }

    pub fn sample(&self, n: usize) -> &[f64] {
        let l = self.sample_len();
        &self.data[n * l..(n + 1) * l]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [f64] {
        let l = self.sample_len();
        &mut self.data[n * l..(n + 1) * l]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(format!("{what} contains NaN or infinity")))
        }
    }

    pub fn add_assign(&mut self, other: &Tensor4) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sub(&self, other: &Tensor4) -> Tensor4 {
        debug_assert_eq!(self.dims, other.dims);
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &Tensor4) -> Tensor4 {
        debug_assert_eq!(self.dims, other.dims);
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn neg(&self) -> Tensor4 {
        Tensor4 { dims: self.dims, data: self.data.iter().map(|v| -v).collect() }
    }

    pub fn dot(&self, other: &Tensor4) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Stacks `a` and `b` along the channel axis.
    pub fn concat_channels(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
        let [n, ca, h, w] = a.dims;
        let [nb, cb, hb, wb] = b.dims;
        if (n, h, w) != (nb, hb, wb) {
            return param(format!("cannot concatenate {:?} with {:?}", a.dims, b.dims));
        }
        let mut data = Vec::with_capacity(a.len() + b.len());
        for i in 0..n {
            data.extend_from_slice(a.sample(i));
            data.extend_from_slice(b.sample(i));
        }
        Ok(Tensor4 { dims: [n, ca + cb, h, w], data })
    }

    /// Splits off the first `c` channels; inverse of [`Tensor4::concat_channels`].
    pub fn split_channels(&self, c: usize) -> (Tensor4, Tensor4) {
        let [n, ct, h, w] = self.dims;
        assert!(c <= ct);
        let hw = h * w;
        let mut a = Vec::with_capacity(n * c * hw);
        let mut b = Vec::with_capacity(n * (ct - c) * hw);
        for i in 0..n {
            let s = self.sample(i);
            a.extend_from_slice(&s[..c * hw]);
            b.extend_from_slice(&s[c * hw..]);
        }
        (Tensor4 { dims: [n, c, h, w], data: a }, Tensor4 { dims: [n, ct - c, h, w], data: b })
    }
}
