use std::path::Path;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub image: String,
    pub method: String,
    pub scale: usize,
    pub noise_variance: f64,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Score table plus `key = value` experiment metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<MetricsRow>,
}

pub const CSV_HEADER: &str = "image,method,scale,noise_variance,psnr_db,ssim";

fn format_psnr(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

impl MetricsReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_metadata(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: MetricsRow) {
        self.rows.push(row);
    }

    /// Orders rows by image, method, then noise level.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            a.image
                .cmp(&b.image)
                .then_with(|| a.method.cmp(&b.method))
                .then_with(|| a.noise_variance.total_cmp(&b.noise_variance))
        });
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.metadata {
            s.push_str(&format!("# {k} = {v}\n"));
        }
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{:.6}\n",
                r.image,
                r.method,
                r.scale,
                r.noise_variance,
                format_psnr(r.psnr_db),
                r.ssim
            ));
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Rows for one method, in table order.
    pub fn method_rows<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a MetricsRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }
}
