//! `ODXUDC1` container: the encoder as an embedded network blob, then the
//! centroid count, latent width, and row-major centroid matrix.

use ndarray::Array2;

use super::{Centroids, DecModel};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::nn::Network;

pub const DEC_MAGIC: &[u8; 7] = b"ODXUDC1";

impl DecModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(DEC_MAGIC);
        w.blob(&self.encoder.to_bytes());
        w.u32(self.centroids.count() as u32);
        w.u32(self.centroids.dim() as u32);
        w.f64s(self.centroids.matrix().as_standard_layout().as_slice().unwrap());
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::open(buf, DEC_MAGIC)?;
        let encoder = Network::from_bytes(r.blob()?)?;
        let k = r.u32()? as usize;
        let d = r.u32()? as usize;
        let u = Array2::from_shape_vec((k, d), r.f64s(k * d)?).expect("sized");
        r.finish()?;
        if d != encoder.out_dim() {
            return Err(Error::Format(format!(
                "centroid width {d} does not match encoder output {}",
                encoder.out_dim()
            )));
        }
        Ok(DecModel {
            encoder,
            centroids: Centroids::new(u)?,
            class_count: k,
        })
    }
}
