//! `ODXUNN1` container: a role byte, the corruption rate, the encoder
//! layer count, then every layer as (in, out, activation, weights, bias).

use super::autoencoder::Autoencoder;
use super::fcnn::FcnnClassifier;
use super::layer::{Activation, DenseLayer};
use super::network::Network;
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use ndarray::{Array1, Array2};

pub const NN_MAGIC: &[u8; 7] = b"ODXUNN1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
enum Role {
    Network = 0,
    Autoencoder = 1,
    Fcnn = 2,
}

fn write_layers(w: &mut Writer, layers: &[DenseLayer]) {
    w.u32(layers.len() as u32);
    for l in layers {
        w.u32(l.in_dim() as u32);
        w.u32(l.out_dim() as u32);
        w.u8(l.activation.code());
        w.f64s(l.weights.as_standard_layout().as_slice().unwrap());
        w.f64s(l.bias.as_slice().unwrap());
    }
}

fn read_layers(r: &mut Reader<'_>) -> Result<Vec<DenseLayer>> {
    let n = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n.min(64));
    for _ in 0..n {
        let i = r.u32()? as usize;
        let o = r.u32()? as usize;
        let code = r.u8()?;
        let activation =
            Activation::from_code(code).ok_or_else(|| Error::Format(format!("unknown activation code {code}")))?;
        let weights = Array2::from_shape_vec((o, i), r.f64s(i * o)?).expect("sized");
        let bias = Array1::from(r.f64s(o)?);
        layers.push(DenseLayer {
            weights,
            bias,
            activation,
        });
    }
    Ok(layers)
}

fn encode(role: Role, rate: f64, split: usize, layers: &[DenseLayer]) -> Vec<u8> {
    let mut w = Writer::new(NN_MAGIC);
    w.u8(role as u8);
    w.f64(rate);
    w.u32(split as u32);
    write_layers(&mut w, layers);
    w.finish()
}

fn decode(buf: &[u8], want: Role) -> Result<(f64, usize, Vec<DenseLayer>)> {
    let mut r = Reader::open(buf, NN_MAGIC)?;
    let role = r.u8()?;
    if role != want as u8 {
        return Err(Error::Format(format!("network container holds role {role}, expected {}", want as u8)));
    }
    let rate = r.f64()?;
    let split = r.u32()? as usize;
    let layers = read_layers(&mut r)?;
    r.finish()?;
    if split > layers.len() {
        return Err(Error::Format("encoder layer count exceeds layer list".into()));
    }
    Ok((rate, split, layers))
}

impl Network {
    pub fn to_bytes(&self) -> Vec<u8> {
        encode(Role::Network, 0.0, self.layers().len(), self.layers())
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let (_, _, layers) = decode(buf, Role::Network)?;
        Network::new(layers)
    }
}

impl Autoencoder {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut layers = self.encoder.layers().to_vec();
        layers.extend_from_slice(self.decoder.layers());
        encode(Role::Autoencoder, self.corruption_rate, self.encoder.layers().len(), &layers)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let (rate, split, mut layers) = decode(buf, Role::Autoencoder)?;
        let dec = layers.split_off(split);
        Autoencoder::from_parts(Network::new(layers)?, Network::new(dec)?, rate)
    }
}

impl FcnnClassifier {
    pub fn to_bytes(&self) -> Vec<u8> {
        encode(Role::Fcnn, 0.0, self.net.layers().len(), self.net.layers())
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let (_, _, layers) = decode(buf, Role::Fcnn)?;
        Ok(FcnnClassifier {
            net: Network::new(layers)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::AutoencoderSpec;

    #[test]
    fn autoencoder_roundtrip_and_role_check() {
        let spec = AutoencoderSpec {
            input_dim: 10,
            hidden: vec![6],
            latent_dim: 3,
            corruption_rate: 0.2,
        };
        let ae = Autoencoder::new(&spec, 5).unwrap();
        let buf = ae.to_bytes();
        assert_eq!(&buf[..7], b"ODXUNN1");
        assert_eq!(Autoencoder::from_bytes(&buf).unwrap(), ae);
        assert!(FcnnClassifier::from_bytes(&buf).is_err());
        let mut bad = buf.clone();
        bad[6] = b'2';
        assert!(Autoencoder::from_bytes(&bad).is_err());
    }
}
