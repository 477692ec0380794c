//! Seeded synthetic captures: noisy copies of a few prototype payloads,
//! written as Ethernet/IPv4/TCP frames and labeled by destination port.

use std::net::{IpAddr, Ipv4Addr};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::payload::{
    build_ipv4_frame, extract_capture, label_packets, write_pcap, FlowKey, LabelRule, LabelTable, PayloadDataset,
    RawPacket, BENIGN, PROTO_TCP,
};

const BENIGN_PORT: u16 = 443;
const FIRST_ATTACK_PORT: u16 = 9000;

#[derive(Debug, Clone, PartialEq)]
pub enum Prototype {
    /// Uniform random bytes with a length drawn from the corpus length range.
    Random,
    /// Byte-wise mix of two earlier prototypes: each position is taken from
    /// `a` with probability `weight`, else from `b`. Length is `a`'s.
    Blend { a: usize, b: usize, weight: f64 },
}

/// `rows` samples of prototype `prototype`, each labeled by drawing from
/// the `(class, weight)` list.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub prototype: usize,
    pub rows: usize,
    pub classes: Vec<(String, f64)>,
}

impl Group {
    pub fn pure(prototype: usize, rows: usize, class: &str) -> Self {
        Group {
            prototype,
            rows,
            classes: vec![(class.to_string(), 1.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub prototypes: Vec<Prototype>,
    pub groups: Vec<Group>,
    pub min_len: usize,
    pub max_len: usize,
    /// Half-width of the uniform per-byte noise.
    pub noise: f64,
    /// Magnitude of a per-byte translation (random sign) applied to every
    /// prototype; 0 leaves them in place.
    pub shift: f64,
    /// Seeds the prototypes and the translation.
    pub prototype_seed: u64,
    /// Seeds the samples.
    pub seed: u64,
}

impl BlobSpec {
    /// Benign plus two attack classes, one prototype each.
    pub fn three_class(rows_per_class: usize, seed: u64) -> Self {
        BlobSpec {
            prototypes: vec![Prototype::Random; 3],
            groups: vec![
                Group::pure(0, rows_per_class, BENIGN),
                Group::pure(1, rows_per_class, "DoS"),
                Group::pure(2, rows_per_class, "PortScan"),
            ],
            min_len: 200,
            max_len: 600,
            noise: 60.0,
            shift: 0.0,
            prototype_seed: seed ^ 0x9e37_79b9,
            seed,
        }
    }

    /// Same classes and prototypes with every prototype translated by
    /// `shift` per byte and fresh samples.
    pub fn shifted(&self, shift: f64, seed: u64) -> Self {
        BlobSpec {
            shift,
            seed,
            ..self.clone()
        }
    }

    /// Benign and two attacks, plus a zone whose payloads come from a blend
    /// of the two attack prototypes and whose labels are a coin flip
    /// between them, plus an `Unknown` class drawn near that zone.
    pub fn confusable(rows_per_class: usize, zone_rows: usize, unknown_rows: usize, seed: u64) -> Self {
        let mixed = vec![("DoS".to_string(), 0.5), ("PortScan".to_string(), 0.5)];
        BlobSpec {
            prototypes: vec![
                Prototype::Random,
                Prototype::Random,
                Prototype::Random,
                Prototype::Blend { a: 1, b: 2, weight: 0.5 },
                Prototype::Random,
                Prototype::Blend { a: 3, b: 4, weight: 0.6 },
            ],
            groups: vec![
                Group::pure(0, rows_per_class, BENIGN),
                Group::pure(1, rows_per_class, "DoS"),
                Group::pure(2, rows_per_class, "PortScan"),
                Group {
                    prototype: 3,
                    rows: zone_rows,
                    classes: mixed,
                },
                Group::pure(5, unknown_rows, "Unknown"),
            ],
            min_len: 200,
            max_len: 600,
            noise: 60.0,
            shift: 0.0,
            prototype_seed: seed ^ 0x9e37_79b9,
            seed,
        }
    }

    /// Class names in first-mention order, benign first when present.
    pub fn class_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for g in &self.groups {
            for (c, _) in &g.classes {
                if !names.contains(c) {
                    names.push(c.clone());
                }
            }
        }
        if let Some(i) = names.iter().position(|n| n == BENIGN) {
            let b = names.remove(i);
            names.insert(0, b);
        }
        names
    }

    fn port_of(&self, class: &str) -> u16 {
        if class == BENIGN {
            return BENIGN_PORT;
        }
        let attacks = self.class_names().into_iter().filter(|n| n != BENIGN);
        let i = attacks.take_while(|n| n != class).count();
        FIRST_ATTACK_PORT + i as u16
    }

    /// One destination-port rule per non-benign class.
    pub fn rules(&self) -> Vec<LabelRule> {
        self.class_names()
            .into_iter()
            .filter(|n| n != BENIGN)
            .map(|n| LabelRule {
                dst_port: Some(self.port_of(&n)),
                label: n,
                ..LabelRule::default()
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.min_len == 0 || self.min_len > self.max_len || self.max_len > crate::PAYLOAD_LEN {
            return invalid("payload length range must satisfy 0 < min <= max <= 1500");
        }
        for (i, p) in self.prototypes.iter().enumerate() {
            if let Prototype::Blend { a, b, .. } = p {
                if *a >= i || *b >= i {
                    return invalid(format!("prototype {i} blends a later prototype"));
                }
            }
        }
        for g in &self.groups {
            if g.prototype >= self.prototypes.len() || g.classes.is_empty() {
                return invalid("group refers to a missing prototype or has no classes");
            }
        }
        Ok(())
    }

    pub fn prototype_bytes(&self) -> Result<Vec<Vec<u8>>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.prototype_seed);
        let mut out: Vec<Vec<u8>> = Vec::with_capacity(self.prototypes.len());
        for p in &self.prototypes {
            let bytes = match *p {
                Prototype::Random => {
                    let len = rng.gen_range(self.min_len..=self.max_len);
                    (0..len).map(|_| rng.gen()).collect()
                }
                Prototype::Blend { a, b, weight } => {
                    let (pa, pb) = (&out[a], &out[b]);
                    (0..pa.len())
                        .map(|j| {
                            let take_a = rng.gen_bool(weight) || j >= pb.len();
                            if take_a {
                                pa[j]
                            } else {
                                pb[j]
                            }
                        })
                        .collect()
                }
            };
            out.push(bytes);
        }
        if self.shift > 0.0 {
            let mut t = ChaCha8Rng::seed_from_u64(self.prototype_seed.wrapping_add(1));
            let offsets: Vec<f64> = (0..crate::PAYLOAD_LEN)
                .map(|_| if t.gen_bool(0.5) { self.shift } else { -self.shift })
                .collect();
            for p in &mut out {
                for (b, o) in p.iter_mut().zip(&offsets) {
                    *b = (*b as f64 + o).clamp(0.0, 255.0) as u8;
                }
            }
        }
        Ok(out)
    }

    /// Frames in shuffled order.
    pub fn packets(&self) -> Result<Vec<RawPacket>> {
        let protos = self.prototype_bytes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut frames = Vec::new();
        for g in &self.groups {
            let total: f64 = g.classes.iter().map(|c| c.1).sum();
            for _ in 0..g.rows {
                let mut pick = rng.gen::<f64>() * total;
                let mut class = &g.classes[g.classes.len() - 1].0;
                for (c, w) in &g.classes {
                    if pick < *w {
                        class = c;
                        break;
                    }
                    pick -= w;
                }
                let payload: Vec<u8> = protos[g.prototype]
                    .iter()
                    .map(|&b| (b as f64 + rng.gen_range(-self.noise..=self.noise)).round().clamp(0.0, 255.0) as u8)
                    .collect();
                let flow = FlowKey {
                    src_ip: IpAddr::V4(Ipv4Addr::new(10, 0, 0, rng.gen_range(1..=254))),
                    dst_ip: IpAddr::V4(Ipv4Addr::new(10, 0, 1, rng.gen_range(1..=254))),
                    src_port: rng.gen_range(32768..=60999),
                    dst_port: self.port_of(class),
                    protocol: PROTO_TCP,
                };
                frames.push(build_ipv4_frame(&flow, &payload));
            }
        }
        frames.shuffle(&mut rng);
        Ok(frames
            .into_iter()
            .enumerate()
            .map(|(i, f)| RawPacket::new(1_700_000_000 + (i / 1000) as u32, (i % 1000) as u32 * 1000, f))
            .collect())
    }

    pub fn capture(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_pcap(&mut buf, &self.packets()?)?;
        Ok(buf)
    }

    /// Runs the capture through extraction and rule labeling.
    pub fn dataset(&self) -> Result<PayloadDataset> {
        let pcap = self.capture()?;
        let (payloads, _) = extract_capture(pcap.as_slice())?;
        let mut table = LabelTable::from_names(self.class_names());
        let rows = label_packets(payloads, &self.rules(), &mut table);
        Ok(PayloadDataset::new(rows, table))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_class_counts_and_labels() {
        let spec = BlobSpec::three_class(20, 1);
        let d = spec.dataset().unwrap();
        assert_eq!(d.len(), 60);
        assert_eq!(d.labels.names(), [BENIGN, "DoS", "PortScan"]);
        assert!(d.class_counts().values().all(|&n| n == 20));
        assert_eq!(d.digest(), spec.dataset().unwrap().digest());
    }

    #[test]
    fn shift_moves_prototypes() {
        let a = BlobSpec::three_class(5, 2);
        let b = a.shifted(30.0, 3);
        let (pa, pb) = (a.prototype_bytes().unwrap(), b.prototype_bytes().unwrap());
        assert_eq!(pa[0].len(), pb[0].len());
        assert_ne!(pa, pb);
    }

    #[test]
    fn confusable_has_zone_labels() {
        let spec = BlobSpec::confusable(10, 40, 10, 4);
        let d = spec.dataset().unwrap();
        assert_eq!(d.len(), 80);
        assert_eq!(d.labels.names(), [BENIGN, "DoS", "PortScan", "Unknown"]);
        let c = d.class_counts();
        assert_eq!(c.values().sum::<usize>(), 80);
        assert!(c[&crate::payload::LabelId(1)] > 10);
    }
}
