use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use super::{FlowKey, LabelId, LabeledPayload, Payload};

/// Label given to packets no rule matches.
pub const BENIGN: &str = "Benign";

/// String interning for class names. Ids are assigned in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTable {
    names: Vec<String>,
}

impl LabelTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I: IntoIterator<Item = S>, S: Into<String>>(names: I) -> Self {
        let mut t = Self::new();
        for n in names {
            t.intern(&n.into());
        }
        t
    }

    pub fn intern(&mut self, name: &str) -> LabelId {
        if let Some(id) = self.id(name) {
            return id;
        }
        self.names.push(name.to_string());
        LabelId((self.names.len() - 1) as u16)
    }

    pub fn id(&self, name: &str) -> Option<LabelId> {
        self.names.iter().position(|n| n == name).map(|i| LabelId(i as u16))
    }

    pub fn name(&self, id: LabelId) -> Option<&str> {
        self.names.get(id.0 as usize).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Match on the 5-tuple; `None` fields are wildcards.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRule {
    #[serde(default)]
    pub src_ip: Option<IpAddr>,
    #[serde(default)]
    pub dst_ip: Option<IpAddr>,
    #[serde(default)]
    pub src_port: Option<u16>,
    #[serde(default)]
    pub dst_port: Option<u16>,
    #[serde(default)]
    pub protocol: Option<u8>,
    pub label: String,
}

impl LabelRule {
    pub fn matches(&self, k: &FlowKey) -> bool {
        self.src_ip.is_none_or(|v| v == k.src_ip)
            && self.dst_ip.is_none_or(|v| v == k.dst_ip)
            && self.src_port.is_none_or(|v| v == k.src_port)
            && self.dst_port.is_none_or(|v| v == k.dst_port)
            && self.protocol.is_none_or(|v| v == k.protocol)
    }
}

/// First matching rule in declaration order wins; unmatched packets are
/// labeled [`BENIGN`].
pub fn label_packets(
    payloads: Vec<(Payload, FlowKey)>,
    rules: &[LabelRule],
    table: &mut LabelTable,
) -> Vec<LabeledPayload> {
    payloads
        .into_iter()
        .map(|(bytes, flow)| {
            let name = rules
                .iter()
                .find(|r| r.matches(&flow))
                .map_or(BENIGN, |r| r.label.as_str());
            LabeledPayload {
                bytes,
                label: table.intern(name),
                flow,
            }
        })
        .collect()
}
