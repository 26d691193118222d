//! Little-endian wire formats carried by the learning applications.

use thiserror::Error;

use crate::dl::StopReason;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed payload: {0}")]
pub struct PayloadError(pub String);

fn short(what: &str) -> PayloadError {
    PayloadError(format!("truncated {what}"))
}

/// One labelled row.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Sample {
    /// `id u64 | features u32 | targets u32 | f64 values`.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * (self.features.len() + self.targets.len()));
        out.extend_from_slice(&self.id.to_le_bytes());
        out.extend_from_slice(&(self.features.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.targets.len() as u32).to_le_bytes());
        for v in self.features.iter().chain(&self.targets) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Sample, PayloadError> {
        let id = u64::from_le_bytes(
            bytes
                .get(..8)
                .ok_or_else(|| short("sample id"))?
                .try_into()
                .unwrap(),
        );
        let nf = read_u32(bytes, 8).ok_or_else(|| short("feature count"))? as usize;
        let nt = read_u32(bytes, 12).ok_or_else(|| short("target count"))? as usize;
        let values = nf
            .checked_add(nt)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| PayloadError("value count overflows".into()))?;
        if bytes.len() != 16 + values {
            return Err(PayloadError(format!(
                "sample declares {} values but carries {} bytes of them",
                nf + nt,
                bytes.len().saturating_sub(16)
            )));
        }
        let mut floats = bytes[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let features = floats.by_ref().take(nf).collect();
        let targets = floats.collect();
        Ok(Sample {
            id,
            features,
            targets,
        })
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    Some(u32::from_le_bytes(
        bytes.get(at..at + 4)?.try_into().unwrap(),
    ))
}

/// `count u32`: how many cached samples the requester wants.
pub fn encode_request(count: u32) -> Vec<u8> {
    count.to_le_bytes().to_vec()
}

pub fn decode_request(bytes: &[u8]) -> Result<u32, PayloadError> {
    if bytes.len() != 4 {
        return Err(PayloadError(format!(
            "data request of {} bytes",
            bytes.len()
        )));
    }
    Ok(read_u32(bytes, 0).unwrap())
}

/// Control messages between edge nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    /// Sent after the replies to a data request; `count` replies preceded it.
    ReplyEnd { count: u32 },
}

const CONTROL_REPLY_END: u8 = 1;

impl Control {
    pub fn encode(self) -> Vec<u8> {
        match self {
            Control::ReplyEnd { count } => {
                let mut out = vec![CONTROL_REPLY_END];
                out.extend_from_slice(&count.to_le_bytes());
                out
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Control, PayloadError> {
        match bytes.first() {
            Some(&CONTROL_REPLY_END) if bytes.len() == 5 => Ok(Control::ReplyEnd {
                count: read_u32(bytes, 1).unwrap(),
            }),
            Some(tag) => Err(PayloadError(format!(
                "control tag {tag} with {} bytes",
                bytes.len()
            ))),
            None => Err(short("control message")),
        }
    }
}

/// Summary of the training run that produced a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultSummary {
    pub samples: u64,
    pub epochs_run: u64,
    pub final_loss: f64,
    pub stop_reason: StopReason,
    pub digest: u64,
}

/// A trained sub-model on its way to the data center.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelResult {
    pub model: Vec<u8>,
    pub summary: ResultSummary,
}

impl ModelResult {
    /// `model length u32 | model | samples u64 | epochs u64 | loss f64 | stop u8 | digest u64`.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.model.len() + 33);
        out.extend_from_slice(&(self.model.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.model);
        let s = &self.summary;
        out.extend_from_slice(&s.samples.to_le_bytes());
        out.extend_from_slice(&s.epochs_run.to_le_bytes());
        out.extend_from_slice(&s.final_loss.to_le_bytes());
        out.push(match s.stop_reason {
            StopReason::LossGoalReached => 0,
            StopReason::MaxEpochs => 1,
        });
        out.extend_from_slice(&s.digest.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<ModelResult, PayloadError> {
        let len = read_u32(bytes, 0).ok_or_else(|| short("model length"))? as usize;
        let model = bytes
            .get(4..4 + len)
            .ok_or_else(|| short("model"))?
            .to_vec();
        let tail = &bytes[4 + len..];
        if tail.len() != 33 {
            return Err(PayloadError(format!(
                "result summary of {} bytes",
                tail.len()
            )));
        }
        let u64_at = |at: usize| u64::from_le_bytes(tail[at..at + 8].try_into().unwrap());
        let stop_reason = match tail[24] {
            0 => StopReason::LossGoalReached,
            1 => StopReason::MaxEpochs,
            t => return Err(PayloadError(format!("stop reason tag {t}"))),
        };
        Ok(ModelResult {
            model,
            summary: ResultSummary {
                samples: u64_at(0),
                epochs_run: u64_at(8),
                final_loss: f64::from_bits(u64_at(16)),
                stop_reason,
                digest: u64_at(25),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sample_layout() {
        let s = Sample {
            id: 0x0000_0003_0000_0001,
            features: vec![1.5],
            targets: vec![0.0, 1.0],
        };
        let bytes = s.encode();
        assert_eq!(bytes.len(), 8 + 4 + 4 + 3 * 8);
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(Sample::decode(&bytes).unwrap(), s);
    }

    #[test]
    fn malformed_payloads_are_rejected() {
        assert!(Sample::decode(&[0; 10]).is_err());
        let mut bytes = Sample {
            id: 1,
            features: vec![1.0],
            targets: vec![],
        }
        .encode();
        bytes.pop();
        assert!(Sample::decode(&bytes).is_err());
        assert!(decode_request(&[1, 2]).is_err());
        assert!(Control::decode(&[9, 0, 0, 0, 0]).is_err());
        assert!(ModelResult::decode(&[255, 255, 255, 255]).is_err());
    }

    #[test]
    fn control_and_request_round_trip() {
        assert_eq!(decode_request(&encode_request(77)).unwrap(), 77);
        let c = Control::ReplyEnd { count: 3 };
        assert_eq!(Control::decode(&c.encode()).unwrap(), c);
    }

    proptest! {
        #[test]
        fn model_result_round_trips(model in prop::collection::vec(any::<u8>(), 0..64), samples in any::<u64>(),
                                    epochs in any::<u64>(), loss in -1e9f64..1e9, goal in any::<bool>(), digest in any::<u64>()) {
            let r = ModelResult {
                model,
                summary: ResultSummary {
                    samples,
                    epochs_run: epochs,
                    final_loss: loss,
                    stop_reason: if goal { StopReason::LossGoalReached } else { StopReason::MaxEpochs },
                    digest,
                },
            };
            prop_assert_eq!(ModelResult::decode(&r.encode()).unwrap(), r);
        }
    }
}
