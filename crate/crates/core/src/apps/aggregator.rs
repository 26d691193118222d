use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use super::payload::{ModelResult, ResultSummary};
use super::{kinds, malformed};
use crate::dl::{self, DataSet, EnsembleModel, NeuralNetwork, TestingReport};
use crate::net::{AppContext, AppError, Application, Packet, PacketKind};

/// Test results computed when the ensemble forms.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEvaluation {
    /// One per sub-model, in sender-address order.
    pub submodels: Vec<TestingReport>,
    pub ensemble: TestingReport,
}

/// Data-center application: collects sub-models and combines them by soft
/// vote once `expected` distinct senders have reported.
#[derive(Debug)]
pub struct EnsembleAggregatorApp {
    expected: usize,
    evaluation_data: Option<DataSet>,
    received: BTreeMap<Ipv4Addr, (ResultSummary, NeuralNetwork)>,
    ensemble: Option<EnsembleModel>,
    evaluation: Option<EnsembleEvaluation>,
    duplicates: u32,
}

impl EnsembleAggregatorApp {
    pub fn new(expected: usize, evaluation_data: Option<DataSet>) -> Self {
        EnsembleAggregatorApp {
            expected,
            evaluation_data,
            received: BTreeMap::new(),
            ensemble: None,
            evaluation: None,
            duplicates: 0,
        }
    }

    pub fn received(&self) -> usize {
        self.received.len()
    }

    pub fn senders(&self) -> Vec<Ipv4Addr> {
        self.received.keys().copied().collect()
    }

    pub fn summaries(&self) -> Vec<ResultSummary> {
        self.received.values().map(|(s, _)| *s).collect()
    }

    pub fn ensemble(&self) -> Option<&EnsembleModel> {
        self.ensemble.as_ref()
    }

    pub fn evaluation(&self) -> Option<&EnsembleEvaluation> {
        self.evaluation.as_ref()
    }

    pub fn duplicates(&self) -> u32 {
        self.duplicates
    }

    fn aggregate(&mut self, ctx: &mut AppContext<'_>) -> Result<(), AppError> {
        let members: Vec<NeuralNetwork> = self.received.values().map(|(_, n)| n.clone()).collect();
        let ensemble = EnsembleModel::new(members).map_err(AppError::other)?;
        let digests: Vec<String> = ensemble
            .members()
            .iter()
            .map(|m| format!("{:016x}", dl::digest(m)))
            .collect();
        let mut detail = vec![
            ("models".into(), ensemble.members().len().into()),
            ("digests".into(), digests.join(",").into()),
        ];
        if let Some(data) = &self.evaluation_data {
            let submodels = ensemble
                .members()
                .iter()
                .map(|m| dl::evaluate(m, data))
                .collect::<Result<Vec<_>, _>>()
                .map_err(AppError::other)?;
            let combined = dl::evaluate(&ensemble, data).map_err(AppError::other)?;
            for (i, r) in submodels.iter().enumerate() {
                detail.push((format!("loss_{i}").into(), r.loss.into()));
                if let Some(a) = r.accuracy {
                    detail.push((format!("accuracy_{i}").into(), a.into()));
                }
            }
            detail.push(("ensemble_loss".into(), combined.loss.into()));
            if let Some(a) = combined.accuracy {
                detail.push(("ensemble_accuracy".into(), a.into()));
            }
            self.evaluation = Some(EnsembleEvaluation {
                submodels,
                ensemble: combined,
            });
        }
        ctx.trace(kinds::ENSEMBLE_READY, detail);
        self.ensemble = Some(ensemble);
        Ok(())
    }
}

impl Application for EnsembleAggregatorApp {
    fn on_receive(&mut self, ctx: &mut AppContext<'_>, packet: &Packet) -> Result<(), AppError> {
        if packet.kind != PacketKind::ModelResult {
            return Ok(());
        }
        let result = match ModelResult::decode(&packet.payload) {
            Ok(r) => r,
            Err(e) => return {
                malformed(ctx, packet, &e.to_string());
                Ok(())
            },
        };
        let net = match dl::from_bytes(&result.model) {
            Ok(n) => n,
            Err(e) => return {
                malformed(ctx, packet, &e.to_string());
                Ok(())
            },
        };
        if self.ensemble.is_some() {
            return Ok(());
        }
        if self
            .received
            .insert(packet.src, (result.summary, net))
            .is_some()
        {
            self.duplicates += 1;
            ctx.trace(
                kinds::DUPLICATE_RESULT,
                vec![("sender".into(), packet.src.into())],
            );
        }
        if self.received.len() == self.expected {
            self.aggregate(ctx)?;
        }
        Ok(())
    }
}
