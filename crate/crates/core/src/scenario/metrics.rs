use std::fmt::Write as _;
use std::time::Duration;

use crate::net::CacheStats;

pub const METRICS_FORMAT_HEADER: &str = "format = 1";

/// Packet counters at the end of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PacketMetrics {
    pub sent: u64,
    pub delivered: u64,
    pub dropped_queue: u64,
    pub dropped_no_route: u64,
    pub dropped_app_stopped: u64,
    pub in_flight: u64,
    /// MODEL_RESULT packets delivered to the data center.
    pub model_results_delivered: u64,
}

impl PacketMetrics {
    pub fn dropped(&self) -> u64 {
        self.dropped_queue + self.dropped_no_route + self.dropped_app_stopped
    }

    /// `sent = delivered + dropped + in_flight`.
    pub fn is_conserved(&self) -> bool {
        self.sent == self.delivered + self.dropped() + self.in_flight
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMetrics {
    pub samples: usize,
    pub epochs: usize,
    pub final_loss: f64,
    pub duration_ns: u64,
    pub stop_reason: &'static str,
    pub digest: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMetrics {
    pub node: u32,
    pub cache: CacheStats,
    pub local_samples: u64,
    pub neighbor_samples: u64,
    pub data_requests: u32,
    pub uploaded: bool,
    pub training: Option<TrainingMetrics>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnsembleMetrics {
    pub ready: bool,
    pub submodels: usize,
    pub duplicates: u32,
    /// Test accuracy per sub-model, in sender-address order.
    pub submodel_accuracy: Vec<f64>,
    pub ensemble_accuracy: Option<f64>,
    pub ensemble_loss: Option<f64>,
}

/// End-of-run summary. Everything but `wall_clock` is a pure function of
/// the config, so the metrics file is reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    pub seed: u64,
    pub stop_at_ns: u64,
    pub final_time_ns: u64,
    pub events_executed: u64,
    pub packets: PacketMetrics,
    pub edges: Vec<EdgeMetrics>,
    pub ensemble: EnsembleMetrics,
    pub wall_clock: Duration,
}

impl MetricsSummary {
    /// `(key, value)` pairs in file order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut put = |k: String, v: String| out.push((k, v));
        put("seed".into(), self.seed.to_string());
        put("stop_at_ns".into(), self.stop_at_ns.to_string());
        put("final_time_ns".into(), self.final_time_ns.to_string());
        put("events_executed".into(), self.events_executed.to_string());
        let p = &self.packets;
        put("packets.sent".into(), p.sent.to_string());
        put("packets.delivered".into(), p.delivered.to_string());
        put("packets.dropped.queue".into(), p.dropped_queue.to_string());
        put(
            "packets.dropped.no_route".into(),
            p.dropped_no_route.to_string(),
        );
        put(
            "packets.dropped.app_stopped".into(),
            p.dropped_app_stopped.to_string(),
        );
        put("packets.in_flight".into(), p.in_flight.to_string());
        put(
            "packets.model_results_delivered".into(),
            p.model_results_delivered.to_string(),
        );
        for e in &self.edges {
            let k = |f: &str| format!("edge.{}.{f}", e.node);
            put(k("cache.puts"), e.cache.puts.to_string());
            put(k("cache.hits"), e.cache.hits.to_string());
            put(k("cache.misses"), e.cache.misses.to_string());
            put(k("cache.evictions"), e.cache.evictions.to_string());
            put(k("samples.local"), e.local_samples.to_string());
            put(k("samples.neighbor"), e.neighbor_samples.to_string());
            put(k("data_requests"), e.data_requests.to_string());
            put(k("uploaded"), e.uploaded.to_string());
            if let Some(t) = &e.training {
                put(k("training.samples"), t.samples.to_string());
                put(k("training.epochs"), t.epochs.to_string());
                put(k("training.final_loss"), format!("{:?}", t.final_loss));
                put(k("training.duration_ns"), t.duration_ns.to_string());
                put(k("training.stop_reason"), t.stop_reason.to_string());
                put(k("training.digest"), format!("{:016x}", t.digest));
            }
        }
        let en = &self.ensemble;
        put("ensemble.ready".into(), en.ready.to_string());
        put("ensemble.submodels".into(), en.submodels.to_string());
        put("ensemble.duplicates".into(), en.duplicates.to_string());
        for (i, a) in en.submodel_accuracy.iter().enumerate() {
            put(format!("ensemble.submodel.{i}.accuracy"), format!("{a:?}"));
        }
        if let Some(a) = en.ensemble_accuracy {
            put("ensemble.accuracy".into(), format!("{a:?}"));
        }
        if let Some(l) = en.ensemble_loss {
            put("ensemble.loss".into(), format!("{l:?}"));
        }
        out
    }

    /// The metrics file: header plus `key = value` lines in a stable order.
    pub fn render(&self) -> String {
        let mut s = format!("{METRICS_FORMAT_HEADER}\n");
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Terminal-friendly report, including wall-clock time.
    pub fn render_human(&self) -> String {
        let mut s = String::new();
        let p = &self.packets;
        let _ = writeln!(
            s,
            "simulated {:.6} s ({} events) in {:.3} s wall-clock, seed {}",
            self.final_time_ns as f64 / 1e9,
            self.events_executed,
            self.wall_clock.as_secs_f64(),
            self.seed
        );
        let _ = writeln!(
            s,
            "packets: {} sent, {} delivered, {} dropped (queue {}, no route {}, app stopped {}), {} in flight",
            p.sent,
            p.delivered,
            p.dropped(),
            p.dropped_queue,
            p.dropped_no_route,
            p.dropped_app_stopped,
            p.in_flight
        );
        for e in &self.edges {
            let _ = write!(
                s,
                "edge {}: cache {} puts / {} hits / {} misses / {} evictions; samples {} local + {} from neighbors",
                e.node,
                e.cache.puts,
                e.cache.hits,
                e.cache.misses,
                e.cache.evictions,
                e.local_samples,
                e.neighbor_samples
            );
            match &e.training {
                Some(t) => {
                    let _ = writeln!(
                        s,
                        "; trained on {} samples for {} epochs, loss {:.6} ({}), {} ns",
                        t.samples, t.epochs, t.final_loss, t.stop_reason, t.duration_ns
                    );
                }
                None => s.push_str("; not trained\n"),
            }
        }
        let en = &self.ensemble;
        if en.ready {
            let _ = write!(s, "ensemble: {} sub-models", en.submodels);
            for (i, a) in en.submodel_accuracy.iter().enumerate() {
                let _ = write!(s, ", model {i} accuracy {a:.4}");
            }
            if let Some(a) = en.ensemble_accuracy {
                let _ = write!(s, ", ensemble accuracy {a:.4}");
            }
            s.push('\n');
        } else {
            let _ = writeln!(
                s,
                "ensemble: not ready ({} sub-models received)",
                en.submodels
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MetricsSummary {
        MetricsSummary {
            seed: 1,
            stop_at_ns: 10,
            final_time_ns: 9,
            events_executed: 3,
            packets: PacketMetrics {
                sent: 5,
                delivered: 3,
                dropped_queue: 1,
                in_flight: 1,
                ..Default::default()
            },
            edges: vec![EdgeMetrics {
                node: 2,
                cache: CacheStats::default(),
                local_samples: 3,
                neighbor_samples: 0,
                data_requests: 0,
                uploaded: false,
                training: None,
            }],
            ensemble: EnsembleMetrics::default(),
            wall_clock: Duration::from_millis(5),
        }
    }

    #[test]
    fn conservation_check() {
        let mut m = sample();
        assert!(m.packets.is_conserved());
        m.packets.in_flight = 0;
        assert!(!m.packets.is_conserved());
    }

    #[test]
    fn file_excludes_wall_clock() {
        let a = sample();
        let mut b = sample();
        b.wall_clock = Duration::from_secs(3);
        assert_eq!(a.render(), b.render());
        assert_ne!(a.render_human(), b.render_human());
        assert!(a.render().starts_with("format = 1\nseed = 1\n"));
        assert!(a.render().contains("edge.2.samples.local = 3\n"));
    }
}
