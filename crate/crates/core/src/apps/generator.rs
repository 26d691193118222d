use std::net::Ipv4Addr;

use super::ignore_no_route;
use super::payload::Sample;
use super::source::DataSource;
use crate::des::{RandomStream, SimTime};
use crate::net::{AppContext, AppError, Application, PacketKind};

/// Terminal device: streams labelled rows to its edge node.
///
/// Sends at start, start + gap, start + 2 gap, ... until `samples_to_send`
/// rows are out. Rows come from the `terminal/<node>` stream.
#[derive(Debug)]
pub struct DataGeneratorApp {
    target: Ipv4Addr,
    samples_to_send: u32,
    gap: SimTime,
    source: DataSource,
    rng: Option<RandomStream>,
    sent: u32,
}

impl DataGeneratorApp {
    pub fn new(target: Ipv4Addr, samples_to_send: u32, gap: SimTime, source: DataSource) -> Self {
        DataGeneratorApp {
            target,
            samples_to_send,
            gap,
            source,
            rng: None,
            sent: 0,
        }
    }

    pub fn sent(&self) -> u32 {
        self.sent
    }

    fn send_next(&mut self, ctx: &mut AppContext<'_>) -> Result<(), AppError> {
        let rng = self.rng.as_mut().expect("stream created at start");
        let (features, targets) = self.source.draw(rng);
        let sample = Sample {
            id: (u64::from(ctx.node().0) + 1) << 32 | u64::from(self.sent),
            features,
            targets,
        };
        self.sent += 1;
        ignore_no_route(ctx.send(self.target, PacketKind::DataSample, sample.encode()))?;
        if self.sent < self.samples_to_send {
            ctx.schedule(self.gap, 0);
        }
        Ok(())
    }
}

impl Application for DataGeneratorApp {
    fn on_start(&mut self, ctx: &mut AppContext<'_>) -> Result<(), AppError> {
        self.rng = Some(ctx.rng_stream(&format!("terminal/{}", ctx.node().0)));
        if self.samples_to_send > 0 {
            self.send_next(ctx)?;
        }
        Ok(())
    }

    fn on_timer(&mut self, ctx: &mut AppContext<'_>, _token: u64) -> Result<(), AppError> {
        self.send_next(ctx)
    }
}
