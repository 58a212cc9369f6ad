//! Fanout load generator: N subscribers on a streaming group, counting
//! deliveries, gaps and publish-to-receive latency.

use std::time::Duration;

use concierge_core::physics::StreamedEntityState;
use concierge_core::protocol::{ClientKind, Frame, GroupName};
use serde::{Deserialize, Serialize};
use tokio::time::Instant;

use crate::adapter::now_us;
use crate::sdk::{ConnectOptions, Incoming, SdkError, Session};

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub hub_url: String,
    pub group: GroupName,
    pub clients: usize,
    /// Rate the publisher is expected to run at; used for the expected count.
    pub rate: f64,
    pub duration: Duration,
    /// Prefix for subscriber names; an index is appended.
    pub name_prefix: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClientStats {
    pub name: String,
    pub received: u64,
    /// Ticks missing between the first and last tick seen.
    pub lost: u64,
    pub out_of_order: u64,
    pub first_tick: Option<u64>,
    pub last_tick: Option<u64>,
    pub disconnected: bool,
    pub close_code: Option<u16>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub samples: u64,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub group: String,
    pub clients: usize,
    pub rate: f64,
    pub duration_s: f64,
    pub expected_per_client: u64,
    pub received_total: u64,
    pub lost_total: u64,
    pub disconnected: usize,
    pub latency: LatencySummary,
    pub per_client: Vec<ClientStats>,
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn summarize(mut samples: Vec<f64>) -> LatencySummary {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    LatencySummary {
        samples: n as u64,
        mean_ms: if n == 0 { 0.0 } else { samples.iter().sum::<f64>() / n as f64 },
        p50_ms: percentile(&samples, 50.0),
        p90_ms: percentile(&samples, 90.0),
        p99_ms: percentile(&samples, 99.0),
        max_ms: samples.last().copied().unwrap_or(0.0),
    }
}

/// Accumulates one subscriber's view of the stream.
#[derive(Debug, Default)]
pub struct TickLedger {
    pub stats: ClientStats,
    pub latencies_ms: Vec<f64>,
}

impl TickLedger {
    pub fn observe(&mut self, state: &StreamedEntityState, recv_us: u64) {
        let s = &mut self.stats;
        s.received += 1;
        match s.last_tick {
            Some(last) if state.tick > last + 1 => s.lost += state.tick - last - 1,
            Some(last) if state.tick <= last => s.out_of_order += 1,
            _ => {}
        }
        s.first_tick.get_or_insert(state.tick);
        s.last_tick = Some(s.last_tick.map_or(state.tick, |l| l.max(state.tick)));
        if let Some(ts) = state.ts_us {
            self.latencies_ms.push(recv_us.saturating_sub(ts) as f64 / 1000.0);
        }
    }
}

async fn subscribe(opts: &BenchOptions, i: usize) -> Result<Session, SdkError> {
    let name = format!("{}-{i}", opts.name_prefix);
    let session = Session::connect(ConnectOptions::new(&opts.hub_url, name, ClientKind::User)).await?;
    session
        .request_ok(Frame::Subscribe { group: opts.group.clone(), seq: None })
        .await?;
    Ok(session)
}

async fn collect(session: Session, until: Instant) -> TickLedger {
    let mut ledger = TickLedger::default();
    ledger.stats.name = session.profile().name.to_string();
    loop {
        let next = tokio::select! {
            _ = tokio::time::sleep_until(until) => break,
            m = session.recv() => m,
        };
        match next {
            Some(Incoming::Relay { data, .. }) => {
                let recv = now_us();
                if let Ok(state) = data.decode::<StreamedEntityState>() {
                    ledger.observe(&state, recv);
                }
            }
            Some(_) => {}
            None => {
                ledger.stats.disconnected = true;
                ledger.stats.close_code = session.close_reason().map(|(c, _)| c);
                break;
            }
        }
    }
    session.close().await;
    ledger
}

/// Connects and subscribes every client, then measures for `duration`.
pub async fn run(opts: BenchOptions) -> Result<BenchReport, SdkError> {
    let mut report = BenchReport {
        group: opts.group.to_string(),
        clients: opts.clients,
        rate: opts.rate,
        duration_s: opts.duration.as_secs_f64(),
        expected_per_client: (opts.rate * opts.duration.as_secs_f64()).round() as u64,
        ..Default::default()
    };
    if opts.clients == 0 {
        return Ok(report);
    }
    let mut sessions = Vec::with_capacity(opts.clients);
    for i in 0..opts.clients {
        sessions.push(subscribe(&opts, i).await?);
    }
    let until = Instant::now() + opts.duration;
    let tasks: Vec<_> = sessions.into_iter().map(|s| tokio::spawn(collect(s, until))).collect();
    let mut latencies = Vec::new();
    for t in tasks {
        let ledger = t.await.map_err(|e| SdkError::Transport(e.to_string()))?;
        latencies.extend(ledger.latencies_ms);
        report.per_client.push(ledger.stats);
    }
    report.received_total = report.per_client.iter().map(|c| c.received).sum();
    report.lost_total = report.per_client.iter().map(|c| c.lost).sum();
    report.disconnected = report.per_client.iter().filter(|c| c.disconnected).count();
    report.latency = summarize(latencies);
    Ok(report)
}
