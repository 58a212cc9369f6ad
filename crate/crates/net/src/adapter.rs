//! Puts a [`SimService`] on the hub: owns an OWNER_ONLY group, publishes
//! state on an absolute-deadline schedule, and answers relayed commands.

use std::time::{Duration, SystemTime, UNIX_EPOCH};

use concierge_core::physics::{SimService, TickOutcome};
use concierge_core::protocol::{
    BroadcastPolicy, ClientKind, Frame, FetchKind, GroupName, ListItems, Payload, StatusCode, Target,
};
use tokio::time::Instant;
use tokio_util::sync::CancellationToken;

use crate::sdk::{Backoff, ConnectOptions, Incoming, SdkError, Session};

#[derive(Debug, Clone)]
pub struct AdapterOptions {
    pub hub_url: String,
    /// Client name; also used as the owner of the group.
    pub name: String,
    pub group: GroupName,
    /// Publishes per second.
    pub rate: f64,
    /// Stop after this much publishing time (`rate · run_for` publishes).
    pub run_for: Option<Duration>,
    /// Hold the first publish until the group has this many subscribers.
    pub wait_subscribers: usize,
    pub tags: Vec<String>,
    pub backoff: Backoff,
}

impl AdapterOptions {
    pub fn new(hub_url: impl Into<String>, group: GroupName, rate: f64) -> Self {
        Self {
            hub_url: hub_url.into(),
            name: group.as_str().to_owned(),
            group,
            rate,
            run_for: None,
            wait_subscribers: 0,
            tags: Vec::new(),
            backoff: Backoff::default(),
        }
    }

    fn publish_target(&self) -> Option<u64> {
        self.run_for.map(|d| (d.as_secs_f64() * self.rate).round() as u64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdapterReport {
    pub published: u64,
    pub commands: u64,
    pub reconnects: u32,
    pub faulted: bool,
}

pub fn now_us() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_micros() as u64)
        .unwrap_or(0)
}

enum Exit {
    Done,
    Disconnected,
}

/// Runs until `stop` fires, `run_for` elapses, or a non-retryable error
/// occurs. Transport failures reconnect with backoff and recreate the group.
pub async fn serve(
    mut service: SimService,
    mut opts: AdapterOptions,
    stop: CancellationToken,
) -> Result<AdapterReport, SdkError> {
    if !(opts.rate.is_finite() && opts.rate > 0.0) {
        return Err(SdkError::Rejected {
            code: StatusCode::MalformedFrame,
            detail: format!("rate must be positive, got {}", opts.rate),
        });
    }
    let mut report = AdapterReport::default();
    let mut first = true;
    loop {
        let connect = ConnectOptions::new(&opts.hub_url, &opts.name, ClientKind::Service).tags(opts.tags.clone());
        let session = tokio::select! {
            _ = stop.cancelled() => return Ok(report),
            s = Session::connect(connect) => s,
        };
        let session = match session {
            Ok(s) => s,
            Err(e @ (SdkError::Transport(_) | SdkError::Timeout(_))) if !first => {
                let delay = opts.backoff.next_delay();
                tracing::warn!(error = %e, ?delay, "reconnect failed");
                tokio::select! {
                    _ = stop.cancelled() => return Ok(report),
                    _ = tokio::time::sleep(delay) => continue,
                }
            }
            Err(e) => return Err(e),
        };
        if !first {
            report.reconnects += 1;
        }
        first = false;
        opts.backoff.reset();
        session
            .request_ok(Frame::CreateGroup { group: opts.group.clone(), policy: BroadcastPolicy::OwnerOnly, seq: None })
            .await?;
        tracing::info!(group = %opts.group, id = %session.profile().id, "serving");
        match run_session(&session, &mut service, &opts, &stop, &mut report).await? {
            Exit::Done => {
                session.close().await;
                return Ok(report);
            }
            Exit::Disconnected => {
                let delay = opts.backoff.next_delay();
                tracing::warn!(?delay, reason = ?session.close_reason(), "lost hub connection");
                tokio::select! {
                    _ = stop.cancelled() => return Ok(report),
                    _ = tokio::time::sleep(delay) => {}
                }
            }
        }
    }
}

async fn subscriber_count(session: &Session, group: &GroupName) -> Result<usize, SdkError> {
    let reply = session
        .request_ok(Frame::Fetch { group: Some(group.clone()), seq: None, what: FetchKind::Subscribers })
        .await?;
    Ok(match reply {
        Frame::List { items: ListItems::Profiles(p), .. } => p.len(),
        _ => 0,
    })
}

async fn answer(session: &Session, service: &mut SimService, incoming: Incoming, report: &mut AdapterReport) {
    if let Incoming::Relay { origin, data, .. } = incoming {
        if let Some(reply) = service.handle_payload(&data) {
            report.commands += 1;
            if let Err(e) = session.send(Target::Uuid { id: origin.id }, reply).await {
                tracing::debug!(error = %e, "reply not sent");
            }
        }
    }
}

async fn run_session(
    session: &Session,
    service: &mut SimService,
    opts: &AdapterOptions,
    stop: &CancellationToken,
    report: &mut AdapterReport,
) -> Result<Exit, SdkError> {
    // Commands are answered while waiting for the audience to assemble.
    loop {
        if opts.wait_subscribers == 0 {
            break;
        }
        match subscriber_count(session, &opts.group).await {
            Ok(n) if n >= opts.wait_subscribers => break,
            Ok(_) => {}
            Err(SdkError::Closed) => return Ok(Exit::Disconnected),
            Err(e) => return Err(e),
        }
        let pause = tokio::time::sleep(Duration::from_millis(20));
        tokio::pin!(pause);
        loop {
            tokio::select! {
                _ = stop.cancelled() => return Ok(Exit::Done),
                _ = &mut pause => break,
                m = session.recv() => match m {
                    Some(m) => answer(session, service, m, report).await,
                    None => return Ok(Exit::Disconnected),
                },
            }
        }
    }

    let period = Duration::from_secs_f64(1.0 / opts.rate);
    let target = opts.publish_target();
    let start = Instant::now();
    let mut n: u32 = 0;
    loop {
        // Counting ticks rather than publishes lets a paused world still end on time.
        if target.is_some_and(|t| report.published >= t || u64::from(n) >= t) {
            return Ok(Exit::Done);
        }
        let deadline = start + period * n;
        tokio::select! {
            biased;
            _ = stop.cancelled() => return Ok(Exit::Done),
            _ = tokio::time::sleep_until(deadline) => {
                n += 1;
                let payload = match service.tick() {
                    TickOutcome::State(mut state) => {
                        state.ts_us = Some(now_us());
                        Payload::encode(&state)
                    }
                    TickOutcome::Fault(notice) => {
                        tracing::error!(fault = %notice.fault, "simulation paused");
                        report.faulted = true;
                        Payload::encode(&notice)
                    }
                    TickOutcome::Paused => continue,
                }
                .expect("state serializes");
                match session.send(Target::Group { group: opts.group.clone() }, payload).await {
                    Ok(_) => report.published += 1,
                    Err(_) => return Ok(Exit::Disconnected),
                }
            }
            m = session.recv() => match m {
                Some(m) => answer(session, service, m, report).await,
                None => return Ok(Exit::Disconnected),
            },
        }
    }
}
