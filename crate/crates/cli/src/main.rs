//! `concierge`: run the hub, the reference simulations, fixture replay and
//! the fanout benchmark from one binary.
//!
//! Exit status is 0 on success, 1 on runtime failure and 2 on usage errors.
//! Every flag can also be set through the `CONCIERGE_*` variable shown in
//! `--help`; an explicit flag wins.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::builder::TypedValueParser;
use clap::{Args, Parser, Subcommand};
use concierge_core::physics::presets::{self, Preset, BUILTIN_PRESETS};
use concierge_core::physics::{BoxSim, NBodySim, SimService};
use concierge_core::protocol::{decode_frame, encode_frame, ClientKind, Frame, GroupName};
use concierge_net::adapter::{self, AdapterOptions};
use concierge_net::bench::{self, BenchOptions};
use concierge_net::gateway::{self, Gateway, GatewayConfig};
use concierge_net::sdk::{ConnectOptions, Incoming, Session};
use tokio_util::sync::CancellationToken;
use tracing_subscriber::EnvFilter;

const DEFAULT_HUB: &str = "ws://127.0.0.1:8020";

#[derive(Parser)]
#[command(name = "concierge", version, about = "Realtime relay hub for simulations and their viewers")]
struct Cli {
    /// Log filter for stderr, e.g. `info` or `concierge_net=debug`.
    #[arg(long, global = true, env = "CONCIERGE_LOG", default_value = "info")]
    log: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the hub: WebSocket relay on /ws, file store on /fs.
    Serve(ServeArgs),
    /// Run a reference simulation as a service client.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Subscribe N clients to a streaming group and report delivery and latency as JSON.
    Bench(BenchArgs),
    /// Check a fixture file round-trips byte-identically, optionally sending it to a hub.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct ServeArgs {
    /// Port to listen on; 0 picks a free one.
    #[arg(long, env = "CONCIERGE_PORT", default_value_t = gateway::DEFAULT_PORT)]
    port: u16,
    #[arg(long, env = "CONCIERGE_BIND", default_value = "127.0.0.1")]
    bind: String,
    /// Root directory of the file store; created if missing.
    #[arg(long, env = "CONCIERGE_FS_ROOT", default_value = "concierge-files")]
    fs_root: PathBuf,
    /// Outbound frames buffered per client before it is closed with 4008.
    #[arg(long, env = "CONCIERGE_QUEUE", default_value_t = gateway::DEFAULT_QUEUE,
          value_parser = clap::value_parser!(u32).range(1..).map(|v| v as usize))]
    queue: usize,
    /// Largest inbound frame in bytes.
    #[arg(long, env = "CONCIERGE_MAX_FRAME", default_value_t = gateway::DEFAULT_MAX_FRAME,
          value_parser = clap::value_parser!(u32).range(64..).map(|v| v as usize))]
    max_frame: usize,
    /// Largest accepted upload in bytes.
    #[arg(long, env = "CONCIERGE_MAX_UPLOAD", default_value_t = gateway::DEFAULT_MAX_UPLOAD)]
    max_upload: u64,
    /// Seconds a new connection has to send IDENTIFY.
    #[arg(long, env = "CONCIERGE_IDENTIFY_TIMEOUT", default_value_t = gateway::DEFAULT_IDENTIFY_TIMEOUT.as_secs_f64())]
    identify_timeout: f64,
    /// Directory served under /app.
    #[arg(long, env = "CONCIERGE_APP_DIR")]
    app_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    /// Hub WebSocket URL.
    #[arg(long, env = "CONCIERGE_HUB", default_value = DEFAULT_HUB)]
    hub: String,
    /// States published per second.
    #[arg(long, env = "CONCIERGE_RATE", default_value_t = 50.0)]
    rate: f64,
    /// Integration step in seconds.
    #[arg(long, env = "CONCIERGE_DT")]
    dt: Option<f64>,
    /// Group to publish on; also the client name unless --name is given.
    #[arg(long, env = "CONCIERGE_GROUP")]
    group: Option<GroupName>,
    #[arg(long, env = "CONCIERGE_NAME")]
    name: Option<String>,
    /// Seed for entity ids and random placement.
    #[arg(long, env = "CONCIERGE_SEED")]
    seed: Option<u64>,
    /// Stop after this many seconds of publishing.
    #[arg(long, env = "CONCIERGE_DURATION")]
    duration: Option<f64>,
    /// Hold publishing until this many clients have subscribed.
    #[arg(long, env = "CONCIERGE_WAIT_SUBSCRIBERS", default_value_t = 0)]
    wait_subscribers: usize,
}

#[derive(Subcommand)]
enum SimCommand {
    /// Gravitational n-body system from a preset.
    Nbody {
        /// Built-in preset name or path to a preset JSON file.
        #[arg(long, env = "CONCIERGE_PRESET", default_value = "solar-lite")]
        preset: String,
        #[command(flatten)]
        common: SimArgs,
    },
    /// Rigid boxes bouncing in a walled 2-D world.
    Boxes {
        #[arg(long, env = "CONCIERGE_COUNT", default_value_t = 10)]
        count: usize,
        #[command(flatten)]
        common: SimArgs,
    },
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, env = "CONCIERGE_HUB", default_value = DEFAULT_HUB)]
    hub: String,
    /// Group to subscribe to; it must already exist.
    #[arg(long, env = "CONCIERGE_GROUP", default_value = "boxes")]
    group: GroupName,
    #[arg(long, env = "CONCIERGE_CLIENTS", default_value_t = 1)]
    clients: usize,
    /// Publish rate of the group, used for the expected frame count.
    #[arg(long, env = "CONCIERGE_RATE", default_value_t = 50.0)]
    rate: f64,
    /// Seconds to measure.
    #[arg(long, env = "CONCIERGE_DURATION", default_value_t = 10.0)]
    duration: f64,
}

#[derive(Args)]
struct ReplayArgs {
    /// JSON-lines fixture file.
    #[arg(default_value = "fixtures/frames.jsonl")]
    fixtures: PathBuf,
    /// Also send the client-originated frames to this hub and print the replies.
    #[arg(long, env = "CONCIERGE_HUB")]
    hub: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = EnvFilter::try_new(&cli.log).unwrap_or_else(|_| EnvFilter::new("info"));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::FAILURE;
        }
    };
    match runtime.block_on(run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

async fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Serve(a) => serve(a).await,
        Command::Sim(s) => sim(s).await,
        Command::Bench(a) => run_bench(a).await,
        Command::Replay(a) => replay(a).await,
    }
}

fn seconds(flag: &str, v: f64) -> anyhow::Result<Duration> {
    Duration::try_from_secs_f64(v).with_context(|| format!("--{flag} must be a non-negative number of seconds"))
}

async fn serve(a: ServeArgs) -> anyhow::Result<()> {
    let config = GatewayConfig {
        queue_capacity: a.queue,
        max_frame: a.max_frame,
        identify_timeout: seconds("identify-timeout", a.identify_timeout)?,
        fs_root: a.fs_root.clone(),
        max_upload: a.max_upload,
        app_dir: a.app_dir,
    };
    let addr = format!("{}:{}", a.bind, a.port);
    let gateway = Gateway::bind(addr.as_str(), config)
        .await
        .with_context(|| format!("cannot serve on {addr} with file root {}", a.fs_root.display()))?;
    {
        let mut out = std::io::stdout().lock();
        writeln!(out, "ws {}", gateway.ws_url())?;
        writeln!(out, "http {}", gateway.http_url())?;
        out.flush()?;
    }
    tracing::info!(addr = %gateway.local_addr(), "serving");
    tokio::select! {
        r = tokio::signal::ctrl_c() => r.context("installing interrupt handler")?,
        _ = gateway.stopped() => bail!("server stopped unexpectedly"),
    }
    tracing::info!(clients = gateway.relay().client_count(), "shutting down");
    gateway.shutdown().await.context("shutdown")?;
    Ok(())
}

fn load_preset(spec: &str) -> anyhow::Result<Preset> {
    if BUILTIN_PRESETS.contains(&spec) {
        return Ok(presets::builtin(spec)?);
    }
    let path = std::path::Path::new(spec);
    if path.extension().is_some_and(|e| e == "json") || path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading preset {spec}"))?;
        return Preset::parse(&text).with_context(|| format!("preset {spec}"));
    }
    bail!("unknown preset {spec:?}; available presets: {}", BUILTIN_PRESETS.join(", "))
}

async fn sim(command: SimCommand) -> anyhow::Result<()> {
    let (service, common, default_group) = match command {
        SimCommand::Nbody { preset, common } => {
            let preset = load_preset(&preset)?;
            let seed = common.seed.unwrap_or_else(rand::random);
            let dt = common.dt.unwrap_or(preset.dt);
            let world = NBodySim::new(preset.instantiate(seed), seed);
            (SimService::new(Box::new(world), dt), common, "nbody")
        }
        SimCommand::Boxes { count, common } => {
            let seed = common.seed.unwrap_or_else(rand::random);
            let dt = common.dt.unwrap_or(1.0 / common.rate);
            (SimService::new(Box::new(BoxSim::random(count, seed)), dt), common, "boxes")
        }
    };
    if !(service.dt().is_finite() && service.dt() > 0.0) {
        bail!("--dt must be positive");
    }
    if !(common.rate.is_finite() && common.rate > 0.0) {
        bail!("--rate must be positive");
    }
    let group = common.group.unwrap_or_else(|| default_group.parse().expect("valid group name"));
    let mut opts = AdapterOptions::new(common.hub, group, common.rate);
    if let Some(name) = common.name {
        opts.name = name;
    }
    opts.run_for = common.duration.map(|d| seconds("duration", d)).transpose()?;
    opts.wait_subscribers = common.wait_subscribers;

    let stop = CancellationToken::new();
    let interrupt = stop.clone();
    tokio::spawn(async move {
        if tokio::signal::ctrl_c().await.is_ok() {
            interrupt.cancel();
        }
    });
    let report = adapter::serve(service, opts, stop).await?;
    tracing::info!(published = report.published, commands = report.commands, reconnects = report.reconnects, "done");
    if report.faulted {
        bail!("simulation faulted after {} published states", report.published);
    }
    Ok(())
}

async fn run_bench(a: BenchArgs) -> anyhow::Result<()> {
    let opts = BenchOptions {
        hub_url: a.hub,
        group: a.group,
        clients: a.clients,
        rate: a.rate,
        duration: seconds("duration", a.duration)?,
        name_prefix: format!("bench-{:06x}", rand::random::<u32>() & 0xff_ffff),
    };
    let report = bench::run(opts).await?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

async fn replay(a: ReplayArgs) -> anyhow::Result<()> {
    let text = tokio::fs::read_to_string(&a.fixtures)
        .await
        .with_context(|| format!("reading {}", a.fixtures.display()))?;
    let mut frames = Vec::new();
    let mut failures = 0;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let n = i + 1;
        match decode_frame(line) {
            Ok(frame) if encode_frame(&frame) == line => {
                println!("{n}: ok");
                frames.push(frame);
            }
            Ok(frame) => {
                failures += 1;
                println!("{n}: re-encodes differently\n  want {line}\n  got  {}", encode_frame(&frame));
            }
            Err(e) => {
                failures += 1;
                println!("{n}: does not decode: {e}");
            }
        }
    }
    if failures > 0 {
        bail!("{failures} fixture line(s) failed");
    }
    if let Some(hub) = a.hub {
        send_fixtures(&hub, frames).await?;
    }
    Ok(())
}

async fn send_fixtures(hub: &str, frames: Vec<Frame>) -> anyhow::Result<()> {
    let name = format!("replay-{:06x}", rand::random::<u32>() & 0xff_ffff);
    let session = Session::connect(ConnectOptions::new(hub, name, ClientKind::User)).await?;
    for frame in frames {
        if !frame.is_client_frame() || matches!(frame, Frame::Identify { .. }) {
            continue;
        }
        let sent = encode_frame(&frame);
        let reply = match frame {
            Frame::Message { target, data, .. } => {
                session.send(target, data).await?;
                match tokio::time::timeout(Duration::from_millis(200), session.recv()).await {
                    Ok(Some(Incoming::Reply(f) | Incoming::Event(f))) => encode_frame(&f),
                    Ok(Some(Incoming::Relay { origin, .. })) => format!("relay from {}", origin.name),
                    Ok(None) => bail!("hub closed the connection"),
                    Err(_) => "delivered".to_owned(),
                }
            }
            other => encode_frame(&session.request(other).await?),
        };
        println!("> {sent}\n< {reply}");
    }
    session.close().await;
    Ok(())
}
