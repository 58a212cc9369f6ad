#![allow(dead_code)]

use std::process::Stdio;
use std::time::{Duration, Instant};

use concierge_core::protocol::{ClientKind, Frame, GroupName, StatusCode};
use concierge_net::sdk::{ConnectOptions, Session};
use tokio::io::{AsyncBufReadExt, BufReader};
use tokio::process::{Child, Command};

pub const BIN: &str = env!("CARGO_BIN_EXE_concierge");

pub fn concierge() -> Command {
    let mut cmd = Command::new(BIN);
    for (k, _) in std::env::vars() {
        if k.starts_with("CONCIERGE_") {
            cmd.env_remove(k);
        }
    }
    cmd.env("CONCIERGE_LOG", "warn").kill_on_drop(true);
    cmd
}

pub struct Served {
    pub child: Child,
    pub ws: String,
    pub http: String,
    pub dir: tempfile::TempDir,
}

impl Served {
    pub fn port(&self) -> u16 {
        self.http.rsplit(':').next().unwrap().parse().unwrap()
    }
}

pub async fn serve_with(args: &[&str]) -> Served {
    let dir = tempfile::tempdir().unwrap();
    let mut child = concierge()
        .arg("serve")
        .arg("--fs-root")
        .arg(dir.path().join("files"))
        .args(args)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let mut next = async || {
        tokio::time::timeout(Duration::from_secs(10), lines.next_line()).await.unwrap().unwrap().unwrap()
    };
    let ws = next().await.strip_prefix("ws ").unwrap().to_owned();
    let http = next().await.strip_prefix("http ").unwrap().to_owned();
    Served { child, ws, http, dir }
}

pub async fn serve() -> Served {
    serve_with(&["--port", "0"]).await
}

pub fn interrupt(child: &Child) {
    let pid = child.id().expect("still running");
    let ok = std::process::Command::new("kill").args(["-INT", &pid.to_string()]).status().unwrap();
    assert!(ok.success());
}

pub async fn connect(url: &str, name: &str) -> Session {
    Session::connect(ConnectOptions::new(url, name, ClientKind::User)).await.unwrap()
}

/// Subscribes once the group exists, waiting up to `wait`.
pub async fn subscribe_when_ready(url: &str, name: &str, group: &str, wait: Duration) -> Session {
    let s = connect(url, name).await;
    let group: GroupName = group.parse().unwrap();
    let deadline = Instant::now() + wait;
    loop {
        match s.request(Frame::Subscribe { group: group.clone(), seq: None }).await.unwrap() {
            Frame::Status { code: StatusCode::Ok, .. } => return s,
            Frame::Status { code: StatusCode::NoSuchGroup, .. } if Instant::now() < deadline => {
                tokio::time::sleep(Duration::from_millis(20)).await
            }
            other => panic!("subscribe {group}: {other:?}"),
        }
    }
}

pub fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}
