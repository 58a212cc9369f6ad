//! Owner-namespaced file store under `/fs/{owner}/{path}`.
//!
//! Uploads stream into a staging file and are renamed into place, so readers
//! see either the old or the new content. Downloads stream from disk and
//! honor a single byte range.

use std::io::SeekFrom;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Body;
use axum::extract::{FromRequest, Multipart, Path as UrlPath, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use bytes::Bytes;
use concierge_core::protocol::ClientName;
use futures_util::{Stream, StreamExt};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use tokio::fs::{self, File};
use tokio::io::{AsyncReadExt, AsyncSeekExt, AsyncWriteExt};
use tokio_util::io::ReaderStream;

use super::Shared;

pub const MAX_SEGMENT_BYTES: usize = 255;
const STAGING: &str = ".staging";

/// Metadata returned after a successful upload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub owner: String,
    pub path: String,
    pub size: u64,
    /// Milliseconds since the Unix epoch.
    pub created: u64,
}

#[derive(Debug)]
pub struct FileStore {
    root: PathBuf,
    max_upload: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum FsError {
    #[error("missing or invalid bearer token")]
    Unauthorized,
    #[error("only {0} may write here")]
    Forbidden(String),
    #[error("bad path: {0}")]
    BadPath(String),
    #[error("not found")]
    NotFound,
    #[error("upload exceeds {0} bytes")]
    TooLarge(u64),
    #[error("range not satisfiable")]
    Range(u64),
    #[error("path conflicts with an existing entry")]
    Conflict,
    #[error("bad upload body: {0}")]
    BadBody(String),
    #[error("storage error: {0}")]
    Io(#[from] std::io::Error),
}

impl IntoResponse for FsError {
    fn into_response(self) -> Response {
        let code = match &self {
            FsError::Unauthorized => StatusCode::UNAUTHORIZED,
            FsError::Forbidden(_) => StatusCode::FORBIDDEN,
            FsError::BadPath(_) | FsError::BadBody(_) => StatusCode::BAD_REQUEST,
            FsError::NotFound => StatusCode::NOT_FOUND,
            FsError::TooLarge(_) => StatusCode::PAYLOAD_TOO_LARGE,
            FsError::Range(_) => StatusCode::RANGE_NOT_SATISFIABLE,
            FsError::Conflict => StatusCode::CONFLICT,
            FsError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut resp = (code, self.to_string()).into_response();
        if let FsError::Range(size) = self {
            resp.headers_mut()
                .insert(header::CONTENT_RANGE, HeaderValue::from_str(&format!("bytes */{size}")).unwrap());
        }
        if code == StatusCode::UNAUTHORIZED {
            resp.headers_mut()
                .insert(header::WWW_AUTHENTICATE, HeaderValue::from_static("Bearer"));
        }
        resp
    }
}

/// Checks a relative path: non-empty `/`-separated segments, none of them
/// `.` or `..`, no backslashes or NULs, each at most 255 bytes.
pub fn validate_path(path: &str) -> Result<(), String> {
    if path.is_empty() {
        return Err("empty path".into());
    }
    for seg in path.split('/') {
        match seg {
            "" => return Err("empty segment".into()),
            "." | ".." => return Err(format!("segment {seg:?} not allowed")),
            s if s.len() > MAX_SEGMENT_BYTES => {
                return Err(format!("segment longer than {MAX_SEGMENT_BYTES} bytes"))
            }
            s if s.contains(['\\', '\0']) => return Err("backslash or NUL in segment".into()),
            _ => {}
        }
    }
    Ok(())
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl FileStore {
    pub async fn open(root: PathBuf, max_upload: u64) -> std::io::Result<Self> {
        fs::create_dir_all(root.join(STAGING)).await?;
        Ok(Self { root, max_upload })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn locate(&self, owner: &str, path: &str) -> Result<PathBuf, FsError> {
        let owner: ClientName = owner
            .parse()
            .map_err(|_| FsError::BadPath(format!("{owner:?} is not a client name")))?;
        validate_path(path).map_err(FsError::BadPath)?;
        Ok(self.root.join(owner.as_str()).join(path))
    }

    async fn stage(&self) -> std::io::Result<(PathBuf, File)> {
        let mut raw = [0u8; 12];
        rand::rng().fill_bytes(&mut raw);
        let path = self.root.join(STAGING).join(format!("{}.part", hex::encode(raw)));
        let file = File::create(&path).await?;
        Ok((path, file))
    }

    async fn copy_into<S, E>(&self, file: &mut File, written: &mut u64, mut body: S) -> Result<(), FsError>
    where
        S: Stream<Item = Result<Bytes, E>> + Unpin,
        E: std::fmt::Display,
    {
        while let Some(chunk) = body.next().await {
            let chunk = chunk.map_err(|e| FsError::BadBody(e.to_string()))?;
            *written += chunk.len() as u64;
            if *written > self.max_upload {
                return Err(FsError::TooLarge(self.max_upload));
            }
            file.write_all(&chunk).await?;
        }
        Ok(())
    }

    async fn commit(&self, staged: &Path, dest: &Path) -> Result<(), FsError> {
        if fs::metadata(dest).await.is_ok_and(|m| m.is_dir()) {
            return Err(FsError::Conflict);
        }
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent).await.map_err(|_| FsError::Conflict)?;
        }
        fs::rename(staged, dest).await?;
        Ok(())
    }
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

fn authenticate(shared: &Shared, headers: &HeaderMap) -> Result<ClientName, FsError> {
    let token = bearer(headers).ok_or(FsError::Unauthorized)?;
    shared.relay.token_owner(token).ok_or(FsError::Unauthorized)
}

/// Authenticates, validates the target, then checks namespace ownership.
fn authorize_write(shared: &Shared, headers: &HeaderMap, owner: &str, path: &str) -> Result<PathBuf, FsError> {
    let name = authenticate(shared, headers)?;
    let full = shared.store.locate(owner, path)?;
    if name.as_str() == owner {
        Ok(full)
    } else {
        Err(FsError::Forbidden(owner.to_owned()))
    }
}

pub(super) async fn upload(
    State(shared): State<Arc<Shared>>,
    UrlPath((owner, path)): UrlPath<(String, String)>,
    request: Request,
) -> Result<Response, FsError> {
    let headers = request.headers().clone();
    let dest = authorize_write(&shared, &headers, &owner, &path)?;
    let store = &shared.store;
    let declared = headers
        .get(header::CONTENT_LENGTH)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<u64>().ok());
    if declared.is_some_and(|n| n > store.max_upload) {
        return Err(FsError::TooLarge(store.max_upload));
    }
    let multipart = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));

    let (staged, mut file) = store.stage().await?;
    let mut size = 0u64;
    let copied = async {
        if multipart {
            let mut parts = Multipart::from_request(request, &())
                .await
                .map_err(|e| FsError::BadBody(e.body_text()))?;
            while let Some(field) = parts.next_field().await.map_err(|e| FsError::BadBody(e.body_text()))? {
                store.copy_into(&mut file, &mut size, field).await?;
            }
        } else {
            store.copy_into(&mut file, &mut size, request.into_body().into_data_stream()).await?;
        }
        file.flush().await?;
        file.sync_all().await?;
        Ok::<(), FsError>(())
    }
    .await;
    drop(file);
    let result = match copied {
        Ok(()) => store.commit(&staged, &dest).await,
        Err(e) => Err(e),
    };
    if let Err(e) = result {
        let _ = fs::remove_file(&staged).await;
        return Err(e);
    }
    let entry = FileEntry { owner, path, size, created: now_ms() };
    Ok((StatusCode::CREATED, Json(entry)).into_response())
}

/// Resolved single range, inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ByteRange {
    pub start: u64,
    pub end: u64,
}

/// Parses a `Range` header against a resource of `size` bytes. `Ok(None)`
/// means serve the whole body (absent, multi-range or unparseable headers).
pub fn parse_range(value: Option<&str>, size: u64) -> Result<Option<ByteRange>, FsError> {
    let Some(spec) = value.and_then(|v| v.trim().strip_prefix("bytes=")) else {
        return Ok(None);
    };
    if spec.contains(',') {
        return Ok(None);
    }
    let Some((first, last)) = spec.trim().split_once('-') else {
        return Ok(None);
    };
    let num = |s: &str| s.trim().parse::<u64>().ok();
    let range = match (first.trim().is_empty(), last.trim().is_empty()) {
        (true, true) => return Ok(None),
        (true, false) => {
            let Some(n) = num(last) else { return Ok(None) };
            if n == 0 || size == 0 {
                return Err(FsError::Range(size));
            }
            ByteRange { start: size.saturating_sub(n), end: size - 1 }
        }
        (false, open_end) => {
            let Some(start) = num(first) else { return Ok(None) };
            let end = if open_end {
                u64::MAX
            } else {
                match num(last) {
                    Some(e) if e >= start => e,
                    _ => return Ok(None),
                }
            };
            if start >= size {
                return Err(FsError::Range(size));
            }
            ByteRange { start, end: end.min(size - 1) }
        }
    };
    Ok(Some(range))
}

pub(super) async fn download(
    State(shared): State<Arc<Shared>>,
    UrlPath((owner, path)): UrlPath<(String, String)>,
    headers: HeaderMap,
) -> Result<Response, FsError> {
    authenticate(&shared, &headers)?;
    let full = shared.store.locate(&owner, &path)?;
    let mut file = File::open(&full).await.map_err(|_| FsError::NotFound)?;
    let meta = file.metadata().await?;
    if !meta.is_file() {
        return Err(FsError::NotFound);
    }
    let size = meta.len();
    let range = parse_range(headers.get(header::RANGE).and_then(|v| v.to_str().ok()), size)?;
    let mut builder = Response::builder()
        .header(header::ACCEPT_RANGES, "bytes")
        .header(header::CONTENT_TYPE, "application/octet-stream");
    let (status, len) = match range {
        Some(r) => {
            file.seek(SeekFrom::Start(r.start)).await?;
            builder = builder.header(header::CONTENT_RANGE, format!("bytes {}-{}/{size}", r.start, r.end));
            (StatusCode::PARTIAL_CONTENT, r.end - r.start + 1)
        }
        None => (StatusCode::OK, size),
    };
    let body = Body::from_stream(ReaderStream::with_capacity(file.take(len), 64 * 1024));
    Ok(builder
        .status(status)
        .header(header::CONTENT_LENGTH, len)
        .body(body)
        .expect("static headers"))
}

pub(super) async fn remove(
    State(shared): State<Arc<Shared>>,
    UrlPath((owner, path)): UrlPath<(String, String)>,
    headers: HeaderMap,
) -> Result<StatusCode, FsError> {
    let full = authorize_write(&shared, &headers, &owner, &path)?;
    match fs::metadata(&full).await {
        Ok(m) if m.is_file() => {
            fs::remove_file(&full).await?;
            Ok(StatusCode::NO_CONTENT)
        }
        _ => Err(FsError::NotFound),
    }
}
