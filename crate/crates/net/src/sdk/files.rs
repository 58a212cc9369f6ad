//! File transfer against `/fs/{owner}/{path}`. Bodies are streamed in both
//! directions; the in-memory helpers are conveniences for small files.

use bytes::Bytes;
use futures_util::{Stream, StreamExt, TryStreamExt};
use reqwest::{Body, Method, RequestBuilder, Response};
use tokio::io::{AsyncRead, AsyncWrite, AsyncWriteExt};
use tokio_util::io::ReaderStream;

use super::{SdkError, Session};
use crate::gateway::FileEntry;

/// Percent-encodes each segment so reserved characters survive the URL.
fn encode_path(path: &str) -> String {
    path.split('/')
        .map(|seg| {
            seg.bytes()
                .map(|b| match b {
                    b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'.' | b'_' | b'~' => {
                        (b as char).to_string()
                    }
                    _ => format!("%{b:02X}"),
                })
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("/")
}

async fn check(resp: Response) -> Result<Response, SdkError> {
    let status = resp.status().as_u16();
    if resp.status().is_success() {
        return Ok(resp);
    }
    let body = resp.text().await.unwrap_or_default();
    Err(match status {
        401 => SdkError::Unauthorized,
        403 => SdkError::Permission(body),
        404 => SdkError::NotFound(body),
        _ => SdkError::Http { status, body },
    })
}

fn transport(e: reqwest::Error) -> SdkError {
    SdkError::Transport(e.to_string())
}

/// One multipart part: bytes or a stream of known length.
pub enum Part {
    Bytes(Bytes),
    Stream { body: Body, len: u64 },
}

impl Session {
    fn fs_request(&self, method: Method, owner: &str, path: &str) -> RequestBuilder {
        let url = format!("{}fs/{}/{}", self.http_base, encode_path(owner), encode_path(path));
        self.http.request(method, url).bearer_auth(&self.file_token)
    }

    async fn put_body(&self, path: &str, body: Body) -> Result<FileEntry, SdkError> {
        let owner = self.profile.name.clone();
        self.put_as(owner.as_str(), path, body).await
    }

    async fn put_as(&self, owner: &str, path: &str, body: Body) -> Result<FileEntry, SdkError> {
        let resp = self.fs_request(Method::PUT, owner, path).body(body).send().await.map_err(transport)?;
        check(resp).await?.json().await.map_err(transport)
    }

    /// Uploads an in-memory body into this client's namespace.
    pub async fn upload(&self, path: &str, data: impl Into<Bytes>) -> Result<FileEntry, SdkError> {
        self.put_body(path, Body::from(data.into())).await
    }

    /// Uploads into `owner`'s namespace. Anything but our own gives `Permission`.
    pub async fn upload_to(&self, owner: &str, path: &str, data: impl Into<Bytes>) -> Result<FileEntry, SdkError> {
        self.put_as(owner, path, Body::from(data.into())).await
    }

    /// Streams a reader to the store without buffering it.
    pub async fn upload_reader<R>(&self, path: &str, reader: R) -> Result<FileEntry, SdkError>
    where
        R: AsyncRead + Send + 'static,
    {
        self.put_body(path, Body::wrap_stream(ReaderStream::with_capacity(reader, 256 * 1024)))
            .await
    }

    /// Streams a local file.
    pub async fn upload_file(&self, path: &str, local: &std::path::Path) -> Result<FileEntry, SdkError> {
        let file = tokio::fs::File::open(local).await?;
        self.upload_reader(path, file).await
    }

    /// Uploads the concatenation of `parts` as a multipart/form-data body.
    pub async fn upload_multipart(&self, path: &str, parts: Vec<Part>) -> Result<FileEntry, SdkError> {
        let mut form = reqwest::multipart::Form::new();
        for (i, part) in parts.into_iter().enumerate() {
            let p = match part {
                Part::Bytes(b) => reqwest::multipart::Part::stream(Body::from(b)),
                Part::Stream { body, len } => reqwest::multipart::Part::stream_with_length(body, len),
            };
            form = form.part(format!("part{i}"), p.file_name(format!("part{i}")));
        }
        let owner = self.profile.name.as_str();
        let resp = self
            .fs_request(Method::POST, owner, path)
            .multipart(form)
            .send()
            .await
            .map_err(transport)?;
        check(resp).await?.json().await.map_err(transport)
    }

    /// Streams a file's bytes. `range` is sent verbatim as a `Range` header.
    pub async fn download_stream(
        &self,
        owner: &str,
        path: &str,
        range: Option<&str>,
    ) -> Result<impl Stream<Item = Result<Bytes, SdkError>>, SdkError> {
        let mut req = self.fs_request(Method::GET, owner, path);
        if let Some(r) = range {
            req = req.header(reqwest::header::RANGE, r);
        }
        let resp = check(req.send().await.map_err(transport)?).await?;
        Ok(resp.bytes_stream().map_err(transport))
    }

    /// Whole file into memory.
    pub async fn download(&self, owner: &str, path: &str) -> Result<Bytes, SdkError> {
        self.download_range(owner, path, None).await
    }

    pub async fn download_range(&self, owner: &str, path: &str, range: Option<&str>) -> Result<Bytes, SdkError> {
        let mut stream = Box::pin(self.download_stream(owner, path, range).await?);
        let mut out = bytes::BytesMut::new();
        while let Some(chunk) = stream.next().await {
            out.extend_from_slice(&chunk?);
        }
        Ok(out.freeze())
    }

    /// Streams a file into `sink`, returning the byte count.
    pub async fn download_to<W>(&self, owner: &str, path: &str, sink: &mut W) -> Result<u64, SdkError>
    where
        W: AsyncWrite + Unpin,
    {
        let mut stream = Box::pin(self.download_stream(owner, path, None).await?);
        let mut n = 0u64;
        while let Some(chunk) = stream.next().await {
            let chunk = chunk?;
            sink.write_all(&chunk).await?;
            n += chunk.len() as u64;
        }
        sink.flush().await?;
        Ok(n)
    }

    pub async fn delete_file(&self, path: &str) -> Result<(), SdkError> {
        let owner = self.profile.name.as_str();
        let resp = self.fs_request(Method::DELETE, owner, path).send().await.map_err(transport)?;
        check(resp).await.map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    #[test]
    fn path_encoding() {
        assert_eq!(super::encode_path("a b/c%d/ok.txt"), "a%20b/c%25d/ok.txt");
    }
}
