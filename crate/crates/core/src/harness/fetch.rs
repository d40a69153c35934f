use std::io::{Cursor, Read};
use std::path::{Path, PathBuf};

use log::info;
use sha2::{Digest, Sha256};

use super::datasets::{DatasetId, RemoteFile};
use super::HarnessError;

/// Something that can GET a URL. Swapped for a fake in tests.
pub trait Transport {
    fn get(&self, url: &str) -> Result<Vec<u8>, HarnessError>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new() -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_secs(120)))
            .build()
            .into();
        Self { agent }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<Vec<u8>, HarnessError> {
        let mut resp = self.agent.get(url).call().map_err(|e| HarnessError::Network(format!("{url}: {e}")))?;
        resp.body_mut()
            .with_config()
            .limit(256 * 1024 * 1024)
            .read_to_vec()
            .map_err(|e| HarnessError::Network(format!("{url}: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchOutcome {
    pub path: PathBuf,
    /// False when a valid file was already present.
    pub downloaded: bool,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".sha256");
    path.with_file_name(name)
}

/// Digest the stored file must have: the pinned one, or else the one recorded
/// when it was first downloaded.
fn expected_digest(remote: &RemoteFile, path: &Path) -> Option<String> {
    remote.sha256.map(str::to_owned).or_else(|| {
        let text = std::fs::read_to_string(sidecar(path)).ok()?;
        Some(text.split_whitespace().next()?.to_owned())
    })
}

fn check(file: &str, expected: Option<&str>, bytes: &[u8]) -> Result<String, HarnessError> {
    let found = sha256_hex(bytes);
    match expected {
        Some(e) if !e.eq_ignore_ascii_case(&found) => {
            Err(HarnessError::DigestMismatch { file: file.to_owned(), expected: e.to_owned(), found })
        }
        _ => Ok(found),
    }
}

fn extract_member(bytes: &[u8], member: &str) -> Result<Option<Vec<u8>>, HarnessError> {
    let bad = |e: zip::result::ZipError| HarnessError::Network(format!("unreadable archive: {e}"));
    let mut archive = zip::ZipArchive::new(Cursor::new(bytes)).map_err(bad)?;
    let mut nested = Vec::new();
    for i in 0..archive.len() {
        let mut entry = archive.by_index(i).map_err(bad)?;
        let name = entry.name().rsplit('/').next().unwrap_or_default().to_owned();
        if name == member || name.ends_with(".zip") {
            let mut buf = Vec::new();
            entry.read_to_end(&mut buf).map_err(|e| HarnessError::Network(format!("unreadable archive: {e}")))?;
            if name == member {
                return Ok(Some(buf));
            }
            nested.push(buf);
        }
    }
    for inner in nested {
        if let Some(found) = extract_member(&inner, member)? {
            return Ok(Some(found));
        }
    }
    Ok(None)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut part = path.as_os_str().to_os_string();
    part.push(".part");
    let part = PathBuf::from(part);
    let res = std::fs::write(&part, bytes).and_then(|()| std::fs::rename(&part, path));
    if let Err(e) = res {
        let _ = std::fs::remove_file(&part);
        return Err(HarnessError::io(path, e));
    }
    Ok(())
}

/// Download `remote` into `dest/<dir_name>/`, verifying its digest. A valid
/// file already in place means no network call at all; a corrupted one is an
/// error and is left for the user to inspect. Nothing is written when the
/// download or the check fails.
pub fn fetch_remote(
    remote: &RemoteFile,
    dir_name: &str,
    dest: &Path,
    transport: &dyn Transport,
) -> Result<FetchOutcome, HarnessError> {
    let path = dest.join(dir_name).join(remote.file_name);
    let expected = expected_digest(remote, &path);
    if path.exists() {
        let bytes = std::fs::read(&path).map_err(|e| HarnessError::io(&path, e))?;
        let sha256 = check(&path.display().to_string(), expected.as_deref(), &bytes)?;
        return Ok(FetchOutcome { path, downloaded: false, sha256 });
    }
    info!("downloading {}", remote.url);
    let body = transport.get(remote.url)?;
    let bytes = match remote.archive_member {
        Some(member) => extract_member(&body, member)?
            .ok_or_else(|| HarnessError::Network(format!("{} has no member {member}", remote.url)))?,
        None => body,
    };
    let sha256 = check(remote.file_name, expected.as_deref(), &bytes)?;
    write_atomic(&path, &bytes)?;
    if remote.sha256.is_none() {
        write_atomic(&sidecar(&path), format!("{sha256}  {}\n", remote.file_name).as_bytes())?;
    }
    Ok(FetchOutcome { path, downloaded: true, sha256 })
}

pub fn fetch_dataset(id: DatasetId, dest: &Path, transport: &dyn Transport) -> Result<FetchOutcome, HarnessError> {
    fetch_remote(&id.remote(), id.name(), dest, transport)
}
