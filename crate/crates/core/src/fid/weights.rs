use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::IoContext;
use crate::{Error, Result};

/// Pretrained FID backbone published with the reference implementation.
pub const DEFAULT_INCEPTION_URL: &str =
    "https://github.com/mseitzer/pytorch-fid/releases/download/fid_weights/pt_inception-2015-12-05-6726825d.pth";

/// Minimum length of a hex prefix accepted as a pin.
const MIN_PIN_LEN: usize = 8;

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).at(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).at(path)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn file_name(url: &str) -> Result<String> {
    let name = url.rsplit('/').next().unwrap_or("");
    if name.is_empty() {
        return Err(Error::Download(format!("cannot derive a file name from {url}")));
    }
    Ok(name.to_string())
}

/// Hash prefix embedded as `<stem>-<hex>.<ext>`.
fn embedded_pin(name: &str) -> Option<String> {
    let stem = name.split('.').next()?;
    let tail = stem.rsplit('-').next()?;
    (tail.len() >= MIN_PIN_LEN && tail.chars().all(|c| c.is_ascii_hexdigit())).then(|| tail.to_ascii_lowercase())
}

fn check_pin(path: &Path, pin: &str) -> Result<()> {
    let digest = sha256_file(path)?;
    if digest.starts_with(pin) {
        Ok(())
    } else {
        Err(Error::Integrity(format!(
            "{} has sha256 {digest}, expected {pin}",
            path.display()
        )))
    }
}

fn download(url: &str, dest: &Path) -> Result<()> {
    if let Some(local) = url.strip_prefix("file://") {
        std::fs::copy(local, dest).map_err(|e| Error::Download(format!("{url}: {e}")))?;
        return Ok(());
    }
    if !url.contains("://") {
        std::fs::copy(url, dest).map_err(|e| Error::Download(format!("{url}: {e}")))?;
        return Ok(());
    }
    let mut resp = reqwest::blocking::get(url)
        .and_then(|r| r.error_for_status())
        .map_err(|e| Error::Download(format!("{url}: {e}")))?;
    let mut out = std::fs::File::create(dest).at(dest)?;
    resp.copy_to(&mut out).map_err(|e| Error::Download(format!("{url}: {e}")))?;
    Ok(())
}

/// Returns a cached copy of `url`, downloading it when absent.
///
/// `sha256` is a full digest or a prefix of at least 8 hex digits. Without
/// one, the prefix embedded in the file name is required.
pub fn fetch_weights(url: &str, sha256: Option<&str>, cache_dir: &Path) -> Result<PathBuf> {
    let name = file_name(url)?;
    let pin = match sha256 {
        Some(p) => p.trim().to_ascii_lowercase(),
        None => embedded_pin(&name).ok_or_else(|| {
            Error::Config(format!(
                "no checksum for {name}: pass a sha256 pin or use a file name ending in -<hex prefix>"
            ))
        })?,
    };
    if pin.len() < MIN_PIN_LEN || !pin.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(Error::Config(format!("sha256 pin `{pin}` must be at least {MIN_PIN_LEN} hex digits")));
    }
    let target = cache_dir.join(&name);
    if target.exists() {
        if check_pin(&target, &pin).is_ok() {
            return Ok(target);
        }
        log::warn!("cached {} fails its checksum; downloading again", target.display());
    }
    std::fs::create_dir_all(cache_dir).at(cache_dir)?;
    let partial = cache_dir.join(format!("{name}.partial"));
    log::info!("fetching {url}");
    let fetched = download(url, &partial).and_then(|_| check_pin(&partial, &pin));
    if let Err(e) = fetched {
        let _ = std::fs::remove_file(&partial);
        return Err(e);
    }
    std::fs::rename(&partial, &target).at(&target)?;
    Ok(target)
}
