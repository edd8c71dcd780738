//! Downloads the four MNIST IDX files and verifies their SHA-256.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const DEFAULT_MIRROR: &str = "https://ossci-datasets.s3.amazonaws.com/mnist";

/// `(file name, SHA-256 of the uncompressed file)`.
pub const MNIST_CHECKSUMS: [(&str, &str); 4] = [
    (
        "train-images-idx3-ubyte",
        "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db",
    ),
    (
        "train-labels-idx1-ubyte",
        "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5",
    ),
    (
        "t10k-images-idx3-ubyte",
        "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7",
    ),
    (
        "t10k-labels-idx1-ubyte",
        "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2",
    ),
];

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn verify(name: &str, bytes: &[u8]) -> CliResult<()> {
    let expected = MNIST_CHECKSUMS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, h)| *h)
        .ok_or_else(|| CliError::usage("file", format!("unknown MNIST file {name}")))?;
    let actual = sha256_hex(bytes);
    if actual != expected {
        return Err(CliError::Checksum {
            file: name.to_string(),
            expected: expected.to_string(),
            actual,
        });
    }
    Ok(())
}

fn gunzip(bytes: &[u8]) -> std::io::Result<Vec<u8>> {
    let mut out = Vec::new();
    GzDecoder::new(bytes).read_to_end(&mut out)?;
    Ok(out)
}

/// Fetches `<mirror>/<name>.gz` for each file not already present and
/// verified in `dest`. Returns the names that were downloaded.
pub fn fetch_mnist(mirror: &str, dest: &Path) -> CliResult<Vec<String>> {
    std::fs::create_dir_all(dest).map_err(|e| crwn::Error::io(dest, e))?;
    let mut fetched = Vec::new();
    for (name, _) in MNIST_CHECKSUMS {
        let path = dest.join(name);
        if let Ok(existing) = std::fs::read(&path) {
            if verify(name, &existing).is_ok() {
                continue;
            }
        }
        let url = format!("{}/{name}.gz", mirror.trim_end_matches('/'));
        let fail = |message: String| CliError::Download { url: url.clone(), message };
        let resp = ureq::get(&url).call().map_err(|e| fail(e.to_string()))?;
        let mut gz = Vec::new();
        resp.into_reader()
            .read_to_end(&mut gz)
            .map_err(|e| fail(e.to_string()))?;
        let raw = gunzip(&gz).map_err(|e| fail(format!("not a gzip stream: {e}")))?;
        verify(name, &raw)?;
        std::fs::write(&path, &raw).map_err(|e| crwn::Error::io(&path, e))?;
        fetched.push(name.to_string());
    }
    Ok(fetched)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_reference() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn wrong_bytes_fail_verification() {
        assert!(matches!(
            verify("t10k-labels-idx1-ubyte", b"nope"),
            Err(CliError::Checksum { .. })
        ));
        assert!(verify("other", b"").is_err());
    }
}
