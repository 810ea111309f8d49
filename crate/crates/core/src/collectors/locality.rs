use std::fs;
use std::path::Path;

use super::source::SourceError;

/// Station locality and identity overrides, read from `key=value` lines.
///
/// Recognized keys: `as_number`, `public_ip`, `country`, `continent`,
/// `network_domain`. Blank lines and `#` comments are ignored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LocalityFile {
    pub as_number: Option<u32>,
    pub public_ip: Option<String>,
    pub country: Option<String>,
    pub continent: Option<String>,
    pub network_domain: Option<String>,
}

impl LocalityFile {
    pub fn parse(text: &str) -> Result<Self, SourceError> {
        let mut out = LocalityFile::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = format!("locality line {}", n + 1);
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| SourceError::parse(&at, "expected key=value"))?;
            let v = v.trim();
            let val = (!v.is_empty()).then(|| v.to_owned());
            match k.trim() {
                "as_number" => {
                    out.as_number = match val {
                        Some(s) => Some(
                            s.trim_start_matches("AS")
                                .parse()
                                .map_err(|_| SourceError::parse(&at, "bad as_number"))?,
                        ),
                        None => None,
                    }
                }
                "public_ip" => {
                    if let Some(ip) = &val {
                        ip.parse::<std::net::IpAddr>()
                            .map_err(|_| SourceError::parse(&at, "bad public_ip"))?;
                    }
                    out.public_ip = val;
                }
                "country" => out.country = val.map(|s| s.to_ascii_uppercase()),
                "continent" => out.continent = val.map(|s| s.to_ascii_uppercase()),
                "network_domain" => out.network_domain = val,
                other => {
                    return Err(SourceError::parse(&at, format!("unknown key {other:?}")));
                }
            }
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SourceError> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| SourceError::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }
}
