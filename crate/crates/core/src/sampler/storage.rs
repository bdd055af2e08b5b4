//! On-disk draws format, one file per chain.
//!
//! ```text
//! CRASHFREQ-DRAWS v1\n
//! <JSON header>\n
//! scalars      n_draws × n_names      f64 LE, iteration-major
//! latent_rows  n_latent               u64 LE
//! lambda       n_latent × n_sites     f64 LE
//! z            n_latent × n_sites     u8
//! site_coefs   n_latent × n_sites × r f64 LE
//! ```
//!
//! The header carries chain id, seed, family, formula, MCMC configuration,
//! column standardization, site ids, scalar names and array lengths.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ChainDraws, McmcConfig};
use crate::error::{Error, Result};
use crate::model_spec::{ColumnStats, Family, Formula};

pub const DRAWS_MAGIC: &str = "CRASHFREQ-DRAWS v1";

#[derive(Serialize, Deserialize)]
struct Header {
    chain: usize,
    seed: u64,
    family: Family,
    formula: Formula,
    config: McmcConfig,
    column_stats: Vec<Option<ColumnStats>>,
    site_ids: Vec<String>,
    names: Vec<String>,
    random_columns: Vec<usize>,
    acceptance: Vec<(String, f64)>,
    n_draws: usize,
    n_latent: usize,
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("{}.tmp", path.extension().and_then(|e| e.to_str()).unwrap_or_default()));
    {
        let mut f = BufWriter::new(fs::File::create(&tmp)?);
        f.write_all(bytes)?;
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn encode(d: &ChainDraws) -> Result<Vec<u8>> {
    let header = Header {
        chain: d.chain,
        seed: d.seed,
        family: d.family,
        formula: d.formula.clone(),
        config: d.config.clone(),
        column_stats: d.column_stats.clone(),
        site_ids: d.site_ids.clone(),
        names: d.names.clone(),
        random_columns: d.random_columns.clone(),
        acceptance: d.acceptance.clone(),
        n_draws: d.n_draws(),
        n_latent: d.n_latent(),
    };
    let mut buf = Vec::with_capacity(8 * (d.scalars.len() + d.lambda.len() + d.site_coefs.len()) + d.z.len() + 4096);
    buf.extend_from_slice(DRAWS_MAGIC.as_bytes());
    buf.push(b'\n');
    serde_json::to_writer(&mut buf, &header)?;
    buf.push(b'\n');
    d.scalars.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
    d.latent_rows.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
    d.lambda.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
    buf.extend_from_slice(&d.z);
    d.site_coefs.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
    Ok(buf)
}

pub fn write_draws(path: impl AsRef<Path>, d: &ChainDraws) -> Result<()> {
    write_atomic(path.as_ref(), &encode(d)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::DrawsFormat { path: self.path.to_path_buf(), reason: reason.into() }
    }

    fn line(&mut self) -> Result<&'a [u8]> {
        let rest = &self.bytes[self.pos..];
        let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| self.err("truncated header"))?;
        self.pos += end + 1;
        Ok(&rest[..end])
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!("truncated {what} block")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(n * 8, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn u64s(&mut self, n: usize, what: &str) -> Result<Vec<u64>> {
        let raw = self.take(n * 8, what)?;
        Ok(raw.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn read_draws(path: impl AsRef<Path>) -> Result<ChainDraws> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0, path };
    if cur.line()? != DRAWS_MAGIC.as_bytes() {
        return Err(cur.err(format!("expected `{DRAWS_MAGIC}` signature")));
    }
    let h: Header = serde_json::from_slice(cur.line()?).map_err(|e| cur.err(format!("header: {e}")))?;
    let n_sites = h.site_ids.len();
    let r = h.random_columns.len();
    let scalars = cur.f64s(h.n_draws * h.names.len(), "scalar")?;
    let latent_rows = cur.u64s(h.n_latent, "latent row")?;
    let lambda = cur.f64s(h.n_latent * n_sites, "lambda")?;
    let z = cur.take(h.n_latent * n_sites, "z")?.to_vec();
    let site_coefs = cur.f64s(h.n_latent * n_sites * r, "site coefficient")?;
    if cur.pos != bytes.len() {
        return Err(cur.err(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    if latent_rows.iter().any(|&k| k as usize >= h.n_draws) {
        return Err(cur.err("latent row index beyond the scalar draws"));
    }
    Ok(ChainDraws {
        chain: h.chain,
        seed: h.seed,
        family: h.family,
        formula: h.formula,
        config: h.config,
        column_stats: h.column_stats,
        site_ids: h.site_ids,
        names: h.names,
        scalars,
        latent_rows,
        lambda,
        z,
        random_columns: h.random_columns,
        site_coefs,
        acceptance: h.acceptance,
    })
}

fn chain_path(dir: &Path, chain: usize) -> PathBuf {
    dir.join(format!("chain_{chain}.draws"))
}

/// Writes every chain into `dir` as `chain_<k>.draws`.
pub fn save_fit(dir: impl AsRef<Path>, chains: &[ChainDraws]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    chains
        .iter()
        .map(|c| {
            let p = chain_path(dir, c.chain);
            write_draws(&p, c)?;
            Ok(p)
        })
        .collect()
}

/// Reads `chain_0.draws`, `chain_1.draws`, … from `dir`.
pub fn load_fit(dir: impl AsRef<Path>) -> Result<Vec<ChainDraws>> {
    let dir = dir.as_ref();
    let mut chains = Vec::new();
    while chain_path(dir, chains.len()).exists() {
        chains.push(read_draws(chain_path(dir, chains.len()))?);
    }
    if chains.is_empty() {
        return Err(Error::DrawsFormat { path: dir.to_path_buf(), reason: "no chain_<k>.draws files".into() });
    }
    Ok(chains)
}
