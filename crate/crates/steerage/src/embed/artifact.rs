//! The embedding artifact: a versioned textual file binding windows to
//! their t-SNE coordinates and cluster assignments.
//!
//! Window vectors themselves are not stored; a SHA-256 over their canonical
//! text encoding identifies them, so a consumer can verify it is pairing
//! the artifact with the data that produced it.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::kmeans::CentroidSet;
use super::tsne::EmbeddedPoint;
use super::window::ActionWindow;
use crate::error::{Error, Result};

const MAGIC: &str = "steerage-embedding v1";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedWindow {
    pub tau: usize,
    pub vector_hash: String,
    pub coords: [f64; 2],
    pub centroid: usize,
}

/// In-memory form of the artifact. Window order is τ = 1..=N.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub m: usize,
    pub centroids: Vec<[f64; 2]>,
    pub windows: Vec<EmbeddedWindow>,
}

/// Canonical identity of a window vector: SHA-256 over the comma-joined
/// shortest-round-trip float encoding.
pub fn window_hash(vector: &[f64]) -> String {
    let mut text = String::new();
    for (i, v) in vector.iter().enumerate() {
        if i > 0 {
            text.push(',');
        }
        let _ = write!(text, "{v}");
    }
    let digest = Sha256::digest(text.as_bytes());
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    hex
}

impl Embedding {
    pub fn build(
        m: usize,
        windows: &[ActionWindow],
        points: &[EmbeddedPoint],
        centroids: &CentroidSet,
    ) -> Result<Self> {
        if windows.len() != points.len() || windows.len() != centroids.assignment.len() {
            return Err(Error::contract(format!(
                "embedding parts disagree: {} windows, {} points, {} assignments",
                windows.len(),
                points.len(),
                centroids.assignment.len()
            )));
        }
        let embedded = windows
            .iter()
            .zip(points)
            .zip(&centroids.assignment)
            .map(|((w, p), &c)| EmbeddedWindow {
                tau: w.tau,
                vector_hash: window_hash(&w.vector),
                coords: p.coords,
                centroid: c,
            })
            .collect();
        Ok(Self {
            m,
            centroids: centroids.centroids.clone(),
            windows: embedded,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// τ-shift lookup against the stored assignments (see
    /// [`crate::embed::lookup::serving_window`] for the rule).
    pub fn lookup(&self, t: usize) -> Result<[f64; 2]> {
        let tau = super::lookup::serving_window(t, self.m, self.windows.len())?;
        Ok(self.centroids[self.windows[tau - 1].centroid])
    }

    /// Largest sample index servable by [`Self::lookup`], or None when the
    /// embedding has fewer than two windows.
    pub fn max_lookup_t(&self) -> Option<usize> {
        if self.windows.len() < 2 {
            return None;
        }
        Some((self.windows.len() + 1) * self.m - 1)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "m {}", self.m);
        let _ = writeln!(out, "k {}", self.k());
        let _ = writeln!(out, "windows {}", self.windows.len());
        for (i, c) in self.centroids.iter().enumerate() {
            let _ = writeln!(out, "centroid {i} {} {}", c[0], c[1]);
        }
        for w in &self.windows {
            let _ = writeln!(
                out,
                "window {} {} {} {} {}",
                w.tau, w.vector_hash, w.coords[0], w.coords[1], w.centroid
            );
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();

        let mut next = |expect: &str| -> Result<(usize, Vec<String>)> {
            let (i, line) = lines.next().ok_or_else(|| Error::Header {
                path: path.to_path_buf(),
                msg: format!("truncated: expected {expect}"),
            })?;
            Ok((i + 1, line.split_whitespace().map(String::from).collect()))
        };

        let (_, magic) = next("magic line")?;
        if magic.join(" ") != MAGIC {
            return Err(Error::Header {
                path: path.to_path_buf(),
                msg: format!("expected `{MAGIC}`, found `{}`", magic.join(" ")),
            });
        }
        let m = parse_kv(path, next("m line")?, "m")? as usize;
        let k = parse_kv(path, next("k line")?, "k")? as usize;
        let n = parse_kv(path, next("windows line")?, "windows")? as usize;

        let mut centroids = Vec::with_capacity(k);
        for i in 0..k {
            let (line_no, f) = next("centroid line")?;
            if f.len() != 4 || f[0] != "centroid" || f[1] != i.to_string() {
                return Err(parse_err(path, line_no, "expected `centroid <i> <x> <y>`"));
            }
            centroids.push([
                parse_f64(path, line_no, &f[2])?,
                parse_f64(path, line_no, &f[3])?,
            ]);
        }
        let mut windows = Vec::with_capacity(n);
        for i in 0..n {
            let (line_no, f) = next("window line")?;
            if f.len() != 6 || f[0] != "window" {
                return Err(parse_err(path, line_no, "expected `window <tau> <hash> <x> <y> <c>`"));
            }
            let tau: usize = f[1]
                .parse()
                .map_err(|_| parse_err(path, line_no, "bad tau"))?;
            if tau != i + 1 {
                return Err(parse_err(path, line_no, "window lines must be in τ order"));
            }
            let centroid: usize = f[5]
                .parse()
                .map_err(|_| parse_err(path, line_no, "bad centroid index"))?;
            if centroid >= k {
                return Err(parse_err(path, line_no, "centroid index out of range"));
            }
            let coords = [
                parse_f64(path, line_no, &f[3])?,
                parse_f64(path, line_no, &f[4])?,
            ];
            if !coords[0].is_finite() || !coords[1].is_finite() {
                return Err(parse_err(path, line_no, "non-finite coordinates"));
            }
            windows.push(EmbeddedWindow {
                tau,
                vector_hash: f[2].clone(),
                coords,
                centroid,
            });
        }
        Ok(Self {
            m,
            centroids,
            windows,
        })
    }

    /// Verifies that `windows` are exactly the vectors this artifact was
    /// built from (by canonical hash, position-wise over the shared prefix
    /// length).
    pub fn verify_windows(&self, windows: &[ActionWindow]) -> Result<()> {
        let upto = self.windows.len().min(windows.len());
        for (mine, theirs) in self.windows[..upto].iter().zip(windows) {
            if mine.tau != theirs.tau {
                return Err(Error::contract(format!(
                    "window numbering mismatch at τ = {}", theirs.tau
                )));
            }
            if mine.vector_hash != window_hash(&theirs.vector) {
                return Err(Error::contract(format!(
                    "window τ = {} does not match the embedded data (hash mismatch)",
                    mine.tau
                )));
            }
        }
        Ok(())
    }
}

fn parse_kv(path: &Path, (line_no, fields): (usize, Vec<String>), key: &str) -> Result<u64> {
    if fields.len() != 2 || fields[0] != key {
        return Err(parse_err(path, line_no, format!("expected `{key} <value>`")));
    }
    fields[1]
        .parse()
        .map_err(|_| parse_err(path, line_no, format!("bad {key} value")))
}

fn parse_f64(path: &Path, line: usize, raw: &str) -> Result<f64> {
    raw.parse()
        .map_err(|_| parse_err(path, line, format!("bad float `{raw}`")))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}
