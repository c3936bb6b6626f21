//! F/S pattern strings.
//!
//! A pattern assigns each of the N layers a role: `F` layers compute
//! fresh top-k indices with their own indexer, `S` layers reuse the
//! indices of the nearest preceding `F` layer. The first layer is
//! always `F` so there is something to reuse. Layer indices are
//! 1-based everywhere in this module, matching the usual reading of a
//! pattern string's character positions.

use crate::error::{Error, Result};
use std::fmt;
use std::path::Path;

/// Role of one layer in a pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Runs its own indexer and overwrites the shared index buffer.
    Full,
    /// Skips the indexer and reads the shared index buffer.
    Shared,
}

/// A validated length-N F/S assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternString {
    roles: Vec<Role>,
}

impl PatternString {
    /// Parse and validate `text` as a pattern for an N-layer model.
    ///
    /// Rules: exactly `n` characters, each `F` or `S`, first layer `F`.
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        let text = text.trim();
        if text.len() != n {
            return Err(Error::InvalidPattern {
                reason: format!("length {} does not match layer count {}", text.len(), n),
            });
        }
        let mut roles = Vec::with_capacity(n);
        for (i, ch) in text.chars().enumerate() {
            match ch {
                'F' => roles.push(Role::Full),
                'S' => roles.push(Role::Shared),
                other => {
                    return Err(Error::InvalidPattern {
                        reason: format!("illegal character {other:?} at layer {}", i + 1),
                    })
                }
            }
        }
        if roles[0] != Role::Full {
            return Err(Error::InvalidPattern {
                reason: "first layer must be F to seed the initial indices".into(),
            });
        }
        Ok(PatternString { roles })
    }

    /// All-F pattern: every layer computes its own indices.
    pub fn all_full(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidPattern { reason: "pattern must have at least one layer".into() });
        }
        Ok(PatternString { roles: vec![Role::Full; n] })
    }

    /// Retain every `stride`-th layer's indexer starting at layer 1 and
    /// share all others: layers 1, 1+stride, 1+2*stride, ... are F.
    pub fn uniform_interleave(n: usize, stride: usize) -> Result<Self> {
        if n == 0 || stride == 0 {
            return Err(Error::InvalidPattern {
                reason: format!("uniform interleave needs n >= 1 and stride >= 1, got n={n} stride={stride}"),
            });
        }
        let roles = (0..n)
            .map(|i| if i % stride == 0 { Role::Full } else { Role::Shared })
            .collect();
        Ok(PatternString { roles })
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    /// Role of 1-based `layer`.
    pub fn role(&self, layer: usize) -> Role {
        self.roles[layer - 1]
    }

    pub fn is_full(&self, layer: usize) -> bool {
        self.role(layer) == Role::Full
    }

    /// Nearest preceding F layer for 1-based S layer `layer`.
    pub fn source_layer(&self, layer: usize) -> Result<usize> {
        if self.is_full(layer) {
            return Err(Error::NotSharedLayer { layer });
        }
        // Scan backwards; layer 1 is always F, so this terminates.
        let mut j = layer - 1;
        while !self.is_full(j) {
            j -= 1;
        }
        Ok(j)
    }

    /// Number of F layers.
    pub fn full_count(&self) -> usize {
        self.roles.iter().filter(|&&r| r == Role::Full).count()
    }

    /// Number of S layers.
    pub fn shared_count(&self) -> usize {
        self.len() - self.full_count()
    }

    /// (F count, S count, F count / N).
    pub fn retention_stats(&self) -> (usize, usize, f64) {
        let f = self.full_count();
        (f, self.len() - f, f as f64 / self.len() as f64)
    }

    /// Copy with 1-based `layer` flipped to S. Errors on layer 1.
    pub fn with_shared(&self, layer: usize) -> Result<Self> {
        if layer == 1 {
            return Err(Error::InvalidPattern {
                reason: "layer 1 must stay F".into(),
            });
        }
        if layer == 0 || layer > self.len() {
            return Err(Error::InvalidPattern {
                reason: format!("layer {layer} out of range 1..={}", self.len()),
            });
        }
        let mut roles = self.roles.clone();
        roles[layer - 1] = Role::Shared;
        Ok(PatternString { roles })
    }

    /// 1-based indices of all F layers.
    pub fn full_layers(&self) -> Vec<usize> {
        (1..=self.len()).filter(|&l| self.is_full(l)).collect()
    }

    /// Read the first pattern from a pattern file: plain F/S text, one
    /// pattern per line, `#` starts a comment.
    pub fn from_file(path: &Path, n: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            return Self::parse(line, n);
        }
        Err(Error::InvalidPattern { reason: format!("no pattern found in {}", path.display()) })
    }

    /// Write one pattern per line.
    pub fn to_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, format!("{self}\n"))?;
        Ok(())
    }
}

impl fmt::Display for PatternString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for role in &self.roles {
            f.write_str(match role {
                Role::Full => "F",
                Role::Shared => "S",
            })?;
        }
        Ok(())
    }
}
