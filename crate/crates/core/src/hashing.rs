//! Pairwise-independent hashing of output entries.
//!
//! Each side of the product gets its own index hash, `h_a` for rows and
//! `h_b` for columns, drawn from the degree-one polynomial family modulo the
//! Mersenne prime `2^61 - 1` and reduced modulo the bucket count `kappa`. An
//! entry `(i, j)` lands in bucket `(h_a(i) + h_b(j)) mod kappa`. The entry
//! hash is only ever exposed through its two halves, which is what lets a
//! worker enumerate exactly the entries falling into its bucket range.
//!
//! The sign hash used by the Count-Sketch estimator is a separate linear
//! function over the whole entry, mapped to `{-1, +1}` through its low bit.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CropError, Result};
use crate::sparse::{Entry, Index};

/// The Mersenne prime `2^61 - 1`.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

#[inline]
fn mod_mersenne(x: u128) -> u64 {
    let p = MERSENNE_61 as u128;
    let folded = (x & p) + (x >> 61);
    let folded = (folded & p) + (folded >> 61);
    let r = folded as u64;
    if r >= MERSENNE_61 {
        r - MERSENNE_61
    } else {
        r
    }
}

/// Parameters of one hash draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashConfig {
    pub kappa: usize,
    pub seed: u64,
}

impl HashConfig {
    pub fn new(kappa: usize, seed: u64) -> Self {
        HashConfig { kappa, seed }
    }

    /// Modulus of the polynomial family.
    pub const fn prime(&self) -> u64 {
        MERSENNE_61
    }

    pub fn validate(&self) -> Result<()> {
        if self.kappa == 0 {
            return Err(CropError::Config("kappa must be at least 1".into()));
        }
        if self.kappa as u64 >= MERSENNE_61 {
            return Err(CropError::Config(format!(
                "kappa {} must be smaller than the hash prime",
                self.kappa
            )));
        }
        Ok(())
    }
}

/// `x -> ((alpha * x + beta) mod p) mod kappa` with `alpha != 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexHash {
    alpha: u64,
    beta: u64,
    kappa: u64,
}

impl IndexHash {
    fn draw(rng: &mut ChaCha8Rng, kappa: usize) -> Self {
        IndexHash {
            alpha: rng.random_range(1..MERSENNE_61),
            beta: rng.random_range(0..MERSENNE_61),
            kappa: kappa as u64,
        }
    }

    pub fn from_coefficients(alpha: u64, beta: u64, kappa: usize) -> Result<Self> {
        if alpha == 0 || alpha >= MERSENNE_61 || beta >= MERSENNE_61 {
            return Err(CropError::Config(format!(
                "index hash coefficients ({alpha}, {beta}) out of range"
            )));
        }
        HashConfig::new(kappa, 0).validate()?;
        Ok(IndexHash {
            alpha,
            beta,
            kappa: kappa as u64,
        })
    }

    pub fn coefficients(&self) -> (u64, u64) {
        (self.alpha, self.beta)
    }

    pub fn kappa(&self) -> usize {
        self.kappa as usize
    }

    #[inline]
    pub fn hash(&self, x: Index) -> usize {
        let v = mod_mersenne(self.alpha as u128 * x as u128 + self.beta as u128);
        (v % self.kappa) as usize
    }
}

/// Linear hash of a whole entry onto `{-1, +1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignHash {
    c_row: u64,
    c_col: u64,
    c0: u64,
}

impl SignHash {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        SignHash {
            c_row: rng.random_range(0..MERSENNE_61),
            c_col: rng.random_range(0..MERSENNE_61),
            c0: rng.random_range(0..MERSENNE_61),
        }
    }

    pub fn from_coefficients(c_row: u64, c_col: u64, c0: u64) -> Result<Self> {
        if c_row >= MERSENNE_61 || c_col >= MERSENNE_61 || c0 >= MERSENNE_61 {
            return Err(CropError::Config(
                "sign hash coefficients out of range".into(),
            ));
        }
        Ok(SignHash { c_row, c_col, c0 })
    }

    pub fn coefficients(&self) -> (u64, u64, u64) {
        (self.c_row, self.c_col, self.c0)
    }

    #[inline]
    pub fn sign(&self, e: Entry) -> f64 {
        let x = self.c_row as u128 * e.row as u128
            + self.c_col as u128 * e.col as u128
            + self.c0 as u128;
        if mod_mersenne(x) & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// The three hash functions shared by every worker of one sketch instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntryHasher {
    seed: u64,
    row: IndexHash,
    col: IndexHash,
    sign: SignHash,
}

/// Draws `(h_a, h_b, s)` deterministically from `config.seed`.
pub fn make_hashes(config: HashConfig) -> Result<EntryHasher> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let row = IndexHash::draw(&mut rng, config.kappa);
    let col = IndexHash::draw(&mut rng, config.kappa);
    let sign = SignHash::draw(&mut rng);
    Ok(EntryHasher {
        seed: config.seed,
        row,
        col,
        sign,
    })
}

/// `(h_a(row) + h_b(col)) mod kappa`.
#[inline]
pub fn entry_hash(h_a: &IndexHash, h_b: &IndexHash, e: Entry) -> usize {
    debug_assert_eq!(h_a.kappa, h_b.kappa);
    let s = h_a.hash(e.row) + h_b.hash(e.col);
    let k = h_a.kappa as usize;
    if s >= k {
        s - k
    } else {
        s
    }
}

impl EntryHasher {
    pub fn from_parts(seed: u64, row: IndexHash, col: IndexHash, sign: SignHash) -> Result<Self> {
        if row.kappa != col.kappa {
            return Err(CropError::Config(
                "row and column hashes disagree on kappa".into(),
            ));
        }
        Ok(EntryHasher {
            seed,
            row,
            col,
            sign,
        })
    }

    pub fn kappa(&self) -> usize {
        self.row.kappa as usize
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row_hash(&self) -> &IndexHash {
        &self.row
    }

    pub fn col_hash(&self) -> &IndexHash {
        &self.col
    }

    pub fn sign_hash(&self) -> &SignHash {
        &self.sign
    }

    #[inline]
    pub fn bucket(&self, e: Entry) -> usize {
        entry_hash(&self.row, &self.col, e)
    }

    #[inline]
    pub fn sign(&self, e: Entry) -> f64 {
        self.sign.sign(e)
    }

    /// Text description that reconstructs the identical functions elsewhere.
    pub fn to_text(&self) -> String {
        let mut s = String::from("crop-hash v1\n");
        let _ = writeln!(s, "kappa {}", self.kappa());
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "row {} {}", self.row.alpha, self.row.beta);
        let _ = writeln!(s, "col {} {}", self.col.alpha, self.col.beta);
        let _ = writeln!(
            s,
            "sign {} {} {}",
            self.sign.c_row, self.sign.c_col, self.sign.c0
        );
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .enumerate();
        let bad = |line: usize, msg: &str| CropError::parse("hash description", line, msg);
        match lines.next() {
            Some((_, "crop-hash v1")) => {}
            Some((n, _)) => return Err(bad(n + 1, "expected `crop-hash v1`")),
            None => return Err(bad(1, "empty hash description")),
        }
        let mut field = |name: &str, count: usize| -> Result<Vec<u64>> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| bad(0, &format!("missing `{name}`")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(name) {
                return Err(bad(n + 1, &format!("expected `{name}`")));
            }
            let vals = parts
                .map(|p| {
                    p.parse::<u64>()
                        .map_err(|_| bad(n + 1, &format!("bad number `{p}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != count {
                return Err(bad(n + 1, &format!("`{name}` takes {count} values")));
            }
            Ok(vals)
        };
        let kappa = field("kappa", 1)?[0] as usize;
        let seed = field("seed", 1)?[0];
        let r = field("row", 2)?;
        let c = field("col", 2)?;
        let s = field("sign", 3)?;
        EntryHasher::from_parts(
            seed,
            IndexHash::from_coefficients(r[0], r[1], kappa)?,
            IndexHash::from_coefficients(c[0], c[1], kappa)?,
            SignHash::from_coefficients(s[0], s[1], s[2])?,
        )
    }
}
