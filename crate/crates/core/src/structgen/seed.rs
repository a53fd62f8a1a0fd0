use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 2x2 probability matrix `[[a, b], [c, d]]` whose Kronecker powers give
/// the edge-cell distribution. Rows index the source bit, columns the
/// destination bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedMatrix {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl SeedMatrix {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let s = SeedMatrix { a, b, c, d };
        s.validate()?;
        Ok(s)
    }

    pub fn uniform() -> Self {
        SeedMatrix { a: 0.25, b: 0.25, c: 0.25, d: 0.25 }
    }

    pub fn validate(&self) -> Result<()> {
        let entries = self.entries();
        if entries.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Fit(format!("seed matrix has a negative or non-finite entry: {entries:?}")));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Fit(format!("seed matrix entries sum to {sum}, not 1")));
        }
        Ok(())
    }

    pub fn entries(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    /// Probability that a level picks the upper row half (`a + b`).
    pub fn p(&self) -> f64 {
        self.a + self.b
    }

    /// Probability that a level picks the left column half (`a + c`).
    pub fn q(&self) -> f64 {
        self.a + self.c
    }
}

/// Kronecker exponents for an `N x M` adjacency.
///
/// The cascade has `max(n, m)` levels: the first `square_levels` use the
/// full seed, the remaining ones pad the longer side with the matching
/// marginal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapePlan {
    pub n: u32,
    pub m: u32,
    pub square_levels: u32,
    pub row_pad_levels: u32,
    pub col_pad_levels: u32,
}

impl ShapePlan {
    pub fn levels(&self) -> u32 {
        self.n.max(self.m)
    }

    /// Number of cells in the implied `2^n x 2^m` grid.
    pub fn cells(&self) -> u128 {
        1u128 << (self.n + self.m)
    }
}

pub fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// Shape of the Kronecker grid covering `rows x cols`.
pub fn plan_shape(rows: u64, cols: u64) -> Result<ShapePlan> {
    if rows == 0 || cols == 0 {
        return Err(Error::Config(format!("partite sizes must be positive, got {rows} x {cols}")));
    }
    let n = ceil_log2(rows);
    let m = ceil_log2(cols);
    if n + m > 64 {
        return Err(Error::Capacity(format!("a {rows} x {cols} grid needs {} address bits, at most 64 are supported", n + m)));
    }
    let square_levels = n.min(m);
    Ok(ShapePlan {
        n,
        m,
        square_levels,
        row_pad_levels: n - square_levels,
        col_pad_levels: m - square_levels,
    })
}
