//! Finite-window positive multipliers over the shift, the skew product
//! they drive, and Birkhoff log-sums.
//!
//! A multiplier of depth `t` reads the window `[-t, t]` of the base point
//! and returns a strictly positive real; it is stored as a table of
//! `2^(2t+1)` values indexed by the window pattern. Because the base
//! measure is the uniform product measure, the expectation of the log
//! multiplier is an exact finite average over patterns.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbolic::{shift, SymbolPoint};

/// Serialized form: depth plus the value table in pattern order
/// (pattern read as a binary number, lowest window index most
/// significant).
#[derive(Serialize, Deserialize)]
struct TableRepr {
    depth: u32,
    values: Vec<f64>,
}

/// A positive multiplier of finite depth `t`, tabulated over all
/// `2^(2t+1)` window patterns. Log values are cached alongside the
/// linear ones since Birkhoff sums dominate runtime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct LambdaTable {
    depth: u32,
    values: Vec<f64>,
    logs: Vec<f64>,
}

impl TryFrom<TableRepr> for LambdaTable {
    type Error = Error;
    fn try_from(r: TableRepr) -> Result<Self> {
        LambdaTable::new(r.depth, r.values)
    }
}

impl From<LambdaTable> for TableRepr {
    fn from(t: LambdaTable) -> TableRepr {
        TableRepr {
            depth: t.depth,
            values: t.values,
        }
    }
}

impl LambdaTable {
    /// Validates and builds a table of the given depth.
    pub fn new(depth: u32, values: Vec<f64>) -> Result<Self> {
        if depth > 15 {
            return Err(Error::InvalidTable(format!(
                "depth {depth} exceeds the supported maximum of 15"
            )));
        }
        let expect = 1usize << (2 * depth + 1);
        if values.len() != expect {
            return Err(Error::InvalidTable(format!(
                "depth {depth} needs {expect} values, got {}",
                values.len()
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidTable(format!(
                    "value {v} at pattern {i:#b} is not strictly positive and finite"
                )));
            }
        }
        let logs = values.iter().map(|v| v.ln()).collect();
        Ok(LambdaTable {
            depth,
            values,
            logs,
        })
    }

    /// Constant multiplier of the given depth.
    pub fn constant(depth: u32, value: f64) -> Result<Self> {
        Self::new(depth, vec![value; 1usize << (2 * depth + 1)])
    }

    /// The fair-coin two-value table used throughout the test corpus:
    /// value 2 on `w^(0) = 0` and 1/3 on `w^(0) = 1`.
    pub fn contracting_example() -> Self {
        Self::new(0, vec![2.0, 1.0 / 3.0]).unwrap()
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn log_values(&self) -> &[f64] {
        &self.logs
    }

    /// Value at an explicit window pattern.
    pub fn value_at_pattern(&self, pattern: usize) -> f64 {
        self.values[pattern]
    }

    /// Multiplier at the point: the table entry for the pattern
    /// `w^(-t) .. w^(t)`.
    pub fn eval(&self, w: &SymbolPoint) -> Result<f64> {
        Ok(self.values[w.pattern(0, self.depth)?])
    }

    /// Log multiplier at the point.
    pub fn log_eval(&self, w: &SymbolPoint) -> Result<f64> {
        Ok(self.logs[w.pattern(0, self.depth)?])
    }

    /// Log multiplier at the `j`-th shift of the point, read in place.
    pub fn log_eval_at(&self, w: &SymbolPoint, j: i64) -> Result<f64> {
        Ok(self.logs[w.pattern(j, self.depth)?])
    }

    /// The exact expectation of the log multiplier under the uniform
    /// product measure: all window patterns are equiprobable, so this is
    /// a plain average over the table.
    pub fn expected_log(&self) -> f64 {
        self.logs.iter().sum::<f64>() / self.logs.len() as f64
    }

    /// The reciprocal table, realizing the fiber contraction of the
    /// inverse map; negates `expected_log`.
    pub fn inverted(&self) -> LambdaTable {
        LambdaTable::new(self.depth, self.values.iter().map(|v| 1.0 / v).collect())
            .expect("reciprocal of a valid table is valid")
    }

    /// Largest spread of the log values over groups of patterns that
    /// agree on the central `[-target, target]` window, together with the
    /// central pattern attaining it.
    pub fn log_oscillation_at_depth(&self, target: u32) -> (f64, usize) {
        assert!(target <= self.depth);
        let shrink = (self.depth - target) as usize;
        let groups = 1usize << (2 * target + 1);
        let mut worst = (0.0f64, 0usize);
        let mut min = vec![f64::INFINITY; groups];
        let mut max = vec![f64::NEG_INFINITY; groups];
        for (idx, &l) in self.logs.iter().enumerate() {
            let g = (idx >> shrink) & (groups - 1);
            min[g] = min[g].min(l);
            max[g] = max[g].max(l);
        }
        for g in 0..groups {
            let osc = max[g] - min[g];
            if osc > worst.0 {
                worst = (osc, g);
            }
        }
        worst
    }

    /// Compresses the table to a smaller depth by conditional
    /// log-averaging: the compressed log value at a central pattern is
    /// the mean of the log values over all extensions of that pattern.
    ///
    /// Preserves `expected_log` exactly and keeps every compressed value
    /// within the depth-`target` log-oscillation of the source. Rejected
    /// when that oscillation is not below `-expected_log / 2` (then the
    /// compressed table could not track the source closely enough for the
    /// deviation analysis downstream).
    pub fn compress(&self, target: u32) -> Result<LambdaTable> {
        if target > self.depth {
            return Err(Error::InvalidTable(format!(
                "cannot compress depth {} up to depth {target}",
                self.depth
            )));
        }
        let a = self.expected_log();
        if a >= 0.0 {
            return Err(Error::InvalidModel(format!(
                "expected log multiplier is {a}; compression requires mean contraction"
            )));
        }
        let threshold = -a / 2.0;
        let (osc, worst_pattern) = self.log_oscillation_at_depth(target);
        if osc >= threshold {
            return Err(Error::DepthTooSmall {
                target,
                pattern: worst_pattern,
                oscillation: osc,
                threshold,
            });
        }
        if target == self.depth {
            return Ok(self.clone());
        }
        let shrink = (self.depth - target) as usize;
        let groups = 1usize << (2 * target + 1);
        let mut sums = vec![0.0f64; groups];
        for (idx, &l) in self.logs.iter().enumerate() {
            sums[(idx >> shrink) & (groups - 1)] += l;
        }
        let count = (self.logs.len() / groups) as f64;
        let values: Vec<f64> = sums.iter().map(|s| (s / count).exp()).collect();
        // Geometric means stay inside the source's value range.
        debug_assert!(values.iter().all(
            |&v| v >= self.values.iter().cloned().fold(f64::INFINITY, f64::min) * (1.0 - 1e-12)
        ));
        LambdaTable::new(target, values)
    }

    /// Random table with log values uniform in `[log_lo, log_hi]`.
    pub fn random_log_uniform<R: Rng + ?Sized>(
        depth: u32,
        log_lo: f64,
        log_hi: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let n = 1usize << (2 * depth + 1);
        let values = (0..n)
            .map(|_| rng.random_range(log_lo..log_hi).exp())
            .collect();
        Self::new(depth, values)
    }
}

/// A point of the skew product: base point plus fiber coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewState {
    pub w: SymbolPoint,
    pub x: f64,
}

impl SkewState {
    pub fn new(w: SymbolPoint, x: f64) -> Self {
        SkewState { w, x }
    }
}

/// One application of the skew product `f(w, x) = (T(w), lambda(w) x)`.
pub fn skew_step(table: &LambdaTable, s: &SkewState) -> Result<SkewState> {
    let lambda = table.eval(&s.w)?;
    Ok(SkewState {
        w: shift(&s.w),
        x: lambda * s.x,
    })
}

/// Partial sums of the log multiplier along a sequence of base points:
/// `A_0 = 0`, `A_{j+1} = A_j + log lambda(w_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BirkhoffSums {
    sums: Vec<f64>,
}

impl BirkhoffSums {
    /// Wraps precomputed sums; the first entry must be zero.
    pub fn from_raw(sums: Vec<f64>) -> Result<Self> {
        match sums.first() {
            Some(&0.0) => Ok(BirkhoffSums { sums }),
            Some(&first) => Err(Error::InvalidParameters(format!(
                "Birkhoff sums must start at 0, got {first}"
            ))),
            None => Err(Error::InvalidParameters(
                "Birkhoff sums cannot be empty".into(),
            )),
        }
    }

    /// All sums `A_0 ..= A_J`.
    pub fn as_slice(&self) -> &[f64] {
        &self.sums
    }

    /// Number of increments `J` (one less than the number of sums).
    pub fn steps(&self) -> usize {
        self.sums.len() - 1
    }
}

/// Birkhoff log-sums along explicit points: `A_j = sum_{p<j} log lambda(w_p)`.
///
/// Returns `J+1` sums for `J = ws.len() - 1`; the last point contributes
/// no increment. Reports the offending index when a window is too small.
pub fn birkhoff_log_sums(table: &LambdaTable, ws: &[SymbolPoint]) -> Result<BirkhoffSums> {
    let mut sums = Vec::with_capacity(ws.len());
    let mut acc = 0.0;
    sums.push(acc);
    for (j, w) in ws.iter().enumerate().take(ws.len().saturating_sub(1)) {
        acc += table.log_eval(w).map_err(|e| match e {
            Error::InsufficientResolution { op, index, detail } => Error::InsufficientResolution {
                op,
                index,
                detail: format!("{detail} (trajectory index {j})"),
            },
            other => other,
        })?;
        sums.push(acc);
    }
    Ok(BirkhoffSums { sums })
}

/// Birkhoff log-sums along the exact orbit of a single point:
/// `A_j = sum_{p<j} log lambda(T^p(w))` for `j = 0..=steps`.
pub fn birkhoff_log_sums_orbit(
    table: &LambdaTable,
    w: &SymbolPoint,
    steps: usize,
) -> Result<BirkhoffSums> {
    let mut sums = Vec::with_capacity(steps + 1);
    let mut acc = 0.0;
    sums.push(acc);
    for p in 0..steps {
        acc += table.log_eval_at(w, p as i64)?;
        sums.push(acc);
    }
    Ok(BirkhoffSums { sums })
}
