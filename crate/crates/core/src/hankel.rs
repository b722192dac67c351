//! Block-Hankel matrices, persistency-of-excitation certificates and the
//! non-zero-entry accounting of the two data-driven predictors.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, RANK_RTOL};
use crate::model::RealTrajectory;

/// Block-Hankel matrix with `depth` block rows and `T - depth + 1` columns.
pub fn hankel(data: &[DVector<f64>], depth: usize) -> Result<DMatrix<f64>> {
    let t = data.len();
    if depth == 0 {
        return Err(Error::Precondition("Hankel depth must be positive".into()));
    }
    if t < depth {
        return Err(Error::TooShort { needed: depth, got: t });
    }
    let d = data[0].len();
    if data.iter().any(|v| v.len() != d) {
        return Err(dim_err("Hankel data dimensions differ"));
    }
    let cols = t - depth + 1;
    let mut h = DMatrix::zeros(depth * d, cols);
    for c in 0..cols {
        for i in 0..depth {
            h.view_mut((i * d, c), (d, 1)).copy_from(&data[c + i]);
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeCertificate {
    pub rank: usize,
    pub required: usize,
    pub pass: bool,
    pub columns: usize,
    pub singular_values: Vec<f64>,
    pub condition_number: f64,
}

impl PeCertificate {
    pub fn of(m: &DMatrix<f64>, required: usize) -> Self {
        let s = linalg::singular_values(m);
        let rank = linalg::rank_of_spectrum(&s, RANK_RTOL);
        let condition_number = match (s.first(), s.get(required.saturating_sub(1))) {
            (Some(&a), Some(&b)) if b > 0.0 && required > 0 => a / b,
            _ => f64::INFINITY,
        };
        Self { rank, required, pass: rank == required && required == m.nrows(), columns: m.ncols(), singular_values: s, condition_number }
    }

    pub fn require(&self) -> Result<()> {
        if self.pass {
            Ok(())
        } else {
            Err(Error::NotPersistentlyExciting { rank: self.rank, required: self.required })
        }
    }
}

/// Full row rank test of H_order(u).
pub fn is_persistently_exciting(u: &[DVector<f64>], order: usize) -> Result<PeCertificate> {
    let h = hankel(u, order)?;
    Ok(PeCertificate::of(&h, h.nrows()))
}

/// Stack [H_{ℓ+N}(u_{[1,T]}); H_ℓ(y_{[1,T-N]})] used by the undisturbed predictor.
pub fn pe_stack(data: &RealTrajectory, lag: usize, horizon: usize) -> Result<DMatrix<f64>> {
    if horizon == 0 || lag == 0 {
        return Err(Error::Precondition("lag and horizon must be positive".into()));
    }
    let t = data.len();
    if t < lag + horizon {
        return Err(Error::TooShort { needed: lag + horizon, got: t });
    }
    let hu = hankel(&data.u, lag + horizon)?;
    let hy = hankel(&data.y[..t - horizon], lag)?;
    Ok(linalg::vstack(&[&hu, &hy]))
}

/// Rank certificate of that stack; required rank (ℓ+N) n_u + ℓ n_y.
pub fn check_stack_pe(data: &RealTrajectory, lag: usize, horizon: usize) -> Result<PeCertificate> {
    let m = pe_stack(data, lag, horizon)?;
    let required = (lag + horizon) * data.n_u + lag * data.n_y;
    Ok(PeCertificate::of(&m, required))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    U,
    Y,
    W,
}

/// Key of a cached block H_depth(signal_{[from, to]}), times absolute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct BlockKey {
    pub signal: Signal,
    pub from: i64,
    pub to: i64,
    pub depth: usize,
}

/// Recorded trajectory with eagerly built Hankel blocks.
#[derive(Debug, Clone)]
pub struct HankelSystem {
    pub data: RealTrajectory,
    blocks: BTreeMap<BlockKey, DMatrix<f64>>,
    pub certificates: Vec<(String, PeCertificate)>,
}

impl HankelSystem {
    pub fn new(data: RealTrajectory, keys: &[BlockKey]) -> Result<Self> {
        let mut s = Self { data, blocks: BTreeMap::new(), certificates: Vec::new() };
        for k in keys {
            let m = s.build(k)?;
            s.blocks.insert(*k, m);
        }
        Ok(s)
    }

    fn build(&self, k: &BlockKey) -> Result<DMatrix<f64>> {
        let series = match k.signal {
            Signal::U => &self.data.u,
            Signal::Y => &self.data.y,
            Signal::W => self.data.w.as_ref().ok_or_else(|| dim_err("data carry no disturbance record"))?,
        };
        let (a, b) = (k.from - self.data.start, k.to - self.data.start);
        if a < 0 || b < a || b as usize >= series.len() {
            return Err(Error::TooShort { needed: (b + 1).max(0) as usize, got: series.len() });
        }
        hankel(&series[a as usize..=b as usize], k.depth)
    }

    pub fn block(&self, k: &BlockKey) -> Result<&DMatrix<f64>> {
        self.blocks.get(k).ok_or_else(|| Error::Precondition(format!("block {k:?} not built")))
    }

    /// Row range `rows` (in block rows) of a cached block.
    pub fn block_rows(&self, k: &BlockKey, first: usize, count: usize) -> Result<DMatrix<f64>> {
        let m = self.block(k)?;
        let d = m.nrows() / k.depth;
        Ok(m.rows(first * d, count * d).into_owned())
    }

    pub fn n_g(&self) -> usize {
        self.blocks.values().map(|m| m.ncols()).min().unwrap_or(0)
    }

    pub fn certify(&mut self, name: &str, cert: PeCertificate) {
        self.certificates.push((name.to_string(), cert));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorForm {
    /// Joint (u, y, w) Hankel replicated per basis index.
    Joint,
    /// Undisturbed mean stack plus one shortened stack per basis index.
    Shortened,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountConvention {
    /// Blocks exactly as assembled: ℓ-1+N-k' block rows per shortened stack.
    #[default]
    AssembledBlocks,
    /// ℓ+N-k' block rows per shortened stack.
    FullInitWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HankelDims {
    pub n_u: usize,
    pub n_y: usize,
    pub n_w: usize,
    pub lag: usize,
    pub horizon: usize,
    pub basis_len: usize,
    pub n_g: usize,
}

/// Non-zero Hankel entries handled by one OCP instance of each scheme.
pub fn count_nonzero_entries(scheme: PredictorForm, d: &HankelDims, conv: CountConvention) -> usize {
    let (l, n) = (d.lag, d.horizon);
    match scheme {
        PredictorForm::Joint => (l + n) * (d.n_u + d.n_y + d.n_w) * d.n_g * d.basis_len,
        PredictorForm::Shortened => {
            let io = d.n_u + d.n_y;
            let mut total = (l + n) * io * d.n_g;
            let per_step = (d.basis_len - 1) / n.max(1);
            for kp in 0..n {
                let rows = match conv {
                    CountConvention::AssembledBlocks => l - 1 + n - kp,
                    CountConvention::FullInitWindow => l + n - kp,
                };
                total += per_step * rows * io * d.n_g;
            }
            total
        }
    }
}

/// Asymptotic shortened / joint count ratio (n_u+n_y) / (2(n_u+2n_y)) for n_w = n_y.
pub fn asymptotic_count_ratio(n_u: usize, n_y: usize) -> f64 {
    (n_u + n_y) as f64 / (2 * (n_u + 2 * n_y)) as f64
}

pub fn count_structural_nonzeros(m: &DMatrix<f64>) -> usize {
    m.iter().filter(|&&x| x != 0.0).count()
}
