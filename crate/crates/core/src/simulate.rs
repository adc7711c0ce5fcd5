//! Exact Gaussian path sampling on a grid.
//!
//! Paths are `L z` with `L` the Cholesky factor of the Gram matrix over
//! `t_1, ..., t_N`; the value at `t_0 = 0` is stored explicitly. Replicate `m`
//! always draws from stream `(seed, m, role)`, and the factor is applied to
//! batches in a way that does not depend on the batch layout, so ensembles are
//! bit-identical for any worker count.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernels::{build_cov_matrix, CovKernel};
use crate::linalg::{factorize, CholeskyFactor};
use crate::rng::{stream_id, NormalStream, StreamRole};

/// Replicates transformed together by one `apply_batch` call.
const BATCH: usize = 16;

const MAGIC: &[u8; 8] = b"QLABENS\0";
const FORMAT_VERSION: u32 = 1;

/// `M` sampled paths, row-major `M × (N + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    grid: Grid,
    replicates: usize,
    values: Vec<f64>,
    kernel_id: String,
    seed: u64,
    role: StreamRole,
    drift_id: Option<String>,
}

impl PathEnsemble {
    pub fn from_values(grid: Grid, values: Vec<f64>, kernel_id: impl Into<String>, seed: u64) -> Result<Self> {
        let width = grid.steps() + 1;
        if values.is_empty() || values.len() % width != 0 {
            return Err(Error::GridMismatch(format!(
                "{} values do not form rows of length {width}",
                values.len()
            )));
        }
        Ok(Self {
            grid,
            replicates: values.len() / width,
            values,
            kernel_id: kernel_id.into(),
            seed,
            role: StreamRole::Process,
            drift_id: None,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn kernel_id(&self) -> &str {
        &self.kernel_id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn drift_id(&self) -> Option<&str> {
        self.drift_id.as_deref()
    }

    /// Stream id that produced replicate `m` (keyed by the master seed).
    pub fn replicate_stream(&self, m: usize) -> u64 {
        stream_id(m as u64, self.role)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Path `m` as `X(t_0), ..., X(t_N)`.
    pub fn path(&self, m: usize) -> &[f64] {
        let w = self.grid.steps() + 1;
        &self.values[m * w..(m + 1) * w]
    }

    pub fn paths(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.grid.steps() + 1)
    }

    /// `X_m(t_j)` across replicates.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.paths().map(|p| p[j]).collect()
    }

    /// Multiplies every value by `c`.
    pub fn scaled(mut self, c: f64) -> Self {
        self.values.iter_mut().for_each(|v| *v *= c);
        self
    }
}

fn zero_paths(grid: &Grid, m: usize, kernel_id: String, seed: u64) -> PathEnsemble {
    PathEnsemble {
        grid: *grid,
        replicates: m,
        values: vec![0.0; m * (grid.steps() + 1)],
        kernel_id,
        seed,
        role: StreamRole::Process,
        drift_id: None,
    }
}

/// `M` paths `L z` with `z` from the process streams of `seed`.
pub fn sample_paths(factor: &CholeskyFactor, grid: &Grid, m: usize, seed: u64, kernel_id: &str) -> Result<PathEnsemble> {
    let n = grid.steps();
    if factor.dim() != n {
        return Err(Error::GridMismatch(format!("factor has dimension {}, grid has {n} steps", factor.dim())));
    }
    if m == 0 {
        return Err(Error::domain("need at least one replicate"));
    }
    let mut ens = zero_paths(grid, m, kernel_id.to_string(), seed);
    let row = n + 1;
    ens.values.par_chunks_mut(BATCH * row).enumerate().for_each(|(b, block)| {
        let width = block.len() / row;
        let first = b * BATCH;
        let mut z = vec![0.0; n * width];
        let mut draws = vec![0.0; n];
        for k in 0..width {
            NormalStream::new(seed, (first + k) as u64, StreamRole::Process).fill_normal(&mut draws);
            for (i, &d) in draws.iter().enumerate() {
                z[i * width + k] = d;
            }
        }
        let mut out = vec![0.0; n * width];
        factor.apply_batch(&z, width, &mut out);
        for (k, path) in block.chunks_exact_mut(row).enumerate() {
            path[0] = 0.0;
            for i in 0..n {
                path[i + 1] = out[i * width + k];
            }
        }
    });
    Ok(ens)
}

/// Standard Brownian motion from cumulative `N(0, Δt)` increments on the
/// Brownian streams of `seed` (disjoint from the process streams).
pub fn sample_brownian(grid: &Grid, m: usize, seed: u64) -> Result<PathEnsemble> {
    if m == 0 {
        return Err(Error::domain("need at least one replicate"));
    }
    let mut ens = zero_paths(grid, m, "brownian_increments".into(), seed);
    ens.role = StreamRole::Brownian;
    let sd = grid.dt().sqrt();
    ens.values.par_chunks_mut(grid.steps() + 1).enumerate().for_each(|(r, path)| {
        let mut s = NormalStream::new(seed, r as u64, StreamRole::Brownian);
        let mut acc = 0.0;
        path[0] = 0.0;
        for v in &mut path[1..] {
            acc += sd * s.next_normal();
            *v = acc;
        }
    });
    Ok(ens)
}

/// Process ensemble and an independent Brownian ensemble from one master seed.
pub fn sample_coupled(
    factor: &CholeskyFactor,
    grid: &Grid,
    m: usize,
    seed: u64,
    kernel_id: &str,
) -> Result<(PathEnsemble, PathEnsemble)> {
    Ok((sample_paths(factor, grid, m, seed, kernel_id)?, sample_brownian(grid, m, seed)?))
}

/// Adds `drift(t_j)` to column `j` of every path.
pub fn add_deterministic_drift(
    mut ens: PathEnsemble,
    drift: impl Fn(f64) -> Result<f64>,
    drift_id: &str,
) -> Result<PathEnsemble> {
    let shift: Vec<f64> = ens.grid.times().into_iter().map(&drift).collect::<Result<_>>()?;
    for path in ens.values.chunks_exact_mut(shift.len()) {
        for (v, s) in path.iter_mut().zip(&shift) {
            *v += s;
        }
    }
    ens.drift_id = Some(match ens.drift_id.take() {
        Some(prev) => format!("{prev}+{drift_id}"),
        None => drift_id.to_string(),
    });
    Ok(ens)
}

type CacheKey = (String, usize, u64);
type CacheSlot = Arc<Mutex<Option<Arc<CholeskyFactor>>>>;

fn factor_cache() -> &'static Mutex<HashMap<CacheKey, CacheSlot>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, CacheSlot>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Cholesky factor of the Gram matrix of `kernel` on `grid`, computed once per
/// process and shared. `None` for kernels with identically zero covariance.
pub fn cached_factor(kernel: &CovKernel, grid: &Grid) -> Result<Option<Arc<CholeskyFactor>>> {
    kernel.validate()?;
    if is_degenerate(kernel) {
        return Ok(None);
    }
    let key = (kernel.id(), grid.n(), grid.steps() as u64);
    let slot = {
        let mut map = factor_cache().lock().expect("factor cache poisoned");
        map.entry(key).or_default().clone()
    };
    let mut guard = slot.lock().expect("factor slot poisoned");
    if let Some(f) = guard.as_ref() {
        return Ok(Some(f.clone()));
    }
    let f = Arc::new(factorize(&build_cov_matrix(kernel, grid)?)?);
    *guard = Some(f.clone());
    Ok(Some(f))
}

/// Zero covariance: a composite with `c = 0` and no further component.
fn is_degenerate(kernel: &CovKernel) -> bool {
    matches!(kernel, CovKernel::Composite { c, components, .. } if *c == 0.0 && components.len() == 1)
}

/// Samples `M` paths of `kernel` (including its mean, if any).
pub fn sample_kernel(kernel: &CovKernel, grid: &Grid, m: usize, seed: u64) -> Result<PathEnsemble> {
    let ens = match cached_factor(kernel, grid)? {
        Some(f) => sample_paths(&f, grid, m, seed, &kernel.id())?,
        None => {
            if m == 0 {
                return Err(Error::domain("need at least one replicate"));
            }
            zero_paths(grid, m, kernel.id(), seed)
        }
    };
    match kernel.mean_drift() {
        Some(d) => add_deterministic_drift(ens, |t| Ok(d.eval(t)), &d.id()),
        None => Ok(ens),
    }
}

/// `sample_kernel` plus an independent Brownian ensemble.
pub fn sample_kernel_coupled(kernel: &CovKernel, grid: &Grid, m: usize, seed: u64) -> Result<(PathEnsemble, PathEnsemble)> {
    Ok((sample_kernel(kernel, grid, m, seed)?, sample_brownian(grid, m, seed)?))
}

/// Binary layout (little endian): magic `QLABENS\0`, version `u32`, `n u64`,
/// `T f64`, `M u64`, seed `u64`, kernel id length `u32` plus UTF-8 bytes, then
/// `M × (N + 1)` `f64` values row by row.
pub fn write_binary(ens: &PathEnsemble, mut w: impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(ens.grid.n() as u64).to_le_bytes())?;
    w.write_all(&ens.grid.horizon().to_le_bytes())?;
    w.write_all(&(ens.replicates as u64).to_le_bytes())?;
    w.write_all(&ens.seed.to_le_bytes())?;
    let id = ens.kernel_id.as_bytes();
    w.write_all(&(id.len() as u32).to_le_bytes())?;
    w.write_all(id)?;
    let mut buf = Vec::with_capacity(ens.values.len() * 8);
    for v in &ens.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_binary(mut r: impl Read) -> Result<PathEnsemble> {
    fn take<const K: usize>(r: &mut impl Read) -> Result<[u8; K]> {
        let mut b = [0u8; K];
        r.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated header: {e}")))?;
        Ok(b)
    }
    if &take::<8>(&mut r)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(take(&mut r)?) as usize;
    let horizon = f64::from_le_bytes(take(&mut r)?);
    let m = u64::from_le_bytes(take(&mut r)?) as usize;
    let seed = u64::from_le_bytes(take(&mut r)?);
    let id_len = u32::from_le_bytes(take(&mut r)?) as usize;
    let mut id = vec![0u8; id_len];
    r.read_exact(&mut id).map_err(|e| Error::Format(format!("truncated kernel id: {e}")))?;
    let kernel_id = String::from_utf8(id).map_err(|e| Error::Format(format!("kernel id: {e}")))?;
    let grid = Grid::new(n, horizon)?;
    let count = m
        .checked_mul(grid.steps() + 1)
        .ok_or_else(|| Error::Format("ensemble size overflows".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(Error::Format(format!("expected {} value bytes, found {}", count * 8, bytes.len())));
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    PathEnsemble::from_values(grid, values, kernel_id, seed)
}

/// CSV with columns `replicate,j,t,value`.
pub fn write_csv(ens: &PathEnsemble, mut w: impl Write) -> Result<()> {
    let times = ens.grid.times();
    let mut line = String::new();
    writeln!(w, "replicate,j,t,value")?;
    for (m, path) in ens.paths().enumerate() {
        line.clear();
        for (j, v) in path.iter().enumerate() {
            writeln!(line, "{m},{j},{:.16e},{:.16e}", times[j], v).expect("write to String");
        }
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::PolynomialDrift;
    use crate::linalg::factorization_count;
    use crate::stats::{correlation, SampleSummary};

    fn heat(n: usize) -> (Grid, Arc<CholeskyFactor>) {
        let grid = Grid::new(n, 1.0).unwrap();
        (grid, cached_factor(&CovKernel::Heat, &grid).unwrap().unwrap())
    }

    #[test]
    fn same_seed_same_paths() {
        let (g, f) = heat(32);
        let a = sample_paths(&f, &g, 37, 5, "heat").unwrap();
        assert_eq!(a, sample_paths(&f, &g, 37, 5, "heat").unwrap());
        assert_ne!(a, sample_paths(&f, &g, 37, 6, "heat").unwrap());
        assert!(a.paths().all(|p| p[0] == 0.0));
    }

    #[test]
    fn replicate_does_not_depend_on_ensemble_size() {
        let (g, f) = heat(32);
        let small = sample_paths(&f, &g, 3, 11, "heat").unwrap();
        let big = sample_paths(&f, &g, 40, 11, "heat").unwrap();
        for m in 0..3 {
            assert_eq!(small.path(m), big.path(m));
        }
    }

    #[test]
    fn worker_count_does_not_matter() {
        let (g, f) = heat(64);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sample_kernel_coupled(&CovKernel::Heat, &g, 150, 3).unwrap())
        };
        let one = run(1);
        let four = run(4);
        let bits = |e: &PathEnsemble| e.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&one.0), bits(&four.0));
        assert_eq!(bits(&one.1), bits(&four.1));
        let direct = sample_paths(&f, &g, 150, 3, "heat").unwrap();
        assert_eq!(bits(&direct), bits(&one.0));
    }

    #[test]
    fn one_factorization_per_ensemble() {
        // A grid no other test uses, so the cache is cold for this key.
        let grid = Grid::new(48, 0.75).unwrap();
        let before = factorization_count();
        let ens = sample_kernel(&CovKernel::Heat, &grid, 200, 1).unwrap();
        assert_eq!(factorization_count() - before, 1);
        let _ = sample_kernel(&CovKernel::Heat, &grid, 50, 2).unwrap();
        assert_eq!(factorization_count() - before, 1);
        assert_eq!(ens.replicates(), 200);
    }

    #[test]
    fn heat_moments_at_one() {
        let (g, f) = heat(64);
        let ens = sample_paths(&f, &g, 10_000, 2026, "heat").unwrap();
        let s = SampleSummary::from_slice(&ens.column(64));
        let want = 1.0 / std::f64::consts::PI.sqrt();
        assert!((s.variance() - want).abs() <= 3.0 * s.se_variance(), "{:?}", s.report());
        assert!(s.mean().abs() <= 3.0 * s.se_mean());
    }

    #[test]
    fn brownian_is_standard_and_independent() {
        let (g, f) = heat(64);
        let (x, b) = sample_coupled(&f, &g, 10_000, 99, "heat").unwrap();
        let sb = SampleSummary::from_slice(&b.column(64));
        assert!((sb.variance() - 1.0).abs() <= 3.0 * sb.se_variance());
        assert!(correlation(&x.column(64), &b.column(64)).unwrap().r.abs() <= 0.03);
        // Increment variance dt.
        let inc: Vec<f64> = b.paths().map(|p| p[10] - p[9]).collect();
        let si = SampleSummary::from_slice(&inc);
        assert!((si.variance() - g.dt()).abs() <= 3.0 * si.se_variance());
    }

    #[test]
    fn empirical_covariance_matches_kernel() {
        let (g, f) = heat(16);
        let m = 20_000;
        let ens = sample_paths(&f, &g, m, 4242, "heat").unwrap();
        let probes = [1, 3, 5, 7, 9, 11, 13, 16];
        for &i in &probes {
            for &j in &probes {
                let prods: Vec<f64> = ens.paths().map(|p| p[i] * p[j]).collect();
                let s = SampleSummary::from_slice(&prods);
                let want = CovKernel::Heat.cov(g.time(i), g.time(j)).unwrap();
                assert!((s.mean() - want).abs() <= 4.0 * s.se_mean(), "({i},{j}): {} vs {want}", s.mean());
            }
        }
    }

    #[test]
    fn drift_addition() {
        let g = Grid::new(2, 1.0).unwrap();
        let f = cached_factor(&CovKernel::BrownianMotion, &g).unwrap().unwrap();
        let ens = sample_paths(&f, &g, 4, 1, "bm").unwrap();
        let same = add_deterministic_drift(ens.clone(), |_| Ok(0.0), "zero").unwrap();
        assert_eq!(same.values(), ens.values());
        let shifted = add_deterministic_drift(ens.clone(), Ok, "t").unwrap();
        for m in 0..4 {
            let (a, b) = (ens.path(m), shifted.path(m));
            assert_eq!(b, [a[0], a[1] + 0.5, a[2] + 1.0]);
        }
        assert_eq!(shifted.drift_id(), Some("t"));
        assert!(add_deterministic_drift(ens, |_| Err(Error::domain("boom")), "bad").is_err());
    }

    #[test]
    fn scaled_heat_plus_drift_matches_composite() {
        let g = Grid::new(32, 1.0).unwrap();
        let c = 1.3;
        let drift = PolynomialDrift { coeffs: vec![0.0, 0.5, -0.25] };
        let composite = CovKernel::Composite { c, components: vec![CovKernel::Heat], mean: Some(drift.clone()) };
        let a = sample_kernel(&composite, &g, 10_000, 8).unwrap();
        let b = add_deterministic_drift(sample_kernel(&CovKernel::Heat, &g, 10_000, 9).unwrap().scaled(c), |t| Ok(drift.eval(t)), "d").unwrap();
        let (sa, sb) = (SampleSummary::from_slice(&a.column(32)), SampleSummary::from_slice(&b.column(32)));
        let se = (sa.se_mean().powi(2) + sb.se_mean().powi(2)).sqrt();
        assert!((sa.mean() - sb.mean()).abs() <= 3.0 * se);
        let se_v = (sa.se_variance().powi(2) + sb.se_variance().powi(2)).sqrt();
        assert!((sa.variance() - sb.variance()).abs() <= 3.0 * se_v);
        assert!((sa.mean() - 0.25).abs() <= 3.0 * sa.se_mean());
    }

    #[test]
    fn degenerate_kernel_gives_pure_drift() {
        let g = Grid::new(8, 1.0).unwrap();
        let k = CovKernel::Composite {
            c: 0.0,
            components: vec![CovKernel::Heat],
            mean: Some(PolynomialDrift { coeffs: vec![0.0, 2.0] }),
        };
        let ens = sample_kernel(&k, &g, 3, 1).unwrap();
        for p in ens.paths() {
            for (j, v) in p.iter().enumerate() {
                assert_eq!(*v, 2.0 * g.time(j));
            }
        }
    }

    #[test]
    fn binary_round_trip_and_rejects_garbage() {
        let (g, f) = heat(8);
        let ens = sample_paths(&f, &g, 5, 17, "heat").unwrap();
        let mut buf = Vec::new();
        write_binary(&ens, &mut buf).unwrap();
        let back = read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.values(), ens.values());
        assert_eq!((back.seed(), back.kernel_id(), back.grid()), (17, "heat", &g));

        assert!(matches!(read_binary(&b"NOTMAGIC"[..]), Err(Error::Format(_))));
        let mut short = buf.clone();
        short.truncate(buf.len() - 3);
        assert!(matches!(read_binary(short.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn csv_layout() {
        let g = Grid::new(2, 1.0).unwrap();
        let ens = PathEnsemble::from_values(g, vec![0.0, 1.0, -1.0], "hand", 0).unwrap();
        let mut out = Vec::new();
        write_csv(&ens, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "replicate,j,t,value");
        assert_eq!(lines[2], "0,1,5.0000000000000000e-1,1.0000000000000000e0");
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn mismatched_factor_is_rejected() {
        let (_, f) = heat(8);
        let g = Grid::new(9, 1.0).unwrap();
        assert!(matches!(sample_paths(&f, &g, 1, 0, "heat"), Err(Error::GridMismatch(_))));
    }
}
