//! Complex fields on the physical plane (rank 2) and on the dynamical
//! space (rank 4).
//!
//! A [`Field4C`] is either dense or slab-streamed. A slab is the rank-3
//! block obtained by fixing the third index `I`; it is laid out as
//! `(i, j, J)`. Streamed fields recompute slabs on demand from a
//! [`SlabSource`], so the full `n^4` array never exists in memory. All
//! reductions run slab by slab with a fixed pairwise tree, which makes
//! dense and streamed evaluation of the same expression bitwise identical.

use std::fmt;
use std::sync::Arc;

use ndarray::{s, Array2, Array3, Array4, ArrayViewMut3};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::reduce::{pairwise_sum, pairwise_sum_real};

/// Largest `n` for which a rank-4 field may be stored densely.
pub const DENSE_MAX_N: usize = 48;

pub(crate) fn check_finite2(values: &Array2<Complex64>, what: &'static str) -> Result<()> {
    if values.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn same_grid(a: &Grid, b: &Grid, what: &str) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "{what}: ({}, {}) vs ({}, {})",
            a.n(),
            a.length(),
            b.n(),
            b.length()
        )))
    }
}

/// Complex amplitudes `f[i, j]` over `Grid × Grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2C {
    grid: Grid,
    values: Array2<Complex64>,
}

impl Field2C {
    pub fn new(grid: Grid, values: Array2<Complex64>) -> Result<Self> {
        let n = grid.n();
        if values.dim() != (n, n) {
            return Err(Error::GridMismatch(format!(
                "field of shape {:?} on a grid with n = {n}",
                values.dim()
            )));
        }
        check_finite2(&values, "Field2C::new")?;
        Ok(Field2C { grid, values })
    }

    /// Samples `f(x, y)` at every grid point.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> Complex64) -> Result<Self> {
        let coords = grid.coords();
        let values = Array2::from_shape_fn((grid.n(), grid.n()), |(i, j)| f(coords[i], coords[j]));
        Field2C::new(grid, values)
    }

    pub fn zeros(grid: Grid) -> Self {
        Field2C { grid, values: Array2::zeros((grid.n(), grid.n())) }
    }

    pub(crate) fn from_parts_unchecked(grid: Grid, values: Array2<Complex64>) -> Self {
        Field2C { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<Complex64> {
        self.values
    }

    /// `Σ |f|² · spacing²`.
    pub fn norm_sqr(&self) -> f64 {
        let h2 = self.grid.spacing().powi(2);
        let sq: Vec<f64> = self.values.iter().map(|z| z.norm_sqr()).collect();
        pairwise_sum_real(&sq) * h2
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalized(&self) -> Result<Self> {
        let norm = self.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidArgument(format!("cannot normalize a field of norm {norm}")));
        }
        Ok(self.scale(Complex64::new(1.0 / norm, 0.0)))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Field2C { grid: self.grid, values: self.values.mapv(|z| z * c) }
    }

    /// Elementwise (not Hermitian) product with another field.
    pub fn mul(&self, other: &Field2C) -> Result<Self> {
        same_grid(&self.grid, &other.grid, "Field2C::mul")?;
        Ok(Field2C { grid: self.grid, values: &self.values * &other.values })
    }

    pub fn linf_distance(&self, other: &Field2C) -> Result<f64> {
        same_grid(&self.grid, &other.grid, "Field2C::linf_distance")?;
        Ok(self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest `|f|` on the first and last rows and columns, divided by the
    /// overall maximum.
    pub fn edge_ratio(&self) -> f64 {
        let n = self.grid.n();
        let max = self.linf();
        if max == 0.0 {
            return 0.0;
        }
        let mut edge: f64 = 0.0;
        for k in 0..n {
            for (i, j) in [(0, k), (n - 1, k), (k, 0), (k, n - 1)] {
                edge = edge.max(self.values[[i, j]].norm());
            }
        }
        edge / max
    }
}

/// `Σ f[i, j] · spacing²`.
pub fn integrate2(f: &Field2C) -> Complex64 {
    let h2 = f.grid.spacing().powi(2);
    let flat: Vec<Complex64> = f.values.iter().copied().collect();
    pairwise_sum(&flat) * h2
}

/// Produces one `(i, j, J)` slab of a rank-4 expression for a fixed `I`.
pub trait SlabSource: Send + Sync {
    fn fill_slab(&self, big_i: usize, out: ArrayViewMut3<'_, Complex64>);
}

impl<F> SlabSource for F
where
    F: Fn(usize, ArrayViewMut3<'_, Complex64>) + Send + Sync,
{
    fn fill_slab(&self, big_i: usize, out: ArrayViewMut3<'_, Complex64>) {
        self(big_i, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageKind {
    Dense,
    Streamed,
}

/// How an operation should store the rank-4 field it returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StoragePolicy {
    /// Dense when `n <= threshold`, streamed otherwise.
    #[default]
    Auto,
    Dense,
    Streamed,
}

impl StoragePolicy {
    pub fn resolve(self, n: usize, dense_threshold: usize) -> Result<StorageKind> {
        match self {
            StoragePolicy::Auto if n <= dense_threshold.min(DENSE_MAX_N) => Ok(StorageKind::Dense),
            StoragePolicy::Auto => Ok(StorageKind::Streamed),
            StoragePolicy::Dense if n <= DENSE_MAX_N => Ok(StorageKind::Dense),
            StoragePolicy::Dense => Err(Error::DenseTooLarge { n, limit: DENSE_MAX_N }),
            StoragePolicy::Streamed => Ok(StorageKind::Streamed),
        }
    }
}

#[derive(Clone)]
enum Storage {
    Dense(Arc<Array4<Complex64>>),
    Streamed(Arc<dyn SlabSource>),
}

/// Complex field `f[i, j, I, J]` over `Grid⁴`.
#[derive(Clone)]
pub struct Field4C {
    grid: Grid,
    storage: Storage,
}

impl fmt::Debug for Field4C {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field4C")
            .field("grid", &self.grid)
            .field("storage", &self.storage_kind())
            .finish()
    }
}

impl Field4C {
    pub fn dense(grid: Grid, values: Array4<Complex64>) -> Result<Self> {
        let n = grid.n();
        if n > DENSE_MAX_N {
            return Err(Error::DenseTooLarge { n, limit: DENSE_MAX_N });
        }
        if values.dim() != (n, n, n, n) {
            return Err(Error::GridMismatch(format!(
                "rank-4 field of shape {:?} on a grid with n = {n}",
                values.dim()
            )));
        }
        if !values.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite("Field4C::dense"));
        }
        Ok(Field4C { grid, storage: Storage::Dense(Arc::new(values)) })
    }

    pub fn streamed(grid: Grid, source: Arc<dyn SlabSource>) -> Self {
        Field4C { grid, storage: Storage::Streamed(source) }
    }

    /// Builds a field from a slab source, materializing it when `kind` is dense.
    pub fn from_source(grid: Grid, kind: StorageKind, source: Arc<dyn SlabSource>) -> Result<Self> {
        let streamed = Field4C::streamed(grid, source);
        match kind {
            StorageKind::Streamed => Ok(streamed),
            StorageKind::Dense => streamed.materialize(),
        }
    }

    /// Elementwise definition `f(i, j, I, J)`.
    pub fn from_index_fn<F>(grid: Grid, kind: StorageKind, f: F) -> Result<Self>
    where
        F: Fn(usize, usize, usize, usize) -> Complex64 + Send + Sync + 'static,
    {
        let source = move |big_i: usize, mut out: ArrayViewMut3<'_, Complex64>| {
            for ((i, j, big_j), v) in out.indexed_iter_mut() {
                *v = f(i, j, big_i, big_j);
            }
        };
        Field4C::from_source(grid, kind, Arc::new(source))
    }

    pub fn constant(grid: Grid, kind: StorageKind, c: Complex64) -> Result<Self> {
        Field4C::from_index_fn(grid, kind, move |_, _, _, _| c)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn storage_kind(&self) -> StorageKind {
        match self.storage {
            Storage::Dense(_) => StorageKind::Dense,
            Storage::Streamed(_) => StorageKind::Streamed,
        }
    }

    /// Dense values, when stored densely.
    pub fn as_dense(&self) -> Option<&Array4<Complex64>> {
        match &self.storage {
            Storage::Dense(a) => Some(a),
            Storage::Streamed(_) => None,
        }
    }

    /// Evaluates every slab into a dense array (refused above [`DENSE_MAX_N`]).
    pub fn materialize(&self) -> Result<Self> {
        if let Storage::Dense(_) = self.storage {
            return Ok(self.clone());
        }
        let n = self.grid.n();
        if n > DENSE_MAX_N {
            return Err(Error::DenseTooLarge { n, limit: DENSE_MAX_N });
        }
        let mut values = Array4::<Complex64>::zeros((n, n, n, n));
        let slabs: Vec<Array3<Complex64>> = (0..n).into_par_iter().map(|bi| self.slab(bi)).collect();
        for (bi, slab) in slabs.into_iter().enumerate() {
            values.slice_mut(s![.., .., bi, ..]).assign(&slab);
        }
        Field4C::dense(self.grid, values)
    }

    /// The `(i, j, J)` block at fixed `I`, in standard layout.
    pub fn slab(&self, big_i: usize) -> Array3<Complex64> {
        let n = self.grid.n();
        match &self.storage {
            Storage::Dense(a) => a.slice(s![.., .., big_i, ..]).to_owned(),
            Storage::Streamed(src) => {
                let mut out = Array3::zeros((n, n, n));
                src.fill_slab(big_i, out.view_mut());
                out
            }
        }
    }

    /// Maps every slab to a value in parallel; results come back ordered by `I`.
    pub fn map_slabs<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &Array3<Complex64>) -> T + Send + Sync,
    {
        (0..self.grid.n())
            .into_par_iter()
            .map(|bi| {
                let slab = self.slab(bi);
                f(bi, &slab)
            })
            .collect()
    }

    /// Lazily combines two fields elementwise. Dense inputs give a dense result.
    pub fn zip_with<F>(&self, other: &Field4C, f: F) -> Result<Field4C>
    where
        F: Fn(Complex64, Complex64) -> Complex64 + Send + Sync + 'static,
    {
        same_grid(&self.grid, &other.grid, "Field4C::zip_with")?;
        if let (Some(a), Some(b)) = (self.as_dense(), other.as_dense()) {
            let mut out = a.to_owned();
            out.zip_mut_with(b, |x, y| *x = f(*x, *y));
            return Field4C::dense(self.grid, out);
        }
        let (a, b) = (self.clone(), other.clone());
        let source = move |big_i: usize, mut out: ArrayViewMut3<'_, Complex64>| {
            let sa = a.slab(big_i);
            let sb = b.slab(big_i);
            ndarray::Zip::from(&mut out).and(&sa).and(&sb).for_each(|o, x, y| *o = f(*x, *y));
        };
        Ok(Field4C::streamed(self.grid, Arc::new(source)))
    }

    pub fn add(&self, other: &Field4C) -> Result<Field4C> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field4C) -> Result<Field4C> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn map<F>(&self, f: F) -> Result<Field4C>
    where
        F: Fn(Complex64) -> Complex64 + Send + Sync + 'static,
    {
        if let Some(a) = self.as_dense() {
            return Field4C::dense(self.grid, a.mapv(&f));
        }
        let a = self.clone();
        let source = move |big_i: usize, mut out: ArrayViewMut3<'_, Complex64>| {
            let sa = a.slab(big_i);
            ndarray::Zip::from(&mut out).and(&sa).for_each(|o, x| *o = f(*x));
        };
        Ok(Field4C::streamed(self.grid, Arc::new(source)))
    }

    /// Raw sum `Σ f` (no measure), reduced slab by slab in a fixed order.
    pub fn sum(&self) -> Complex64 {
        let partial = self.map_slabs(|_, slab| {
            pairwise_sum(slab.as_slice().expect("slabs are in standard layout"))
        });
        pairwise_sum(&partial)
    }

    /// `max |f|`.
    pub fn linf(&self) -> f64 {
        self.fold_max(|z| z.norm())
    }

    pub fn linf_re(&self) -> f64 {
        self.fold_max(|z| z.re.abs())
    }

    pub fn linf_im(&self) -> f64 {
        self.fold_max(|z| z.im.abs())
    }

    fn fold_max(&self, g: impl Fn(Complex64) -> f64 + Send + Sync) -> f64 {
        self.map_slabs(|_, slab| slab.iter().map(|z| g(*z)).fold(0.0, f64::max))
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Discrete L² norms `(‖Re f‖, ‖Im f‖)` with measure `spacing⁴`.
    pub fn l2_parts(&self) -> (f64, f64) {
        let h4 = self.grid.spacing().powi(4);
        let partial = self.map_slabs(|_, slab| {
            let re: Vec<f64> = slab.iter().map(|z| z.re * z.re).collect();
            let im: Vec<f64> = slab.iter().map(|z| z.im * z.im).collect();
            (pairwise_sum_real(&re), pairwise_sum_real(&im))
        });
        let re: Vec<f64> = partial.iter().map(|p| p.0).collect();
        let im: Vec<f64> = partial.iter().map(|p| p.1).collect();
        ((pairwise_sum_real(&re) * h4).sqrt(), (pairwise_sum_real(&im) * h4).sqrt())
    }

    /// Largest elementwise `|a - b|`.
    pub fn linf_distance(&self, other: &Field4C) -> Result<f64> {
        Ok(self.sub(other)?.linf())
    }
}

/// `Σ f · spacing⁴`.
pub fn integrate4(f: &Field4C) -> Complex64 {
    f.sum() * f.grid.spacing().powi(4)
}
