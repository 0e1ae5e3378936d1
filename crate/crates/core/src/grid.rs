//! Rectangular domains, grid fields, the Dirichlet sine basis and white noise.
//!
//! Node ordering in 2D is row-major with the first axis (`x1`) fastest:
//! `index = i + nx * j`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    dim: usize,
    extents: [f64; 2],
    n_cells: [usize; 2],
}

pub fn build_domain(dim: usize, extents: &[f64], n_cells: &[usize]) -> Result<Domain> {
    Domain::new(dim, extents, n_cells)
}

impl Domain {
    pub fn new(dim: usize, extents: &[f64], n_cells: &[usize]) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidDomain(format!(
                "dimension {dim} not in {{1, 2}}"
            )));
        }
        if extents.len() != dim || n_cells.len() != dim {
            return Err(Error::InvalidDomain(format!(
                "expected {dim} extents and resolutions, got {} and {}",
                extents.len(),
                n_cells.len()
            )));
        }
        let mut e = [1.0; 2];
        let mut n = [1usize; 2];
        for a in 0..dim {
            if !(extents[a] > 0.0) || !extents[a].is_finite() {
                return Err(Error::InvalidDomain(format!(
                    "extent {} along axis {a} must be positive",
                    extents[a]
                )));
            }
            if n_cells[a] < 2 {
                return Err(Error::InvalidDomain(format!(
                    "resolution {} along axis {a} is below 2",
                    n_cells[a]
                )));
            }
            e[a] = extents[a];
            n[a] = n_cells[a];
        }
        Ok(Domain {
            dim,
            extents: e,
            n_cells: n,
        })
    }

    pub fn interval(length: f64, n_cells: usize) -> Result<Self> {
        Self::new(1, &[length], &[n_cells])
    }

    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::new(2, &[lx, ly], &[nx, ny])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.extents[axis]
    }

    pub fn n_cells(&self, axis: usize) -> usize {
        self.n_cells[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / self.n_cells[axis] as f64
    }

    /// Volume of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn measure(&self) -> f64 {
        (0..self.dim).map(|a| self.extents[a]).product()
    }

    /// Same resolution on the unit box.
    pub fn normalized(&self) -> Domain {
        Domain {
            dim: self.dim,
            extents: [1.0, 1.0],
            n_cells: self.n_cells,
        }
    }

    pub fn nodes_per_axis(&self, layout: Layout) -> [usize; 2] {
        let mut out = [1, 1];
        for (a, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = match layout {
                Layout::Interior => self.n_cells[a] - 1,
                Layout::Full => self.n_cells[a] + 1,
            };
        }
        out
    }

    pub fn len(&self, layout: Layout) -> usize {
        let n = self.nodes_per_axis(layout);
        n[0] * n[1]
    }

    /// Physical coordinates of node `idx`.
    pub fn coords(&self, layout: Layout, idx: usize) -> [f64; 2] {
        let n = self.nodes_per_axis(layout);
        let off = match layout {
            Layout::Interior => 1,
            Layout::Full => 0,
        };
        let i = idx % n[0];
        let j = idx / n[0];
        let x = (i + off) as f64 * self.spacing(0);
        let y = if self.dim == 2 {
            (j + off) as f64 * self.spacing(1)
        } else {
            0.0
        };
        [x, y]
    }
}

/// Which nodes a [`Field`] stores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Nodes strictly inside the domain; boundary values are implicitly zero.
    Interior,
    /// All nodes including the boundary.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    domain: Domain,
    layout: Layout,
    values: Vec<f64>,
}

impl Field {
    pub fn new(domain: Domain, layout: Layout, values: Vec<f64>) -> Result<Self> {
        let expected = domain.len(layout);
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "field values",
                expected,
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field value at node {i}")));
        }
        Ok(Field {
            domain,
            layout,
            values,
        })
    }

    pub fn zeros(domain: Domain, layout: Layout) -> Self {
        Field {
            domain,
            layout,
            values: vec![0.0; domain.len(layout)],
        }
    }

    pub fn constant(domain: Domain, layout: Layout, c: f64) -> Self {
        Field {
            domain,
            layout,
            values: vec![c; domain.len(layout)],
        }
    }

    /// Samples `f(x)` at every node of the layout.
    pub fn from_fn(domain: Domain, layout: Layout, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..domain.len(layout))
            .map(|i| f(domain.coords(layout, i)))
            .collect();
        Field {
            domain,
            layout,
            values,
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            domain: self.domain,
            layout: self.layout,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Extends an interior field to all nodes, filling the boundary.
    pub fn to_full(&self, boundary: f64) -> Field {
        match self.layout {
            Layout::Full => self.clone(),
            Layout::Interior => {
                let nf = self.domain.nodes_per_axis(Layout::Full);
                let ni = self.domain.nodes_per_axis(Layout::Interior);
                let mut values = vec![boundary; nf[0] * nf[1]];
                let dj = usize::from(self.domain.dim == 2);
                for j in 0..ni[1] {
                    for i in 0..ni[0] {
                        values[(i + 1) + nf[0] * (j + dj)] = self.values[i + ni[0] * j];
                    }
                }
                Field {
                    domain: self.domain,
                    layout: Layout::Full,
                    values,
                }
            }
        }
    }

    /// Quadrature weights matching the layout (trapezoid on full grids).
    pub fn quadrature_weights(domain: &Domain, layout: Layout) -> Vec<f64> {
        let n = domain.nodes_per_axis(layout);
        let w_axis = |a: usize, i: usize| -> f64 {
            if a >= domain.dim {
                return 1.0;
            }
            let h = domain.spacing(a);
            match layout {
                Layout::Interior => h,
                Layout::Full if i == 0 || i + 1 == n[a] => 0.5 * h,
                Layout::Full => h,
            }
        };
        (0..n[0] * n[1])
            .map(|k| w_axis(0, k % n[0]) * w_axis(1, k / n[0]))
            .collect()
    }

    /// Grid L2 norm.
    pub fn l2_norm(&self) -> f64 {
        Self::quadrature_weights(&self.domain, self.layout)
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn l2_distance(&self, other: &Field) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        Self::quadrature_weights(&self.domain, self.layout)
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// One-dimensional Dirichlet sine basis on the interior nodes of `[0, L]`
/// with `n` cells: `phi_k(x_i) = sqrt(2/L) sin(k pi i / n)`, `k = 1..n-1`.
///
/// The synthesis matrix is symmetric, so synthesis and its transpose are the
/// same discrete sine transform, computed through an FFT of length `2n`.
struct AxisBasis {
    n_modes: usize,
    length: f64,
    n_cells: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for AxisBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AxisBasis")
            .field("n_modes", &self.n_modes)
            .field("length", &self.length)
            .field("n_cells", &self.n_cells)
            .finish()
    }
}

impl AxisBasis {
    fn new(length: f64, n_cells: usize) -> Self {
        AxisBasis {
            n_modes: n_cells - 1,
            length,
            n_cells,
            fft: FftPlanner::new().plan_fft_forward(2 * n_cells),
        }
    }

    /// `out[i] = sum_k phi_{k+1}(x_{i+1}) input[k]`, both of length `n_modes`.
    /// `buf` is scratch of length `2n`.
    fn transform(&self, input: &[f64], out: &mut [f64], buf: &mut [Complex<f64>]) {
        let n = self.n_cells;
        // odd extension: [0, c, 0, -reverse(c)]
        buf[0] = Complex::default();
        buf[n] = Complex::default();
        for (k, &c) in input.iter().enumerate() {
            buf[k + 1] = Complex::new(c, 0.0);
            buf[2 * n - 1 - k] = Complex::new(-c, 0.0);
        }
        self.fft.process(buf);
        // X_j = -2i sum_k c_k sin(pi j k / n)
        let scale = -0.5 * (2.0 / self.length).sqrt();
        for (i, o) in out.iter_mut().enumerate() {
            *o = scale * buf[i + 1].im;
        }
    }

    fn continuum_eigenvalue(&self, k: usize) -> f64 {
        let w = k as f64 * PI / self.length;
        w * w
    }

    fn discrete_eigenvalue(&self, k: usize) -> f64 {
        let h = self.length / self.n_cells as f64;
        let s = (k as f64 * PI / (2.0 * self.n_cells as f64)).sin();
        4.0 * s * s / (h * h)
    }
}

/// A single Dirichlet Laplacian eigenmode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    /// Multi-index (1-based); second entry is 0 in 1D.
    pub k: [usize; 2],
    /// Continuum eigenvalue of `-Δ`.
    pub eigenvalue: f64,
}

/// How prior length scales relate to physical coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoordinateScaling {
    Physical,
    /// Every axis rescaled to unit length.
    Normalized,
}

/// Eigenpairs of the Dirichlet Laplacian represented on a grid, sorted by
/// ascending eigenvalue. Coefficient vectors throughout the crate are in
/// this mode order.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    domain: Domain,
    /// Domain whose coordinates define the eigenpairs (the physical domain
    /// or its unit-box normalization).
    spectral: Domain,
    modes: Vec<Mode>,
    axes: Arc<Vec<AxisBasis>>,
    /// `slot[m]` = position of mode `m` in the tensor coefficient array.
    slot: Vec<usize>,
}

pub fn dirichlet_spectrum(domain: &Domain) -> SpectralBasis {
    SpectralBasis::new(domain)
}

impl SpectralBasis {
    pub fn new(domain: &Domain) -> Self {
        Self::with_scaling(domain, CoordinateScaling::Physical)
    }

    pub fn with_scaling(domain: &Domain, scaling: CoordinateScaling) -> Self {
        let spectral = match scaling {
            CoordinateScaling::Physical => *domain,
            CoordinateScaling::Normalized => domain.normalized(),
        };
        let axes: Vec<AxisBasis> = (0..domain.dim())
            .map(|a| AxisBasis::new(spectral.extent(a), spectral.n_cells(a)))
            .collect();
        let mut modes = Vec::new();
        let mut slot = Vec::new();
        match domain.dim() {
            1 => {
                for k in 1..=axes[0].n_modes {
                    modes.push(Mode {
                        k: [k, 0],
                        eigenvalue: axes[0].continuum_eigenvalue(k),
                    });
                }
            }
            _ => {
                for k2 in 1..=axes[1].n_modes {
                    for k1 in 1..=axes[0].n_modes {
                        modes.push(Mode {
                            k: [k1, k2],
                            eigenvalue: axes[0].continuum_eigenvalue(k1)
                                + axes[1].continuum_eigenvalue(k2),
                        });
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..modes.len()).collect();
        order.sort_by(|&a, &b| {
            modes[a]
                .eigenvalue
                .total_cmp(&modes[b].eigenvalue)
                .then(modes[a].k.cmp(&modes[b].k))
        });
        let sorted: Vec<Mode> = order.iter().map(|&i| modes[i]).collect();
        let m0 = axes[0].n_modes;
        for m in &sorted {
            slot.push((m.k[0] - 1) + m0 * m.k[1].saturating_sub(1));
        }
        SpectralBasis {
            domain: *domain,
            spectral,
            modes: sorted,
            axes: Arc::new(axes),
            slot,
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn spectral_domain(&self) -> &Domain {
        &self.spectral
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Eigenvalue of the standard second-difference Laplacian for mode `m`.
    pub fn discrete_eigenvalue(&self, m: usize) -> f64 {
        let k = self.modes[m].k;
        (0..self.domain.dim())
            .map(|a| self.axes[a].discrete_eigenvalue(k[a]))
            .sum()
    }

    /// Grid values of mode `m` on the interior nodes.
    pub fn mode_values(&self, m: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.len()];
        c[m] = 1.0;
        self.synthesize(&c)
    }

    /// Coefficients -> interior grid values.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.len(), "coefficient length");
        let mut tensor = vec![0.0; self.len()];
        for (m, &c) in coeffs.iter().enumerate() {
            tensor[self.slot[m]] = c;
        }
        self.apply_axes(&tensor)
    }

    /// Interior grid values -> coefficients (grid inner product projection).
    pub fn analyze(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.len(), "value length");
        let w = self.spectral.cell_volume();
        let tensor = self.apply_axes(values);
        self.slot.iter().map(|&s| w * tensor[s]).collect()
    }

    pub fn synthesize_field(&self, coeffs: &[f64]) -> Field {
        Field {
            domain: self.domain,
            layout: Layout::Interior,
            values: self.synthesize(coeffs),
        }
    }

    // Separable sine transform along each axis; the per-axis matrices are
    // symmetric, so the same routine serves synthesis and analysis.
    fn apply_axes(&self, input: &[f64]) -> Vec<f64> {
        let a0 = &self.axes[0];
        let m0 = a0.n_modes;
        let mut buf = vec![Complex::default(); 2 * a0.n_cells];
        let mut out = vec![0.0; input.len()];
        for (src, dst) in input.chunks_exact(m0).zip(out.chunks_exact_mut(m0)) {
            a0.transform(src, dst, &mut buf);
        }
        if self.domain.dim() == 1 {
            return out;
        }
        let a1 = &self.axes[1];
        let m1 = a1.n_modes;
        let mut buf = vec![Complex::default(); 2 * a1.n_cells];
        let mut col = vec![0.0; m1];
        let mut res = vec![0.0; m1];
        for i in 0..m0 {
            for (j, c) in col.iter_mut().enumerate() {
                *c = out[j * m0 + i];
            }
            a1.transform(&col, &mut res, &mut buf);
            for (j, r) in res.iter().enumerate() {
                out[j * m0 + i] = *r;
            }
        }
        out
    }
}

/// i.i.d. standard normal coefficients, one per mode of `domain`'s basis.
pub fn white_noise<R: Rng + ?Sized>(domain: &Domain, rng: &mut R) -> Vec<f64> {
    standard_normals(domain.len(Layout::Interior), rng)
}

pub fn standard_normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Applies the second-difference Laplacian `Δ_h` (zero Dirichlet data) to
/// interior values.
pub fn apply_laplacian(domain: &Domain, values: &[f64]) -> Vec<f64> {
    let n = domain.nodes_per_axis(Layout::Interior);
    let at = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= n[0] as isize || j >= n[1] as isize {
            0.0
        } else {
            values[i as usize + n[0] * j as usize]
        }
    };
    let hx2 = domain.spacing(0).powi(2);
    let mut out = vec![0.0; values.len()];
    for j in 0..n[1] as isize {
        for i in 0..n[0] as isize {
            let c = at(i, j);
            let mut v = (at(i - 1, j) - 2.0 * c + at(i + 1, j)) / hx2;
            if domain.dim() == 2 {
                let hy2 = domain.spacing(1).powi(2);
                v += (at(i, j - 1) - 2.0 * c + at(i, j + 1)) / hy2;
            }
            out[i as usize + n[0] * j as usize] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::SeedableRng;

    #[test]
    fn domain_examples() {
        let d = build_domain(1, &[10.0], &[1000]).unwrap();
        assert!((d.spacing(0) - 0.01).abs() < 1e-15);
        let d2 = build_domain(2, &[6.0, 6.0], &[600, 600]).unwrap();
        assert!((d2.spacing(1) - 1e-2).abs() < 1e-15);
        assert!(build_domain(1, &[1.0], &[1]).is_err());
        assert!(build_domain(1, &[0.0], &[10]).is_err());
        assert!(build_domain(3, &[1.0; 3], &[4; 3]).is_err());
        assert!(build_domain(2, &[1.0], &[4]).is_err());
    }

    #[test]
    fn continuum_eigenvalues() {
        let b = dirichlet_spectrum(&Domain::interval(1.0, 64).unwrap());
        assert!((b.modes()[0].eigenvalue - PI * PI).abs() < 1e-12);
        let b2 = dirichlet_spectrum(&Domain::rectangle(1.0, 1.0, 16, 16).unwrap());
        assert_eq!(b2.modes()[0].k, [1, 1]);
        assert!((b2.modes()[0].eigenvalue - 2.0 * PI * PI).abs() < 1e-12);
        assert!(b2
            .modes()
            .windows(2)
            .all(|w| w[0].eigenvalue <= w[1].eigenvalue));
        assert_eq!(b2.len(), 15 * 15);
    }

    #[test]
    fn eigenvalue_on_long_interval_matches_discrete_operator() {
        // oracle: eigendecomposition of the assembled second-difference matrix
        let d = Domain::interval(10.0, 200).unwrap();
        let b = dirichlet_spectrum(&d);
        let n = d.len(Layout::Interior);
        let h2 = d.spacing(0).powi(2);
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 2.0 / h2;
            if i + 1 < n {
                m[(i, i + 1)] = -1.0 / h2;
                m[(i + 1, i)] = -1.0 / h2;
            }
        }
        let mut eig: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        let lam3 = 9.0 * PI * PI / 100.0;
        assert!((b.modes()[2].eigenvalue - lam3).abs() < 1e-14);
        assert!((eig[2] - b.discrete_eigenvalue(2)).abs() < 1e-9 * eig[2]);
        assert!((eig[2] - lam3).abs() / lam3 < 1e-3);
    }

    #[test]
    fn eigenfunctions_orthonormal_and_diagonalize_laplacian() {
        for d in [
            Domain::interval(3.0, 40).unwrap(),
            Domain::rectangle(6.0, 2.0, 12, 9).unwrap(),
        ] {
            let b = dirichlet_spectrum(&d);
            let w = d.cell_volume();
            let vals: Vec<Vec<f64>> = (0..b.len()).map(|m| b.mode_values(m)).collect();
            for p in 0..b.len() {
                for q in p..b.len() {
                    let ip: f64 = w * vals[p]
                        .iter()
                        .zip(&vals[q])
                        .map(|(a, c)| a * c)
                        .sum::<f64>();
                    let expect = if p == q { 1.0 } else { 0.0 };
                    assert!((ip - expect).abs() < 1e-10, "modes {p},{q}: {ip}");
                }
                let lap = apply_laplacian(&d, &vals[p]);
                let lam = b.discrete_eigenvalue(p);
                let scale = lam * vals[p].iter().map(|v| v.abs()).fold(0.0, f64::max);
                for (l, v) in lap.iter().zip(&vals[p]) {
                    assert!((-l - lam * v).abs() <= 1e-8 * scale);
                }
            }
        }
    }

    #[test]
    fn mode_values_match_closed_form() {
        let d = Domain::rectangle(6.0, 2.0, 7, 5).unwrap();
        let b = SpectralBasis::new(&d);
        for m in 0..b.len() {
            let k = b.modes()[m].k;
            let v = b.mode_values(m);
            for (idx, got) in v.iter().enumerate() {
                let x = d.coords(Layout::Interior, idx);
                let want = (2.0 / 6.0f64).sqrt()
                    * (k[0] as f64 * PI * x[0] / 6.0).sin()
                    * (2.0 / 2.0f64).sqrt()
                    * (k[1] as f64 * PI * x[1] / 2.0).sin();
                assert!((got - want).abs() < 1e-12, "mode {m} node {idx}");
            }
        }
    }

    #[test]
    fn parseval_and_analysis_inverse() {
        let d = Domain::rectangle(1.0, 2.0, 10, 14).unwrap();
        let b = SpectralBasis::new(&d);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let c = white_noise(&d, &mut rng);
        let f = b.synthesize_field(&c);
        let cn: f64 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((f.l2_norm() - cn).abs() < 1e-10 * cn);
        let back = b.analyze(f.values());
        for (a, e) in back.iter().zip(&c) {
            assert!((a - e).abs() < 1e-10);
        }
    }

    #[test]
    fn white_noise_is_deterministic_per_seed() {
        let d = Domain::interval(1.0, 50).unwrap();
        let a = white_noise(&d, &mut rand_chacha::ChaCha8Rng::seed_from_u64(11));
        let b = white_noise(&d, &mut rand_chacha::ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
        assert_eq!(a.len(), 49);
    }

    #[test]
    fn white_noise_moments() {
        // CLT / Monte Carlo oracle on the first coefficient
        let d = Domain::interval(1.0, 4).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| white_noise(&d, &mut rng)[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn to_full_pads_boundary() {
        let d = Domain::rectangle(1.0, 1.0, 3, 3).unwrap();
        let f = Field::new(d, Layout::Interior, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let g = f.to_full(-1.0);
        assert_eq!(g.values().len(), 16);
        assert_eq!(g.values()[5], 1.0);
        assert_eq!(g.values()[10], 4.0);
        assert_eq!(g.values()[0], -1.0);
        let d1 = Domain::interval(1.0, 3).unwrap();
        let f1 = Field::new(d1, Layout::Interior, vec![7.0, 8.0]).unwrap();
        assert_eq!(f1.to_full(0.0).values(), &[0.0, 7.0, 8.0, 0.0]);
    }

    #[test]
    fn field_rejects_bad_values() {
        let d = Domain::interval(1.0, 3).unwrap();
        assert!(Field::new(d, Layout::Interior, vec![1.0]).is_err());
        assert!(Field::new(d, Layout::Interior, vec![1.0, f64::NAN]).is_err());
    }
}
