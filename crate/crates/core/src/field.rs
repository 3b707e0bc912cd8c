//! Cell-centered fields on a rectangle with homogeneous Neumann boundaries.
//!
//! Cell `(i, j)` has center `((i + 1/2) hx, (j + 1/2) hy)` and is stored at
//! `j * nx + i`. Face-centered quantities vanish on the boundary, which makes
//! every flux-form operator telescope exactly. Cell-centered derivatives use a
//! mirror ghost layer (ghost value = adjacent interior value), the discrete
//! counterpart of an even reflection across the wall.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Grid {
    pub const MIN_CELLS: usize = 4;

    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < Self::MIN_CELLS || ny < Self::MIN_CELLS {
            return Err(Error::Domain(format!(
                "grid needs at least {} cells per direction, got {nx}x{ny}",
                Self::MIN_CELLS
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::Domain(format!(
                "domain lengths must be positive, got {lx} x {ly}"
            )));
        }
        Ok(Self { nx, ny, lx, ly })
    }

    /// Square `n x n` grid on the unit square.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn diameter(&self) -> f64 {
        self.lx.hypot(self.ly)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx(), (j as f64 + 0.5) * self.hy())
    }

    /// `max(hx, hy)`.
    pub fn h(&self) -> f64 {
        self.hx().max(self.hy())
    }
}

/// Reflects an index across the walls: `-1 -> 0`, `n -> n-1`.
#[inline]
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    if i < 0 {
        (-1 - i) as usize
    } else if i >= n {
        (2 * n - 1 - i) as usize
    } else {
        i as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a {}x{} grid",
                values.len(),
                grid.nx,
                grid.ny
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at cell {k}")));
        }
        Ok(Self { grid, values })
    }

    /// Skips the finiteness scan; callers guarantee the invariant.
    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self::from_vec_unchecked(grid, vec![c; grid.len()])
    }

    /// Samples `f(x, y)` at cell centers.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.center(i, j);
                values.push(f(x, y));
            }
        }
        Self::from_vec_unchecked(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec_unchecked(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self::from_vec_unchecked(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    pub fn require_positive(&self, name: &'static str) -> Result<()> {
        let min = self.min();
        if min > 0.0 {
            Ok(())
        } else {
            Err(Error::Positivity { field: name, min })
        }
    }

    pub fn l1_norm(&self) -> f64 {
        self.grid.cell_area() * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Discrete `L²` distance.
    pub fn l2_diff(&self, other: &Self) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (s * self.grid.cell_area()).sqrt()
    }
}

/// Face-centered vector field. `x_values` live on the `(nx+1) x ny` vertical
/// faces, `y_values` on the `nx x (ny+1)` horizontal faces.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    pub x_values: Vec<f64>,
    pub y_values: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            x_values: vec![0.0; (grid.nx + 1) * grid.ny],
            y_values: vec![0.0; grid.nx * (grid.ny + 1)],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Vertical face `i` (between cells `i-1` and `i`) in row `j`.
    #[inline]
    pub fn x_idx(&self, i: usize, j: usize) -> usize {
        j * (self.grid.nx + 1) + i
    }

    /// Horizontal face `j` (between cells `j-1` and `j`) in column `i`.
    #[inline]
    pub fn y_idx(&self, i: usize, j: usize) -> usize {
        j * self.grid.nx + i
    }

    pub fn boundary_is_zero(&self) -> bool {
        let g = self.grid;
        let xs = (0..g.ny).all(|j| {
            self.x_values[self.x_idx(0, j)] == 0.0 && self.x_values[self.x_idx(g.nx, j)] == 0.0
        });
        let ys = (0..g.nx).all(|i| {
            self.y_values[self.y_idx(i, 0)] == 0.0 && self.y_values[self.y_idx(i, g.ny)] == 0.0
        });
        xs && ys
    }
}

/// Midpoint rule `hx hy Σ f`.
pub fn integrate(f: &ScalarField) -> f64 {
    f.grid.cell_area() * f.values.iter().sum::<f64>()
}

/// Face differences; boundary faces are zero.
pub fn gradient(f: &ScalarField) -> VectorField {
    let g = f.grid;
    let (hx, hy) = (g.hx(), g.hy());
    let mut out = VectorField::zeros(g);
    for j in 0..g.ny {
        for i in 1..g.nx {
            let k = out.x_idx(i, j);
            out.x_values[k] = (f.get(i, j) - f.get(i - 1, j)) / hx;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let k = out.y_idx(i, j);
            out.y_values[k] = (f.get(i, j) - f.get(i, j - 1)) / hy;
        }
    }
    out
}

/// Cell-wise divergence of a face field.
pub fn divergence(v: &VectorField) -> ScalarField {
    let g = v.grid;
    let (hx, hy) = (g.hx(), g.hy());
    let mut out = Vec::with_capacity(g.len());
    for j in 0..g.ny {
        for i in 0..g.nx {
            let fx = v.x_values[v.x_idx(i + 1, j)] - v.x_values[v.x_idx(i, j)];
            let fy = v.y_values[v.y_idx(i, j + 1)] - v.y_values[v.y_idx(i, j)];
            out.push(fx / hx + fy / hy);
        }
    }
    ScalarField::from_vec_unchecked(g, out)
}

/// Five-point flux-form Laplacian with zero boundary flux.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let mut out = vec![0.0; f.grid.len()];
    apply_laplacian(&f.grid, &f.values, &mut out);
    ScalarField::from_vec_unchecked(f.grid, out)
}

/// Matrix-free Laplacian on raw cell arrays, shared with the implicit solves.
pub(crate) fn apply_laplacian(g: &Grid, x: &[f64], out: &mut [f64]) {
    let (nx, ny) = (g.nx, g.ny);
    let ax = 1.0 / (g.hx() * g.hx());
    let ay = 1.0 / (g.hy() * g.hy());
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let c = x[k];
            let mut acc = 0.0;
            if i > 0 {
                acc += ax * (x[k - 1] - c);
            }
            if i + 1 < nx {
                acc += ax * (x[k + 1] - c);
            }
            if j > 0 {
                acc += ay * (x[k - nx] - c);
            }
            if j + 1 < ny {
                acc += ay * (x[k + nx] - c);
            }
            out[k] = acc;
        }
    }
}

/// Centered first and second differences at cell centers, with mirror ghosts.
#[derive(Debug, Clone)]
pub struct CellDerivatives {
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub dxx: Vec<f64>,
    pub dyy: Vec<f64>,
    pub dxy: Vec<f64>,
}

impl CellDerivatives {
    pub fn of(f: &ScalarField) -> Self {
        Self::of_values(&f.grid, &f.values)
    }

    pub fn of_values(g: &Grid, f: &[f64]) -> Self {
        let (nx, ny) = (g.nx, g.ny);
        let (hx, hy) = (g.hx(), g.hy());
        let at = |i: isize, j: isize| f[mirror(j, ny) * nx + mirror(i, nx)];
        let n = g.len();
        let mut d = Self {
            dx: Vec::with_capacity(n),
            dy: Vec::with_capacity(n),
            dxx: Vec::with_capacity(n),
            dyy: Vec::with_capacity(n),
            dxy: Vec::with_capacity(n),
        };
        for j in 0..ny as isize {
            for i in 0..nx as isize {
                let c = at(i, j);
                let (e, w, nn, s) = (at(i + 1, j), at(i - 1, j), at(i, j + 1), at(i, j - 1));
                d.dx.push((e - w) / (2.0 * hx));
                d.dy.push((nn - s) / (2.0 * hy));
                d.dxx.push((e - 2.0 * c + w) / (hx * hx));
                d.dyy.push((nn - 2.0 * c + s) / (hy * hy));
                d.dxy.push(
                    (at(i + 1, j + 1) - at(i + 1, j - 1) - at(i - 1, j + 1) + at(i - 1, j - 1))
                        / (4.0 * hx * hy),
                );
            }
        }
        d
    }

    pub fn grad_sq(&self, k: usize) -> f64 {
        self.dx[k] * self.dx[k] + self.dy[k] * self.dy[k]
    }

    pub fn laplacian(&self, k: usize) -> f64 {
        self.dxx[k] + self.dyy[k]
    }

    /// `|D²f|²`, the squared Frobenius norm of the Hessian.
    pub fn hessian_sq(&self, k: usize) -> f64 {
        self.dxx[k] * self.dxx[k] + 2.0 * self.dxy[k] * self.dxy[k] + self.dyy[k] * self.dyy[k]
    }
}

/// `|D² ln w|²` at cell centers.
pub fn hessian_log_frobenius_sq(w: &ScalarField) -> Result<ScalarField> {
    w.require_positive("w")?;
    let log_w = w.map(f64::ln);
    let d = CellDerivatives::of(&log_w);
    let values = (0..w.grid.len()).map(|k| d.hessian_sq(k)).collect();
    Ok(ScalarField::from_vec_unchecked(w.grid, values))
}

/// Positive test fields with `∂_ν w = 0` holding analytically on the walls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Manufactured {
    /// `2 + cos(πx/lx) cos(πy/ly)`, range `[1, 3]`.
    ConstPlusCos,
    /// `1 + exp(-β[(1 + cos 2πx/lx) + (1 + cos 2πy/ly)])` with `β = 2`: a
    /// Gaussian-like bump of width about `0.11 lx` centered in the domain.
    GaussBump,
    /// `2 + Σ c_kl cos(kπx/lx) cos(lπy/ly)` over `k, l ≤ 4`, with seeded random
    /// coefficients decaying like `1/(1 + k² + l²)` and `Σ|c_kl| = 1`.
    RandomPositive { seed: u64 },
}

const BUMP_BETA: f64 = 2.0;
const RANDOM_MODES: usize = 4;

impl Manufactured {
    pub fn name(&self) -> &'static str {
        match self {
            Manufactured::ConstPlusCos => "const_plus_cos",
            Manufactured::GaussBump => "gauss_bump",
            Manufactured::RandomPositive { .. } => "random_positive",
        }
    }

    pub fn parse(s: &str, seed: u64) -> Result<Self> {
        match s {
            "const_plus_cos" => Ok(Manufactured::ConstPlusCos),
            "gauss_bump" => Ok(Manufactured::GaussBump),
            "random_positive" => Ok(Manufactured::RandomPositive { seed }),
            other => Err(Error::Parse(format!("unknown manufactured field `{other}`"))),
        }
    }

    fn random_coefficients(seed: u64) -> Vec<(f64, f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coeffs = Vec::new();
        for k in 0..=RANDOM_MODES {
            for l in 0..=RANDOM_MODES {
                if k == 0 && l == 0 {
                    continue;
                }
                let c: f64 = rng.gen_range(-1.0..1.0) / (1.0 + (k * k + l * l) as f64);
                coeffs.push((k as f64, l as f64, c));
            }
        }
        let total: f64 = coeffs.iter().map(|c| c.2.abs()).sum();
        for c in &mut coeffs {
            c.2 /= total;
        }
        coeffs
    }

    /// Closed-form evaluator on `(0, lx) x (0, ly)`.
    pub fn evaluator(&self, lx: f64, ly: f64) -> Box<dyn Fn(f64, f64) -> f64 + Send + Sync> {
        match *self {
            Manufactured::ConstPlusCos => {
                Box::new(move |x, y| 2.0 + (PI * x / lx).cos() * (PI * y / ly).cos())
            }
            Manufactured::GaussBump => Box::new(move |x, y| {
                let s = (1.0 + (2.0 * PI * x / lx).cos()) + (1.0 + (2.0 * PI * y / ly).cos());
                1.0 + (-BUMP_BETA * s).exp()
            }),
            Manufactured::RandomPositive { seed } => {
                let coeffs = Self::random_coefficients(seed);
                Box::new(move |x, y| {
                    2.0 + coeffs
                        .iter()
                        .map(|&(k, l, c)| c * (k * PI * x / lx).cos() * (l * PI * y / ly).cos())
                        .sum::<f64>()
                })
            }
        }
    }

    pub fn sample(&self, grid: Grid) -> ScalarField {
        let f = self.evaluator(grid.lx, grid.ly);
        ScalarField::from_fn(grid, f)
    }
}

/// Convenience wrapper for [`Manufactured::sample`].
pub fn manufactured(kind: Manufactured, grid: Grid) -> ScalarField {
    kind.sample(grid)
}

/// Writes `nx,ny,lx,ly` as a header record, then one record per grid row
/// `j = 0..ny` holding the `nx` values of that row.
pub fn write_field_csv<W: Write>(f: &ScalarField, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let g = f.grid;
    w.write_record(["nx", "ny", "lx", "ly"])?;
    w.write_record([
        g.nx.to_string(),
        g.ny.to_string(),
        g.lx.to_string(),
        g.ly.to_string(),
    ])?;
    for row in f.values.chunks(g.nx) {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field_csv<R: Read>(input: R) -> Result<ScalarField> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let mut records = r.records();
    let meta = records
        .next()
        .ok_or_else(|| Error::Parse("missing grid record".into()))??;
    let num = |k: usize| -> Result<&str> {
        meta.get(k)
            .ok_or_else(|| Error::Parse("short grid record".into()))
    };
    let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(e.to_string()));
    let parse_f64 = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(e.to_string()));
    let grid = Grid::new(
        parse_usize(num(0)?)?,
        parse_usize(num(1)?)?,
        parse_f64(num(2)?)?,
        parse_f64(num(3)?)?,
    )?;
    let mut values = Vec::with_capacity(grid.len());
    for rec in records {
        let rec = rec?;
        if rec.len() != grid.nx {
            return Err(Error::Parse(format!(
                "row with {} values, expected {}",
                rec.len(),
                grid.nx
            )));
        }
        for v in rec.iter() {
            values.push(parse_f64(v)?);
        }
    }
    ScalarField::new(grid, values)
}
